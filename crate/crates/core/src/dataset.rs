//! Interaction and item-feature ingestion, noise filters, and the cold-item split.
//!
//! Records carry external string tokens until [`build_matrices`] maps them onto
//! contiguous indices. Index order is the lexicographic order of the tokens, so
//! the same files always produce the same matrices regardless of line order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
}

impl InteractionRecord {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: f64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            rating,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureRecord {
    pub item: String,
    pub feature: String,
}

impl FeatureRecord {
    pub fn new(item: impl Into<String>, feature: impl Into<String>) -> Self {
        Self {
            item: item.into(),
            feature: feature.into(),
        }
    }
}

/// Column layout of an interaction file.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionFormat {
    pub delimiter: u8,
    pub has_header: bool,
    pub user_col: usize,
    pub item_col: usize,
    /// `None` treats every line as an implicit interaction of strength 1.
    pub rating_col: Option<usize>,
}

impl Default for InteractionFormat {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            user_col: 0,
            item_col: 1,
            rating_col: Some(2),
        }
    }
}

impl InteractionFormat {
    /// `userId,movieId,rating,timestamp` with a header row.
    pub fn movielens() -> Self {
        Self {
            has_header: true,
            ..Self::default()
        }
    }

    fn min_columns(&self) -> usize {
        self.user_col.max(self.item_col).max(self.rating_col.unwrap_or(0)) + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFormat {
    pub delimiter: u8,
    pub has_header: bool,
    pub item_col: usize,
    pub feature_col: usize,
}

impl Default for FeatureFormat {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: false,
            item_col: 0,
            feature_col: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Parsed records plus the lines that could not be parsed.
#[derive(Clone, Debug)]
pub struct Loaded<R> {
    pub records: Vec<R>,
    pub errors: Vec<LineError>,
    /// Well-formed lines dropped on purpose (non-positive ratings, duplicate features).
    pub discarded: usize,
}

impl<R> Default for Loaded<R> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            errors: Vec::new(),
            discarded: 0,
        }
    }
}

fn open_reader(path: &Path, delimiter: u8, has_header: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_line_error(err: &csv::Error, fallback: u64) -> LineError {
    LineError {
        line: err.position().map_or(fallback, |p| p.line()),
        message: err.to_string(),
    }
}

/// Reads an interaction file. Malformed lines are collected in
/// [`Loaded::errors`] instead of aborting the load; ratings `<= 0` are discarded.
pub fn load_interactions(path: &Path, format: &InteractionFormat) -> Result<Loaded<InteractionRecord>> {
    let mut reader = open_reader(path, format.delimiter, format.has_header)?;
    let mut out = Loaded::default();
    let needed = format.min_columns();
    for (n, row) in reader.records().enumerate() {
        let row = match row {
            Ok(row) => row,
            Err(err) => {
                if matches!(err.kind(), csv::ErrorKind::Io(_)) {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: err.to_string(),
                    });
                }
                out.errors.push(csv_line_error(&err, n as u64 + 1));
                continue;
            }
        };
        let line = row.position().map_or(n as u64 + 1, |p| p.line());
        if row.len() < needed {
            out.errors.push(LineError {
                line,
                message: format!("expected at least {needed} columns, found {}", row.len()),
            });
            continue;
        }
        let rating = match format.rating_col {
            None => 1.0,
            Some(col) => match f64::from_str(&row[col]) {
                Ok(r) if r.is_finite() => r,
                _ => {
                    out.errors.push(LineError {
                        line,
                        message: format!("rating {:?} is not a finite number", &row[col]),
                    });
                    continue;
                }
            },
        };
        if rating <= 0.0 {
            out.discarded += 1;
            continue;
        }
        out.records.push(InteractionRecord::new(&row[format.user_col], &row[format.item_col], rating));
    }
    Ok(out)
}

/// Reads an item-feature file. Repeated `(item, feature)` pairs collapse to the first.
pub fn load_features(path: &Path, format: &FeatureFormat) -> Result<Loaded<FeatureRecord>> {
    let mut reader = open_reader(path, format.delimiter, format.has_header)?;
    let mut out = Loaded::default();
    let needed = format.item_col.max(format.feature_col) + 1;
    let mut seen = HashSet::new();
    for (n, row) in reader.records().enumerate() {
        let row = match row {
            Ok(row) => row,
            Err(err) => {
                if matches!(err.kind(), csv::ErrorKind::Io(_)) {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: err.to_string(),
                    });
                }
                out.errors.push(csv_line_error(&err, n as u64 + 1));
                continue;
            }
        };
        let line = row.position().map_or(n as u64 + 1, |p| p.line());
        if row.len() < needed {
            out.errors.push(LineError {
                line,
                message: format!("expected at least {needed} columns, found {}", row.len()),
            });
            continue;
        }
        let record = FeatureRecord::new(&row[format.item_col], &row[format.feature_col]);
        if seen.insert(record.clone()) {
            out.records.push(record);
        } else {
            out.discarded += 1;
        }
    }
    Ok(out)
}

/// Converts explicit ratings to implicit feedback: ratings `>= threshold` become 1,
/// the rest are dropped.
pub fn binarize(interactions: &[InteractionRecord], threshold: f64) -> Vec<InteractionRecord> {
    interactions
        .iter()
        .filter(|r| r.rating >= threshold)
        .map(|r| InteractionRecord::new(r.user.clone(), r.item.clone(), 1.0))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub min_item_features: usize,
    /// `None` disables the upper bound.
    pub max_item_features: Option<usize>,
    pub min_feature_frequency: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_user_interactions: 5,
            min_item_interactions: 5,
            min_item_features: 2,
            max_item_features: Some(200),
            min_feature_frequency: 5,
        }
    }
}

impl FilterConfig {
    /// A configuration that removes nothing.
    pub fn none() -> Self {
        Self {
            min_user_interactions: 0,
            min_item_interactions: 0,
            min_item_features: 0,
            max_item_features: None,
            min_feature_frequency: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(max) = self.max_item_features {
            if max < self.min_item_features {
                return Err(Error::Config(format!(
                    "max_item_features ({max}) is below min_item_features ({})",
                    self.min_item_features
                )));
            }
        }
        Ok(())
    }
}

/// Applies the noise filters.
///
/// User and item interaction thresholds are applied repeatedly until nothing changes.
/// Then rare features are removed, and items whose remaining feature count falls
/// outside `[min_item_features, max_item_features]` are removed together with their
/// interactions. If the feature pass removed anything the whole sequence runs again,
/// so every survivor satisfies every threshold. Counts use distinct `(user, item)` and
/// `(item, feature)` pairs.
pub fn apply_filters(
    interactions: &[InteractionRecord],
    features: &[FeatureRecord],
    config: &FilterConfig,
) -> Result<(Vec<InteractionRecord>, Vec<FeatureRecord>)> {
    config.validate()?;
    let pairs: BTreeSet<(&str, &str)> = interactions.iter().map(|r| (r.user.as_str(), r.item.as_str())).collect();
    let item_features: BTreeSet<(&str, &str)> =
        features.iter().map(|f| (f.item.as_str(), f.feature.as_str())).collect();
    let all_items: BTreeSet<&str> = pairs
        .iter()
        .map(|&(_, i)| i)
        .chain(item_features.iter().map(|&(i, _)| i))
        .collect();

    let mut removed_users: HashSet<&str> = HashSet::new();
    let mut removed_items: HashSet<&str> = HashSet::new();
    let mut removed_features: HashSet<&str> = HashSet::new();

    loop {
        // Interaction thresholds, to a fixpoint.
        loop {
            let mut user_counts: HashMap<&str, usize> = HashMap::new();
            let mut item_counts: HashMap<&str, usize> = HashMap::new();
            for &(u, i) in &pairs {
                if !removed_users.contains(u) && !removed_items.contains(i) {
                    *user_counts.entry(u).or_default() += 1;
                    *item_counts.entry(i).or_default() += 1;
                }
            }
            let mut changed = false;
            for &(u, _) in &pairs {
                if !removed_users.contains(u)
                    && user_counts.get(u).copied().unwrap_or(0) < config.min_user_interactions
                {
                    removed_users.insert(u);
                    changed = true;
                }
            }
            for &i in &all_items {
                if !removed_items.contains(i)
                    && item_counts.get(i).copied().unwrap_or(0) < config.min_item_interactions
                {
                    removed_items.insert(i);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut changed = false;
        let mut feature_freq: HashMap<&str, usize> = HashMap::new();
        for &(i, f) in &item_features {
            if !removed_items.contains(i) && !removed_features.contains(f) {
                *feature_freq.entry(f).or_default() += 1;
            }
        }
        for (&f, &n) in &feature_freq {
            if n < config.min_feature_frequency {
                removed_features.insert(f);
                changed = true;
            }
        }
        let mut item_feature_count: HashMap<&str, usize> = HashMap::new();
        for &(i, f) in &item_features {
            if !removed_items.contains(i) && !removed_features.contains(f) {
                *item_feature_count.entry(i).or_default() += 1;
            }
        }
        for &i in &all_items {
            if removed_items.contains(i) {
                continue;
            }
            let count = item_feature_count.get(i).copied().unwrap_or(0);
            let too_many = config.max_item_features.is_some_and(|max| count > max);
            if count < config.min_item_features || too_many {
                removed_items.insert(i);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let kept_interactions: Vec<InteractionRecord> = interactions
        .iter()
        .filter(|r| !removed_users.contains(r.user.as_str()) && !removed_items.contains(r.item.as_str()))
        .cloned()
        .collect();
    let kept_features: Vec<FeatureRecord> = features
        .iter()
        .filter(|f| !removed_items.contains(f.item.as_str()) && !removed_features.contains(f.feature.as_str()))
        .cloned()
        .collect();
    if kept_interactions.is_empty() {
        return Err(Error::EmptyDataset("filtering"));
    }
    Ok((kept_interactions, kept_features))
}

/// Bijection between external tokens and contiguous indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    /// Builds a map over the distinct tokens, ordered lexicographically.
    pub fn from_tokens<'a, I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let sorted: BTreeSet<&str> = tokens.into_iter().collect();
        let tokens: Vec<String> = sorted.into_iter().map(str::to_owned).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
    pub features: IdMap,
}

impl IdMaps {
    /// Items are the union of tokens seen in either file.
    pub fn from_records(interactions: &[InteractionRecord], features: &[FeatureRecord]) -> Self {
        Self {
            users: IdMap::from_tokens(interactions.iter().map(|r| r.user.as_str())),
            items: IdMap::from_tokens(
                interactions
                    .iter()
                    .map(|r| r.item.as_str())
                    .chain(features.iter().map(|f| f.item.as_str())),
            ),
            features: IdMap::from_tokens(features.iter().map(|f| f.feature.as_str())),
        }
    }
}

fn lookup(map: &IdMap, kind: &'static str, token: &str) -> Result<usize> {
    map.index_of(token).ok_or_else(|| Error::UnknownToken {
        kind,
        token: token.to_owned(),
    })
}

/// Builds the user-item rating matrix and the binary item-feature matrix.
/// Repeated `(user, item)` pairs keep the last rating.
pub fn build_matrices<T: Scalar>(
    interactions: &[InteractionRecord],
    features: &[FeatureRecord],
    maps: &IdMaps,
) -> Result<(SparseMatrix<T>, SparseMatrix<T>)> {
    let mut last: HashMap<(usize, usize), f64> = HashMap::with_capacity(interactions.len());
    for r in interactions {
        let u = lookup(&maps.users, "user", &r.user)?;
        let i = lookup(&maps.items, "item", &r.item)?;
        last.insert((u, i), r.rating);
    }
    let urm = SparseMatrix::from_triplets(
        maps.users.len(),
        maps.items.len(),
        last.into_iter().map(|((u, i), v)| (u, i, T::lit(v))),
    )?;
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for f in features {
        pairs.insert((lookup(&maps.items, "item", &f.item)?, lookup(&maps.features, "feature", &f.feature)?));
    }
    let icm = SparseMatrix::from_triplets(
        maps.items.len(),
        maps.features.len(),
        pairs.into_iter().map(|(i, f)| (i, f, T::one())),
    )?;
    Ok((urm, icm))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partition {
    Warm,
    Validation,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Warm => "warm",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(Partition::Warm),
            "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(Error::Other(format!("unknown partition {other:?}"))),
        }
    }
}

/// Training view of the data: warm interactions only, features for every item.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub urm: SparseMatrix<T>,
    pub icm: SparseMatrix<T>,
    pub maps: IdMaps,
    pub warm_items: Vec<usize>,
    pub cold_items: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SplitOutput<T> {
    pub train: Dataset<T>,
    /// Partition of every item index.
    pub partition: Vec<Partition>,
    pub validation_items: Vec<usize>,
    pub test_items: Vec<usize>,
    pub validation_truth: GroundTruth,
    pub test_truth: GroundTruth,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitConfig {
    pub test_ratio: f64,
    pub validation_ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_ratio: 0.2,
            validation_ratio: 0.2,
            seed: 0,
        }
    }
}

fn ratio_count(ratio: f64, n: usize) -> usize {
    // Guard against products like 0.2 * 15 = 3.0000000000000004.
    ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Randomly moves `ceil(test_ratio * |I|)` items to the test set and
/// `ceil(validation_ratio * remaining)` of the rest to the validation set.
/// All interactions of those items leave the training matrix.
pub fn cold_item_split<T: Scalar>(
    interactions: &[InteractionRecord],
    features: &[FeatureRecord],
    config: &SplitConfig,
) -> Result<SplitOutput<T>> {
    for (name, r) in [("test_ratio", config.test_ratio), ("validation_ratio", config.validation_ratio)] {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {r}")));
        }
    }
    let maps = IdMaps::from_records(interactions, features);
    let n_items = maps.items.len();
    let n_test = ratio_count(config.test_ratio, n_items);
    let n_validation = ratio_count(config.validation_ratio, n_items - n_test.min(n_items));
    if n_test == 0 || n_validation == 0 || n_test + n_validation >= n_items {
        return Err(Error::Config(format!(
            "ratios {}/{} on {n_items} items leave {n_test} test, {n_validation} validation and {} warm items",
            config.test_ratio,
            config.validation_ratio,
            n_items.saturating_sub(n_test + n_validation)
        )));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);
    let mut partition = vec![Partition::Warm; n_items];
    for &i in &order[..n_test] {
        partition[i] = Partition::Test;
    }
    for &i in &order[n_test..n_test + n_validation] {
        partition[i] = Partition::Validation;
    }
    assemble_split(interactions, features, maps, partition)
}

/// Builds a split from an explicit per-item partition (for example one read back
/// from a manifest).
pub fn assemble_split<T: Scalar>(
    interactions: &[InteractionRecord],
    features: &[FeatureRecord],
    maps: IdMaps,
    partition: Vec<Partition>,
) -> Result<SplitOutput<T>> {
    if partition.len() != maps.items.len() {
        return Err(Error::LengthMismatch {
            op: "assemble_split",
            expected: maps.items.len(),
            actual: partition.len(),
        });
    }
    let warm: Vec<InteractionRecord> = interactions
        .iter()
        .filter(|r| maps.items.index_of(&r.item).is_some_and(|i| partition[i] == Partition::Warm))
        .cloned()
        .collect();
    let (urm, icm) = build_matrices::<T>(&warm, features, &maps)?;

    let mut validation_pairs = Vec::new();
    let mut test_pairs = Vec::new();
    for r in interactions {
        let u = lookup(&maps.users, "user", &r.user)?;
        let i = lookup(&maps.items, "item", &r.item)?;
        match partition[i] {
            Partition::Warm => {}
            Partition::Validation => validation_pairs.push((u, i)),
            Partition::Test => test_pairs.push((u, i)),
        }
    }
    let indices_of = |p: Partition| -> Vec<usize> { (0..partition.len()).filter(|&i| partition[i] == p).collect() };
    let warm_items = indices_of(Partition::Warm);
    let validation_items = indices_of(Partition::Validation);
    let test_items = indices_of(Partition::Test);
    let cold_items = (0..partition.len()).filter(|&i| partition[i] != Partition::Warm).collect();
    Ok(SplitOutput {
        train: Dataset {
            urm,
            icm,
            maps,
            warm_items,
            cold_items,
        },
        partition,
        validation_items,
        test_items,
        validation_truth: GroundTruth::from_pairs(validation_pairs),
        test_truth: GroundTruth::from_pairs(test_pairs),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `item_token<TAB>{warm|validation|test}` in item index order.
pub fn write_manifest(path: &Path, items: &IdMap, partition: &[Partition]) -> Result<()> {
    let mut out = create(path)?;
    for (i, p) in partition.iter().enumerate() {
        writeln!(out, "{}\t{}", items.token(i), p.as_str()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<(String, Partition)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        let parse_error = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {message}", n + 1),
        };
        let (token, part) = line
            .split_once('\t')
            .ok_or_else(|| parse_error("missing tab separator".into()))?;
        let part = part.parse().map_err(|e: Error| parse_error(e.to_string()))?;
        entries.push((token.to_owned(), part));
    }
    Ok(entries)
}

/// Writes `user,item,rating` lines without a header.
pub fn write_interactions(path: &Path, interactions: &[InteractionRecord]) -> Result<()> {
    let mut out = create(path)?;
    for r in interactions {
        writeln!(out, "{},{},{}", r.user, r.item, r.rating).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Writes `item,feature` lines without a header.
pub fn write_features(path: &Path, features: &[FeatureRecord]) -> Result<()> {
    let mut out = create(path)?;
    for f in features {
        writeln!(out, "{},{}", f.item, f.feature).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}
