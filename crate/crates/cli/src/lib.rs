//! Batch pipeline behind the `hybridwalk` binary: `prepare` filters and splits a
//! dataset, `train` learns feature weights, `evaluate` scores every configured
//! recommender on the cold test items.
//!
//! All commands share an output directory; later commands read what earlier ones
//! wrote there.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hybridwalk::dataset::{
    self, apply_filters, assemble_split, binarize, cold_item_split, read_manifest, write_features, write_interactions,
    write_manifest, FeatureFormat, IdMaps, InteractionFormat,
};
use hybridwalk::eval::evaluate;
use hybridwalk::learner::{read_weights, sgd_train, write_weights};
use hybridwalk::recommenders::{build_item_item, cbf_similarity, hybrid_validation_ndcg, idf_weights, profile_for, score_and_rank};
use hybridwalk::walk::{collaborative_target, collaborative_target_top_k, rerank_target};
use hybridwalk::{Error, ItemPopularity, MetricReport, ModelKind, Paths, Split, TargetMatrix, TrainReport};

pub use config::PipelineConfig;

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const MANIFEST_FILE: &str = "split_manifest.tsv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const BETA_FILE: &str = "beta_selection.tsv";
pub const REPORT_FILE: &str = "report.txt";

pub fn weights_file(kind: ModelKind) -> String {
    format!("weights_{}.tsv", kind.as_str())
}

pub fn train_log_file(kind: ModelKind) -> String {
    format!("train_log_{}.tsv", kind.as_str())
}

pub fn recs_file(kind: ModelKind) -> String {
    format!("recs_{}.tsv", kind.as_str())
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or missing inputs.
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 for configuration and validation problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Core(Error::Config(_) | Error::EmptyDataset(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_error(path))
}

fn require_file(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{} does not exist{hint}", path.display())))
    }
}

/// Loads, binarizes, filters and splits the raw data, then writes the prepared
/// interactions, features, split manifest and a summary into `out`.
/// Returns the summary text.
pub fn prepare(config: &PipelineConfig, out: &Path) -> Result<String> {
    require_file(&config.data.interactions, " (data.interactions)")?;
    require_file(&config.data.features, " (data.features)")?;
    let loaded_interactions = dataset::load_interactions(&config.data.interactions, &config.interaction_format()?)?;
    let loaded_features = dataset::load_features(&config.data.features, &config.feature_format()?)?;
    let interactions = if config.binarizes() {
        binarize(&loaded_interactions.records, config.ratings.threshold)
    } else {
        loaded_interactions.records.clone()
    };
    let (interactions, features) = apply_filters(&interactions, &loaded_features.records, &config.filter_config())?;
    let split: Split = cold_item_split(&interactions, &features, &config.split_config())?;

    fs::create_dir_all(out).map_err(io_error(out))?;
    write_interactions(&out.join(INTERACTIONS_FILE), &interactions)?;
    write_features(&out.join(FEATURES_FILE), &features)?;
    write_manifest(&out.join(MANIFEST_FILE), &split.train.maps.items, &split.partition)?;

    let mut s = String::new();
    let maps = &split.train.maps;
    let _ = writeln!(s, "malformed_interaction_lines\t{}", loaded_interactions.errors.len());
    let _ = writeln!(s, "malformed_feature_lines\t{}", loaded_features.errors.len());
    let _ = writeln!(s, "nonpositive_ratings_discarded\t{}", loaded_interactions.discarded);
    let _ = writeln!(s, "interactions\t{}", interactions.len());
    let _ = writeln!(s, "users\t{}", maps.users.len());
    let _ = writeln!(s, "items\t{}", maps.items.len());
    let _ = writeln!(s, "features\t{}", maps.features.len());
    let _ = writeln!(s, "warm_items\t{}", split.train.warm_items.len());
    let _ = writeln!(s, "validation_items\t{}", split.validation_items.len());
    let _ = writeln!(s, "test_items\t{}", split.test_items.len());
    let _ = writeln!(s, "train_interactions\t{}", split.train.urm.nnz());
    let _ = writeln!(s, "validation_users\t{}", split.validation_truth.n_users());
    let _ = writeln!(s, "test_users\t{}", split.test_truth.n_users());
    write_text(&out.join(SUMMARY_FILE), &s)?;
    Ok(s)
}

/// Prepared data read back from an output directory.
pub struct Prepared {
    pub split: Split,
    pub paths: Paths,
}

pub fn load_prepared(out: &Path) -> Result<Prepared> {
    let files = [INTERACTIONS_FILE, FEATURES_FILE, MANIFEST_FILE].map(|f| out.join(f));
    for f in &files {
        require_file(f, "; run `hybridwalk prepare` first")?;
    }
    let [interactions_path, features_path, manifest_path] = files;
    let interactions = dataset::load_interactions(&interactions_path, &InteractionFormat::default())?;
    let features = dataset::load_features(&features_path, &FeatureFormat::default())?;
    for (path, errors) in [(&interactions_path, &interactions.errors), (&features_path, &features.errors)] {
        if let Some(e) = errors.first() {
            return Err(CliError::Core(Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            }));
        }
    }
    let maps = IdMaps::from_records(&interactions.records, &features.records);
    let manifest = read_manifest(&manifest_path)?;
    if manifest.len() != maps.items.len() || manifest.iter().zip(maps.items.tokens()).any(|((t, _), m)| t != m) {
        return Err(CliError::Invalid(format!(
            "{} does not match the items in {}",
            manifest_path.display(),
            interactions_path.display()
        )));
    }
    let partition = manifest.into_iter().map(|(_, p)| p).collect();
    let split: Split = assemble_split(&interactions.records, &features.records, maps, partition)?;
    let paths = Paths::build(&split.train.urm, &split.train.icm)?;
    Ok(Prepared { split, paths })
}

fn render_train_log(report: &TrainReport<f64>) -> String {
    let mut s = String::from("# epoch\tmean_pair_loss\tvalidation_ndcg\n");
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        let ndcg = report.validation_scores.get(epoch).copied().unwrap_or(f64::NAN);
        let _ = writeln!(s, "{epoch}\t{loss:.12e}\t{ndcg:.6}");
    }
    let _ = writeln!(s, "# best_epoch\t{}", report.best_epoch);
    s
}

fn best_validation(report: &TrainReport<f64>) -> f64 {
    report.validation_scores.get(report.best_epoch).copied().unwrap_or(f64::NAN)
}

/// Learns feature weights for every configured hybrid model and writes weights
/// files and training logs into `out`. Returns a short summary.
pub fn train(config: &PipelineConfig, out: &Path) -> Result<String> {
    let models = config.models()?;
    let hybrids: Vec<ModelKind> = models.into_iter().filter(|k| k.is_hybrid()).collect();
    if hybrids.is_empty() {
        return Ok("no hybrid algorithm configured; nothing to train\n".into());
    }
    let Prepared { split, paths } = load_prepared(out)?;
    let train_config = config.train_config();
    let top_n = config.rec_config().top_n;
    let mut validator =
        |w: &hybridwalk::Weights| hybrid_validation_ndcg(&paths, w, &split.validation_items, &split.validation_truth, top_n);
    let target: TargetMatrix<f64> = match config.train.target_top_k {
        0 => collaborative_target(&paths)?,
        k => collaborative_target_top_k(&paths, k)?,
    };
    let feature_tokens = split.train.maps.features.tokens();
    let warm = &split.train.warm_items;
    let mut summary = String::new();

    for kind in hybrids {
        let report = match kind {
            ModelKind::Hp3 => {
                let report = sgd_train(&paths.icm, &paths.p_fi, &target.t, warm, Some(&mut validator), &train_config)?;
                let _ = writeln!(summary, "hp3\tbest_epoch {}\tvalidation_ndcg {:.6}", report.best_epoch, best_validation(&report));
                report
            }
            _ => {
                let pop = ItemPopularity::from_urm(&split.train.urm);
                let mut log = String::from("# beta\tvalidation_ndcg\tbest_epoch\n");
                let mut best: Option<(f64, f64, TrainReport<f64>)> = None;
                for &beta in &config.beta_grid {
                    let reranked = rerank_target(&target, &pop, beta)?;
                    let report = sgd_train(&paths.icm, &paths.p_fi, &reranked.t, warm, Some(&mut validator), &train_config)?;
                    let score = best_validation(&report);
                    let _ = writeln!(log, "{beta}\t{score:.6}\t{}", report.best_epoch);
                    if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
                        best = Some((beta, score, report));
                    }
                }
                let (beta, score, report) = best.expect("beta grid is non-empty");
                let _ = writeln!(log, "selected\t{beta}");
                write_text(&out.join(BETA_FILE), &log)?;
                let _ = writeln!(summary, "hp3_r\tbeta {beta}\tbest_epoch {}\tvalidation_ndcg {score:.6}", report.best_epoch);
                report
            }
        };
        write_weights(&out.join(weights_file(kind)), feature_tokens, &report.final_weights)?;
        write_text(&out.join(train_log_file(kind)), &render_train_log(&report))?;
    }
    Ok(summary)
}

/// Scores every configured algorithm on the test items and writes `report.txt` and
/// one recommendation file per algorithm into `out`.
pub fn evaluate_all(config: &PipelineConfig, out: &Path) -> Result<MetricReport> {
    let models = config.models()?;
    let Prepared { split, paths } = load_prepared(out)?;
    let rec = config.rec_config();
    let icm = &split.train.icm;
    let maps = &split.train.maps;
    let mut mask = vec![false; icm.n_rows()];
    for &i in &split.test_items {
        mask[i] = true;
    }
    let mut report = MetricReport::new(rec.top_n);
    for kind in models {
        let model = match kind {
            ModelKind::Cbf => cbf_similarity(icm, None, &rec, Some(&mask))?,
            ModelKind::CbfIdf => cbf_similarity(icm, Some(&idf_weights(icm)?), &rec, Some(&mask))?,
            ModelKind::Cp3 => build_item_item(kind, &paths, None, Some(&mask))?,
            ModelKind::Hp3 | ModelKind::Hp3R => {
                let path: PathBuf = out.join(weights_file(kind));
                require_file(&path, "; run `hybridwalk train` first")?;
                let w = read_weights(&path, maps.features.tokens())?;
                build_item_item(kind, &paths, Some(&w), Some(&mask))?
            }
        };
        let profile = profile_for(kind, rec.scorer, &split.train.urm, &paths);
        let ranked = score_and_rank(profile, &model, &split.test_items, rec.top_n)?;
        report.push(kind.as_str(), evaluate(&ranked.items(), &split.test_truth, rec.top_n));

        let mut s = String::new();
        for (u, list) in ranked.lists.iter().enumerate() {
            for (rank, &(item, score)) in list.iter().enumerate() {
                let _ = writeln!(s, "{}\t{}\t{}\t{score}", maps.users.token(u), maps.items.token(item), rank + 1);
            }
        }
        write_text(&out.join(recs_file(kind)), &s)?;
    }
    report.write(&out.join(REPORT_FILE))?;
    Ok(report)
}
