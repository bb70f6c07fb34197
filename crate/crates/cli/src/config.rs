//! TOML pipeline configuration.
//!
//! Every section is optional except `seed` and `[data]`; omitted values take the
//! library defaults. Relative data paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use hybridwalk::dataset::{FeatureFormat, FilterConfig, InteractionFormat, SplitConfig};
use hybridwalk::{ModelKind, RecConfig, Scorer, TrainConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the split and the pair sampler. Required: runs never pick one implicitly.
    pub seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<String>,
    /// Popularity exponents tried for `hp3_r`.
    #[serde(default = "default_beta_grid")]
    pub beta_grid: Vec<f64>,
    pub data: DataSection,
    #[serde(default)]
    pub ratings: RatingSection,
    #[serde(default)]
    pub filters: FilterSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub recommend: RecommendSection,
}

fn default_algorithms() -> Vec<String> {
    ModelKind::ALL.iter().map(|k| k.as_str().to_string()).collect()
}

fn default_beta_grid() -> Vec<f64> {
    vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub interactions: PathBuf,
    pub features: PathBuf,
    #[serde(default)]
    pub interaction_format: InteractionFormatSection,
    #[serde(default)]
    pub feature_format: FeatureFormatSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionFormatSection {
    pub delimiter: String,
    pub has_header: bool,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    /// Ignore `rating_col`; every line is an interaction of strength 1.
    pub implicit: bool,
}

impl Default for InteractionFormatSection {
    fn default() -> Self {
        let d = InteractionFormat::default();
        Self {
            delimiter: (d.delimiter as char).to_string(),
            has_header: d.has_header,
            user_col: d.user_col,
            item_col: d.item_col,
            rating_col: d.rating_col.unwrap_or(2),
            implicit: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureFormatSection {
    pub delimiter: String,
    pub has_header: bool,
    pub item_col: usize,
    pub feature_col: usize,
}

impl Default for FeatureFormatSection {
    fn default() -> Self {
        let d = FeatureFormat::default();
        Self {
            delimiter: (d.delimiter as char).to_string(),
            has_header: d.has_header,
            item_col: d.item_col,
            feature_col: d.feature_col,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingSection {
    /// Keep ratings `>= threshold` as 1, drop the rest. Ignored for implicit data.
    pub binarize: bool,
    pub threshold: f64,
}

impl Default for RatingSection {
    fn default() -> Self {
        Self {
            binarize: true,
            threshold: 3.5,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub min_user_interactions: usize,
    pub min_item_interactions: usize,
    pub min_item_features: usize,
    /// 0 means no upper bound.
    pub max_item_features: usize,
    pub min_feature_frequency: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        let d = FilterConfig::default();
        Self {
            min_user_interactions: d.min_user_interactions,
            min_item_interactions: d.min_item_interactions,
            min_item_features: d.min_item_features,
            max_item_features: d.max_item_features.unwrap_or(0),
            min_feature_frequency: d.min_feature_frequency,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_ratio: f64,
    pub validation_ratio: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let d = SplitConfig::default();
        Self {
            test_ratio: d.test_ratio,
            validation_ratio: d.validation_ratio,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub epsilon_pos: f64,
    pub l2_toward_uniform: f64,
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    /// Keep only this many entries per row of the collaborative target; 0 keeps all.
    pub target_top_k: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            negatives_per_positive: d.negatives_per_positive,
            epsilon_pos: d.epsilon_pos,
            l2_toward_uniform: d.l2_toward_uniform,
            early_stop_patience: d.early_stop_patience,
            target_top_k: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ScorerName {
    #[default]
    Native,
    Normalized,
    Raw,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendSection {
    pub knn_k: usize,
    pub shrink: f64,
    pub top_n: usize,
    pub scorer: ScorerName,
}

impl Default for RecommendSection {
    fn default() -> Self {
        let d = RecConfig::default();
        Self {
            knn_k: d.knn_k,
            shrink: d.shrink,
            top_n: d.top_n,
            scorer: ScorerName::Native,
        }
    }
}

fn single_byte(name: &str, s: &str) -> Result<u8, CliError> {
    match s.as_bytes() {
        [b] => Ok(*b),
        _ => Err(CliError::Invalid(format!("{name} must be a single ASCII character, got {s:?}"))),
    }
}

impl PipelineConfig {
    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| CliError::Invalid(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.data.interactions = base.join(&config.data.interactions);
        config.data.features = base.join(&config.data.features);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let models = self.models()?;
        if models.is_empty() {
            return Err(CliError::Invalid("algorithms must not be empty".into()));
        }
        if self.beta_grid.is_empty() || self.beta_grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(CliError::Invalid(format!(
                "beta_grid must be a non-empty list of finite values >= 0, got {:?}",
                self.beta_grid
            )));
        }
        self.interaction_format()?;
        self.feature_format()?;
        self.filter_config().validate()?;
        self.train_config().validate()?;
        self.rec_config().validate()?;
        for (name, r) in [("test_ratio", self.split.test_ratio), ("validation_ratio", self.split.validation_ratio)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(CliError::Invalid(format!("split.{name} must lie in (0, 1), got {r}")));
            }
        }
        Ok(())
    }

    /// Requested algorithms in config order, without duplicates.
    pub fn models(&self) -> Result<Vec<ModelKind>, CliError> {
        let mut out = Vec::new();
        for name in &self.algorithms {
            let kind: ModelKind = name.parse()?;
            if out.contains(&kind) {
                return Err(CliError::Invalid(format!("algorithm {name} listed twice")));
            }
            out.push(kind);
        }
        Ok(out)
    }

    pub fn interaction_format(&self) -> Result<InteractionFormat, CliError> {
        let f = &self.data.interaction_format;
        Ok(InteractionFormat {
            delimiter: single_byte("interaction_format.delimiter", &f.delimiter)?,
            has_header: f.has_header,
            user_col: f.user_col,
            item_col: f.item_col,
            rating_col: (!f.implicit).then_some(f.rating_col),
        })
    }

    pub fn feature_format(&self) -> Result<FeatureFormat, CliError> {
        let f = &self.data.feature_format;
        Ok(FeatureFormat {
            delimiter: single_byte("feature_format.delimiter", &f.delimiter)?,
            has_header: f.has_header,
            item_col: f.item_col,
            feature_col: f.feature_col,
        })
    }

    pub fn filter_config(&self) -> FilterConfig {
        let f = &self.filters;
        FilterConfig {
            min_user_interactions: f.min_user_interactions,
            min_item_interactions: f.min_item_interactions,
            min_item_features: f.min_item_features,
            max_item_features: (f.max_item_features > 0).then_some(f.max_item_features),
            min_feature_frequency: f.min_feature_frequency,
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            test_ratio: self.split.test_ratio,
            validation_ratio: self.split.validation_ratio,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            negatives_per_positive: t.negatives_per_positive,
            epsilon_pos: t.epsilon_pos,
            l2_toward_uniform: t.l2_toward_uniform,
            seed: self.seed,
            early_stop_patience: t.early_stop_patience,
        }
    }

    pub fn rec_config(&self) -> RecConfig {
        let r = &self.recommend;
        RecConfig {
            knn_k: r.knn_k,
            shrink: r.shrink,
            top_n: r.top_n,
            scorer: match r.scorer {
                ScorerName::Native => Scorer::Native,
                ScorerName::Normalized => Scorer::Normalized,
                ScorerName::Raw => Scorer::Raw,
            },
        }
    }

    /// Whether ratings are thresholded after loading.
    pub fn binarizes(&self) -> bool {
        self.ratings.binarize && !self.data.interaction_format.implicit
    }
}
