//! Run configuration file and the reproducibility record.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urbdiff_core::coreg::CoregConfig;
use urbdiff_core::landcover::ForestConfig;
use urbdiff_core::segment::BandRoles;
use urbdiff_core::siamese::TrainConfig;
use urbdiff_core::{SiameseConfig, SlicConfig};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Patches drawn from the training split.
    pub patches: usize,
    pub balance_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            patches: 1000,
            balance_fraction: 0.5,
        }
    }
}

/// Fallback inputs and outputs used when the matching flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub aoi: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every section seed when set.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub siamese: SiameseConfig,
    pub train: TrainConfig,
    pub dataset: DatasetSection,
    pub slic: SlicConfig,
    pub forest: ForestConfig,
    pub coreg: CoregConfig,
    pub bands: BandRoles,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
    }

    /// Push the top-level seed into each section.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.forest.seed = seed;
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |e: urbdiff_core::Error| Failure::Usage(e.to_string());
        self.siamese.validate().map_err(bad)?;
        self.slic.validate().map_err(bad)?;
        self.forest.validate().map_err(bad)?;
        self.coreg.validate().map_err(bad)?;
        if !(0.0..=1.0).contains(&self.dataset.balance_fraction) || self.dataset.patches == 0 {
            return Err(Failure::Usage(format!(
                "dataset: need patches >= 1 and balance_fraction in [0, 1], got {:?}",
                self.dataset
            )));
        }
        if self.threads == Some(0) {
            return Err(Failure::Usage("threads must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub command: &'a str,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub version: &'static str,
    pub created: String,
}

/// Write `<out>.run.json` next to the primary output.
pub fn write_record(out: &Path, command: &str, config: &RunConfig) -> Result<PathBuf, Failure> {
    let record = RunRecord {
        command,
        argv: std::env::args().collect(),
        seed: config.seed(),
        config,
        version: env!("CARGO_PKG_VERSION"),
        created: chrono::Utc::now().to_rfc3339(),
    };
    let path = PathBuf::from(format!("{}.run.json", out.display()));
    let text = serde_json::to_string_pretty(&record).expect("record serializes");
    std::fs::write(&path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_name_the_token() {
        let err = serde_json::from_str::<RunConfig>(r#"{"slic": {"n_segmets": 5}}"#).unwrap_err();
        assert!(err.to_string().contains("n_segmets"), "{err}");
        let err = serde_json::from_str::<RunConfig>(r#"{"colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"forest": {"n_trees": 7}, "seed": 3}"#).unwrap();
        assert_eq!(c.forest.n_trees, 7);
        assert_eq!(c.forest.max_depth, 12);
        assert_eq!(c.slic, SlicConfig::default());
        let mut c = c;
        c.apply_seed();
        assert_eq!((c.train.seed, c.forest.seed), (3, 3));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
