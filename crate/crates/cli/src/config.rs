use std::path::{Path, PathBuf};

use fedbench_core::data::{
    apply_local_projection, generate_synthetic_federated, CsvSchema, FederatedDataset, SyntheticSpec,
};
use fedbench_core::eval::TrainConfig;
use fedbench_core::fl::ExperimentConfig;
use serde::Deserialize;

use crate::error::{io_err, CliResult, Failure};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub name: String,
    /// Column label used when ranking; defaults to a name derived from the dataset.
    #[serde(default)]
    pub task: Option<String>,
    pub dataset: DatasetConfig,
    pub experiment: ExperimentConfig,
    /// Training setup for the non-federated baselines.
    #[serde(default)]
    pub baseline: Option<TrainConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub csv: Option<CsvSource>,
    /// Seed for synthesis and for carving test rows out of a single CSV.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub projection: Option<ProjectionConfig>,
}

fn default_label() -> String {
    "label".into()
}

fn default_client_column() -> Option<String> {
    Some("client_id".into())
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_label")]
    pub label: String,
    /// `null` treats the whole file as a single client.
    #[serde(default = "default_client_column")]
    pub client_id: Option<String>,
    /// Used only without a `test` file.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub out_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            Failure::Config(m) => Failure::Config(format!("{}:{m}", path.display())),
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: ConfigFile =
            serde_json::from_str(text).map_err(|e| Failure::Config(format!("{}:{}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Failure::Config(format!(
                "name `{}` must be a non-empty file name",
                self.name
            )));
        }
        self.experiment.validate()?;
        match (&self.dataset.synthetic, &self.dataset.csv) {
            (Some(s), None) => s.validate()?,
            (None, Some(_)) => {}
            _ => {
                return Err(Failure::Config(
                    "dataset needs exactly one of `synthetic` or `csv`".into(),
                ))
            }
        }
        if let Some(b) = &self.baseline {
            b.validate()?;
        }
        Ok(())
    }

    pub fn task(&self) -> String {
        if let Some(t) = &self.task {
            return t.clone();
        }
        let base = match &self.dataset.csv {
            Some(c) => c
                .train
                .file_stem()
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
            None => "synthetic".into(),
        };
        if self.dataset.projection.is_some() {
            format!("{base}-projected")
        } else {
            base
        }
    }

    /// Loads or synthesizes the dataset; relative CSV paths resolve against `base`.
    pub fn dataset(&self, base: &Path) -> CliResult<FederatedDataset> {
        let d = &self.dataset;
        let fed = match (&d.synthetic, &d.csv) {
            (Some(spec), _) => generate_synthetic_federated(spec, d.seed)?,
            (None, Some(c)) => {
                let schema = CsvSchema {
                    label: c.label.clone(),
                    client_id: c.client_id.clone(),
                };
                let train = base.join(&c.train);
                let test = c.test.as_ref().map(|t| base.join(t));
                for p in std::iter::once(&train).chain(test.as_ref()) {
                    if !p.exists() {
                        return Err(Failure::Io(format!("{}: file not found", p.display())));
                    }
                }
                FederatedDataset::from_csv(&train, test.as_deref(), &schema, c.test_fraction, d.seed)?
            }
            (None, None) => unreachable!("validated"),
        };
        Ok(match &d.projection {
            Some(p) => apply_local_projection(&fed, p.out_dim, p.seed)?,
            None => fed,
        })
    }
}
