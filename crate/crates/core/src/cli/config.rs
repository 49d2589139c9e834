use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rxnemb::cluster::{InterGroup, Metric};
use rxnemb::encoder::EncoderConfig;
use rxnemb::pretrain::TrainConfig;
use rxnemb::project::ProjectConfig;

use super::{usage, Overrides};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    pub metric: Metric,
    pub inter_group: InterGroup,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { k: 50, metric: Metric::Euclidean, inter_group: InterGroup::Mean }
    }
}

/// Every knob of every command in one document. The global `seed`
/// overrides the module-level seed fields when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub cluster: ClusterConfig,
    pub project: ProjectConfig,
    /// Pretraining corpus (JSON lines); `--corpus` wins.
    pub corpus: Option<PathBuf>,
    /// Output directory; `--out` wins.
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    /// Applies command-line overrides, propagates the global seed and
    /// validates every section.
    pub fn resolve(mut self, o: &Overrides) -> anyhow::Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(jk) = o.jk {
            self.encoder.jk_mode = jk.into();
        }
        if let Some(m) = o.metric {
            self.cluster.metric = m;
        }
        if let Some(k) = o.k {
            self.cluster.k = k;
        }
        if let Some(g) = o.inter_group {
            self.cluster.inter_group = g;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(n) = o.n_neighbors {
            self.project.n_neighbors = n;
        }
        if let Some(d) = o.min_dist {
            self.project.min_dist = d;
        }
        self.train.seed = self.seed;
        self.project.seed = self.seed;
        self.encoder.validate().map_err(|e| usage(e.to_string()))?;
        self.train.validate().map_err(|e| usage(e.to_string()))?;
        if self.out.is_none() {
            return Err(usage("no output directory (--out or \"out\" in the config)"));
        }
        Ok(self)
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().expect("resolved configs carry an output directory")
    }

    /// The document written next to the outputs: the output directory is
    /// dropped so the file can be replayed elsewhere and reruns compare
    /// equal.
    pub fn to_record(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_value(c).expect("configs serialize")
    }
}
