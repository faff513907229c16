//! Experiment configuration file.
//!
//! Every section is optional and falls back to the reference urban
//! deployment; unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use uavfl::analysis::QuadratureSpec;
use uavfl::data::PartitionMode;
use uavfl::fl::{FlConfig, OutageSpec};
use uavfl::geometry::{AltitudeLaw, NetworkConfig, DEFAULT_WINDOW_SPACINGS, URBAN_LOS};
use uavfl::nn::NetSpec;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    /// One independent replicate per seed.
    pub seeds: Vec<u64>,
    pub network: NetworkSection,
    pub fl: FlSection,
    pub sweep: SweepSection,
    pub mc: McSection,
    pub quadrature: QuadratureSpec,
    pub data: DataSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("results"),
            seeds: vec![1, 2, 3, 4, 5],
            network: NetworkSection::default(),
            fl: FlSection::default(),
            sweep: SweepSection::default(),
            mc: McSection::default(),
            quadrature: QuadratureSpec::default(),
            data: DataSection::default(),
        }
    }
}

/// Network parameters. The AP density is given through `ratio = λ_u/λ_a`
/// and the simulation window in mean AP spacings `1/sqrt(π·λ_a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub lambda_u: f64,
    /// Operating point used by `fl` when a p_out entry is `"from-geometry"`.
    pub ratio: f64,
    pub alpha: f64,
    pub ell: f64,
    pub c1: f64,
    pub c2: f64,
    pub eta: f64,
    pub altitude: AltitudeLaw,
    pub window_spacings: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            lambda_u: 1e-5,
            ratio: 100.0,
            alpha: 2.75,
            ell: 0.25,
            c1: URBAN_LOS.0,
            c2: URBAN_LOS.1,
            eta: 0.5,
            altitude: AltitudeLaw::Fixed(100.0),
            window_spacings: DEFAULT_WINDOW_SPACINGS,
        }
    }
}

impl NetworkSection {
    pub fn at_ratio(&self, ratio: f64) -> NetworkConfig {
        let lambda_a = self.lambda_u / ratio;
        NetworkConfig {
            lambda_u: self.lambda_u,
            lambda_a,
            alpha: self.alpha,
            ell: self.ell,
            c1: self.c1,
            c2: self.c2,
            eta: self.eta,
            altitude: self.altitude,
            window_radius: self.window_spacings / (std::f64::consts::PI * lambda_a).sqrt(),
        }
    }

    pub fn operating_point(&self) -> NetworkConfig {
        self.at_ratio(self.ratio)
    }
}

/// Federated-learning setup shared by all runs. `num_clients` and
/// `partition` select the `fig3` scenario; `fl` sweeps the grid instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlSection {
    pub num_clients: usize,
    pub partition: PartitionMode,
    pub rounds: usize,
    pub samples_per_client: usize,
    pub test_samples_per_client: usize,
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
}

impl Default for FlSection {
    fn default() -> Self {
        Self {
            num_clients: 30,
            partition: PartitionMode::NonIid,
            rounds: 200,
            samples_per_client: 20,
            test_samples_per_client: 10,
            hidden_dims: vec![64],
            learning_rate: 0.05,
        }
    }
}

impl FlSection {
    pub fn run_config(
        &self,
        k: usize,
        mode: PartitionMode,
        p_out: f64,
        seed: u64,
        input_dim: usize,
        classes: usize,
    ) -> FlConfig {
        FlConfig {
            num_clients: k,
            rounds: self.rounds,
            samples_per_client: self.samples_per_client,
            partition: mode,
            p_out: OutageSpec::Probability(p_out),
            net_spec: NetSpec {
                input_dim,
                hidden_dims: self.hidden_dims.clone(),
                output_dim: classes,
                learning_rate: self.learning_rate,
                init_seed: seed,
            },
            master_seed: seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// `λ_u/λ_a` values for `outage` and `fig3`.
    pub ratios: Vec<f64>,
    /// Outage grid for `fl`, also the lookup curve of `fig3`.
    pub p_out: Vec<OutageSpec>,
    pub clients: Vec<usize>,
    pub partitions: Vec<PartitionMode>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ratios: vec![10.0, 50.0, 100.0, 200.0, 300.0],
            p_out: [0.0, 0.3, 0.6, 0.9].map(OutageSpec::Probability).to_vec(),
            clients: vec![10, 30, 50],
            partitions: vec![PartitionMode::Iid, PartitionMode::NonIid],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    /// Monte Carlo trials per ratio; 0 skips the simulation columns.
    pub trials: u64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { trials: 100_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Mnist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub source: DataSource,
    /// Directory with `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Pixel noise standard deviation of the synthetic digits.
    pub synthetic_noise: f64,
    /// Maximum glyph translation (pixels) of the synthetic digits.
    pub synthetic_shift: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            dir: None,
            synthetic_noise: 0.35,
            synthetic_shift: 3,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(trials) = o.trials {
            self.mc.trials = trials;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(dir) = &o.data_dir {
            self.data.source = DataSource::Mnist;
            self.data.dir = Some(dir.clone());
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seed {dup} is listed twice"));
        }
        if self.sweep.ratios.is_empty() || self.sweep.p_out.is_empty() {
            return bad("sweep.ratios and sweep.p_out must not be empty".into());
        }
        if self.sweep.clients.is_empty() || self.sweep.partitions.is_empty() {
            return bad("sweep.clients and sweep.partitions must not be empty".into());
        }
        if let Some(r) = self.sweep.ratios.iter().find(|r| !(r.is_finite() && **r >= 1.0)) {
            return bad(format!("ratio {r} must be a finite value >= 1"));
        }
        for spec in &self.sweep.p_out {
            if let OutageSpec::Probability(p) = spec {
                if !(0.0..=1.0).contains(p) {
                    return bad(format!("p_out {p} must lie in [0,1]"));
                }
            }
        }
        if !self.window_ok() {
            return bad("network.window_spacings must be > 0".into());
        }
        self.network.operating_point().validate()?;
        self.quadrature.validate()?;
        if self.fl.rounds == 0 || self.fl.samples_per_client == 0 || self.fl.test_samples_per_client == 0 {
            return bad("fl.rounds and per-client sample counts must be >= 1".into());
        }
        if self.fl.learning_rate.is_nan() || self.fl.learning_rate <= 0.0 {
            return bad("fl.learning_rate must be > 0".into());
        }
        if self.data.source == DataSource::Mnist && self.data.dir.is_none() {
            return bad("data.source = \"mnist\" needs data.dir or --data-dir".into());
        }
        if self.data.synthetic_noise.is_nan() || self.data.synthetic_noise < 0.0 {
            return bad("data.synthetic_noise must be >= 0".into());
        }
        if self.data.synthetic_shift > uavfl::data::MAX_GLYPH_SHIFT {
            return bad(format!(
                "data.synthetic_shift must be <= {}",
                uavfl::data::MAX_GLYPH_SHIFT
            ));
        }
        Ok(())
    }

    fn window_ok(&self) -> bool {
        self.network.window_spacings > 0.0 && self.network.window_spacings.is_finite()
    }

    /// SHA-256 of the canonical TOML form, excluding `output_dir` so that
    /// the same experiment written to two places hashes identically.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("colour = 3").is_err());
        assert!(ExperimentConfig::from_toml("[network]\nalpah = 3.0").is_err());
    }

    #[test]
    fn sections_parse() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seeds = [7, 8]
            [network]
            ratio = 50
            altitude = { min = 50.0, max = 150.0 }
            [sweep]
            ratios = [10, 300]
            p_out = [0.0, "from-geometry"]
            partitions = ["noniid"]
            [data]
            synthetic_noise = 0.5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![7, 8]);
        assert_eq!(cfg.network.altitude, AltitudeLaw::Uniform { min: 50.0, max: 150.0 });
        assert_eq!(cfg.sweep.p_out[1], OutageSpec::FromGeometry);
        assert_eq!(cfg.sweep.partitions, vec![PartitionMode::NonIid]);
        let net = cfg.network.operating_point();
        assert!((net.lambda_a - 2e-7).abs() < 1e-20);
    }

    #[test]
    fn validation_errors() {
        let mut cfg = ExperimentConfig {
            seeds: vec![1, 1],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![];
        assert!(cfg.validate().is_err());
        cfg.seeds = vec![1];
        cfg.sweep.ratios.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.data.source = DataSource::Mnist;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "/elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig {
            seeds: vec![9],
            ..a.clone()
        };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&Overrides {
            seed: Some(42),
            trials: Some(0),
            out: Some("o".into()),
            data_dir: Some("d".into()),
        });
        assert_eq!(cfg.seeds, vec![42]);
        assert_eq!(cfg.mc.trials, 0);
        assert_eq!(cfg.data.source, DataSource::Mnist);
    }
}
