//! Run configuration and the reproducibility manifest.
//!
//! A run is configured by built-in per-experiment defaults, optionally
//! overridden by a JSON config file, optionally overridden by CLI flags.

use crate::error::{Error, Result};
use crate::hopping::{HopOptions, Statistic};
use crate::phase::{Potential, REF_X1_0, REF_XI1_0, REF_XI2_0};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable providing the default output directory.
pub const OUT_DIR_ENV: &str = "GRAPHENE_TRANSPORT_OUT";

/// Potential selection by name; `Atan` resolves its coefficient at startup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialChoice {
    Barrier,
    Harmonic,
    Atan,
}

impl PotentialChoice {
    pub fn resolve(self) -> Potential {
        match self {
            PotentialChoice::Barrier => Potential::Barrier,
            PotentialChoice::Harmonic => Potential::Harmonic,
            PotentialChoice::Atan => Potential::atan_calibrated(),
        }
    }
}

/// Coherent-state center parameters (eps comes from the sweep).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WavepacketParams {
    pub x1_0: f64,
    pub xi1_0: f64,
    pub xi2_0: f64,
}

impl Default for WavepacketParams {
    fn default() -> Self {
        WavepacketParams {
            x1_0: REF_X1_0,
            xi1_0: REF_XI1_0,
            xi2_0: REF_XI2_0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: String,
    pub eps: Vec<f64>,
    pub potential: PotentialChoice,
    pub wavepacket: WavepacketParams,
    /// Transverse momentum of the mixture experiment.
    pub mixture_xi2_0: f64,
    /// Kinetic particle count.
    pub particles: usize,
    /// Quantum wavefunctions in the mixture ensemble.
    pub wavefunctions: usize,
    /// Override the spectral grid size (power of two).
    pub grid_n: Option<usize>,
    /// Override the quantum time step (default eps/20).
    pub dt_quantum: Option<f64>,
    /// Classical integrator step.
    pub dt_kinetic: f64,
    pub hops: HopOptions,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Run the quantum reference side of two-sided experiments.
    pub quantum_enabled: bool,
    /// Epsilon sweep of the particle-count convergence study (Fig.-3-style);
    /// kept apart from `eps`, which drives the initial-data error sweep.
    pub sampling_eps: Vec<f64>,
    /// Particle counts of the convergence study.
    pub sampling_n: Vec<usize>,
    /// Export the first k sampled particles as CSV.
    pub dump_samples: Option<usize>,
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

impl RunConfig {
    /// Built-in defaults per experiment.
    pub fn default_for(experiment: &str) -> Result<RunConfig> {
        let base = RunConfig {
            experiment: experiment.to_string(),
            eps: vec![0.128, 0.064, 0.032, 0.016, 0.008, 0.004],
            potential: PotentialChoice::Harmonic,
            wavepacket: WavepacketParams::default(),
            mixture_xi2_0: REF_XI2_0,
            particles: 100_000,
            wavefunctions: 500,
            grid_n: None,
            dt_quantum: None,
            dt_kinetic: 5e-3,
            hops: HopOptions::default(),
            seed: 0,
            out_dir: default_out_dir(),
            quantum_enabled: true,
            sampling_eps: vec![0.00125, 0.0025, 0.005, 0.01],
            sampling_n: vec![1 << 10, 1 << 12, 1 << 14, 1 << 16, 1 << 18, 1 << 20],
            dump_samples: None,
        };
        let cfg = match experiment {
            "klein" => RunConfig {
                eps: vec![0.064],
                potential: PotentialChoice::Barrier,
                particles: 4_000_000,
                ..base
            },
            "transfer-table" => RunConfig {
                particles: 100_000,
                ..base
            },
            "transport-error" => RunConfig {
                eps: vec![0.01, 0.02, 0.04, 0.08, 0.16],
                particles: 1_000_000,
                ..base
            },
            "jump-ablation" => RunConfig {
                particles: 1_000_000,
                ..base
            },
            "sampling" => RunConfig {
                // eps = 2^N 2.5e-3, N = 0..9 for the initial-data errors
                eps: (0..10).map(|n| 2f64.powi(n) * 2.5e-3).collect(),
                ..base
            },
            "mixture" => RunConfig {
                eps: vec![0.128, 0.016],
                particles: 1_000_000,
                ..base
            },
            "selftest" => base,
            other => {
                return Err(Error::Config(format!("unknown experiment '{other}'")));
            }
        };
        Ok(cfg)
    }

    /// Apply a JSON config file on top of the defaults.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let over: ConfigOverride = serde_json::from_str(&text)?;
        over.apply(self);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("eps values must be positive".into()));
        }
        if self.particles == 0 || self.wavefunctions == 0 {
            return Err(Error::Config("particle and wavefunction counts must be positive".into()));
        }
        if !(self.dt_kinetic > 0.0) {
            return Err(Error::Config("dt_kinetic must be positive".into()));
        }
        if let Some(dt) = self.dt_quantum {
            if !(dt > 0.0) {
                return Err(Error::Config("dt_quantum must be positive".into()));
            }
        }
        if let Some(n) = self.grid_n {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::Config(format!("grid_n = {n} must be a power of two >= 2")));
            }
        }
        if let Some(r) = self.hops.skip_radius {
            if !(r > 0.0) {
                return Err(Error::Config("skip_radius must be positive".into()));
            }
        }
        Ok(())
    }
}

/// All-optional mirror of `RunConfig` for JSON overrides.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverride {
    pub eps: Option<Vec<f64>>,
    pub potential: Option<PotentialChoice>,
    pub wavepacket: Option<WavepacketParams>,
    pub mixture_xi2_0: Option<f64>,
    pub particles: Option<usize>,
    pub wavefunctions: Option<usize>,
    pub grid_n: Option<usize>,
    pub dt_quantum: Option<f64>,
    pub dt_kinetic: Option<f64>,
    pub jumps_enabled: Option<bool>,
    pub transitions_enabled: Option<bool>,
    pub max_hops: Option<u32>,
    pub skip_radius: Option<f64>,
    pub estimator: Option<Statistic>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub quantum_enabled: Option<bool>,
    pub sampling_eps: Option<Vec<f64>>,
    pub sampling_n: Option<Vec<usize>>,
    pub dump_samples: Option<usize>,
}

impl ConfigOverride {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            };
        }
        set!(eps);
        set!(potential);
        set!(mixture_xi2_0);
        set!(particles);
        set!(wavefunctions);
        set!(dt_kinetic);
        set!(seed);
        set!(out_dir);
        set!(quantum_enabled);
        set!(sampling_eps);
        set!(sampling_n);
        if let Some(v) = self.wavepacket {
            cfg.wavepacket = v;
        }
        if self.grid_n.is_some() {
            cfg.grid_n = self.grid_n;
        }
        if self.dt_quantum.is_some() {
            cfg.dt_quantum = self.dt_quantum;
        }
        if self.dump_samples.is_some() {
            cfg.dump_samples = self.dump_samples;
        }
        if let Some(v) = self.jumps_enabled {
            cfg.hops.jumps_enabled = v;
        }
        if let Some(v) = self.transitions_enabled {
            cfg.hops.transitions_enabled = v;
        }
        if self.max_hops.is_some() {
            cfg.hops.max_hops = self.max_hops;
        }
        if self.skip_radius.is_some() {
            cfg.hops.skip_radius = self.skip_radius;
        }
        if let Some(v) = self.estimator {
            cfg.hops.statistic = v;
        }
    }
}

/// Derived quantities resolved at run time, echoed for reproducibility.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResolvedParams {
    /// Calibrated atan coefficient, when the atan potential participates.
    pub alpha: Option<f64>,
    /// Spectral grid size per eps.
    pub grid_n: Vec<(f64, usize)>,
    /// Quantum time step per eps.
    pub dt_quantum: Vec<(f64, f64)>,
    /// Numerically computed normalization of the mixture center density.
    pub f0_norm_constant: Option<f64>,
    /// Klein quantum classification windows (left edge, right edge, split time).
    pub klein_windows: Option<(f64, f64, f64)>,
}

/// Everything needed to reproduce a run bitwise, plus its summary numbers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub resolved: ResolvedParams,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
    pub failed: bool,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        RunManifest {
            config: config.clone(),
            resolved: ResolvedParams::default(),
            seed: config.seed,
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            summary: serde_json::Value::Null,
            warnings: Vec::new(),
            failed: false,
            error: None,
        }
    }
}
