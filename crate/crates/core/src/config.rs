//! Flat TOML run/benchmark configuration.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected so that typos surface as errors.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `algorithm` | `"bae"` | `bae`, `annealed_bae`, `classical`, `canonical_qae`, `mlae_lis`, `mlae_eis` |
//! | `n_trials` | 30 | benchmark trials |
//! | `bins` | 10 | log-width bins used by `process` |
//! | `median` | false | aggregate bins by median instead of mean |
//! | `noise` | `"none"` | `none`, or `decoherence` with `T_c ~ U[t_min, t_max)` |
//! | `coherence_time_min`, `coherence_time_max` | 2000, 5000 | range of sampled `T_c` |
//! | `noise_handling` | `"pre_estimate"` | how BAE treats decoherence: `pre_estimate`, `known`, `joint`, `oblivious` |
//! | `amplitude` | unset | fixed amplitude for `run` (otherwise sampled) |
//! | `coherence_time` | unset | fixed device `T` for `run` |
//! | `max_queries` | 100000 | query budget per trial |
//! | `particles` | 1000 | SMC particles |
//! | `ess_fraction` | 0.5 | resample when ESS < `ess_fraction · particles` |
//! | `kernel` | `"liu_west"` | `liu_west` or `metropolis` |
//! | `liu_west_alpha` | 0.98 | Liu-West shrinkage |
//! | `metropolis_steps` | 5 | Metropolis moves per resampled particle |
//! | `warmup_shots` | 100 | classical shots before adaptation |
//! | `n_evals`, `k0`, `top_rank`, `trigger_repetitions` | 20, 2, 2, 3 | control-window design |
//! | `shots_per_control` | 1 | shots per adaptive control |
//! | `ess_target_fraction` | 0.9 | annealed ESS target as a fraction of the current ESS |
//! | `preestimate_max_t` | 10000 | longest decay time |
//! | `preestimate_shots` | 500 | decay-measurement shots |
//! | `preestimate_times` | 50 | distinct decay times |
//! | `count_preestimation_queries` | true | charge decay shots to the budget |
//! | `qae_k_min`, `qae_k_max` | 3, 8 | auxiliary-qubit range for canonical QAE |
//! | `qae_shots` | 100 | shots per canonical QAE run |
//! | `mlae_shots` | 100 | shots per MLAE stage |
//! | `classical_per_decade` | 10 | checkpoints per decade for the classical trace |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bae::{BaeConfig, NoiseMode, Termination};
use crate::design::{DesignParams, UtilitySpec};
use crate::smc::{Kernel, ResampleConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bae,
    AnnealedBae,
    Classical,
    CanonicalQae,
    MlaeLis,
    MlaeEis,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bae => "bae",
            Algorithm::AnnealedBae => "annealed_bae",
            Algorithm::Classical => "classical",
            Algorithm::CanonicalQae => "canonical_qae",
            Algorithm::MlaeLis => "mlae_lis",
            Algorithm::MlaeEis => "mlae_eis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRule {
    None,
    Decoherence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseHandling {
    PreEstimate,
    Known,
    Joint,
    Oblivious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    LiuWest,
    Metropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub algorithm: Algorithm,
    pub n_trials: usize,
    pub bins: usize,
    pub median: bool,
    pub noise: NoiseRule,
    pub coherence_time_min: f64,
    pub coherence_time_max: f64,
    pub noise_handling: NoiseHandling,
    pub amplitude: Option<f64>,
    pub coherence_time: Option<f64>,
    pub max_queries: u64,
    pub particles: usize,
    pub ess_fraction: f64,
    pub kernel: KernelKind,
    pub liu_west_alpha: f64,
    pub metropolis_steps: usize,
    pub warmup_shots: u64,
    pub n_evals: usize,
    pub k0: u64,
    pub top_rank: usize,
    pub trigger_repetitions: usize,
    pub shots_per_control: u64,
    pub ess_target_fraction: f64,
    pub preestimate_max_t: f64,
    pub preestimate_shots: u64,
    pub preestimate_times: usize,
    pub count_preestimation_queries: bool,
    pub qae_k_min: u32,
    pub qae_k_max: u32,
    pub qae_shots: u64,
    pub mlae_shots: u64,
    pub classical_per_decade: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            algorithm: Algorithm::Bae,
            n_trials: 30,
            bins: 10,
            median: false,
            noise: NoiseRule::None,
            coherence_time_min: 2000.0,
            coherence_time_max: 5000.0,
            noise_handling: NoiseHandling::PreEstimate,
            amplitude: None,
            coherence_time: None,
            max_queries: 100_000,
            particles: 1000,
            ess_fraction: 0.5,
            kernel: KernelKind::LiuWest,
            liu_west_alpha: 0.98,
            metropolis_steps: 5,
            warmup_shots: 100,
            n_evals: 20,
            k0: 2,
            top_rank: 2,
            trigger_repetitions: 3,
            shots_per_control: 1,
            ess_target_fraction: 0.9,
            preestimate_max_t: 10_000.0,
            preestimate_shots: 500,
            preestimate_times: 50,
            count_preestimation_queries: true,
            qae_k_min: 3,
            qae_k_max: 8,
            qae_shots: 100,
            mlae_shots: 100,
            classical_per_decade: 10,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        if self.bins < 2 {
            return bad("bins must be at least 2");
        }
        if !(self.coherence_time_min > 0.0 && self.coherence_time_min < self.coherence_time_max) {
            return bad("need 0 < coherence_time_min < coherence_time_max");
        }
        if let Some(a) = self.amplitude {
            if !(0.0..=1.0).contains(&a) {
                return bad("amplitude must lie in [0, 1]");
            }
        }
        if let Some(t) = self.coherence_time {
            if !(t > 0.0) {
                return bad("coherence_time must be positive");
            }
        }
        if self.max_queries == 0 {
            return bad("max_queries must be positive");
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return bad("ess_fraction must lie in (0, 1]");
        }
        if self.qae_k_min == 0 || self.qae_k_min > self.qae_k_max || self.qae_k_max > 20 {
            return bad("need 1 ≤ qae_k_min ≤ qae_k_max ≤ 20");
        }
        if self.qae_shots == 0 || self.mlae_shots == 0 || self.classical_per_decade == 0 {
            return bad("qae_shots, mlae_shots and classical_per_decade must be positive");
        }
        self.bae_config(None)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// BAE configuration for a device with coherence time `device_t`
    /// (`None` when noiseless).
    pub fn bae_config(&self, device_t: Option<f64>) -> BaeConfig {
        let kernel = match self.kernel {
            KernelKind::LiuWest => Kernel::LiuWest {
                alpha: self.liu_west_alpha,
            },
            KernelKind::Metropolis => Kernel::Metropolis {
                steps: self.metropolis_steps,
            },
        };
        let noise = match (device_t, self.noise_handling) {
            (None, _) | (_, NoiseHandling::Oblivious) => NoiseMode::None,
            (Some(t), NoiseHandling::Known) => NoiseMode::Known { coherence_time: t },
            (Some(_), NoiseHandling::PreEstimate) => NoiseMode::PreEstimate {
                max_t: self.preestimate_max_t,
                shots: self.preestimate_shots,
                n_times: self.preestimate_times,
            },
            (Some(_), NoiseHandling::Joint) => NoiseMode::Joint {
                max_t: self.preestimate_max_t,
            },
        };
        BaeConfig {
            particles: self.particles,
            resample: ResampleConfig {
                kernel,
                ess_threshold: self.ess_fraction * self.particles as f64,
            },
            warmup_shots: self.warmup_shots,
            noise,
            termination: Termination::MaxQueries(self.max_queries),
            utility: UtilitySpec::NegativeVariance,
            ess_target_fraction: self.ess_target_fraction,
            shots_per_control: self.shots_per_control,
            design: DesignParams {
                n_evals: self.n_evals,
                k0: self.k0,
                top_rank: self.top_rank,
                trigger_repetitions: self.trigger_repetitions,
            },
            count_preestimation_queries: self.count_preestimation_queries,
        }
    }
}
