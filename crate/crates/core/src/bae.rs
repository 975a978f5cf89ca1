//! Adaptive Bayesian amplitude estimation runs.
//!
//! A run optionally learns the coherence time from decay experiments, takes
//! a block of classical (`m = 0`) shots, then alternates between choosing a
//! Grover-iteration count with [`optimize_control`] and assimilating the
//! resulting shots, until a termination rule fires.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{optimize_control, DesignParams, DesignWindow, UtilitySpec};
use crate::model::{
    decay_query_cost, query_cost, simulate_decay, simulate_measurement, AmplitudeModel, Control, Datum,
    DecayLikelihood, GroverLikelihood, JointGroverLikelihood, Likelihood, NoiseModel,
};
use crate::smc::{ParticleEnsemble, Prior, PriorComponent, ResampleConfig};
use crate::trace::{Phase, PreEstimationSummary, RunTrace, CREDIBLE_MASS};
use crate::{Error, Result};

/// How the inference model treats decoherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Noiseless likelihood regardless of the device.
    None,
    /// Damped likelihood with a known coherence time.
    Known { coherence_time: f64 },
    /// Learn `T` from decay experiments first, then freeze it at its
    /// posterior mean.
    PreEstimate { max_t: f64, shots: u64, n_times: usize },
    /// Learn `(θ, T)` jointly with a uniform prior on `T ∈ [0, max_t]`.
    Joint { max_t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Stop once the cumulative query count reaches the budget.
    MaxQueries(u64),
    /// Stop after this many adaptive iterations.
    MaxIterations(usize),
    /// Stop when the posterior std of `a` falls to `std`, or after
    /// `max_iterations` adaptive iterations.
    TargetStd { std: f64, max_iterations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaeConfig {
    pub particles: usize,
    pub resample: ResampleConfig,
    /// Classical shots taken before adaptation.
    pub warmup_shots: u64,
    pub noise: NoiseMode,
    pub termination: Termination,
    pub utility: UtilitySpec,
    /// ESS target of the annealed variant, as a fraction of the ESS at the
    /// time of each choice.
    pub ess_target_fraction: f64,
    pub shots_per_control: u64,
    pub design: DesignParams,
    /// Count pre-estimation queries towards the budget and the trace.
    pub count_preestimation_queries: bool,
}

impl Default for BaeConfig {
    fn default() -> Self {
        BaeConfig {
            particles: 1000,
            resample: ResampleConfig::for_particles(1000),
            warmup_shots: 100,
            noise: NoiseMode::None,
            termination: Termination::MaxQueries(100_000),
            utility: UtilitySpec::NegativeVariance,
            ess_target_fraction: 0.9,
            shots_per_control: 1,
            design: DesignParams::default(),
            count_preestimation_queries: true,
        }
    }
}

impl BaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::invalid("particles must be positive"));
        }
        self.resample.validate(self.particles)?;
        self.design.validate()?;
        if self.shots_per_control == 0 {
            return Err(Error::invalid("shots_per_control must be positive"));
        }
        if !(self.ess_target_fraction > 0.0 && self.ess_target_fraction <= 1.0) {
            return Err(Error::invalid("ess_target_fraction must lie in (0, 1]"));
        }
        match self.noise {
            NoiseMode::Known { coherence_time } if !(coherence_time > 0.0) => {
                return Err(Error::invalid("known coherence time must be positive"))
            }
            NoiseMode::PreEstimate { max_t, shots, n_times } => {
                if !(max_t > 0.0 && max_t.is_finite()) {
                    return Err(Error::invalid("pre-estimation max_t must be positive"));
                }
                if n_times == 0 || shots < n_times as u64 {
                    return Err(Error::invalid("pre-estimation needs shots ≥ n_times ≥ 1"));
                }
            }
            NoiseMode::Joint { max_t } if !(max_t > 0.0 && max_t.is_finite()) => {
                return Err(Error::invalid("joint max_t must be positive"))
            }
            _ => {}
        }
        if let Termination::TargetStd { std, .. } = self.termination {
            if !(std > 0.0) {
                return Err(Error::invalid("target std must be positive"));
            }
        }
        Ok(())
    }

    /// The same configuration with the ESS-target utility.
    pub fn annealed(&self) -> Self {
        BaeConfig {
            utility: UtilitySpec::RelativeEssTarget {
                fraction: self.ess_target_fraction,
            },
            ..self.clone()
        }
    }
}

/// Posterior mean and std of `a = sin²θ`.
pub fn amplitude_moments(ensemble: &ParticleEnsemble<Control>) -> Result<(f64, f64)> {
    let view = ensemble.view();
    let mean = view.expectation(|x| x[0].sin().powi(2))?;
    let var = view.expectation(|x| (x[0].sin().powi(2) - mean).powi(2))?;
    Ok((mean, var.sqrt()))
}

/// Central credible interval of `a` holding `mass` of the posterior.
pub fn amplitude_credible_interval(ensemble: &ParticleEnsemble<Control>, mass: f64) -> Result<(f64, f64)> {
    let tail = 0.5 * (1.0 - mass);
    let view = ensemble.view();
    let a = |x: &[f64]| x[0].sin().powi(2);
    Ok((view.quantile(tail, a)?, view.quantile(1.0 - tail, a)?))
}

/// Evolution times `max_t · j / n_times` for `j = n_times, …, 1`, each with
/// its share of `shots` (earlier entries absorb the remainder).
pub fn preestimation_schedule(max_t: f64, shots: u64, n_times: usize) -> Vec<(f64, u64)> {
    let n = n_times as u64;
    let (base, extra) = (shots / n, shots % n);
    (0..n)
        .map(|i| {
            let j = n - i;
            (max_t * j as f64 / n as f64, base + u64::from(i < extra))
        })
        .filter(|&(_, s)| s > 0)
        .collect()
}

fn preestimate<R: rand::Rng + ?Sized>(
    max_t: f64,
    shots: u64,
    n_times: usize,
    particles: usize,
    resample: &ResampleConfig,
    noise: NoiseModel,
    rng: &mut R,
) -> Result<(ParticleEnsemble<f64>, u64)> {
    if !(max_t > 0.0 && max_t.is_finite()) || n_times == 0 || shots < n_times as u64 {
        return Err(Error::invalid("pre-estimation needs max_t > 0 and shots ≥ n_times ≥ 1"));
    }
    let mut ensemble = ParticleEnsemble::from_prior(Prior::uniform(0.0, max_t)?, particles, rng)?;
    let mut queries = 0;
    for (t, s) in preestimation_schedule(max_t, shots, n_times) {
        let datum = simulate_decay(noise, t, s, rng)?;
        ensemble.update(&DecayLikelihood, &datum, resample, rng)?;
        queries += decay_query_cost(t, s);
    }
    Ok((ensemble, queries))
}

/// Learns the coherence time from `shots` decay measurements spread over
/// `n_times` evolution times in `(0, max_t]`, longest first. Uses 1000
/// particles with the default resampling rule.
pub fn estimate_coherence_time(
    max_t: f64,
    shots: u64,
    n_times: usize,
    truth: &AmplitudeModel,
    seed: u64,
) -> Result<ParticleEnsemble<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1000;
    let (ensemble, _) = preestimate(
        max_t,
        shots,
        n_times,
        n,
        &ResampleConfig::for_particles(n),
        truth.noise,
        &mut rng,
    )?;
    Ok(ensemble)
}

enum Model {
    Fixed(GroverLikelihood),
    Joint(JointGroverLikelihood),
}

/// Runs adaptive amplitude estimation against a simulated device.
///
/// Configuration errors are returned as `Err`; a collapse of the particle
/// representation mid-run ends the run early with `failure` set on the
/// returned trace.
pub fn run_bae(config: &BaeConfig, truth: &AmplitudeModel, seed: u64) -> Result<RunTrace> {
    run_labelled(config, truth, seed, "bae")
}

/// [`run_bae`] with the ESS-target utility, aiming each update at
/// `ess_target_fraction` times the current ESS.
pub fn run_annealed_bae(config: &BaeConfig, truth: &AmplitudeModel, seed: u64) -> Result<RunTrace> {
    run_labelled(&config.annealed(), truth, seed, "annealed_bae")
}

fn run_labelled(config: &BaeConfig, truth: &AmplitudeModel, seed: u64, label: &str) -> Result<RunTrace> {
    config.validate()?;
    let true_t = match truth.noise {
        NoiseModel::Noiseless => None,
        NoiseModel::Decoherence { coherence_time } => Some(coherence_time),
    };
    let mut trace = RunTrace::new(label, seed, truth.amplitude.value(), true_t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (model, prior) = match config.noise {
        NoiseMode::None => (Model::Fixed(GroverLikelihood::noiseless()), Prior::amplitude()),
        NoiseMode::Known { coherence_time } => (
            Model::Fixed(GroverLikelihood {
                noise: NoiseModel::with_coherence_time(coherence_time)?,
            }),
            Prior::amplitude(),
        ),
        NoiseMode::PreEstimate { max_t, shots, n_times } => {
            let pre = preestimate(
                max_t,
                shots,
                n_times,
                config.particles,
                &config.resample,
                truth.noise,
                &mut rng,
            );
            let (ensemble, queries) = match pre {
                Ok(v) => v,
                Err(e @ Error::DegenerateEnsemble(_)) => {
                    trace.failure = Some(e.to_string());
                    return Ok(trace);
                }
                Err(e) => return Err(e),
            };
            let t_hat = ensemble.mean(0)?;
            trace.pre_estimation = Some(PreEstimationSummary {
                shots,
                n_times,
                max_t,
                queries,
                coherence_time: t_hat,
                coherence_time_std: ensemble.variance(0)?.sqrt(),
                counted: config.count_preestimation_queries,
            });
            let noise = if t_hat > 0.0 {
                NoiseModel::with_coherence_time(t_hat)?
            } else {
                NoiseModel::with_coherence_time(f64::MIN_POSITIVE)?
            };
            (Model::Fixed(GroverLikelihood { noise }), Prior::amplitude())
        }
        NoiseMode::Joint { max_t } => (
            Model::Joint(JointGroverLikelihood),
            Prior::new(vec![
                PriorComponent::UniformAmplitude,
                PriorComponent::Uniform { low: 0.0, high: max_t },
            ])?,
        ),
    };

    let ensemble = ParticleEnsemble::from_prior(prior, config.particles, &mut rng)?;
    let result = match &model {
        Model::Fixed(l) => adaptive_loop(config, truth, l, ensemble, &mut trace, &mut rng),
        Model::Joint(l) => adaptive_loop(config, truth, l, ensemble, &mut trace, &mut rng),
    };
    match result {
        Ok(()) => Ok(trace),
        Err(e @ Error::DegenerateEnsemble(_)) => {
            trace.failure = Some(e.to_string());
            Ok(trace)
        }
        Err(e) => Err(e),
    }
}

fn adaptive_loop<L, R>(
    config: &BaeConfig,
    truth: &AmplitudeModel,
    likelihood: &L,
    mut ensemble: ParticleEnsemble<Control>,
    trace: &mut RunTrace,
    rng: &mut R,
) -> Result<()>
where
    L: Likelihood<Control = Control>,
    R: rand::Rng + ?Sized,
{
    let (mean, std) = amplitude_moments(&ensemble)?;
    trace.estimate = mean;
    trace.std = Some(std);

    let assimilate = |ensemble: &mut ParticleEnsemble<Control>,
                      trace: &mut RunTrace,
                      phase: Phase,
                      m: Control,
                      shots: u64,
                      rng: &mut R|
     -> Result<f64> {
        let datum: Datum = simulate_measurement(truth, m, shots, rng)?;
        ensemble.update(likelihood, &datum, &config.resample, rng)?;
        let (mean, std) = amplitude_moments(ensemble)?;
        trace.push(phase, m.0, shots, datum.ones, query_cost(m, shots), mean, Some(std));
        trace.log_evidence = Some(ensemble.log_evidence());
        Ok(std)
    };

    let mut std = std;
    if config.warmup_shots > 0 {
        std = assimilate(
            &mut ensemble,
            trace,
            Phase::WarmUp,
            Control(0),
            config.warmup_shots,
            rng,
        )?;
    }
    let mut window = DesignWindow::new(config.design)?;
    let mut iterations = 0usize;
    loop {
        let done = match config.termination {
            Termination::MaxQueries(q) => trace.total_queries() >= q,
            Termination::MaxIterations(n) => iterations >= n,
            Termination::TargetStd {
                std: target,
                max_iterations,
            } => std <= target || iterations >= max_iterations,
        };
        if done {
            trace.credible_interval = Some(amplitude_credible_interval(&ensemble, CREDIBLE_MASS)?);
            return Ok(());
        }
        let m = optimize_control(&ensemble, &mut window, config.utility, likelihood)?;
        std = assimilate(&mut ensemble, trace, Phase::Adaptive, m, config.shots_per_control, rng)?;
        iterations += 1;
    }
}
