//! Measurement models for amplitude estimation with Grover circuits.
//!
//! A circuit with `m` Grover iterations rotates the prepared state by
//! `(2m+1)θ`, so a measurement in the good/bad basis yields outcome 1 with
//! probability `sin²((2m+1)θ)`. Decoherence is modelled as an exponential
//! damping of that signal towards 1/2 with coherence time `T`, measured in
//! units of one Grover application.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probability of the good subspace, `a ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Amplitude(f64);

impl Amplitude {
    pub fn new(a: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&a) {
            Ok(Amplitude(a))
        } else {
            Err(Error::invalid(format!("amplitude {a} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn angle(self) -> GroverAngle {
        angle_from_amplitude(self)
    }
}

/// Grover angle `θ = arcsin(√a) ∈ [0, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GroverAngle(f64);

impl GroverAngle {
    pub fn new(theta: f64) -> Result<Self> {
        if (0.0..=FRAC_PI_2).contains(&theta) {
            Ok(GroverAngle(theta))
        } else {
            Err(Error::invalid(format!("grover angle {theta} outside [0, π/2]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn amplitude(self) -> Amplitude {
        amplitude_from_angle(self)
    }
}

pub fn angle_from_amplitude(a: Amplitude) -> GroverAngle {
    GroverAngle(a.0.sqrt().asin().clamp(0.0, FRAC_PI_2))
}

pub fn amplitude_from_angle(theta: GroverAngle) -> Amplitude {
    Amplitude(theta_to_amplitude(theta.0))
}

#[inline]
pub(crate) fn theta_to_amplitude(theta: f64) -> f64 {
    let s = theta.sin();
    (s * s).clamp(0.0, 1.0)
}

/// Number of Grover-operator applications in a circuit. `m = 0` is the
/// plain, non-amplified measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Control(pub u64);

impl Control {
    pub fn m(self) -> u64 {
        self.0
    }

    /// `2m + 1`, the rotation multiplier of the Grover angle.
    pub fn multiplier(self) -> f64 {
        (2 * self.0 + 1) as f64
    }
}

/// Binary measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Zero, Outcome::One];

    /// Probability of this outcome given the probability of outcome 1.
    #[inline]
    pub fn prob(self, p_one: f64) -> f64 {
        match self {
            Outcome::One => p_one,
            Outcome::Zero => 1.0 - p_one,
        }
    }
}

/// Exponential decoherence with coherence time `T`, or the noiseless limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum NoiseModel {
    #[default]
    Noiseless,
    Decoherence {
        coherence_time: f64,
    },
}

impl NoiseModel {
    pub fn with_coherence_time(t: f64) -> Result<Self> {
        if t.is_infinite() && t > 0.0 {
            Ok(NoiseModel::Noiseless)
        } else if t.is_finite() && t > 0.0 {
            Ok(NoiseModel::Decoherence { coherence_time: t })
        } else {
            Err(Error::invalid(format!("coherence time {t} must be positive")))
        }
    }

    /// `T`, infinite for the noiseless model.
    pub fn coherence_time(self) -> f64 {
        match self {
            NoiseModel::Noiseless => f64::INFINITY,
            NoiseModel::Decoherence { coherence_time } => coherence_time,
        }
    }

    /// `e^{-t/T}`; exactly 1 when noiseless or `t = 0`.
    #[inline]
    pub fn decay(self, t: f64) -> f64 {
        match self {
            NoiseModel::Noiseless => 1.0,
            NoiseModel::Decoherence { coherence_time } => decay_factor(t, coherence_time),
        }
    }
}

#[inline]
fn decay_factor(t: f64, coherence_time: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (-t / coherence_time).exp()
    }
}

/// The unknown system a simulated device measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeModel {
    pub amplitude: Amplitude,
    pub noise: NoiseModel,
}

impl AmplitudeModel {
    pub fn noiseless(a: f64) -> Result<Self> {
        Ok(AmplitudeModel {
            amplitude: Amplitude::new(a)?,
            noise: NoiseModel::Noiseless,
        })
    }

    pub fn with_coherence_time(a: f64, t: f64) -> Result<Self> {
        Ok(AmplitudeModel {
            amplitude: Amplitude::new(a)?,
            noise: NoiseModel::with_coherence_time(t)?,
        })
    }

    pub fn theta(&self) -> f64 {
        self.amplitude.angle().value()
    }
}

/// A block of `shots` repetitions of one experiment, of which `ones`
/// returned outcome 1. `C` is the experimental setting: a [`Control`] for
/// Grover circuits, an evolution time for decay experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Datum<C = Control> {
    pub control: C,
    pub shots: u64,
    pub ones: u64,
}

impl<C> Datum<C> {
    pub fn new(control: C, shots: u64, ones: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::invalid("datum needs at least one shot"));
        }
        if ones > shots {
            return Err(Error::invalid(format!("{ones} ones out of {shots} shots")));
        }
        Ok(Datum { control, shots, ones })
    }

    pub fn single(control: C, outcome: Outcome) -> Self {
        Datum {
            control,
            shots: 1,
            ones: u64::from(outcome == Outcome::One),
        }
    }

    pub fn zeros(&self) -> u64 {
        self.shots - self.ones
    }

    /// Log-probability of this particular outcome sequence given the
    /// probability `p_one` of outcome 1 (no binomial coefficient).
    #[inline]
    pub fn log_likelihood(&self, p_one: f64) -> f64 {
        let mut ll = 0.0;
        if self.ones > 0 {
            ll += self.ones as f64 * p_one.ln();
        }
        let zeros = self.zeros();
        if zeros > 0 {
            ll += zeros as f64 * (1.0 - p_one).ln();
        }
        ll
    }
}

/// Probability of observing outcome 1 under some parametrisation.
///
/// Points are slices of parameter values; their layout is fixed by the
/// implementation (see [`Likelihood::dim`]).
pub trait Likelihood: Sync {
    type Control: Copy + Send + Sync + std::fmt::Debug;

    fn dim(&self) -> usize;

    fn prob_one(&self, point: &[f64], control: Self::Control) -> f64;
}

/// `sin²((2m+1)θ)` with the argument reduced modulo π first.
#[inline]
pub(crate) fn grover_signal(theta: f64, m: u64) -> f64 {
    let x = ((2 * m + 1) as f64 * theta).rem_euclid(PI);
    let s = x.sin();
    s * s
}

#[inline]
pub(crate) fn damped(signal: f64, decay: f64) -> f64 {
    decay * signal + 0.5 * (1.0 - decay)
}

/// Ideal Grover-circuit likelihood, `sin²((2m+1)θ)` for outcome 1.
pub fn ideal_likelihood(theta: GroverAngle, m: Control, outcome: Outcome) -> f64 {
    outcome.prob(grover_signal(theta.value(), m.0))
}

/// Grover-circuit likelihood under exponential decoherence:
/// `e^{-m/T} sin²((2m+1)θ) + (1 - e^{-m/T})/2` for outcome 1.
pub fn noisy_likelihood(theta: GroverAngle, noise: NoiseModel, m: Control, outcome: Outcome) -> f64 {
    let signal = grover_signal(theta.value(), m.0);
    outcome.prob(damped(signal, noise.decay(m.0 as f64)))
}

/// Decay of a reference state whose ideal outcome-1 probability is 1:
/// `(1 + e^{-t/T})/2` for outcome 1.
pub fn decay_likelihood(coherence_time: f64, t: f64, outcome: Outcome) -> Result<f64> {
    if !(coherence_time > 0.0) {
        return Err(Error::invalid(format!(
            "coherence time {coherence_time} must be positive"
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("evolution time {t} must be non-negative")));
    }
    Ok(outcome.prob(decay_prob_one(coherence_time, t)))
}

#[inline]
fn decay_prob_one(coherence_time: f64, t: f64) -> f64 {
    0.5 * (1.0 + decay_factor(t, coherence_time))
}

/// Likelihood over `[θ]` with a fixed (possibly infinite) coherence time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroverLikelihood {
    pub noise: NoiseModel,
}

impl GroverLikelihood {
    pub fn noiseless() -> Self {
        GroverLikelihood {
            noise: NoiseModel::Noiseless,
        }
    }
}

impl Likelihood for GroverLikelihood {
    type Control = Control;

    fn dim(&self) -> usize {
        1
    }

    #[inline]
    fn prob_one(&self, point: &[f64], control: Control) -> f64 {
        damped(grover_signal(point[0], control.0), self.noise.decay(control.0 as f64))
    }
}

/// Likelihood over `[θ, T]`, learning the coherence time jointly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointGroverLikelihood;

impl Likelihood for JointGroverLikelihood {
    type Control = Control;

    fn dim(&self) -> usize {
        2
    }

    #[inline]
    fn prob_one(&self, point: &[f64], control: Control) -> f64 {
        damped(
            grover_signal(point[0], control.0),
            decay_factor(control.0 as f64, point[1]),
        )
    }
}

/// Likelihood over `[T]` for decay experiments; the control is the
/// evolution time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecayLikelihood;

impl Likelihood for DecayLikelihood {
    type Control = f64;

    fn dim(&self) -> usize {
        1
    }

    #[inline]
    fn prob_one(&self, point: &[f64], t: f64) -> f64 {
        decay_prob_one(point[0], t)
    }
}

/// Outcome-1 probability the simulated device realises for `m`.
pub fn device_prob_one(truth: &AmplitudeModel, m: Control) -> f64 {
    damped(grover_signal(truth.theta(), m.0), truth.noise.decay(m.0 as f64))
}

fn draw_ones<R: Rng + ?Sized>(p: f64, shots: u64, rng: &mut R) -> u64 {
    let p = p.clamp(0.0, 1.0);
    // p is clamped, so construction cannot fail.
    Binomial::new(shots, p).expect("probability within [0, 1]").sample(rng)
}

/// Runs `shots` repetitions of the `m`-iteration Grover circuit on the
/// simulated device.
pub fn simulate_measurement<R: Rng + ?Sized>(
    truth: &AmplitudeModel,
    m: Control,
    shots: u64,
    rng: &mut R,
) -> Result<Datum> {
    if shots == 0 {
        return Err(Error::invalid("shots must be positive"));
    }
    let ones = draw_ones(device_prob_one(truth, m), shots, rng);
    Ok(Datum {
        control: m,
        shots,
        ones,
    })
}

/// Lets a reference state decohere for time `t` and measures it.
pub fn simulate_decay<R: Rng + ?Sized>(noise: NoiseModel, t: f64, shots: u64, rng: &mut R) -> Result<Datum<f64>> {
    if shots == 0 {
        return Err(Error::invalid("shots must be positive"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("evolution time {t} must be non-negative")));
    }
    let p = 0.5 * (1.0 + noise.decay(t));
    Ok(Datum {
        control: t,
        shots,
        ones: draw_ones(p, shots, rng),
    })
}

/// Queries to the state-preparation operator `A`: each oracle call applies
/// `A` twice and state preparation once more, so `shots · (2m + 1)`.
pub fn query_cost(m: Control, shots: u64) -> u64 {
    shots * (2 * m.0 + 1)
}

/// Query cost of decay experiments, charged like a Grover circuit with
/// `⌈t⌉` iterations.
pub fn decay_query_cost(t: f64, shots: u64) -> u64 {
    shots * (2 * t.ceil() as u64 + 1)
}
