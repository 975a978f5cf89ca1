//! Sequential Monte Carlo posteriors.
//!
//! A [`ParticleEnsemble`] is a weighted point cloud over the parameter
//! space. Each datum multiplies the weights by its likelihood; when the
//! effective sample size drops below a threshold the cloud is resampled and
//! perturbed by a kernel that (approximately) preserves the distribution.
//! The sums of reweighted weights double as an estimate of the marginal
//! likelihood of the data.

use std::f64::consts::FRAC_PI_2;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{Datum, Likelihood, Outcome};
use crate::{Error, Result};

/// Marginal prior along one parameter axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriorComponent {
    /// Grover angle on `[0, π/2]` with the amplitude `sin²θ` uniform on
    /// `[0, 1]`; the induced density in θ is `sin 2θ`.
    UniformAmplitude,
    Uniform {
        low: f64,
        high: f64,
    },
}

impl PriorComponent {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            PriorComponent::UniformAmplitude => (0.0, FRAC_PI_2),
            PriorComponent::Uniform { low, high } => (low, high),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorComponent::UniformAmplitude => {
                let a: f64 = rng.random();
                a.sqrt().asin()
            }
            PriorComponent::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if x < lo || x > hi {
            return 0.0;
        }
        match *self {
            PriorComponent::UniformAmplitude => (2.0 * x).sin(),
            PriorComponent::Uniform { low, high } => 1.0 / (high - low),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.bounds();
        x >= lo && x <= hi
    }

    /// Folds `x` back into the support by mirroring at the bounds.
    pub fn reflect(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        reflect_into(x, lo, hi)
    }
}

fn reflect_into(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        return x;
    }
    let width = hi - lo;
    if width <= 0.0 || !x.is_finite() {
        return lo;
    }
    let y = (x - lo).rem_euclid(2.0 * width);
    let folded = if y > width { 2.0 * width - y } else { y };
    (lo + folded).clamp(lo, hi)
}

/// Product prior over all parameter axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    components: Vec<PriorComponent>,
}

impl Prior {
    pub fn new(components: Vec<PriorComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("prior needs at least one component"));
        }
        for c in &components {
            let (lo, hi) = c.bounds();
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("prior bounds [{lo}, {hi}] invalid")));
            }
        }
        Ok(Prior { components })
    }

    /// Uniform amplitude prior over `[θ]`.
    pub fn amplitude() -> Self {
        Prior {
            components: vec![PriorComponent::UniformAmplitude],
        }
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        Prior::new(vec![PriorComponent::Uniform { low, high }])
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[PriorComponent] {
        &self.components
    }

    pub fn density(&self, point: &[f64]) -> f64 {
        self.components.iter().zip(point).map(|(c, &x)| c.density(x)).product()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.components.iter().zip(point).all(|(c, &x)| c.contains(x))
    }
}

/// Perturbation applied to resampled particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// Shrink towards the mean and add Gaussian jitter, preserving the
    /// first two moments.
    LiuWest { alpha: f64 },
    /// Random-walk Metropolis steps targeting the current posterior; needs
    /// the full data history.
    Metropolis { steps: usize },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::LiuWest { alpha: 0.98 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub kernel: Kernel,
    /// Resample when the post-update ESS drops below this value.
    pub ess_threshold: f64,
}

impl ResampleConfig {
    /// Liu-West with `α = 0.98`, threshold `N/2`.
    pub fn for_particles(n: usize) -> Self {
        ResampleConfig {
            kernel: Kernel::default(),
            ess_threshold: n as f64 / 2.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= n as f64) {
            return Err(Error::invalid(format!(
                "ess threshold {} outside (0, {n}]",
                self.ess_threshold
            )));
        }
        match self.kernel {
            Kernel::LiuWest { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                Err(Error::invalid(format!("liu-west alpha {alpha} outside (0, 1]")))
            }
            Kernel::Metropolis { steps: 0 } => Err(Error::invalid("metropolis needs ≥ 1 step")),
            _ => Ok(()),
        }
    }
}

/// Effective sample size `(Σw)² / Σw²`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(s, s2), &w| (s + w, s2 + w * w));
    if !(s > 0.0) {
        return Err(Error::DegenerateEnsemble("all weights are zero".into()));
    }
    Ok(s * s / s2)
}

/// Borrowed weighted particle set; weights need not be normalised.
#[derive(Debug, Clone, Copy)]
pub struct Particles<'a> {
    dim: usize,
    positions: &'a [f64],
    weights: &'a [f64],
}

impl<'a> Particles<'a> {
    pub fn new(dim: usize, positions: &'a [f64], weights: &'a [f64]) -> Result<Self> {
        if dim == 0 || positions.len() != dim * weights.len() {
            return Err(Error::invalid("positions and weights lengths do not match"));
        }
        Ok(Particles {
            dim,
            positions,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &'a [f64] {
        self.weights
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ess(&self) -> Result<f64> {
        ess(self.weights)
    }

    fn total_weight(&self) -> Result<f64> {
        let s: f64 = self.weights.iter().sum();
        if s > 0.0 {
            Ok(s)
        } else {
            Err(Error::DegenerateEnsemble("all weights are zero".into()))
        }
    }

    /// `Σ f(xᵢ) wᵢ / Σ wᵢ`.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let s = self.total_weight()?;
        let e: f64 = self
            .positions
            .chunks_exact(self.dim)
            .zip(self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(x, &w)| f(x) * w)
            .sum();
        Ok(e / s)
    }

    pub fn mean(&self, axis: usize) -> Result<f64> {
        self.expectation(|x| x[axis])
    }

    /// Weighted variance along one axis, `E[x²] − E[x]²`, accumulated
    /// around the mean to avoid cancellation.
    pub fn variance(&self, axis: usize) -> Result<f64> {
        let mu = self.mean(axis)?;
        self.expectation(|x| {
            let d = x[axis] - mu;
            d * d
        })
    }

    pub fn std(&self, axis: usize) -> Result<f64> {
        Ok(self.variance(axis)?.sqrt())
    }

    /// Weighted quantile of `f` over the particles (lower interpolation).
    pub fn quantile(&self, q: f64, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let s = self.total_weight()?;
        let mut vals: Vec<(f64, f64)> = self
            .positions
            .chunks_exact(self.dim)
            .zip(self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(x, &w)| (f(x), w / s))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        for &(v, w) in &vals {
            acc += w;
            if acc >= q {
                return Ok(v);
            }
        }
        Ok(vals.last().map(|v| v.0).unwrap_or(f64::NAN))
    }
}

/// What a single Bayesian update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    /// `ln Σᵢ Wᵢ`, the log of this datum's evidence factor.
    pub log_evidence_increment: f64,
    /// ESS right after reweighting.
    pub ess: f64,
    pub resampled: bool,
}

/// Weighted particle approximation of a posterior.
///
/// Weights are kept normalised to sum to one after every operation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<C> {
    prior: Prior,
    positions: Vec<f64>,
    weights: Vec<f64>,
    log_evidence: f64,
    n_updates: usize,
    history: Vec<Datum<C>>,
}

impl<C: Copy> ParticleEnsemble<C> {
    /// Draws `n` equally weighted particles from the prior.
    pub fn from_prior<R: Rng + ?Sized>(prior: Prior, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ensemble needs at least one particle"));
        }
        let mut positions = Vec::with_capacity(n * prior.dim());
        for _ in 0..n {
            for c in prior.components() {
                positions.push(c.sample(rng));
            }
        }
        Ok(ParticleEnsemble {
            prior,
            positions,
            weights: vec![1.0 / n as f64; n],
            log_evidence: 0.0,
            n_updates: 0,
            history: Vec::new(),
        })
    }

    /// Builds an ensemble from explicit positions (flattened, `dim` values
    /// per particle) and non-negative weights.
    pub fn from_parts(prior: Prior, positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let dim = prior.dim();
        if weights.is_empty() || positions.len() != dim * weights.len() {
            return Err(Error::invalid("positions and weights lengths do not match"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        if !positions.chunks_exact(dim).all(|x| prior.contains(x)) {
            return Err(Error::invalid("particle outside prior support"));
        }
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(Error::DegenerateEnsemble("all weights are zero".into()));
        }
        Ok(ParticleEnsemble {
            prior,
            positions,
            weights: weights.into_iter().map(|w| w / s).collect(),
            log_evidence: 0.0,
            n_updates: 0,
            history: Vec::new(),
        })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn history(&self) -> &[Datum<C>] {
        &self.history
    }

    pub fn n_updates(&self) -> usize {
        self.n_updates
    }

    pub fn view(&self) -> Particles<'_> {
        Particles {
            dim: self.dim(),
            positions: &self.positions,
            weights: &self.weights,
        }
    }

    pub fn ess(&self) -> f64 {
        // Normalised weights are never all zero.
        ess(&self.weights).unwrap_or(0.0)
    }

    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
        self.view().expectation(f)
    }

    pub fn mean(&self, axis: usize) -> Result<f64> {
        self.view().mean(axis)
    }

    pub fn variance(&self, axis: usize) -> Result<f64> {
        self.view().variance(axis)
    }

    /// Running `ln P(D)` estimate; zero (evidence one) before any update.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// `Π_t Σᵢ Wᵢ⁽ᵗ⁾`, the SMC estimate of the marginal likelihood.
    pub fn evidence(&self) -> Result<f64> {
        if self.n_updates == 0 {
            return Err(Error::NoUpdates);
        }
        Ok(self.log_evidence.exp())
    }

    /// Posterior probability of outcome 1 for `control`,
    /// `Σ wᵢ L(xᵢ | 1; control)`.
    pub fn expected_outcome_probability<L>(&self, likelihood: &L, control: C) -> Result<f64>
    where
        L: Likelihood<Control = C>,
    {
        self.check_dim(likelihood)?;
        self.expectation(|x| likelihood.prob_one(x, control))
    }

    /// Outcome-averaged utility of `control`: the sum over both outcomes
    /// of the outcome probability times `utility` evaluated on the
    /// hypothetical single-shot posterior. Never mutates `self`.
    pub fn average_expected_utility<L, U>(&self, likelihood: &L, control: C, utility: U) -> Result<f64>
    where
        L: Likelihood<Control = C>,
        U: Fn(&Particles<'_>) -> Result<f64>,
    {
        self.check_dim(likelihood)?;
        let dim = self.dim();
        let p_one: Vec<f64> = self
            .positions
            .chunks_exact(dim)
            .map(|x| likelihood.prob_one(x, control).clamp(0.0, 1.0))
            .collect();
        let mut candidate = vec![0.0; self.len()];
        let mut total = 0.0;
        for outcome in Outcome::BOTH {
            let mut p_outcome = 0.0;
            for ((c, &w), &p) in candidate.iter_mut().zip(&self.weights).zip(&p_one) {
                *c = w * outcome.prob(p);
                p_outcome += *c;
            }
            if !(p_outcome > 0.0) {
                continue;
            }
            candidate.iter_mut().for_each(|c| *c /= p_outcome);
            let view = Particles {
                dim,
                positions: &self.positions,
                weights: &candidate,
            };
            total += p_outcome * utility(&view)?;
        }
        Ok(total)
    }

    fn check_dim<L: Likelihood>(&self, likelihood: &L) -> Result<()> {
        if likelihood.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "likelihood expects {} parameters, ensemble has {}",
                likelihood.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Multiplies the weights by the datum's likelihood and renormalises,
    /// without resampling. Returns `ln Σᵢ Wᵢ`.
    pub fn reweight<L>(&mut self, likelihood: &L, datum: &Datum<C>) -> Result<f64>
    where
        L: Likelihood<Control = C>,
    {
        self.check_dim(likelihood)?;
        if datum.shots == 0 || datum.ones > datum.shots {
            return Err(Error::invalid("malformed datum"));
        }
        let dim = self.dim();
        let log_l: Vec<f64> = self
            .positions
            .chunks_exact(dim)
            .map(|x| datum.log_likelihood(likelihood.prob_one(x, datum.control).clamp(0.0, 1.0)))
            .collect();
        if log_l.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("likelihood evaluated to NaN"));
        }
        let peak = log_l
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return Err(Error::DegenerateEnsemble(
                "datum has zero likelihood at every particle".into(),
            ));
        }
        let mut s = 0.0;
        for (w, &l) in self.weights.iter_mut().zip(&log_l) {
            *w *= (l - peak).exp();
            s += *w;
        }
        self.weights.iter_mut().for_each(|w| *w /= s);
        let increment = s.ln() + peak;
        self.log_evidence += increment;
        self.n_updates += 1;
        self.history.push(*datum);
        Ok(increment)
    }

    /// Bayesian update followed by resampling if the ESS falls below the
    /// configured threshold.
    pub fn update<L, R>(
        &mut self,
        likelihood: &L,
        datum: &Datum<C>,
        config: &ResampleConfig,
        rng: &mut R,
    ) -> Result<UpdateInfo>
    where
        L: Likelihood<Control = C>,
        R: Rng + ?Sized,
    {
        let increment = self.reweight(likelihood, datum)?;
        let ess = self.ess();
        let resampled = ess < config.ess_threshold;
        if resampled {
            self.resample(config, likelihood, rng)?;
        }
        Ok(UpdateInfo {
            log_evidence_increment: increment,
            ess,
            resampled,
        })
    }

    /// Draws `N` particles proportionally to their weights, moves each
    /// with the configured kernel and resets the weights to `1/N`.
    pub fn resample<L, R>(&mut self, config: &ResampleConfig, likelihood: &L, rng: &mut R) -> Result<()>
    where
        L: Likelihood<Control = C>,
        R: Rng + ?Sized,
    {
        self.check_dim(likelihood)?;
        let dim = self.dim();
        let n = self.len();
        let view = self.view();
        let mut mean = Vec::with_capacity(dim);
        let mut std = Vec::with_capacity(dim);
        for axis in 0..dim {
            mean.push(view.mean(axis)?);
            std.push(view.std(axis)?);
        }
        let index = WeightedIndex::new(&self.weights)
            .map_err(|e| Error::DegenerateEnsemble(format!("cannot resample: {e}")))?;
        let mut next = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let j = index.sample(rng);
            next.extend_from_slice(&self.positions[j * dim..(j + 1) * dim]);
        }
        match config.kernel {
            Kernel::LiuWest { alpha } => {
                for point in next.chunks_exact_mut(dim) {
                    for (axis, x) in point.iter_mut().enumerate() {
                        let moved = liu_west_kernel(*x, mean[axis], std[axis], alpha, rng);
                        *x = self.prior.components()[axis].reflect(moved);
                    }
                }
            }
            Kernel::Metropolis { steps } => {
                let scale = 2.38 / (dim as f64).sqrt();
                let proposal_std: Vec<f64> = std.iter().map(|s| scale * s).collect();
                for point in next.chunks_exact_mut(dim) {
                    let mut current = point.to_vec();
                    for _ in 0..steps {
                        current =
                            metropolis_kernel(&current, &self.history, likelihood, &self.prior, &proposal_std, rng);
                    }
                    point.copy_from_slice(&current);
                }
            }
        }
        self.positions = next;
        self.weights = vec![1.0 / n as f64; n];
        Ok(())
    }
}

/// One Liu-West move: draw from `N(α·x + (1−α)·mean, √(1−α²)·std)`.
pub fn liu_west_kernel<R: Rng + ?Sized>(x: f64, mean: f64, std: f64, alpha: f64, rng: &mut R) -> f64 {
    let mu = alpha * x + (1.0 - alpha) * mean;
    let sigma = (1.0 - alpha * alpha).max(0.0).sqrt() * std;
    if sigma == 0.0 {
        return mu;
    }
    let z: f64 = StandardNormal.sample(rng);
    mu + sigma * z
}

fn log_target<L: Likelihood>(point: &[f64], data: &[Datum<L::Control>], likelihood: &L, prior: &Prior) -> f64 {
    let density = prior.density(point);
    if !(density > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut lp = density.ln();
    for d in data {
        lp += d.log_likelihood(likelihood.prob_one(point, d.control).clamp(0.0, 1.0));
        if lp == f64::NEG_INFINITY {
            break;
        }
    }
    lp
}

/// One random-walk Metropolis step targeting `P₀(x) Π L(x | D)`.
///
/// The Gaussian proposal is reflected at the prior bounds, which keeps it
/// symmetric. Returns the input position on rejection.
pub fn metropolis_kernel<L, R>(
    position: &[f64],
    data: &[Datum<L::Control>],
    likelihood: &L,
    prior: &Prior,
    proposal_std: &[f64],
    rng: &mut R,
) -> Vec<f64>
where
    L: Likelihood,
    R: Rng + ?Sized,
{
    let proposal: Vec<f64> = position
        .iter()
        .zip(proposal_std)
        .zip(prior.components())
        .map(|((&x, &s), c)| {
            let z: f64 = StandardNormal.sample(rng);
            c.reflect(x + s * z)
        })
        .collect();
    let current_lp = log_target(position, data, likelihood, prior);
    let proposed_lp = log_target(&proposal, data, likelihood, prior);
    if proposed_lp == f64::NEG_INFINITY {
        return position.to_vec();
    }
    let log_ratio = proposed_lp - current_lp;
    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
        proposal
    } else {
        position.to_vec()
    }
}
