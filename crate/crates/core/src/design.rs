//! Greedy adaptive choice of the Grover-iteration count.
//!
//! Each iteration scores a sparse grid of candidate controls by their
//! outcome-averaged utility and picks the best. The grid lives in a window
//! `[c_min, c_max]` that doubles whenever the chosen control keeps landing
//! at the top of the window.

use serde::{Deserialize, Serialize};

use crate::model::{Control, Likelihood};
use crate::smc::{ParticleEnsemble, Particles};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignParams {
    /// Grid points per sweep.
    pub n_evals: usize,
    /// Initial window is `[0, k0 · n_evals]`.
    pub k0: u64,
    /// A choice among the `top_rank` largest grid controls counts as a trigger.
    pub top_rank: usize,
    /// Triggers (not necessarily consecutive) needed to expand the window.
    pub trigger_repetitions: usize,
}

impl Default for DesignParams {
    fn default() -> Self {
        DesignParams {
            n_evals: 20,
            k0: 2,
            top_rank: 2,
            trigger_repetitions: 3,
        }
    }
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_evals < 2 {
            return Err(Error::invalid("n_evals must be at least 2"));
        }
        if self.k0 < 1 {
            return Err(Error::invalid("k0 must be at least 1"));
        }
        if self.top_rank < 1 || self.trigger_repetitions < 1 {
            return Err(Error::invalid("top_rank and trigger_repetitions must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignWindow {
    pub c_min: u64,
    pub c_max: u64,
    pub trigger_count: usize,
    pub params: DesignParams,
}

impl DesignWindow {
    /// Window `[0, k0 · n_evals]` with a fresh trigger counter.
    pub fn new(params: DesignParams) -> Result<Self> {
        params.validate()?;
        Ok(DesignWindow {
            c_min: 0,
            c_max: params.k0 * params.n_evals as u64,
            trigger_count: 0,
            params,
        })
    }

    /// `[c_min, c_max] → [c_max, 2·c_max]`.
    pub fn expand(&mut self) {
        self.c_min = self.c_max;
        self.c_max = self.c_max.saturating_mul(2);
        self.trigger_count = 0;
    }

    pub fn grid(&self) -> Vec<Control> {
        control_grid(self)
    }
}

/// `n_evals` evenly spaced integers over the window, endpoints included,
/// with duplicates removed when the window is narrower than the grid.
pub fn control_grid(window: &DesignWindow) -> Vec<Control> {
    let n = window.params.n_evals.max(2) as u128;
    let span = (window.c_max - window.c_min) as u128;
    let mut grid: Vec<Control> = (0..n)
        .map(|i| {
            // Round-to-nearest of i·span/(n−1) in integer arithmetic.
            let offset = (2 * i * span + (n - 1)) / (2 * (n - 1));
            Control(window.c_min + offset as u64)
        })
        .collect();
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UtilitySpec {
    /// Minimise the expected posterior variance of θ.
    NegativeVariance,
    /// Minimise the expected distance of the post-update ESS to `target`.
    EssTarget { target: f64 },
    /// [`UtilitySpec::EssTarget`] with the target set to `fraction` times
    /// the ESS before the update, re-evaluated at every iteration.
    RelativeEssTarget { fraction: f64 },
}

impl UtilitySpec {
    pub fn evaluate(&self, particles: &Particles<'_>) -> Result<f64> {
        match *self {
            UtilitySpec::NegativeVariance => negative_variance_utility(particles),
            UtilitySpec::EssTarget { target } => ess_target_utility(particles, target),
            UtilitySpec::RelativeEssTarget { .. } => Err(Error::invalid(
                "relative ESS target must be resolved against an ensemble first",
            )),
        }
    }

    /// Replaces a relative ESS target by the absolute one for `ensemble`.
    pub fn resolve<C: Copy>(&self, ensemble: &ParticleEnsemble<C>) -> Result<UtilitySpec> {
        let n = ensemble.len() as f64;
        let spec = match *self {
            UtilitySpec::RelativeEssTarget { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::invalid(format!("ess fraction {fraction} outside (0, 1]")));
                }
                UtilitySpec::EssTarget {
                    target: fraction * ensemble.ess(),
                }
            }
            other => other,
        };
        if let UtilitySpec::EssTarget { target } = spec {
            if !(target > 0.0 && target <= n) {
                return Err(Error::invalid(format!("ess target {target} outside (0, {n}]")));
            }
        }
        Ok(spec)
    }
}

/// `−Var[θ]` over the (first axis of the) ensemble.
pub fn negative_variance_utility(particles: &Particles<'_>) -> Result<f64> {
    Ok(-particles.variance(0)?)
}

/// `−|ESS − target|` of the candidate weights.
pub fn ess_target_utility(particles: &Particles<'_>, target: f64) -> Result<f64> {
    Ok(-(particles.ess()? - target).abs())
}

/// Picks the grid control with the highest average expected utility
/// (smallest `m` among ties) and advances the window's trigger state.
pub fn optimize_control<L>(
    ensemble: &ParticleEnsemble<Control>,
    window: &mut DesignWindow,
    utility: UtilitySpec,
    likelihood: &L,
) -> Result<Control>
where
    L: Likelihood<Control = Control>,
{
    let utility = utility.resolve(ensemble)?;
    let grid = window.grid();
    let mut best: Option<(usize, f64)> = None;
    for (i, &control) in grid.iter().enumerate() {
        let u = ensemble.average_expected_utility(likelihood, control, |p| utility.evaluate(p))?;
        let u = if u.is_nan() { f64::NEG_INFINITY } else { u };
        if best.is_none_or(|(_, b)| u > b) {
            best = Some((i, u));
        }
    }
    let (index, _) = best.expect("grid is never empty");
    if index + window.params.top_rank >= grid.len() {
        window.trigger_count += 1;
        if window.trigger_count >= window.params.trigger_repetitions {
            window.expand();
        }
    }
    Ok(grid[index])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Datum, GroverLikelihood, NoiseModel};
    use crate::smc::{Prior, ResampleConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn params(n_evals: usize, k0: u64, top_rank: usize, reps: usize) -> DesignParams {
        DesignParams {
            n_evals,
            k0,
            top_rank,
            trigger_repetitions: reps,
        }
    }

    fn ensemble(points: &[f64], weights: &[f64]) -> ParticleEnsemble<Control> {
        ParticleEnsemble::from_parts(Prior::amplitude(), points.to_vec(), weights.to_vec()).unwrap()
    }

    fn ms(grid: &[Control]) -> Vec<u64> {
        grid.iter().map(|c| c.0).collect()
    }

    #[test]
    fn initial_window() {
        let w = DesignWindow::new(params(10, 2, 1, 1)).unwrap();
        assert_eq!((w.c_min, w.c_max, w.trigger_count), (0, 20, 0));
        let w = DesignWindow::new(params(2, 1, 1, 1)).unwrap();
        assert_eq!((w.c_min, w.c_max), (0, 2));
        assert!(DesignWindow::new(params(1, 1, 1, 1)).is_err());
    }

    #[test]
    fn expansion_doubles() {
        let mut w = DesignWindow::new(params(10, 2, 1, 1)).unwrap();
        w.expand();
        assert_eq!((w.c_min, w.c_max), (20, 40));
    }

    #[test]
    fn grid_examples() {
        let mut w = DesignWindow::new(params(5, 1, 1, 1)).unwrap();
        w.c_max = 4;
        assert_eq!(ms(&w.grid()), vec![0, 1, 2, 3, 4]);
        w.c_max = 20;
        assert_eq!(ms(&w.grid()), vec![0, 5, 10, 15, 20]);
        w.c_min = 3;
        w.c_max = 5;
        assert_eq!(ms(&w.grid()), vec![3, 4, 5]);
    }

    #[test]
    fn utility_examples() {
        let e = ensemble(&[0.7], &[1.0]);
        assert_eq!(negative_variance_utility(&e.view()).unwrap(), 0.0);
        let e = ensemble(&[0.2, 0.4], &[1.0, 1.0]);
        assert_abs_diff_eq!(negative_variance_utility(&e.view()).unwrap(), -0.01, epsilon = 1e-15);
    }

    #[test]
    fn variance_utility_matches_grid_oracle() {
        // Posterior after three ones at m = 0 is ∝ sin 2θ · sin⁶θ.
        let n = 100_000;
        let h = FRAC_PI_2 / n as f64;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            let p = (2.0 * t).sin() * t.sin().powi(6);
            z += p;
            m1 += t * p;
            m2 += t * t * p;
        }
        let var = m2 / z - (m1 / z).powi(2);
        let mut acc = 0.0;
        for seed in 0..20 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut e = ParticleEnsemble::from_prior(Prior::amplitude(), 4000, &mut r).unwrap();
            let cfg = ResampleConfig::for_particles(4000);
            e.update(
                &GroverLikelihood::noiseless(),
                &Datum::new(Control(0), 3, 3).unwrap(),
                &cfg,
                &mut r,
            )
            .unwrap();
            acc += negative_variance_utility(&e.view()).unwrap();
        }
        assert!((acc / 20.0 + var).abs() / var < 1e-2);
    }

    #[test]
    fn ess_target_examples() {
        let e = ensemble(&[0.2, 0.5, 0.9], &[0.5, 0.3, 0.2]);
        let current = e.ess();
        let flat = GroverLikelihood {
            noise: NoiseModel::with_coherence_time(1e-6).unwrap(),
        };
        let u = e
            .average_expected_utility(&flat, Control(100), |p| {
                assert_abs_diff_eq!(p.ess().unwrap(), current, epsilon = 1e-9);
                ess_target_utility(p, current)
            })
            .unwrap();
        assert_abs_diff_eq!(u, 0.0, epsilon = 1e-9);

        // Two particles, m = 0: outcome 1 has probability ½(sin²θ₁ + sin²θ₂).
        let (t1, t2) = (0.3f64, 1.1f64);
        let e = ensemble(&[t1, t2], &[1.0, 1.0]);
        let target = 1.5;
        let (p1, p2) = (t1.sin().powi(2), t2.sin().powi(2));
        let mut brute = 0.0;
        for (l1, l2) in [(p1, p2), (1.0 - p1, 1.0 - p2)] {
            let pd = 0.5 * (l1 + l2);
            let (w1, w2) = (0.5 * l1 / pd, 0.5 * l2 / pd);
            brute += pd * -(1.0 / (w1 * w1 + w2 * w2) - target).abs();
        }
        let u = e
            .average_expected_utility(&GroverLikelihood::noiseless(), Control(0), |p| {
                ess_target_utility(p, target)
            })
            .unwrap();
        assert_abs_diff_eq!(u, brute, epsilon = 1e-12);
    }

    #[test]
    fn two_particle_prior_prefers_classical_shot() {
        let e = ensemble(&[0.0, FRAC_PI_2], &[1.0, 1.0]);
        let lik = GroverLikelihood::noiseless();
        let u0 = e
            .average_expected_utility(&lik, Control(0), negative_variance_utility)
            .unwrap();
        let u1 = e
            .average_expected_utility(&lik, Control(1), negative_variance_utility)
            .unwrap();
        assert_abs_diff_eq!(u0, 0.0, epsilon = 1e-15);
        assert!(u0 >= u1);
        let mut w = DesignWindow::new(params(2, 1, 1, 5)).unwrap();
        w.c_max = 1;
        let c = optimize_control(&e, &mut w, UtilitySpec::NegativeVariance, &lik).unwrap();
        assert_eq!(c, Control(0));
    }

    #[test]
    fn decohered_control_is_never_chosen() {
        // Short coherence time: only small m carry signal.
        let lik = GroverLikelihood {
            noise: NoiseModel::with_coherence_time(2.0).unwrap(),
        };
        let e = ensemble(&[0.2, 0.5, 0.9, 1.3], &[0.25, 0.25, 0.25, 0.25]);
        let mut w = DesignWindow::new(params(5, 1, 1, 10)).unwrap();
        w.c_max = 200;
        let c = optimize_control(&e, &mut w, UtilitySpec::NegativeVariance, &lik).unwrap();
        assert_eq!(c, Control(0));
        let top = e
            .average_expected_utility(&lik, Control(200), negative_variance_utility)
            .unwrap();
        let chosen = e.average_expected_utility(&lik, c, negative_variance_utility).unwrap();
        assert!(chosen > top);
    }

    #[test]
    fn top_choice_expands_window() {
        // Point mass: every utility is 0, so ties resolve to the smallest m.
        let e = ensemble(&[0.4], &[1.0]);
        let lik = GroverLikelihood::noiseless();
        let mut w = DesignWindow::new(params(2, 1, 2, 1)).unwrap();
        let c = optimize_control(&e, &mut w, UtilitySpec::NegativeVariance, &lik).unwrap();
        assert_eq!(c, Control(0));
        // With R = 2 and a two-point grid, m = 0 is among the top two.
        assert_eq!((w.c_min, w.c_max, w.trigger_count), (2, 4, 0));

        // R = 1: choosing the smallest m is not a trigger.
        let mut w = DesignWindow::new(params(4, 2, 1, 1)).unwrap();
        optimize_control(&e, &mut w, UtilitySpec::NegativeVariance, &lik).unwrap();
        assert_eq!((w.c_min, w.c_max, w.trigger_count), (0, 8, 0));
    }

    #[test]
    fn trigger_requires_repetitions() {
        // Broad prior with a single noiseless candidate at the top: the
        // informative large-m controls win.
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut e = ParticleEnsemble::from_prior(Prior::amplitude(), 500, &mut r).unwrap();
        e.reweight(
            &GroverLikelihood::noiseless(),
            &Datum::new(Control(0), 100, 30).unwrap(),
        )
        .unwrap();
        let lik = GroverLikelihood::noiseless();
        let mut w = DesignWindow::new(params(2, 1, 1, 2)).unwrap();
        let c = optimize_control(&e, &mut w, UtilitySpec::NegativeVariance, &lik).unwrap();
        assert_eq!(c, Control(2));
        assert_eq!((w.c_min, w.c_max, w.trigger_count), (0, 2, 1));
        optimize_control(&e, &mut w, UtilitySpec::NegativeVariance, &lik).unwrap();
        assert_eq!((w.c_min, w.c_max, w.trigger_count), (2, 4, 0));
    }

    proptest! {
        #[test]
        fn grid_within_window(c_min in 0u64..10_000, span in 1u64..100_000, n in 2usize..64) {
            let w = DesignWindow { c_min, c_max: c_min + span, trigger_count: 0, params: params(n, 1, 1, 1) };
            let g = w.grid();
            prop_assert!(g.len() <= n);
            prop_assert_eq!(g.first().unwrap().0, c_min);
            prop_assert_eq!(g.last().unwrap().0, c_min + span);
            prop_assert!(g.windows(2).all(|p| p[0].0 < p[1].0));
        }

        #[test]
        fn chosen_control_inside_window(seed in 0u64..200, ones in 0u64..=20) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut e = ParticleEnsemble::from_prior(Prior::amplitude(), 100, &mut r).unwrap();
            let lik = GroverLikelihood::noiseless();
            e.reweight(&lik, &Datum::new(Control(0), 20, ones).unwrap()).unwrap();
            let mut w = DesignWindow::new(params(5, 2, 2, 1)).unwrap();
            for _ in 0..4 {
                let (lo, hi) = (w.c_min, w.c_max);
                let c = optimize_control(&e, &mut w, UtilitySpec::NegativeVariance, &lik).unwrap();
                prop_assert!(c.0 >= lo && c.0 <= hi);
                prop_assert!(w.c_min == lo || w.c_min == hi);
            }
        }
    }
}
