//! Reference estimators: canonical QAE from exact phase-estimation
//! statistics, the classical sample mean and maximum-likelihood amplitude
//! estimation with linear or exponential schedules.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::model::{query_cost, simulate_measurement, AmplitudeModel, Control, Datum, NoiseModel};
use crate::trace::{Phase, RunTrace};
use crate::{Error, Result};

/// Points in the MLE search grids.
pub const MLE_GRID_POINTS: usize = 10_000;

/// Outcome distribution of phase estimation with `k_order` outcomes for the
/// eigenphase `phi`.
pub fn qpe_outcome_distribution(phi: f64, k_order: usize) -> Result<Vec<f64>> {
    if k_order == 0 {
        return Err(Error::invalid("Fourier order must be positive"));
    }
    if !phi.is_finite() {
        return Err(Error::invalid("phase must be finite"));
    }
    Ok((0..k_order).map(|x| qpe_probability(phi, k_order, x)).collect())
}

fn qpe_probability(phi: f64, k_order: usize, x: usize) -> f64 {
    let k = k_order as f64;
    // Signed circular distance in [-½, ½); the formula is even in it and
    // keeping it small avoids cancellation in sin(πΔ) near Δ = 1.
    let mut delta = (phi - x as f64 / k).rem_euclid(1.0);
    if delta >= 0.5 {
        delta -= 1.0;
    }
    let den = (delta * PI).sin();
    if den.abs() < 1e-12 {
        1.0
    } else {
        let num = (k * delta * PI).sin();
        (num * num) / (k * k * den * den)
    }
}

/// Outcome distribution of canonical QAE: the Grover operator has
/// eigenphases `±θ/π`, each measured with probability ½.
pub fn qae_outcome_distribution(theta: f64, k_order: usize) -> Result<Vec<f64>> {
    let plus = qpe_outcome_distribution(theta / PI, k_order)?;
    let minus = qpe_outcome_distribution(1.0 - theta / PI, k_order)?;
    Ok(plus.iter().zip(&minus).map(|(p, q)| 0.5 * (p + q)).collect())
}

fn qae_outcome_probability(theta: f64, k_order: usize, x: usize) -> f64 {
    0.5 * (qpe_probability(theta / PI, k_order, x) + qpe_probability(1.0 - theta / PI, k_order, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpeConfig {
    /// Auxiliary qubits; the Fourier order is `2^k`.
    pub k: u32,
    pub shots: u64,
}

impl QpeConfig {
    pub fn order(&self) -> usize {
        1usize << self.k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaeResult {
    /// Maximum-likelihood estimate near the modal outcome.
    pub estimate: f64,
    /// `sin²(π x*/K)` for the folded modal outcome `x*`.
    pub mode_estimate: f64,
    /// Bounds of the search interval around the mode.
    pub interval: (f64, f64),
    pub counts: Vec<u64>,
    pub queries: u64,
}

/// Canonical QAE with `2^k` outcomes and `shots` repetitions, followed by a
/// likelihood search around the most frequent outcome.
pub fn run_canonical_qae(a: f64, k: u32, shots: u64, seed: u64) -> Result<QaeResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    qae_with_rng(a, QpeConfig { k, shots }, &mut rng)
}

fn qae_with_rng<R: rand::Rng + ?Sized>(a: f64, cfg: QpeConfig, rng: &mut R) -> Result<QaeResult> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::invalid(format!("amplitude {a} outside [0, 1]")));
    }
    if cfg.k == 0 || cfg.k > 20 || cfg.shots == 0 {
        return Err(Error::invalid("canonical QAE needs 1 ≤ k ≤ 20 and shots ≥ 1"));
    }
    let order = cfg.order();
    let theta = a.sqrt().asin();
    let dist = qae_outcome_distribution(theta, order)?;
    let index = WeightedIndex::new(&dist).map_err(|e| Error::invalid(e.to_string()))?;
    let mut counts = vec![0u64; order];
    for _ in 0..cfg.shots {
        counts[index.sample(rng)] += 1;
    }

    let mode = counts
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
        .map(|(i, _)| i)
        .expect("order ≥ 2");
    let folded = mode.min(order - mode);
    // sin²(πx/K) written as ½ − ½·sin(π(K − 4x)/2K), exact at a = ½.
    let grid_amp = |x: usize| {
        let arg = PI * (order as f64 - 4.0 * x as f64) / (2.0 * order as f64);
        0.5 - 0.5 * arg.sin()
    };
    let a_star = grid_amp(folded);
    let lo = if folded == 0 {
        0.0
    } else {
        0.5 * (grid_amp(folded - 1) + a_star)
    };
    let hi = if folded == order / 2 {
        1.0
    } else {
        0.5 * (grid_amp(folded + 1) + a_star)
    };

    let observed: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(x, &c)| (x, c as f64))
        .collect();
    let log_l = |cand: f64| -> f64 {
        let th = cand.sqrt().asin();
        observed
            .iter()
            .map(|&(x, c)| c * qae_outcome_probability(th, order, x).ln())
            .sum()
    };
    // Candidates must beat the mode by more than rounding noise, so exactly
    // representable amplitudes are returned exactly.
    let mut best = (a_star, log_l(a_star) + 1e-9);
    for i in 0..MLE_GRID_POINTS {
        let cand = lo + (hi - lo) * i as f64 / (MLE_GRID_POINTS - 1) as f64;
        let l = log_l(cand);
        if l > best.1 {
            best = (cand, l);
        }
    }
    Ok(QaeResult {
        estimate: best.0,
        mode_estimate: a_star,
        interval: (lo, hi),
        counts,
        queries: cfg.shots * order as u64,
    })
}

/// One record per `k` in `k_range`, each an independent QAE run. Records
/// carry the per-run cost rather than a running total.
pub fn canonical_qae_trace(a: f64, k_range: std::ops::RangeInclusive<u32>, shots: u64, seed: u64) -> Result<RunTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = RunTrace::new("canonical_qae", seed, a, None);
    for k in k_range {
        let r = qae_with_rng(a, QpeConfig { k, shots }, &mut rng)?;
        let modal = r.counts.iter().copied().max().unwrap_or(0);
        trace.records.push(crate::trace::TraceRecord {
            step: trace.records.len(),
            phase: Phase::Stage,
            control: r.counts.len() as u64,
            shots,
            ones: modal,
            queries: r.queries,
            cumulative_queries: r.queries,
            mean_a: r.estimate,
            std_a: None,
        });
        trace.estimate = r.estimate;
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalResult {
    pub estimate: f64,
    pub ones: u64,
    pub queries: u64,
}

/// Sample mean of `shots` unamplified measurements.
pub fn run_classical_baseline(a: f64, shots: u64, seed: u64) -> Result<ClassicalResult> {
    let truth = AmplitudeModel::noiseless(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = simulate_measurement(&truth, Control(0), shots, &mut rng)?;
    Ok(ClassicalResult {
        estimate: d.ones as f64 / shots as f64,
        ones: d.ones,
        queries: shots,
    })
}

/// Shot counts `1, …, max_shots` on a grid of `per_decade` points per
/// decade, deduplicated; always ends at `max_shots`.
pub fn log_checkpoints(max_shots: u64, per_decade: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let decades = (max_shots as f64).log10();
    let steps = (decades * per_decade as f64).ceil() as usize;
    for i in 0..=steps {
        let n = (10f64.powf(i as f64 / per_decade as f64).round() as u64).min(max_shots);
        if out.last() != Some(&n) {
            out.push(n);
        }
    }
    if out.last() != Some(&max_shots) {
        out.push(max_shots);
    }
    out
}

/// Classical sampling up to `max_shots`, recording the running sample mean
/// at logarithmically spaced checkpoints.
pub fn classical_trace(truth: &AmplitudeModel, max_shots: u64, per_decade: usize, seed: u64) -> Result<RunTrace> {
    if max_shots == 0 {
        return Err(Error::invalid("max_shots must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = RunTrace::new("classical", seed, truth.amplitude.value(), true_coherence(truth));
    let (mut shots, mut ones) = (0u64, 0u64);
    for n in log_checkpoints(max_shots, per_decade) {
        let d = simulate_measurement(truth, Control(0), n - shots, &mut rng)?;
        shots = n;
        ones += d.ones;
        let p = ones as f64 / shots as f64;
        trace.push(
            Phase::Stage,
            0,
            d.shots,
            d.ones,
            query_cost(Control(0), d.shots),
            p,
            Some((p * (1.0 - p) / shots as f64).sqrt()),
        );
    }
    Ok(trace)
}

fn true_coherence(truth: &AmplitudeModel) -> Option<f64> {
    match truth.noise {
        NoiseModel::Noiseless => None,
        NoiseModel::Decoherence { coherence_time } => Some(coherence_time),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `m = 0, 1, 2, …`
    Lis,
    /// `m = 0, 1, 2, 4, 8, …`
    Eis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlaeSchedule {
    pub kind: ScheduleKind,
    pub stages: usize,
    pub shots_per_stage: u64,
}

impl MlaeSchedule {
    pub fn controls(&self) -> Vec<Control> {
        (0..self.stages)
            .map(|i| match self.kind {
                ScheduleKind::Lis => Control(i as u64),
                ScheduleKind::Eis if i == 0 => Control(0),
                ScheduleKind::Eis => Control(1u64 << (i - 1)),
            })
            .collect()
    }

    pub fn queries(&self) -> u64 {
        self.controls()
            .iter()
            .map(|&m| query_cost(m, self.shots_per_stage))
            .sum()
    }

    /// Longest schedule whose total cost stays within `budget`.
    pub fn fitting_budget(kind: ScheduleKind, shots_per_stage: u64, budget: u64) -> Self {
        let mut s = MlaeSchedule {
            kind,
            stages: 1,
            shots_per_stage,
        };
        while (MlaeSchedule {
            stages: s.stages + 1,
            ..s
        })
        .queries()
            <= budget
        {
            s.stages += 1;
        }
        s
    }
}

fn mlae_log_likelihood(theta: f64, data: &[Datum]) -> f64 {
    data.iter()
        .map(|d| {
            let s = (d.control.multiplier() * theta).sin();
            d.log_likelihood((s * s).clamp(0.0, 1.0))
        })
        .sum()
}

/// Maximum-likelihood angle under the noiseless model: the best point of
/// a uniform grid on `[0, π/2]`, refined by golden-section search between
/// its neighbours.
pub fn mlae_estimate_theta(data: &[Datum]) -> f64 {
    let n = MLE_GRID_POINTS;
    let h = FRAC_PI_2 / (n - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..n {
        let l = mlae_log_likelihood(i as f64 * h, data);
        if l > best.1 {
            best = (i, l);
        }
    }
    let lo = best.0.saturating_sub(1) as f64 * h;
    let hi = ((best.0 + 1).min(n - 1)) as f64 * h;
    let refined = golden_section_max(|t| mlae_log_likelihood(t, data), lo, hi, 1e-12);
    if mlae_log_likelihood(refined, data) >= best.1 {
        refined
    } else {
        best.0 as f64 * h
    }
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlaeResult {
    pub estimate: f64,
    pub data: Vec<Datum>,
    pub queries: u64,
}

/// MLAE against a device with optional coherence time `coherence_time`;
/// inference always assumes a noiseless device.
pub fn run_mlae(a: f64, schedule: &MlaeSchedule, seed: u64, coherence_time: Option<f64>) -> Result<MlaeResult> {
    let truth = match coherence_time {
        Some(t) => AmplitudeModel::with_coherence_time(a, t)?,
        None => AmplitudeModel::noiseless(a)?,
    };
    let trace = mlae_trace(&truth, schedule, seed)?;
    Ok(MlaeResult {
        estimate: trace.estimate,
        data: trace
            .records
            .iter()
            .map(|r| Datum {
                control: Control(r.control),
                shots: r.shots,
                ones: r.ones,
            })
            .collect(),
        queries: trace.total_queries(),
    })
}

/// MLAE with one record per stage, each holding the estimate from all
/// stages so far.
pub fn mlae_trace(truth: &AmplitudeModel, schedule: &MlaeSchedule, seed: u64) -> Result<RunTrace> {
    if schedule.stages == 0 || schedule.shots_per_stage == 0 {
        return Err(Error::invalid("MLAE needs at least one stage and one shot"));
    }
    let label = match schedule.kind {
        ScheduleKind::Lis => "mlae_lis",
        ScheduleKind::Eis => "mlae_eis",
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = RunTrace::new(label, seed, truth.amplitude.value(), true_coherence(truth));
    let mut data = Vec::with_capacity(schedule.stages);
    for m in schedule.controls() {
        let d = simulate_measurement(truth, m, schedule.shots_per_stage, &mut rng)?;
        data.push(d);
        let theta = mlae_estimate_theta(&data);
        trace.push(
            Phase::Stage,
            m.0,
            d.shots,
            d.ones,
            query_cost(m, d.shots),
            theta.sin().powi(2),
            None,
        );
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// `|(1/K) Σ_j exp(2πij(φ − x/K))|²` summed explicitly.
    fn dft_oracle(phi: f64, k: usize) -> Vec<f64> {
        (0..k)
            .map(|x| {
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..k {
                    let ang = 2.0 * PI * j as f64 * (phi - x as f64 / k as f64);
                    re += ang.cos();
                    im += ang.sin();
                }
                (re * re + im * im) / (k * k) as f64
            })
            .collect()
    }

    #[test]
    fn qpe_examples() {
        let p = qpe_outcome_distribution(0.25, 4).unwrap();
        for (x, v) in p.iter().enumerate() {
            assert_abs_diff_eq!(*v, if x == 1 { 1.0 } else { 0.0 }, epsilon = 1e-15);
        }
        let p = qpe_outcome_distribution(0.1, 2).unwrap();
        let p0 = (0.2 * PI).sin().powi(2) / (4.0 * (0.1 * PI).sin().powi(2));
        assert_abs_diff_eq!(p[0], p0, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], 1.0 - p0, epsilon = 1e-14);
    }

    #[test]
    fn qpe_matches_dft() {
        for &k in &[1usize, 2, 3, 8, 17, 64] {
            for i in 0..25 {
                let phi = (i as f64 * 0.618_034) % 1.0;
                let p = qpe_outcome_distribution(phi, k).unwrap();
                let o = dft_oracle(phi, k);
                for (a, b) in p.iter().zip(&o) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-9);
                }
                assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn qae_half_amplitude_two_qubits() {
        let p = qae_outcome_distribution(0.5f64.sqrt().asin(), 4).unwrap();
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[3], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0] + p[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_amplitude_is_recovered() {
        for seed in 0..5 {
            let r = run_canonical_qae(0.5, 2, 1 + seed * 7, seed).unwrap();
            assert_eq!(r.estimate, 0.5);
            assert_eq!(r.queries, (1 + seed * 7) * 4);
        }
    }

    #[test]
    fn estimate_inside_mode_interval() {
        for seed in 0..30 {
            let a = (seed as f64 * 0.137 + 0.01) % 1.0;
            let r = run_canonical_qae(a, 4, 50, seed).unwrap();
            assert!(r.estimate >= r.interval.0 && r.estimate <= r.interval.1);
            assert!(r.mode_estimate >= r.interval.0 && r.mode_estimate <= r.interval.1);
        }
    }

    #[test]
    fn classical_examples() {
        assert_eq!(run_classical_baseline(1.0, 10, 0).unwrap().estimate, 1.0);
        assert_eq!(run_classical_baseline(0.0, 10, 0).unwrap().estimate, 0.0);
        let n = 1000;
        let mse = (0..n)
            .map(|s| (run_classical_baseline(0.3, 100, s).unwrap().estimate - 0.3).powi(2))
            .sum::<f64>()
            / n as f64;
        let expected = (0.3f64 * 0.7 / 100.0).sqrt();
        assert!((mse.sqrt() - expected).abs() / expected < 0.1);
    }

    #[test]
    fn checkpoints_are_increasing() {
        let c = log_checkpoints(100_000, 10);
        assert_eq!(c[0], 1);
        assert_eq!(*c.last().unwrap(), 100_000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn classical_trace_accumulates() {
        let truth = AmplitudeModel::noiseless(0.4).unwrap();
        let t = classical_trace(&truth, 1000, 5, 3).unwrap();
        assert_eq!(t.total_queries(), 1000);
        let ones: u64 = t.records.iter().map(|r| r.ones).sum();
        assert_eq!(t.estimate, ones as f64 / 1000.0);
    }

    #[test]
    fn schedules() {
        let lis = MlaeSchedule {
            kind: ScheduleKind::Lis,
            stages: 4,
            shots_per_stage: 2,
        };
        assert_eq!(lis.controls(), vec![Control(0), Control(1), Control(2), Control(3)]);
        assert_eq!(lis.queries(), 2 * (1 + 3 + 5 + 7));
        let eis = MlaeSchedule {
            kind: ScheduleKind::Eis,
            stages: 5,
            shots_per_stage: 1,
        };
        assert_eq!(
            eis.controls(),
            vec![Control(0), Control(1), Control(2), Control(4), Control(8)]
        );
        let fit = MlaeSchedule::fitting_budget(ScheduleKind::Eis, 100, 100_000);
        assert!(fit.queries() <= 100_000);
        assert!(
            MlaeSchedule {
                stages: fit.stages + 1,
                ..fit
            }
            .queries()
                > 100_000
        );
    }

    #[test]
    fn single_stage_mlae_is_sample_mean() {
        let s = MlaeSchedule {
            kind: ScheduleKind::Eis,
            stages: 1,
            shots_per_stage: 37,
        };
        for seed in 0..10 {
            let r = run_mlae(0.42, &s, seed, None).unwrap();
            let p = r.data[0].ones as f64 / 37.0;
            assert_abs_diff_eq!(r.estimate, p, epsilon = 1e-6);
            assert_eq!(r.queries, 37);
        }
    }

    #[test]
    fn mlae_no_underflow_at_many_shots() {
        let d = [Datum::new(Control(3), 1_000_000, 400_000).unwrap()];
        let theta = mlae_estimate_theta(&d);
        assert!(mlae_log_likelihood(theta, &d).is_finite());
        assert_abs_diff_eq!((7.0 * theta).sin().powi(2), 0.4, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn qae_symmetric_and_normalised(theta in 0.0f64..FRAC_PI_2, k in 1u32..7) {
            let order = 1usize << k;
            let p = qae_outcome_distribution(theta, order).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for x in 0..order {
                prop_assert!((p[x] - p[(order - x) % order]).abs() < 1e-12);
                prop_assert!(p[x] >= 0.0);
            }
            let q = qae_outcome_distribution(PI - theta, order).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
