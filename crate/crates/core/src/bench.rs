//! Benchmark harness and error-curve processing.
//!
//! Trials draw a random amplitude (and coherence time, for noisy runs), run
//! one algorithm and flatten its trace into `(queries, error)` points.
//! Points from all trials are pooled, binned by query count on a log scale
//! and averaged with x and y treated separately; a power law fitted to the
//! bins gives the scaling exponent and anchors reference lines with slopes
//! −½ and −1.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bae::{run_annealed_bae, run_bae};
use crate::config::{Algorithm, Config, NoiseRule};
use crate::model::AmplitudeModel;
use crate::reference::{canonical_qae_trace, classical_trace, mlae_trace, MlaeSchedule, ScheduleKind};
use crate::trace::RunTrace;
use crate::{Error, Result};

/// Seed of trial `index`, mixed from the global seed with splitmix64.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Amplitude uniform on `(0, 1)` and, for noisy benchmarks, `T_c` uniform on
/// `[coherence_time_min, coherence_time_max)`.
pub fn sample_truth<R: Rng + ?Sized>(config: &Config, rng: &mut R) -> Result<AmplitudeModel> {
    let a = config.amplitude.unwrap_or_else(|| loop {
        let a: f64 = rng.random();
        if a > 0.0 {
            break a;
        }
    });
    let t = match (config.coherence_time, config.noise) {
        (Some(t), _) => Some(t),
        (None, NoiseRule::None) => None,
        (None, NoiseRule::Decoherence) => Some(rng.random_range(config.coherence_time_min..config.coherence_time_max)),
    };
    match t {
        Some(t) => AmplitudeModel::with_coherence_time(a, t),
        None => AmplitudeModel::noiseless(a),
    }
}

/// Runs the configured algorithm once against `truth`.
pub fn run_algorithm(config: &Config, truth: &AmplitudeModel, seed: u64) -> Result<RunTrace> {
    let device_t = match truth.noise {
        crate::model::NoiseModel::Noiseless => None,
        crate::model::NoiseModel::Decoherence { coherence_time } => Some(coherence_time),
    };
    let a = truth.amplitude.value();
    match config.algorithm {
        Algorithm::Bae => run_bae(&config.bae_config(device_t), truth, seed),
        Algorithm::AnnealedBae => run_annealed_bae(&config.bae_config(device_t), truth, seed),
        Algorithm::Classical => classical_trace(truth, config.max_queries, config.classical_per_decade, seed),
        Algorithm::CanonicalQae => canonical_qae_trace(a, config.qae_k_min..=config.qae_k_max, config.qae_shots, seed),
        Algorithm::MlaeLis | Algorithm::MlaeEis => {
            let kind = if config.algorithm == Algorithm::MlaeLis {
                ScheduleKind::Lis
            } else {
                ScheduleKind::Eis
            };
            let schedule = MlaeSchedule::fitting_budget(kind, config.mlae_shots, config.max_queries);
            mlae_trace(truth, &schedule, seed)
        }
    }
}

/// Draws the truth from `seed` and derives an independent seed for the
/// algorithm itself, so that device and estimator randomness never share a
/// stream.
pub fn draw_problem(config: &Config, seed: u64) -> Result<(AmplitudeModel, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = sample_truth(config, &mut rng)?;
    Ok((truth, rng.random()))
}

/// Draws the truth for trial `index` and runs it. Returns the trial seed
/// alongside the outcome.
pub fn run_trial(config: &Config, seed: u64, index: usize) -> (u64, Result<RunTrace>) {
    let s = trial_seed(seed, index as u64);
    let result = draw_problem(config, s).and_then(|(truth, run_seed)| run_algorithm(config, &truth, run_seed));
    (s, result)
}

/// One trace record as a point of the error curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub run_id: usize,
    pub algorithm: String,
    pub true_amplitude: f64,
    #[serde(rename = "true_T")]
    pub true_t: Option<f64>,
    pub n_queries: f64,
    pub estimate: f64,
    pub sq_norm_error: f64,
    pub norm_std: Option<f64>,
    pub seed: u64,
}

pub fn points_from_trace(run_id: usize, trace: &RunTrace) -> Vec<Point> {
    let a = trace.true_amplitude;
    trace
        .records
        .iter()
        .map(|r| Point {
            run_id,
            algorithm: trace.algorithm.clone(),
            true_amplitude: a,
            true_t: trace.true_coherence_time,
            n_queries: r.cumulative_queries as f64,
            estimate: r.mean_a,
            sq_norm_error: ((a - r.mean_a) / a).powi(2),
            norm_std: r.std_a.map(|s| s / a),
            seed: trace.seed,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub run_id: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkOutput {
    pub traces: Vec<RunTrace>,
    pub points: Vec<Point>,
    pub failures: Vec<TrialFailure>,
}

/// Runs `config.n_trials` independent trials in parallel. Results are in
/// trial order and depend only on `(config, seed)`. Failed trials are
/// reported, and partial traces of collapsed runs still contribute points.
pub fn run_benchmark(config: &Config, seed: u64) -> Result<BenchmarkOutput> {
    config.validate()?;
    let results: Vec<(u64, Result<RunTrace>)> = (0..config.n_trials)
        .into_par_iter()
        .map(|i| run_trial(config, seed, i))
        .collect();
    let mut out = BenchmarkOutput::default();
    for (run_id, (s, result)) in results.into_iter().enumerate() {
        match result {
            Ok(trace) => {
                if let Some(msg) = &trace.failure {
                    out.failures.push(TrialFailure {
                        run_id,
                        seed: s,
                        message: msg.clone(),
                    });
                }
                out.points.extend(points_from_trace(run_id, &trace));
                out.traces.push(trace);
            }
            Err(e) => out.failures.push(TrialFailure {
                run_id,
                seed: s,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

pub fn write_points<W: Write>(writer: W, points: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    // Header is written explicitly so that an empty file still has one.
    w.write_record([
        "run_id",
        "algorithm",
        "true_amplitude",
        "true_T",
        "n_queries",
        "estimate",
        "sq_norm_error",
        "norm_std",
        "seed",
    ])?;
    for p in points {
        w.write_record([
            p.run_id.to_string(),
            p.algorithm.clone(),
            p.true_amplitude.to_string(),
            p.true_t.map(|t| t.to_string()).unwrap_or_default(),
            p.n_queries.to_string(),
            p.estimate.to_string(),
            p.sq_norm_error.to_string(),
            p.norm_std.map(|s| s.to_string()).unwrap_or_default(),
            p.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points<R: Read>(reader: R) -> Result<Vec<Point>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// `√(mean(((aᵢ − âᵢ)/aᵢ)²))` over `(a, â)` pairs. Pairs with `a = 0` are
/// skipped with a warning since the relative error is undefined.
pub fn nrmse(pairs: &[(f64, f64)]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &(a, est) in pairs {
        if a == 0.0 {
            log::warn!("skipping point with zero true amplitude");
            continue;
        }
        sum += ((a - est) / a).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoPoints);
    }
    Ok((sum / n as f64).sqrt())
}

/// Input to the binning: query count, squared normalised error, and the
/// normalised posterior std when the algorithm reports one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub x: f64,
    pub sq_err: f64,
    pub norm_std: Option<f64>,
}

impl From<&Point> for ErrorPoint {
    fn from(p: &Point) -> Self {
        ErrorPoint {
            x: p.n_queries,
            sq_err: p.sq_norm_error,
            norm_std: p.norm_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedPoint {
    pub bin: usize,
    pub x_mean: f64,
    pub rmse: f64,
    pub std_mean: Option<f64>,
    pub n_points: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Groups points into `n_bins` equal-width bins of `log x` spanning the
/// data and summarises each nonempty bin by the mean x and the root of the
/// mean squared error (or medians). The std column is the root mean square
/// of the normalised stds, over the points that have one.
pub fn bin_and_average(points: &[ErrorPoint], n_bins: usize, aggregate: Aggregate) -> Result<Vec<BinnedPoint>> {
    if points.is_empty() {
        return Err(Error::NoPoints);
    }
    if n_bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    if points
        .iter()
        .any(|p| !(p.x > 0.0) || !p.x.is_finite() || !p.sq_err.is_finite())
    {
        return Err(Error::invalid("points need positive finite x and finite error"));
    }
    let lo = points.iter().map(|p| p.x.ln()).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.x.ln()).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut groups: Vec<Vec<&ErrorPoint>> = vec![Vec::new(); n_bins];
    for p in points {
        let b = if width > 0.0 {
            (((p.x.ln() - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        groups[b].push(p);
    }
    let mut out = Vec::new();
    for (bin, g) in groups.iter().enumerate().filter(|(_, g)| !g.is_empty()) {
        let mut xs: Vec<f64> = g.iter().map(|p| p.x).collect();
        let mut ys: Vec<f64> = g.iter().map(|p| p.sq_err).collect();
        let mut ss: Vec<f64> = g.iter().filter_map(|p| p.norm_std).map(|s| s * s).collect();
        let n = g.len();
        let (x_mean, y) = match aggregate {
            Aggregate::Mean => (xs.iter().sum::<f64>() / n as f64, ys.iter().sum::<f64>() / n as f64),
            Aggregate::Median => (median(&mut xs), median(&mut ys)),
        };
        let std_mean = if ss.is_empty() {
            None
        } else {
            Some(match aggregate {
                Aggregate::Mean => (ss.iter().sum::<f64>() / ss.len() as f64).sqrt(),
                Aggregate::Median => median(&mut ss).sqrt(),
            })
        };
        out.push(BinnedPoint {
            bin,
            x_mean,
            rmse: y.sqrt(),
            std_mean,
            n_points: n,
        });
    }
    Ok(out)
}

/// Power law `y = B · x^m` fitted in log-log space, anchored at the first
/// data point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub scale: f64,
    pub x0: f64,
    pub y0: f64,
}

impl PowerFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.scale * x.powf(self.slope)
    }

    /// Reference line with slope −½ through the anchor.
    pub fn sql(&self, x: f64) -> f64 {
        self.y0 * (x / self.x0).powf(-0.5)
    }

    /// Reference line with slope −1 through the anchor.
    pub fn heisenberg(&self, x: f64) -> f64 {
        self.y0 * (x / self.x0).powf(-1.0)
    }
}

/// Least-squares fit of `log y` against `log x`. Points with non-positive
/// coordinates are ignored.
pub fn fit_intercept(xs: &[f64], ys: &[f64]) -> Result<PowerFit> {
    if xs.len() != ys.len() {
        return Err(Error::Fit("x and y lengths differ".into()));
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Fit("need at least two positive points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-12 * n) {
        return Err(Error::Fit("x values have no spread".into()));
    }
    let slope = sxy / sxx;
    let scale = (my - slope * mx).exp();
    let x0 = xs[0];
    Ok(PowerFit {
        slope,
        scale,
        x0,
        y0: scale * x0.powf(slope),
    })
}

/// Binned curve, fit and reference lines for a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub bins: Vec<BinnedPoint>,
    pub fit: PowerFit,
}

pub fn process_points(points: &[Point], n_bins: usize, aggregate: Aggregate) -> Result<Processed> {
    let input: Vec<ErrorPoint> = points.iter().map(ErrorPoint::from).collect();
    let bins = bin_and_average(&input, n_bins, aggregate)?;
    let xs: Vec<f64> = bins.iter().map(|b| b.x_mean).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.rmse).collect();
    let fit = fit_intercept(&xs, &ys)?;
    Ok(Processed { bins, fit })
}

pub fn write_bins<W: Write>(writer: W, bins: &[BinnedPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin", "x_mean", "rmse", "std_mean", "n_points"])?;
    for b in bins {
        w.write_record([
            b.bin.to_string(),
            b.x_mean.to_string(),
            b.rmse.to_string(),
            b.std_mean.map(|s| s.to_string()).unwrap_or_default(),
            b.n_points.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fitted curve and the two reference lines at each bin's x.
pub fn write_lines<W: Write>(writer: W, processed: &Processed) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x_mean", "fit", "sql", "heisenberg"])?;
    let f = &processed.fit;
    for b in &processed.bins {
        w.write_record([
            b.x_mean.to_string(),
            f.eval(b.x_mean).to_string(),
            f.sql(b.x_mean).to_string(),
            f.heisenberg(b.x_mean).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DummySpec {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// `σ(anchor_x) = anchor_sigma` fixes `σ(x) = c/x`.
    pub anchor_x: f64,
    pub anchor_sigma: f64,
}

impl Default for DummySpec {
    fn default() -> Self {
        DummySpec {
            n_points: 20_000,
            x_min: 10.0,
            x_max: 1e5,
            anchor_x: 10.0,
            anchor_sigma: 0.1,
        }
    }
}

impl DummySpec {
    pub fn sigma(&self, x: f64) -> f64 {
        self.anchor_sigma * self.anchor_x / x
    }
}

/// Synthetic Heisenberg-limited errors: `x` log-uniform, `z ~ N(μ, σ(x))`
/// with `σ ∝ 1/x`, and `y = (z − μ)²`, so `E[y | x] = σ(x)²`.
///
/// Points are expressed in the raw point format with `μ = 1`, so `y` is
/// the squared normalised error of the estimate `z`.
pub fn generate_dummy_hl_data(spec: &DummySpec, seed: u64) -> Result<Vec<Point>> {
    if spec.n_points == 0 {
        return Err(Error::NoPoints);
    }
    if !(spec.x_min > 0.0 && spec.x_min < spec.x_max && spec.anchor_x > 0.0 && spec.anchor_sigma > 0.0) {
        return Err(Error::invalid("need 0 < x_min < x_max and a positive anchor"));
    }
    let mu = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l0, l1) = (spec.x_min.ln(), spec.x_max.ln());
    (0..spec.n_points)
        .map(|i| {
            let x = (l0 + (l1 - l0) * rng.random::<f64>()).exp();
            let sigma = spec.sigma(x);
            let z = Normal::new(mu, sigma)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(&mut rng);
            Ok(Point {
                run_id: i,
                algorithm: "dummy".into(),
                true_amplitude: mu,
                true_t: None,
                n_queries: x,
                estimate: z,
                sq_norm_error: (z - mu).powi(2),
                norm_std: Some(sigma / mu),
                seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ep(x: f64, sq_err: f64) -> ErrorPoint {
        ErrorPoint {
            x,
            sq_err,
            norm_std: None,
        }
    }

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(&[(0.3, 0.3), (0.7, 0.7)]).unwrap(), 0.0);
        assert_abs_diff_eq!(nrmse(&[(0.5, 0.25)]).unwrap(), 0.5);
        assert_abs_diff_eq!(
            nrmse(&[(0.5, 0.35), (0.5, 0.7)]).unwrap(),
            0.125f64.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(nrmse(&[(0.0, 0.1), (0.5, 0.25)]).unwrap(), 0.5);
        assert!(matches!(nrmse(&[]), Err(Error::NoPoints)));
    }

    #[test]
    fn binning_examples() {
        let b = bin_and_average(&[ep(10.0, 0.01), ep(10.0, 0.03)], 5, Aggregate::Mean).unwrap();
        assert_eq!(b.len(), 1);
        assert_abs_diff_eq!(b[0].x_mean, 10.0);
        assert_abs_diff_eq!(b[0].rmse, 0.02f64.sqrt(), epsilon = 1e-15);

        let pts = [ep(1.0, 0.04), ep(100.0, 0.09), ep(10_000.0, 0.16)];
        let b = bin_and_average(&pts, 3, Aggregate::Mean).unwrap();
        assert_eq!(b.len(), 3);
        for (bp, p) in b.iter().zip(&pts) {
            assert_abs_diff_eq!(bp.x_mean, p.x, epsilon = 1e-9);
            assert_abs_diff_eq!(bp.rmse, p.sq_err.sqrt(), epsilon = 1e-12);
        }
        // Empty middle bins are dropped.
        let b = bin_and_average(&[ep(1.0, 1.0), ep(1e4, 1.0)], 10, Aggregate::Mean).unwrap();
        assert_eq!(b.iter().map(|b| b.bin).collect::<Vec<_>>(), vec![0, 9]);
        assert!(matches!(bin_and_average(&[], 3, Aggregate::Mean), Err(Error::NoPoints)));
    }

    #[test]
    fn median_binning() {
        let pts = [ep(10.0, 0.01), ep(11.0, 0.04), ep(12.0, 100.0)];
        let b = bin_and_average(&pts, 2, Aggregate::Median).unwrap();
        let total: usize = b.iter().map(|b| b.n_points).sum();
        assert_eq!(total, 3);
        let one = bin_and_average(&pts, 1, Aggregate::Median).unwrap();
        assert_abs_diff_eq!(one[0].rmse, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(one[0].x_mean, 11.0);
    }

    #[test]
    fn fit_examples() {
        let xs: Vec<f64> = (1..=10).map(|i| 10f64.powf(i as f64 / 2.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
        let f = fit_intercept(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.scale, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.y0, 1.0 / xs[0], epsilon = 1e-9);
        let ys: Vec<f64> = xs.iter().map(|x| 4.0 * x.powf(-0.5)).collect();
        let f = fit_intercept(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(f.scale, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.sql(xs[0] * 4.0), f.y0 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.heisenberg(xs[0] * 4.0), f.y0 / 4.0, epsilon = 1e-12);
        assert!(fit_intercept(&[5.0, 5.0], &[1.0, 2.0]).is_err());
        assert!(fit_intercept(&[5.0], &[1.0]).is_err());
    }

    #[test]
    fn dummy_data_properties() {
        let spec = DummySpec::default();
        assert_abs_diff_eq!(spec.sigma(spec.anchor_x), spec.anchor_sigma);
        let pts = generate_dummy_hl_data(&spec, 1).unwrap();
        assert!(pts.iter().all(|p| p.sq_norm_error >= 0.0));
        assert!(pts
            .iter()
            .all(|p| p.n_queries >= spec.x_min && p.n_queries <= spec.x_max));
    }

    #[test]
    fn dummy_conditional_mean() {
        // In each decade, x²·y has mean c²; check within 3 standard errors.
        let spec = DummySpec {
            n_points: 40_000,
            x_min: 10.0,
            x_max: 1e4,
            anchor_x: 10.0,
            anchor_sigma: 0.1,
        };
        let c2 = (spec.anchor_sigma * spec.anchor_x).powi(2);
        let pts = generate_dummy_hl_data(&spec, 2).unwrap();
        for d in 1..4 {
            let (lo, hi) = (10f64.powi(d), 10f64.powi(d + 1));
            let v: Vec<f64> = pts
                .iter()
                .filter(|p| p.n_queries >= lo && p.n_queries < hi)
                .map(|p| p.sq_norm_error * p.n_queries.powi(2))
                .collect();
            assert!(v.len() >= 10_000);
            let m = v.iter().sum::<f64>() / v.len() as f64;
            // x²y/c² is χ²₁ with variance 2.
            let se = c2 * (2.0 / v.len() as f64).sqrt();
            assert!((m - c2).abs() < 3.0 * se, "decade {d}: {m} vs {c2}");
        }
    }

    #[test]
    fn dummy_pipeline_slope() {
        let pts = generate_dummy_hl_data(&DummySpec::default(), 3).unwrap();
        let p = process_points(&pts, 10, Aggregate::Mean).unwrap();
        assert!((p.fit.slope + 1.0).abs() < 0.05, "{}", p.fit.slope);
    }

    #[test]
    fn points_round_trip_csv() {
        let pts = vec![
            Point {
                run_id: 0,
                algorithm: "bae".into(),
                true_amplitude: 0.25,
                true_t: Some(3000.5),
                n_queries: 101.0,
                estimate: 0.2,
                sq_norm_error: 0.04,
                norm_std: Some(0.1),
                seed: u64::MAX,
            },
            Point {
                run_id: 1,
                algorithm: "classical".into(),
                true_amplitude: 0.1 + 0.2,
                true_t: None,
                n_queries: 7.0,
                estimate: 1.0 / 3.0,
                sq_norm_error: 0.0,
                norm_std: None,
                seed: 2,
            },
        ];
        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        assert_eq!(read_points(buf.as_slice()).unwrap(), pts);
        let mut empty = Vec::new();
        write_points(&mut empty, &[]).unwrap();
        assert!(read_points(empty.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn classical_single_trial_point() {
        let cfg = Config {
            algorithm: Algorithm::Classical,
            n_trials: 1,
            max_queries: 50,
            classical_per_decade: 1,
            ..Config::default()
        };
        let out = run_benchmark(&cfg, 4).unwrap();
        let last = out.points.last().unwrap();
        let trace = &out.traces[0];
        let ones: u64 = trace.records.iter().map(|r| r.ones).sum();
        let expected = (trace.true_amplitude - ones as f64 / 50.0) / trace.true_amplitude;
        assert_abs_diff_eq!(last.sq_norm_error, expected.powi(2), epsilon = 1e-15);
        assert_eq!(out.points.len(), trace.records.len());
    }

    #[test]
    fn benchmark_is_deterministic() {
        let cfg = Config {
            algorithm: Algorithm::MlaeEis,
            n_trials: 6,
            max_queries: 5000,
            ..Config::default()
        };
        let a = run_benchmark(&cfg, 9).unwrap();
        let b = run_benchmark(&cfg, 9).unwrap();
        assert_eq!(a.points, b.points);
        let total: usize = a.traces.iter().map(|t| t.records.len()).sum();
        assert_eq!(a.points.len(), total);
    }

    #[test]
    fn trial_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| trial_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }

    proptest! {
        #[test]
        fn nrmse_permutation_invariant(mut v in proptest::collection::vec((0.01f64..1.0, 0.0f64..1.0), 1..30), k in 0usize..30) {
            let a = nrmse(&v).unwrap();
            let r = k % v.len();
            v.rotate_left(r);
            v.reverse();
            prop_assert!((nrmse(&v).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn bins_strictly_increasing(xs in proptest::collection::vec(1.0f64..1e6, 1..200), n in 2usize..20) {
            let pts: Vec<ErrorPoint> = xs.iter().map(|&x| ep(x, 0.1)).collect();
            let b = bin_and_average(&pts, n, Aggregate::Mean).unwrap();
            prop_assert!(b.windows(2).all(|w| w[0].x_mean < w[1].x_mean));
            prop_assert_eq!(b.iter().map(|b| b.n_points).sum::<usize>(), xs.len());
        }

        #[test]
        fn power_law_recovered(m in -2.0f64..2.0, logb in -3.0f64..3.0) {
            let xs: Vec<f64> = (0..12).map(|i| 2f64.powi(i)).collect();
            let ys: Vec<f64> = xs.iter().map(|x| logb.exp() * x.powf(m)).collect();
            let f = fit_intercept(&xs, &ys).unwrap();
            prop_assert!((f.slope - m).abs() < 1e-6);
        }
    }
}
