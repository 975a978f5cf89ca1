//! Per-run trajectories shared by BAE and the reference algorithms.

use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    WarmUp,
    Adaptive,
    /// A non-adaptive stage of a reference algorithm.
    Stage,
}

/// State after one assimilated batch of measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub phase: Phase,
    /// Grover iterations `m`, or the Fourier order `K` for canonical QAE.
    pub control: u64,
    pub shots: u64,
    /// Outcome-1 count; for canonical QAE the count of the modal outcome.
    pub ones: u64,
    pub queries: u64,
    pub cumulative_queries: u64,
    /// Current amplitude estimate.
    pub mean_a: f64,
    /// Posterior standard deviation of the amplitude, when available.
    pub std_a: Option<f64>,
}

/// Summary of the coherence-time pre-estimation phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreEstimationSummary {
    pub shots: u64,
    pub n_times: usize,
    pub max_t: f64,
    pub queries: u64,
    pub coherence_time: f64,
    pub coherence_time_std: f64,
    /// Whether `queries` are included in the records' cumulative counts.
    pub counted: bool,
}

/// Posterior mass of [`RunTrace::credible_interval`].
pub const CREDIBLE_MASS: f64 = 0.9;

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub seed: u64,
    pub true_amplitude: f64,
    /// `None` for a noiseless device.
    pub true_coherence_time: Option<f64>,
    pub pre_estimation: Option<PreEstimationSummary>,
    pub records: Vec<TraceRecord>,
    /// NaN (written as `null`) until the first record.
    #[serde(deserialize_with = "null_as_nan")]
    pub estimate: f64,
    pub std: Option<f64>,
    /// Central credible interval of the final posterior over `a`, holding
    /// [`CREDIBLE_MASS`] of it. Only Bayesian runs fill this in.
    pub credible_interval: Option<(f64, f64)>,
    pub log_evidence: Option<f64>,
    /// Set when the run stopped early; `records` hold everything before.
    pub failure: Option<String>,
}

impl RunTrace {
    pub fn new(algorithm: impl Into<String>, seed: u64, true_amplitude: f64, true_coherence_time: Option<f64>) -> Self {
        RunTrace {
            algorithm: algorithm.into(),
            seed,
            true_amplitude,
            true_coherence_time,
            pre_estimation: None,
            records: Vec::new(),
            estimate: f64::NAN,
            std: None,
            credible_interval: None,
            log_evidence: None,
            failure: None,
        }
    }

    pub fn total_queries(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_queries)
    }

    /// Appends a record, numbering it and accumulating queries.
    pub fn push(
        &mut self,
        phase: Phase,
        control: u64,
        shots: u64,
        ones: u64,
        queries: u64,
        mean_a: f64,
        std_a: Option<f64>,
    ) {
        let base = match self.records.last() {
            Some(r) => r.cumulative_queries,
            None => self
                .pre_estimation
                .as_ref()
                .filter(|p| p.counted)
                .map_or(0, |p| p.queries),
        };
        self.records.push(TraceRecord {
            step: self.records.len(),
            phase,
            control,
            shots,
            ones,
            queries,
            cumulative_queries: base + queries,
            mean_a,
            std_a,
        });
        self.estimate = mean_a;
        self.std = std_a;
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }
}
