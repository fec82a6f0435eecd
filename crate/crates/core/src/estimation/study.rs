use std::fmt::Write as _;

use rayon::prelude::*;

use super::{estimate, ScoringConfig};
use crate::error::{invalid, Result};
use crate::geometry::{DetectorArray, SourceGeometry};
use crate::noise::NoiseModel;
use crate::simulator::{apply_detector_noise, sample_correlation, sample_thermal_fields_at};
use crate::statistics::{crb, DetectionScheme, MeasurementModel, NoiseTreatment, ParameterVector, SchemeKind};

/// Largest failed fraction for which a study still counts as valid.
pub const FAILURE_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub source: SourceGeometry,
    pub array: DetectorArray,
    pub orders: Vec<usize>,
    pub scheme: SchemeKind,
    /// Reference separation d for distinct references.
    pub separation: Option<usize>,
    pub frames: usize,
    /// Mean source intensity ⟨I⟩ before detector efficiency.
    pub mean_intensity: f64,
    pub noise: NoiseModel,
    /// Estimate χ as a third parameter instead of fixing it at its true value.
    pub estimate_chi: bool,
    pub repetitions: usize,
    pub seed: u64,
    pub scoring: ScoringConfig,
    /// Reuse stream 0 for every trial, making all trials identical.
    pub fixed_stream: bool,
}

impl StudyConfig {
    pub fn truth(&self) -> Result<ParameterVector> {
        let (a, i_eff) = (self.source.dimension(), self.noise.nu() * self.mean_intensity);
        if self.estimate_chi {
            ParameterVector::with_chi(a, i_eff, self.noise.chi())
        } else {
            ParameterVector::new(a, i_eff)
        }
    }

    pub fn treatment(&self) -> NoiseTreatment {
        if self.estimate_chi {
            NoiseTreatment::Estimated
        } else {
            NoiseTreatment::Known { chi: self.noise.chi() }
        }
    }

    pub fn scheme_for(&self, order: usize) -> Result<DetectionScheme> {
        match self.scheme {
            SchemeKind::RepeatedReference => DetectionScheme::repeated(order, &self.array),
            SchemeKind::DistinctReferences => {
                let d = self
                    .separation
                    .ok_or_else(|| invalid("separation", "distinct references need a separation d"))?;
                DetectionScheme::distinct(order, d, &self.array)
            }
        }
    }

    pub fn model_for(&self, order: usize) -> Result<MeasurementModel> {
        MeasurementModel::new(
            self.scheme_for(order)?,
            self.source,
            self.array,
            self.frames as u64,
            self.treatment(),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions < 2 {
            return Err(invalid("repetitions", "need at least 2 trials"));
        }
        if self.orders.is_empty() {
            return Err(invalid("orders", "list at least one order"));
        }
        self.scoring.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub order: usize,
    pub scheme: SchemeKind,
    pub separation: Option<usize>,
    /// Mean of â over successful trials, metres.
    pub mean_a: f64,
    /// Sample variance of â, m².
    pub var_sim: f64,
    /// Bound on var(â) at the true θ, m².
    pub var_crb: f64,
    /// Mean of the per-trial bounds at θ̂, m².
    pub mean_crb_at_estimate: f64,
    pub trials: usize,
    pub failures: usize,
    /// â of each successful trial in trial order.
    pub estimates: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl StudyRow {
    pub fn failure_fraction(&self) -> f64 {
        self.failures as f64 / (self.trials + self.failures) as f64
    }

    pub fn is_valid(&self) -> bool {
        self.failure_fraction() <= FAILURE_LIMIT
    }

    pub fn efficiency_ratio(&self) -> f64 {
        self.var_sim / self.var_crb
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
}

pub const STUDY_CSV_HEADER: &str = "n,scheme,d,mean_a_um,var_sim_um2,var_crb_um2,trials,failures";

impl StudyReport {
    pub fn row(&self, order: usize) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.order == order)
    }

    pub fn is_valid(&self) -> bool {
        self.rows.iter().all(StudyRow::is_valid)
    }

    /// CSV with lengths in µm and shortest round-trip numbers; `d` is empty
    /// for the repeated-reference scheme.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(STUDY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let d = r.separation.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{:?},{:?},{:?},{},{}",
                r.order,
                r.scheme.number(),
                d,
                r.mean_a * 1e6,
                r.var_sim * 1e12,
                r.var_crb * 1e12,
                r.trials,
                r.failures
            );
        }
        out
    }
}

/// Neumaier-compensated sum, in iteration order.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

struct TrialOutcome {
    a: f64,
    crb_a: f64,
    iterations: usize,
}

/// Simulates `repetitions` frame sets and estimates every order on each.
/// All orders of one trial share its frame set.
pub fn monte_carlo_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let truth = config.truth()?;
    let models: Vec<MeasurementModel> = config
        .orders
        .iter()
        .map(|&n| config.model_for(n))
        .collect::<Result<_>>()?;
    let mut pixels: Vec<i64> = models
        .iter()
        .flat_map(|m| m.scheme().sensor_pixels(&config.array))
        .collect();
    pixels.sort_unstable();
    pixels.dedup();

    let trials: Vec<Vec<Option<TrialOutcome>>> = (0..config.repetitions)
        .into_par_iter()
        .map(|trial| -> Result<Vec<Option<TrialOutcome>>> {
            let stream = if config.fixed_stream { 0 } else { trial as u64 };
            let frames = sample_thermal_fields_at(
                &config.source,
                &config.array,
                &pixels,
                config.mean_intensity,
                config.frames,
                config.seed,
                stream,
            )?;
            let frames = apply_detector_noise(frames, &config.noise, config.seed);
            Ok(models
                .iter()
                .map(|model| {
                    let data = sample_correlation(&frames, model.scheme()).ok()?;
                    let fit = estimate(data.as_slice(), model, &config.scoring, None).ok()?;
                    fit.converged.then(|| TrialOutcome {
                        a: fit.theta_hat.a,
                        crb_a: fit.crb[0],
                        iterations: fit.iterations,
                    })
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let rows = models
        .iter()
        .enumerate()
        .map(|(k, model)| {
            let done: Vec<&TrialOutcome> = trials.iter().filter_map(|t| t[k].as_ref()).collect();
            let count = done.len();
            let mean_a = compensated_sum(done.iter().map(|t| t.a)) / count as f64;
            let var_sim = compensated_sum(done.iter().map(|t| (t.a - mean_a).powi(2))) / (count as f64 - 1.0);
            let mean_crb_at_estimate = compensated_sum(done.iter().map(|t| t.crb_a)) / count as f64;
            Ok(StudyRow {
                order: model.order(),
                scheme: config.scheme,
                separation: match config.scheme {
                    SchemeKind::RepeatedReference => None,
                    SchemeKind::DistinctReferences => config.separation,
                },
                mean_a,
                var_sim,
                var_crb: crb(&truth, model)?[0],
                mean_crb_at_estimate,
                trials: count,
                failures: config.repetitions - count,
                estimates: done.iter().map(|t| t.a).collect(),
                iterations: done.iter().map(|t| t.iterations).collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(StudyReport { rows })
}
