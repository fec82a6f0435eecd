//! Maximum-likelihood estimation by Fisher scoring, and Monte Carlo studies
//! of the estimator against the Cramér–Rao bound.

mod study;

pub use study::{monte_carlo_study, StudyConfig, StudyReport, StudyRow, FAILURE_LIMIT, STUDY_CSV_HEADER};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::statistics::{
    scaled_inverse, Bound, GaussianModel, MeasurementModel, ModelPoint, NoiseTreatment, ParameterVector,
};

/// χ used to start the search when it is estimated.
pub const DEFAULT_CHI_PRIOR: f64 = 0.02;

/// Relative slack below which a likelihood decrease counts as rounding.
const LIKELIHOOD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    pub max_iterations: usize,
    /// Converged once every step is below `tolerance` relative to the
    /// parameter (or to its bound, for parameters near zero).
    pub tolerance: f64,
    /// Step factor applied while the likelihood decreases; `None` accepts
    /// every feasible step.
    pub damping: Option<f64>,
    pub max_halvings: usize,
    /// When no damped step raises the likelihood above its rounding floor,
    /// the iterate still counts as converged if every step component is
    /// below this fraction of the parameter's bound standard deviation.
    pub stall_tolerance: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-8,
            damping: Some(0.5),
            max_halvings: 10,
            stall_tolerance: 0.05,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.stall_tolerance >= 0.0) {
            return Err(invalid("stall_tolerance", "must be nonnegative"));
        }
        if let Some(f) = self.damping {
            if !(f > 0.0 && f <= 1.0) {
                return Err(invalid("damping", format!("must lie in (0, 1], got {f}")));
            }
        }
        Ok(())
    }

    fn shrink(&self) -> f64 {
        match self.damping {
            Some(f) if f < 1.0 => f,
            _ => 0.5,
        }
    }
}

/// Result of a scoring run on a generic Gaussian model.
#[derive(Debug, Clone)]
pub struct ScoringOutcome {
    pub theta: Vec<f64>,
    /// Parameters held at their zero bound.
    pub pinned: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    /// Converged through the stall rule rather than the step tolerance.
    pub stalled: bool,
    pub log_likelihood: f64,
    /// Log-likelihood at the start and after each accepted step.
    pub trace: Vec<f64>,
    /// Fisher information at the last scoring point; pinned rows are zero.
    pub fisher: DMatrix<f64>,
    /// Bounds of the free parameters; NaN for pinned ones.
    pub crb: Vec<f64>,
}

struct Step {
    theta: Vec<f64>,
    pinned: Vec<bool>,
    /// The full scoring step was already below tolerance.
    negligible: bool,
    /// No step improved the likelihood and the step was within the stall
    /// tolerance.
    stalled: bool,
    log_likelihood: Option<f64>,
}

fn active_of(pinned: &[bool]) -> Vec<bool> {
    pinned.iter().map(|p| !p).collect()
}

/// Inverse of the Fisher block of the free parameters, embedded in a full
/// matrix with zeros elsewhere.
fn free_inverse(fisher: &DMatrix<f64>, pinned: &[bool]) -> Result<DMatrix<f64>> {
    let idx: Vec<usize> = (0..pinned.len()).filter(|&k| !pinned[k]).collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| fisher[(idx[i], idx[j])]);
    let inv = scaled_inverse(&sub)?;
    let mut full = DMatrix::zeros(pinned.len(), pinned.len());
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            full[(a, b)] = inv[(i, j)];
        }
    }
    Ok(full)
}

fn advance<M: GaussianModel + ?Sized>(
    model: &M,
    data: &DVector<f64>,
    point: &ModelPoint,
    pinned: &[bool],
    config: &ScoringConfig,
) -> Result<Step> {
    let (fisher, score) = point.fisher_and_score(data);
    let inverse = free_inverse(&fisher.total, pinned)?;
    let delta = &inverse * &score;
    let theta = &point.theta;
    let free = || (0..theta.len()).filter(|&k| !pinned[k]);
    let negligible = free().all(|k| delta[k].abs() <= config.tolerance * theta[k].abs());
    let small = free().all(|k| delta[k].abs() <= config.stall_tolerance * inverse[(k, k)].sqrt());
    let base = point.log_likelihood(data);
    // damped steps take the best factor along the halving sequence
    let mut best: Option<(f64, Vec<f64>, Vec<bool>)> = None;
    let mut scale = 1.0;
    for _ in 0..=config.max_halvings {
        let mut candidate: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + scale * d).collect();
        let mut next_pinned = pinned.to_vec();
        let mut feasible = true;
        for k in free() {
            match model.bound(k) {
                Bound::Positive if candidate[k] <= 0.0 => feasible = false,
                Bound::NonNegative if candidate[k] <= 0.0 => {
                    candidate[k] = 0.0;
                    next_pinned[k] = true;
                }
                _ => {}
            }
        }
        scale *= config.shrink();
        if !feasible {
            continue;
        }
        if config.damping.is_none() {
            return Ok(Step {
                theta: candidate,
                pinned: next_pinned,
                negligible,
                stalled: false,
                log_likelihood: None,
            });
        }
        let ll = ModelPoint::new(model, &candidate, None).map_or(f64::NEG_INFINITY, |p| p.log_likelihood(data));
        match &best {
            Some((top, ..)) if ll <= *top => break,
            None if ll < base - LIKELIHOOD_SLACK * base.abs() => continue,
            _ => best = Some((ll, candidate, next_pinned)),
        }
    }
    if let Some((ll, candidate, next_pinned)) = best {
        return Ok(Step {
            theta: candidate,
            pinned: next_pinned,
            negligible,
            stalled: false,
            log_likelihood: Some(ll),
        });
    }
    if negligible || small {
        return Ok(Step {
            theta: theta.clone(),
            pinned: pinned.to_vec(),
            negligible,
            stalled: !negligible,
            log_likelihood: Some(base),
        });
    }
    Err(Error::DampingExhausted(config.max_halvings))
}

fn check_start<M: GaussianModel + ?Sized>(model: &M, theta: &[f64]) -> Result<Vec<bool>> {
    if theta.len() != model.param_count() {
        return Err(Error::LengthMismatch {
            expected: model.param_count(),
            got: theta.len(),
        });
    }
    let mut pinned = vec![false; theta.len()];
    for (k, &t) in theta.iter().enumerate() {
        let ok = match model.bound(k) {
            Bound::Free => t.is_finite(),
            Bound::Positive => t > 0.0 && t.is_finite(),
            Bound::NonNegative => t >= 0.0 && t.is_finite(),
        };
        if !ok {
            return Err(invalid("theta0", format!("`{}` = {t} is outside its range", model.param_name(k))));
        }
        pinned[k] = model.bound(k) == Bound::NonNegative && t == 0.0;
    }
    Ok(pinned)
}

/// One iteration of I(θ_k)·θ_{k+1} = I(θ_k)·θ_k + ∂ln p/∂θ, with damping and
/// bound handling.
pub fn score_step<M: GaussianModel + ?Sized>(
    data: &[f64],
    theta: &[f64],
    model: &M,
    config: &ScoringConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let pinned = check_start(model, theta)?;
    let point = ModelPoint::new(model, theta, Some(&active_of(&pinned)))?;
    Ok(advance(model, &DVector::from_column_slice(data), &point, &pinned, config)?.theta)
}

/// Iterates scoring steps from `theta0` until the step is negligible.
pub fn run_scoring<M: GaussianModel + ?Sized>(
    data: &[f64],
    theta0: &[f64],
    model: &M,
    config: &ScoringConfig,
) -> Result<ScoringOutcome> {
    config.validate()?;
    if data.len() != model.data_len() {
        return Err(Error::LengthMismatch {
            expected: model.data_len(),
            got: data.len(),
        });
    }
    let data = DVector::from_column_slice(data);
    let mut pinned = check_start(model, theta0)?;
    let mut point = ModelPoint::new(model, theta0, Some(&active_of(&pinned)))?;
    let mut trace = vec![point.log_likelihood(&data)];
    let mut theta = theta0.to_vec();
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let step = match advance(model, &data, &point, &pinned, config) {
            Ok(step) => step,
            Err(Error::DampingExhausted(_)) => break,
            Err(e) => return Err(e),
        };
        theta = step.theta;
        let newly_pinned = step.pinned != pinned;
        pinned = step.pinned;
        if (step.negligible || step.stalled) && !newly_pinned {
            converged = true;
            stalled = step.stalled;
            trace.push(step.log_likelihood.unwrap_or_else(|| {
                ModelPoint::new(model, &theta, None).map_or(f64::NAN, |p| p.log_likelihood(&data))
            }));
            break;
        }
        point = ModelPoint::new(model, &theta, Some(&active_of(&pinned)))?;
        trace.push(point.log_likelihood(&data));
    }
    let fisher = point.fisher().total;
    let crb = match free_inverse(&fisher, &pinned) {
        Ok(inv) => (0..theta.len()).map(|k| if pinned[k] { f64::NAN } else { inv[(k, k)] }).collect(),
        Err(_) => vec![f64::NAN; theta.len()],
    };
    Ok(ScoringOutcome {
        log_likelihood: *trace.last().unwrap(),
        theta,
        pinned,
        iterations,
        converged,
        stalled,
        trace,
        fisher,
        crb,
    })
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub theta_hat: ParameterVector,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub log_likelihood: f64,
    /// Log-likelihood at the start and after each accepted step.
    pub trace: Vec<f64>,
    pub fisher: DMatrix<f64>,
    pub crb: Vec<f64>,
    /// χ reached zero and was held there.
    pub chi_pinned: bool,
}

/// Maximum-likelihood estimate of θ from a measured correlation vector.
pub fn estimate(
    data: &[f64],
    model: &MeasurementModel,
    config: &ScoringConfig,
    theta0: Option<ParameterVector>,
) -> Result<EstimationResult> {
    let start = match theta0 {
        Some(t) => t,
        None => initial_guess(data, model)?,
    };
    model.check_theta(&start)?;
    let out = run_scoring(data, &start.to_vec(), model, config)?;
    Ok(EstimationResult {
        theta_hat: ParameterVector::from_slice(&out.theta)?,
        iterations: out.iterations,
        converged: out.converged,
        stalled: out.stalled,
        log_likelihood: out.log_likelihood,
        trace: out.trace,
        fisher: out.fisher,
        crb: out.crb,
        chi_pinned: out.pinned.get(2).copied().unwrap_or(false),
    })
}

/// I_eff from a far-field plateau level μ = I_effⁿ·(n−1)!.
pub fn intensity_from_plateau(plateau: f64, order: usize) -> f64 {
    let factorial: f64 = (1..order).map(|k| k as f64).product();
    (plateau / factorial).powf(1.0 / order as f64)
}

/// Smallest relative spread of the data that counts as a correlation peak.
const MIN_CONTRAST: f64 = 1e-3;
const GRID_POINTS: usize = 48;

/// Rough starting point: the source size whose correlation profile best
/// matches the data in least squares, with the amplitude solved in closed
/// form at each trial size.
pub fn initial_guess(data: &[f64], model: &MeasurementModel) -> Result<ParameterVector> {
    initial_guess_with_prior(data, model, DEFAULT_CHI_PRIOR)
}

pub fn initial_guess_with_prior(data: &[f64], model: &MeasurementModel, chi_prior: f64) -> Result<ParameterVector> {
    let m = model.data_len();
    if data.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: data.len() });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(invalid("data", "must be finite"));
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > 0.0) || (hi - lo) <= MIN_CONTRAST * hi {
        return Err(Error::PeakNotDetected);
    }
    let chi = match model.noise() {
        NoiseTreatment::Known { chi } => chi,
        NoiseTreatment::Estimated => chi_prior,
    };
    let x = DVector::from_column_slice(data);
    // residual and amplitude of the best scaled profile at size a
    let fit = |a: f64| -> Result<(f64, f64)> {
        let g = model.unit_mean(a, chi)?;
        let amp = g.dot(&x) / g.norm_squared();
        Ok(((&x - &g * amp).norm_squared(), amp))
    };

    // sizes whose first coherence zero lies between 2 pixels and 50 arrays away
    let array = model.array();
    let source = model.source();
    let reference = source.zero_separation(1, array) * source.dimension();
    let span = array.pixel_pitch() * m as f64;
    let (a_min, a_max) = (reference / (50.0 * span), reference / (2.0 * array.pixel_pitch()));
    let a_max = a_max.min(0.999 * crate::geometry::PARAXIAL_LIMIT * source.distance());
    let log_grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| (a_min.ln() + (a_max.ln() - a_min.ln()) * k as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect();
    let residuals: Vec<f64> = log_grid.iter().map(|&a| fit(a).map(|r| r.0)).collect::<Result<_>>()?;
    let best = (0..GRID_POINTS).min_by(|&i, &j| residuals[i].total_cmp(&residuals[j])).unwrap();
    if best == 0 || best == GRID_POINTS - 1 {
        return Err(Error::PeakNotDetected);
    }

    // golden-section refinement in log a
    let (mut l, mut r) = (log_grid[best - 1].ln(), log_grid[best + 1].ln());
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = r - ratio * (r - l);
    let mut d = l + ratio * (r - l);
    let (mut fc, mut fd) = (fit(c.exp())?.0, fit(d.exp())?.0);
    while r - l > 1e-6 {
        if fc < fd {
            r = d;
            d = c;
            fd = fc;
            c = r - ratio * (r - l);
            fc = fit(c.exp())?.0;
        } else {
            l = c;
            c = d;
            fc = fd;
            d = l + ratio * (r - l);
            fd = fit(d.exp())?.0;
        }
    }
    let a = (0.5 * (l + r)).exp();
    let amp = fit(a)?.1;
    if !(amp > 0.0) {
        return Err(Error::PeakNotDetected);
    }
    let i_eff = amp.powf(1.0 / model.order() as f64);
    match model.noise() {
        NoiseTreatment::Known { .. } => ParameterVector::new(a, i_eff),
        NoiseTreatment::Estimated => ParameterVector::with_chi(a, i_eff, chi_prior),
    }
}

#[cfg(test)]
mod tests;
