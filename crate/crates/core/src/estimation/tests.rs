use super::*;
use crate::geometry::{DetectorArray, SourceGeometry};
use crate::statistics::{mean_vector, DetectionScheme, Moments};
use approx::assert_relative_eq;

/// μ(θ) = θ, C = 1.
struct Linear;

impl GaussianModel for Linear {
    fn data_len(&self) -> usize {
        1
    }
    fn param_count(&self) -> usize {
        1
    }
    fn param_name(&self, _: usize) -> &'static str {
        "theta"
    }
    fn moments(&self, theta: &[f64]) -> Result<Moments> {
        Ok(Moments {
            mean: DVector::from_element(1, theta[0]),
            cov: DMatrix::identity(1, 1),
        })
    }
}

/// μ = (θ, θ²), C = I.
struct Quadratic;

impl GaussianModel for Quadratic {
    fn data_len(&self) -> usize {
        2
    }
    fn param_count(&self) -> usize {
        1
    }
    fn param_name(&self, _: usize) -> &'static str {
        "theta"
    }
    fn bound(&self, _: usize) -> Bound {
        Bound::Positive
    }
    fn moments(&self, theta: &[f64]) -> Result<Moments> {
        Ok(Moments {
            mean: DVector::from_vec(vec![theta[0], theta[0] * theta[0]]),
            cov: DMatrix::identity(2, 2),
        })
    }
}

fn plain() -> ScoringConfig {
    ScoringConfig {
        damping: None,
        ..ScoringConfig::default()
    }
}

#[test]
fn linear_gaussian_scoring_is_exact_in_one_step() {
    for start in [-3.0, 0.5, 10.0] {
        let next = score_step(&[1.75], &[start], &Linear, &plain()).unwrap();
        assert_relative_eq!(next[0], 1.75, max_relative = 1e-6);
    }
}

#[test]
fn stationary_point_is_kept() {
    let next = score_step(&[2.0, 4.0], &[2.0], &Quadratic, &ScoringConfig::default()).unwrap();
    assert_relative_eq!(next[0], 2.0, max_relative = 1e-12);
}

#[test]
fn damped_scoring_never_lowers_the_likelihood() {
    let out = run_scoring(&[2.2, 4.5], &[5.0], &Quadratic, &ScoringConfig::default()).unwrap();
    assert!(out.converged, "{out:?}");
    assert!(out.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs()), "{:?}", out.trace);
    // stationary point of (2.2 − θ)² + (4.5 − θ²)²: 2θ³ − 8θ − 2.2 = 0
    let t = out.theta[0];
    assert!((2.0 * t.powi(3) - 8.0 * t - 2.2).abs() < 1e-6, "{t}");
}

#[test]
fn configuration_is_validated() {
    let bad = ScoringConfig {
        tolerance: 0.0,
        ..ScoringConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = ScoringConfig {
        damping: Some(1.5),
        ..ScoringConfig::default()
    };
    assert!(bad.validate().is_err());
    assert!(score_step(&[1.0, 1.0], &[-1.0], &Quadratic, &ScoringConfig::default()).is_err());
}

/// Noise-free data are the infinite-frame limit; at finite N the log-det
/// term of the likelihood moves the maximum by O(1/N).
const EXACT_FRAMES: u64 = 1_000_000_000_000;

fn disc_model(scheme: DetectionScheme, noise: NoiseTreatment) -> MeasurementModel {
    let array = DetectorArray::default();
    MeasurementModel::new(scheme, SourceGeometry::disc(100e-6).unwrap(), array, EXACT_FRAMES, noise).unwrap()
}

#[test]
fn exact_mean_data_is_a_fixed_point() {
    let array = DetectorArray::default();
    let cases = [
        (DetectionScheme::repeated(3, &array).unwrap(), NoiseTreatment::Known { chi: 0.0 }),
        (DetectionScheme::distinct(3, 182, &array).unwrap(), NoiseTreatment::Estimated),
    ];
    for (scheme, noise) in cases {
        let model = disc_model(scheme, noise);
        let truth = match noise {
            NoiseTreatment::Known { .. } => ParameterVector::new(100e-6, 0.5).unwrap(),
            NoiseTreatment::Estimated => ParameterVector::with_chi(100e-6, 0.5, 0.02).unwrap(),
        };
        let data = mean_vector(&truth, &model).unwrap();
        let fit = estimate(data.as_slice(), &model, &ScoringConfig::default(), None).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert_relative_eq!(fit.theta_hat.a, truth.a, max_relative = 1e-6);
        assert_relative_eq!(fit.theta_hat.i_eff, truth.i_eff, max_relative = 1e-6);
    }
}

#[test]
fn initial_guess_lands_near_the_truth() {
    let array = DetectorArray::default();
    let model = disc_model(DetectionScheme::repeated(2, &array).unwrap(), NoiseTreatment::Known { chi: 0.0 });
    let truth = ParameterVector::new(100e-6, 0.5).unwrap();
    let data = mean_vector(&truth, &model).unwrap();
    let guess = initial_guess(data.as_slice(), &model).unwrap();
    assert!((guess.a / truth.a - 1.0).abs() < 0.1, "{guess:?}");
}

#[test]
fn flat_data_has_no_peak() {
    let array = DetectorArray::default();
    let model = disc_model(DetectionScheme::repeated(2, &array).unwrap(), NoiseTreatment::Known { chi: 0.0 });
    let flat = vec![0.25; array.pixel_count()];
    assert_eq!(initial_guess(&flat, &model).unwrap_err(), Error::PeakNotDetected);
}

#[test]
fn plateau_gives_effective_intensity() {
    assert_relative_eq!(intensity_from_plateau(4.0, 2), 2.0, max_relative = 1e-15);
    assert_relative_eq!(intensity_from_plateau(2.0 * 8.0, 3), 2.0, max_relative = 1e-15);
}
