mod common;

use common::{airy_by_quadrature, naive_permanent, pairwise_matrix};
use hbt_core::correlations::{g_2n_general, g_2n_scheme1, g_n, g_n_scheme1, permanent, CorrelationSpec, DEFAULT_ORDER_CAP};
use hbt_core::geometry::{coherence, coherence_matrix, DetectorArray, SourceGeometry, SourceKind};
use hbt_core::noise::{noise_moment_2n, noise_moment_n, NoiseModel};
use hbt_core::statistics::{
    covariance_matrix, crb, fisher_information, DetectionScheme, MeasurementModel, NoiseTreatment, ParameterVector,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = SourceKind> {
    prop_oneof![Just(SourceKind::Disc), Just(SourceKind::Slit)]
}

/// Sources between 20 and 300 µm on the default array.
fn source() -> impl Strategy<Value = SourceGeometry> {
    (kind(), 20e-6..300e-6f64).prop_map(|(k, a)| SourceGeometry::new(k, a, 0.25).unwrap())
}

/// Sensor positions within ±400 pixels of the centre.
fn position() -> impl Strategy<Value = f64> {
    -400.0 * 5.3e-6..400.0 * 5.3e-6f64
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn coherence_is_symmetric_and_bounded(s in source(), x1 in position(), x2 in position()) {
        let array = DetectorArray::default();
        let g = coherence(x1, x2, &s, &array);
        prop_assert_eq!(g, coherence(x2, x1, &s, &array));
        prop_assert!(g.abs() <= 1.0);
        if x1 != x2 {
            prop_assert!(g < 1.0);
        }
        prop_assert_eq!(coherence(x1, x1, &s, &array), 1.0);
    }

    #[test]
    fn disc_kernel_matches_quadrature(a in 20e-6..300e-6f64, x in position()) {
        let array = DetectorArray::default();
        let s = SourceGeometry::disc(a).unwrap();
        let u = s.kernel_argument(x, &array);
        prop_assert!((coherence(x, 0.0, &s, &array) - airy_by_quadrature(u)).abs() < 1e-10);
    }

    #[test]
    fn coherence_depends_on_size_times_separation(s in source(), x in position()) {
        let array = DetectorArray::default();
        let half = s.with_dimension(s.dimension() / 2.0).unwrap();
        let g = coherence(x, 0.0, &s, &array);
        let scaled = coherence(2.0 * x, 0.0, &half, &array);
        prop_assert!((g - scaled).abs() <= 1e-12, "{} vs {}", g, scaled);
    }

    #[test]
    fn coherence_matrix_is_symmetric_with_unit_diagonal(
        s in source(),
        xs in prop::collection::vec(position(), 1..8),
    ) {
        let array = DetectorArray::default();
        let m = coherence_matrix(&xs, &s, &array);
        for i in 0..xs.len() {
            prop_assert_eq!(m[(i, i)], 1.0);
            for j in 0..xs.len() {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
    }

    #[test]
    fn permanent_equals_permutation_sum(
        n in 1usize..=6,
        seed in prop::collection::vec(-2.0..2.0f64, 36),
    ) {
        let m = DMatrix::from_fn(n, n, |i, j| seed[i * 6 + j]);
        let naive = naive_permanent(&m);
        let fast = permanent(&m).unwrap();
        let scale = m.iter().map(|v| v.abs()).fold(0.0, f64::max).powi(n as i32) * (1..=n).product::<usize>() as f64;
        prop_assert!((fast - naive).abs() <= 1e-10 * naive.abs().max(scale * 1e-6), "{} vs {}", fast, naive);
    }

    #[test]
    fn g_n_is_permutation_invariant(
        s in source(),
        xs in prop::collection::vec(position(), 2..6),
        rotation in 0usize..6,
    ) {
        let array = DetectorArray::default();
        let base = g_n(&CorrelationSpec::new(xs.clone(), 1.3).unwrap(), &s, &array).unwrap();
        let mut shuffled = xs.clone();
        shuffled.reverse();
        let k = rotation % shuffled.len();
        shuffled.rotate_left(k);
        let other = g_n(&CorrelationSpec::new(shuffled, 1.3).unwrap(), &s, &array).unwrap();
        prop_assert!(close(base, other, 1e-12), "{} vs {}", base, other);
    }

    #[test]
    fn correlations_are_homogeneous_in_intensity(
        s in source(),
        xs in prop::collection::vec(position(), 2..5),
        refs in prop::collection::vec(position(), 1..3),
        intensity in 0.1..3.0f64,
    ) {
        let array = DetectorArray::default();
        let n = xs.len() as i32;
        let one = g_n(&CorrelationSpec::new(xs.clone(), intensity).unwrap(), &s, &array).unwrap();
        let three = g_n(&CorrelationSpec::new(xs.clone(), 3.0 * intensity).unwrap(), &s, &array).unwrap();
        prop_assert!(close(three, 3f64.powi(n) * one, 1e-12));
        let r = refs.len() as i32 + 1;
        let one = g_2n_general(xs[0], xs[1], &refs, intensity, &s, &array, DEFAULT_ORDER_CAP).unwrap();
        let three = g_2n_general(xs[0], xs[1], &refs, 3.0 * intensity, &s, &array, DEFAULT_ORDER_CAP).unwrap();
        prop_assert!(close(three, 3f64.powi(2 * r) * one, 1e-12));
    }

    #[test]
    fn repeated_reference_forms_match_permanents(
        s in source(),
        x in position(),
        xj in position(),
        r in position(),
        n in 2usize..=5,
        intensity in 0.2..2.0f64,
    ) {
        let array = DetectorArray::default();
        let mut tuple = vec![x];
        tuple.extend(std::iter::repeat(r).take(n - 1));
        let gamma = pairwise_matrix(&tuple, |p, q| coherence(p, q, &s, &array));
        let oracle = intensity.powi(n as i32) * naive_permanent(&gamma);
        let closed = g_n_scheme1(x, r, n, intensity, &s, &array);
        prop_assert!(close(closed, oracle, 1e-10), "{} vs {}", closed, oracle);

        let refs = vec![r; n - 1];
        let closed = g_2n_scheme1(x, xj, r, n, intensity, &s, &array);
        let general = g_2n_general(x, xj, &refs, intensity, &s, &array, DEFAULT_ORDER_CAP).unwrap();
        prop_assert!(close(closed, general, 1e-10), "{} vs {}", closed, general);
    }

    #[test]
    fn repeated_reference_values_lie_between_factorials(
        s in source(),
        x in position(),
        r in position(),
        n in 2usize..=6,
        intensity in 0.2..2.0f64,
    ) {
        let array = DetectorArray::default();
        let g = g_n_scheme1(x, r, n, intensity, &s, &array) / intensity.powi(n as i32);
        let lower: f64 = (1..n).map(|k| k as f64).product();
        prop_assert!(g >= lower * (1.0 - 1e-12) && g <= lower * n as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn noise_moments_reduce_to_powers_without_spread(
        nu in 0.05..1.0f64,
        xi in 0i64..8,
        xj in 0i64..8,
        refs_kind in 0usize..2,
        copies in 1usize..4,
    ) {
        let model = NoiseModel::constant_loss(nu).unwrap();
        let refs: Vec<i64> = if refs_kind == 0 { vec![3; copies] } else { (0..copies as i64).map(|k| 2 + 2 * k).collect() };
        let n = copies as i32 + 1;
        prop_assert!(close(noise_moment_n(xi, &refs, &model).unwrap(), nu.powi(n), 1e-13));
        prop_assert!(close(noise_moment_2n(xi, xj, &refs, &model).unwrap(), nu.powi(2 * n), 1e-13));
    }

    #[test]
    fn noise_moments_are_symmetric_in_the_pixel_pair(
        nu in 0.05..1.0f64,
        sigma in 0.0..0.3f64,
        xi in 0i64..8,
        xj in 0i64..8,
        refs_kind in 0usize..2,
        copies in 1usize..4,
    ) {
        let model = NoiseModel::new(nu, sigma).unwrap();
        let refs: Vec<i64> = if refs_kind == 0 { vec![3; copies] } else { (0..copies as i64).map(|k| 2 + 2 * k).collect() };
        prop_assert_eq!(
            noise_moment_2n(xi, xj, &refs, &model).unwrap(),
            noise_moment_2n(xj, xi, &refs, &model).unwrap()
        );
    }
}

fn small_model(
    n: usize,
    distinct: bool,
    m: usize,
    a: f64,
    frames: u64,
    treatment: NoiseTreatment,
) -> MeasurementModel {
    let array = DetectorArray::with_pixel_count(m).unwrap();
    let scheme = if distinct {
        DetectionScheme::distinct(n, (m / 4).max(1), &array).unwrap()
    } else {
        DetectionScheme::repeated(n, &array).unwrap()
    };
    MeasurementModel::new(scheme, SourceGeometry::disc(a).unwrap(), array, frames, treatment).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariance_is_symmetric_positive_definite(
        n in 2usize..=4,
        distinct in any::<bool>(),
        m in prop::sample::select(vec![21usize, 51, 101, 201]),
        a in 60e-6..150e-6f64,
        sigma in 0.0..0.05f64,
    ) {
        let model = small_model(n, distinct, m, a, 50_000, NoiseTreatment::Known { chi: sigma / 0.5 });
        let theta = ParameterVector::new(a, 0.5).unwrap();
        let c = covariance_matrix(&theta, &model).unwrap();
        prop_assert!((&c - c.transpose()).amax() == 0.0);
        prop_assert!(c.clone().cholesky().is_some());
    }

    #[test]
    fn fisher_information_is_symmetric_and_positive(
        n in 2usize..=4,
        distinct in any::<bool>(),
        a in 60e-6..150e-6f64,
        estimated in any::<bool>(),
    ) {
        let treatment = if estimated { NoiseTreatment::Estimated } else { NoiseTreatment::Known { chi: 0.02 } };
        let model = small_model(n, distinct, 51, a, 50_000, treatment);
        let theta = if estimated {
            ParameterVector::with_chi(a, 0.5, 0.02).unwrap()
        } else {
            ParameterVector::new(a, 0.5).unwrap()
        };
        let f = fisher_information(&theta, &model).unwrap().total;
        let scale = f.amax();
        for i in 0..f.nrows() {
            for j in 0..f.ncols() {
                prop_assert!((f[(i, j)] - f[(j, i)]).abs() <= 1e-12 * scale);
            }
        }
        // Eigenvalues of the diagonally scaled matrix, which removes the
        // disparate parameter units.
        let d: Vec<f64> = (0..f.nrows()).map(|i| f[(i, i)].sqrt()).collect();
        let scaled = DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] / (d[i] * d[j]));
        let trace = scaled.trace();
        let eig = scaled.symmetric_eigen().eigenvalues;
        prop_assert!(eig.iter().all(|&e| e >= -1e-10 * trace), "{eig:?}");
    }
}

#[test]
fn bound_scales_inversely_with_frames_at_large_counts() {
    let theta = ParameterVector::new(100e-6, 0.5).unwrap();
    let scaled: Vec<f64> = [1e8, 1e10, 1e12]
        .iter()
        .map(|&n| {
            let model = small_model(3, false, 51, 100e-6, n as u64, NoiseTreatment::Known { chi: 0.0 });
            n * crb(&theta, &model).unwrap()[0]
        })
        .collect();
    assert!(close(scaled[1], scaled[2], 1e-3), "{scaled:?}");
    assert!((scaled[0] - scaled[2]).abs() >= (scaled[1] - scaled[2]).abs(), "{scaled:?}");
}
