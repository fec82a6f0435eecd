//! Analytic n-point and 2n-point intensity correlations of thermal light.
//!
//! For a Gaussian field the n-point correlation is the permanent of the
//! matrix Γ_ij = ⟨I⟩·γ(x_i, x_j). The general path evaluates that permanent
//! with Ryser's formula; the repeated-reference scheme has closed forms that
//! avoid it.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::geometry::{coherence, coherence_matrix, DetectorArray, SourceGeometry};

/// Largest matrix side accepted by the correlation functions.
pub const DEFAULT_ORDER_CAP: usize = 12;

/// Permanent of a square matrix by Ryser's formula with Gray-code subset
/// iteration, O(2ⁿ·n).
pub fn permanent<T>(matrix: &DMatrix<T>) -> Result<T>
where
    T: ComplexField + Copy,
{
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    // nalgebra is column-major; the permanent is transpose invariant, so the
    // raw storage can be read as row-major.
    Ok(ryser(matrix.as_slice(), rows))
}

/// Ryser on a row-major `n×n` slice.
pub(crate) fn ryser<T>(a: &[T], n: usize) -> T
where
    T: ComplexField + Copy,
{
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return T::one();
    }
    assert!(n < 64, "permanent side {n} is far beyond tractable");
    let mut row_sums = vec![T::zero(); n];
    let mut total = T::zero();
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let col = k.trailing_zeros() as usize;
        gray ^= 1 << col;
        if gray & (1 << col) != 0 {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s += a[i * n + col];
            }
        } else {
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s -= a[i * n + col];
            }
        }
        let mut prod = row_sums[0];
        for s in &row_sums[1..] {
            prod *= *s;
        }
        if (n - gray.count_ones() as usize) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    total
}

/// Scan position followed by the reference positions, plus the uniform mean
/// intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpec {
    positions: Vec<f64>,
    mean_intensity: f64,
}

impl CorrelationSpec {
    pub fn new(positions: Vec<f64>, mean_intensity: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("positions", "need at least one position"));
        }
        if !(mean_intensity >= 0.0 && mean_intensity.is_finite()) {
            return Err(invalid("mean_intensity", format!("must be nonnegative, got {mean_intensity}")));
        }
        Ok(Self {
            positions,
            mean_intensity,
        })
    }

    pub fn order(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn mean_intensity(&self) -> f64 {
        self.mean_intensity
    }
}

/// G⁽ⁿ⁾ at an arbitrary position tuple, as perm(⟨I⟩·γ).
pub fn g_n(spec: &CorrelationSpec, source: &SourceGeometry, array: &DetectorArray) -> Result<f64> {
    g_n_capped(spec, source, array, DEFAULT_ORDER_CAP)
}

pub fn g_n_capped(spec: &CorrelationSpec, source: &SourceGeometry, array: &DetectorArray, cap: usize) -> Result<f64> {
    let n = spec.order();
    if n > cap {
        return Err(Error::OrderCapExceeded { order: n, cap });
    }
    let gamma = coherence_matrix(&spec.positions, source, array);
    Ok(spec.mean_intensity.powi(n as i32) * permanent(&gamma)?)
}

/// Closed form of G⁽ⁿ⁾(x, s, …, s) in units of ⟨I⟩ⁿ, from γ(x, s).
pub fn repeated_reference_g_n(order: usize, gamma_xs: Complex64) -> f64 {
    assert!(order >= 1);
    let m = (order - 1) as f64;
    factorial(order - 1) * (1.0 + m * gamma_xs.norm_sqr())
}

/// Closed form of G⁽²ⁿ⁾(x_i, x_j, s, …, s) (2n−2 copies of s) in units of
/// ⟨I⟩²ⁿ, from γ(x_i,x_j), γ(x_j,s) and γ(s,x_i).
pub fn repeated_reference_g_2n(order: usize, gamma_ij: Complex64, gamma_js: Complex64, gamma_si: Complex64) -> f64 {
    assert!(order >= 1);
    let m = (2 * order - 2) as f64;
    let p = gamma_si.norm_sqr();
    let q = gamma_js.norm_sqr();
    let cycle = 2.0 * (gamma_ij * gamma_js * gamma_si).re;
    factorial(2 * order - 2) * (1.0 + gamma_ij.norm_sqr() + m * (cycle + p + q) + m * (m - 1.0) * p * q)
}

/// G⁽ⁿ⁾(x, s, …, s) for the repeated-reference scheme.
pub fn g_n_scheme1(
    x: f64,
    s: f64,
    order: usize,
    mean_intensity: f64,
    source: &SourceGeometry,
    array: &DetectorArray,
) -> f64 {
    let g = coherence(x, s, source, array);
    mean_intensity.powi(order as i32) * repeated_reference_g_n(order, Complex64::new(g, 0.0))
}

/// G⁽²ⁿ⁾(x_i, x_j, s, …, s) for the repeated-reference scheme.
pub fn g_2n_scheme1(
    xi: f64,
    xj: f64,
    s: f64,
    order: usize,
    mean_intensity: f64,
    source: &SourceGeometry,
    array: &DetectorArray,
) -> f64 {
    let gij = Complex64::new(coherence(xi, xj, source, array), 0.0);
    let gjs = Complex64::new(coherence(xj, s, source, array), 0.0);
    let gsi = Complex64::new(coherence(s, xi, source, array), 0.0);
    mean_intensity.powi(2 * order as i32) * repeated_reference_g_2n(order, gij, gjs, gsi)
}

/// G⁽²ⁿ⁾(x_i, x_j, s₂, s₂, …, s_n, s_n) through the permanent of the
/// 2n×2n coherence matrix.
pub fn g_2n_general(
    xi: f64,
    xj: f64,
    refs: &[f64],
    mean_intensity: f64,
    source: &SourceGeometry,
    array: &DetectorArray,
    cap: usize,
) -> Result<f64> {
    let mut positions = Vec::with_capacity(2 + 2 * refs.len());
    positions.push(xi);
    positions.push(xj);
    for &s in refs {
        positions.push(s);
        positions.push(s);
    }
    g_n_capped(&CorrelationSpec::new(positions, mean_intensity)?, source, array, cap)
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Permanents of symmetric, unit-diagonal matrices that share a block of
/// reference rows and differ only in one or two leading bordering rows.
///
/// The reference block is given by its distinct rows (`groups`) and the
/// number of times each one repeats. Expanding the permanent along the
/// bordering rows and columns leaves minors of the reference block only,
/// which are computed once.
#[derive(Debug, Clone)]
pub struct ReferenceBlock {
    groups: usize,
    core: f64,
    /// m_g·m_h·perm(R without one row of g and one column of h)
    single: Vec<f64>,
    /// ordered pair counts × perm(R without two rows and two columns)
    double: Vec<f64>,
}

impl ReferenceBlock {
    pub fn new(distinct: &DMatrix<f64>, multiplicities: &[usize]) -> Result<Self> {
        let groups = distinct.nrows();
        if distinct.ncols() != groups {
            return Err(Error::NotSquare {
                rows: groups,
                cols: distinct.ncols(),
            });
        }
        if multiplicities.len() != groups || multiplicities.contains(&0) {
            return Err(invalid("multiplicities", "need one positive multiplicity per group"));
        }
        let owner: Vec<usize> = multiplicities
            .iter()
            .enumerate()
            .flat_map(|(g, &m)| std::iter::repeat_n(g, m))
            .collect();
        let first: Vec<usize> = (0..groups).map(|g| owner.iter().position(|&o| o == g).unwrap()).collect();
        let minor = |rows: &[usize], cols: &[usize]| {
            let keep_r: Vec<usize> = (0..owner.len()).filter(|r| !rows.contains(r)).collect();
            let keep_c: Vec<usize> = (0..owner.len()).filter(|c| !cols.contains(c)).collect();
            let k = keep_r.len();
            let mut a = Vec::with_capacity(k * k);
            for &r in &keep_r {
                a.extend(keep_c.iter().map(|&c| distinct[(owner[r], owner[c])]));
            }
            ryser(&a, k)
        };
        // two distinct expanded indices drawn from groups (g0, g1), with the
        // number of ordered ways to draw them
        let pick = |g0: usize, g1: usize| -> Option<([usize; 2], f64)> {
            let (m0, m1) = (multiplicities[g0] as f64, multiplicities[g1] as f64);
            if g0 != g1 {
                Some(([first[g0], first[g1]], m0 * m1))
            } else if multiplicities[g0] >= 2 {
                Some(([first[g0], first[g0] + 1], m0 * (m0 - 1.0)))
            } else {
                None
            }
        };
        let core = minor(&[], &[]);
        let mut single = vec![0.0; groups * groups];
        for g in 0..groups {
            for h in 0..groups {
                single[g * groups + h] =
                    (multiplicities[g] * multiplicities[h]) as f64 * minor(&[first[g]], &[first[h]]);
            }
        }
        let mut double = vec![0.0; groups.pow(4)];
        for g0 in 0..groups {
            for g1 in 0..groups {
                let Some((rows, rc)) = pick(g0, g1) else { continue };
                for h0 in 0..groups {
                    for h1 in 0..groups {
                        let Some((cols, cc)) = pick(h0, h1) else { continue };
                        double[((g0 * groups + g1) * groups + h0) * groups + h1] = rc * cc * minor(&rows, &cols);
                    }
                }
            }
        }
        Ok(Self {
            groups,
            core,
            single,
            double,
        })
    }

    fn quadratic(&self, p: &[f64], q: &[f64]) -> f64 {
        let g = self.groups;
        let mut total = 0.0;
        for a in 0..g {
            for b in 0..g {
                total += p[a] * q[b] * self.single[a * g + b];
            }
        }
        total
    }

    /// Permanent with one bordering row whose coherences with the groups
    /// are `p`.
    pub fn single(&self, p: &[f64]) -> f64 {
        debug_assert_eq!(p.len(), self.groups);
        self.core + self.quadratic(p, p)
    }

    /// Permanent with two bordering rows: mutual coherence `gamma`, group
    /// coherences `p` and `q`.
    pub fn pair(&self, gamma: f64, p: &[f64], q: &[f64]) -> f64 {
        let g = self.groups;
        debug_assert!(p.len() == g && q.len() == g);
        let mut cross = 0.0;
        for g0 in 0..g {
            for g1 in 0..g {
                let w = p[g0] * q[g1];
                let base = (g0 * g + g1) * g * g;
                let mut inner = 0.0;
                for h0 in 0..g {
                    for h1 in 0..g {
                        inner += self.double[base + h0 * g + h1] * p[h0] * q[h1];
                    }
                }
                cross += w * inner;
            }
        }
        (1.0 + gamma * gamma) * self.core
            + self.quadratic(p, p)
            + self.quadratic(q, q)
            + 2.0 * gamma * self.quadratic(p, q)
            + cross
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SourceKind, DEFAULT_DISC_RADIUS};
    use approx::assert_relative_eq;

    fn naive_permanent(m: &DMatrix<f64>) -> f64 {
        fn rec(m: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            let n = m.nrows();
            if row == n {
                return 1.0;
            }
            let mut sum = 0.0;
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    sum += m[(row, c)] * rec(m, row + 1, used);
                    used[c] = false;
                }
            }
            sum
        }
        rec(m, 0, &mut vec![false; m.nrows()])
    }

    fn setup() -> (SourceGeometry, DetectorArray) {
        (SourceGeometry::disc(DEFAULT_DISC_RADIUS).unwrap(), DetectorArray::default())
    }

    #[test]
    fn permanent_small_cases() {
        assert_eq!(permanent(&DMatrix::<f64>::identity(3, 3)).unwrap(), 1.0);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 5.0, 7.0]);
        assert_relative_eq!(permanent(&m).unwrap(), 2.0 * 7.0 + 3.0 * 5.0, max_relative = 1e-15);
        for n in 1..=7 {
            let ones = DMatrix::from_element(n, n, 1.0);
            assert_relative_eq!(permanent(&ones).unwrap(), factorial(n), max_relative = 1e-13);
        }
        assert_eq!(permanent(&DMatrix::<f64>::zeros(0, 0)).unwrap(), 1.0);
        assert!(matches!(
            permanent(&DMatrix::<f64>::zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn permanent_is_not_transposition_sensitive() {
        let m = DMatrix::from_fn(4, 4, |i, j| (i as f64 + 1.0) * 0.3 - (j as f64).sin());
        assert_relative_eq!(permanent(&m).unwrap(), naive_permanent(&m), max_relative = 1e-12);
        assert_relative_eq!(permanent(&m.transpose()).unwrap(), naive_permanent(&m), max_relative = 1e-12);
    }

    #[test]
    fn complex_permanent_matches_definition() {
        let a = Complex64::new(1.0, 2.0);
        let b = Complex64::new(-0.5, 0.25);
        let c = Complex64::new(0.0, 1.0);
        let d = Complex64::new(3.0, -1.0);
        let m = DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
        let p = permanent(&m).unwrap();
        assert!((p - (a * d + b * c)).norm() < 1e-14);
    }

    #[test]
    fn bunching_values() {
        let (source, array) = setup();
        let two = CorrelationSpec::new(vec![1e-4, 1e-4], 1.0).unwrap();
        assert_relative_eq!(g_n(&two, &source, &array).unwrap(), 2.0, max_relative = 1e-14);
        let four = CorrelationSpec::new(vec![3e-4; 4], 1.0).unwrap();
        assert_relative_eq!(g_n(&four, &source, &array).unwrap(), 24.0, max_relative = 1e-13);
    }

    #[test]
    fn g_n_matches_naive_sum_for_three_points() {
        let (source, array) = setup();
        let positions = vec![0.0, 3.1e-4, 7.7e-4];
        let spec = CorrelationSpec::new(positions.clone(), 1.3).unwrap();
        let expected = 1.3f64.powi(3) * naive_permanent(&coherence_matrix(&positions, &source, &array));
        assert_relative_eq!(g_n(&spec, &source, &array).unwrap(), expected, max_relative = 1e-13);
    }

    #[test]
    fn scheme1_g_n_examples() {
        let (source, array) = setup();
        let zero = source.zero_separation(1, &array);
        assert_relative_eq!(g_n_scheme1(zero, 0.0, 2, 1.5, &source, &array), 1.5f64.powi(2), max_relative = 1e-9);
        assert_relative_eq!(g_n_scheme1(2e-4, 2e-4, 2, 1.5, &source, &array), 2.0 * 2.25, max_relative = 1e-15);
        let x = 3.3e-4;
        let s = 1.0e-4;
        let via_perm = g_n(&CorrelationSpec::new(vec![x, s, s, s, s], 0.8).unwrap(), &source, &array).unwrap();
        assert_relative_eq!(g_n_scheme1(x, s, 5, 0.8, &source, &array), via_perm, max_relative = 1e-10);
    }

    #[test]
    fn scheme1_g_2n_examples() {
        // Values computed from the permanent of the duplicated tuple.
        let (source, array) = setup();
        let zero = source.zero_separation(1, &array);
        // n = 2, all cross-coherences zero: perm = 1·1·2! = 2.
        let v = g_2n_scheme1(0.0, 2.0 * zero, zero, 2, 1.0, &source, &array);
        let cross = coherence(0.0, 2.0 * zero, &source, &array);
        assert!(cross.abs() < 0.2);
        let oracle = naive_permanent(&coherence_matrix(&[0.0, 2.0 * zero, zero, zero], &source, &array));
        assert_relative_eq!(v, oracle, max_relative = 1e-12);
        // n = 2, x_i = x_j at a zero from s: perm = 2!·2! = 4.
        let v = g_2n_scheme1(zero, zero, 0.0, 2, 1.0, &source, &array);
        assert_relative_eq!(v, 4.0, max_relative = 1e-9);

        let (xi, xj, s) = (1.2e-4, 6.5e-4, 3.0e-4);
        for n in 2..=5 {
            let closed = g_2n_scheme1(xi, xj, s, n, 1.1, &source, &array);
            let general = g_2n_general(xi, xj, &vec![s; n - 1], 1.1, &source, &array, DEFAULT_ORDER_CAP).unwrap();
            assert_relative_eq!(closed, general, max_relative = 1e-10);
        }
    }

    #[test]
    fn g_2n_general_examples() {
        let (source, array) = setup();
        let v = g_2n_general(1e-4, 1e-4, &[1e-4], 1.0, &source, &array, 12).unwrap();
        assert_relative_eq!(v, 24.0, max_relative = 1e-13);
        let zero = source.zero_separation(1, &array);
        let v = g_2n_general(0.0, 0.0, &[zero], 1.0, &source, &array, 12).unwrap();
        let brute = naive_permanent(&coherence_matrix(&[0.0, 0.0, zero, zero], &source, &array));
        assert_relative_eq!(v, brute, max_relative = 1e-12);
        assert_relative_eq!(v, 4.0, max_relative = 1e-9);
        let refs = [2e-4, 4.5e-4, 9e-4];
        let v = g_2n_general(0.0, 6e-4, &refs, 0.7, &source, &array, 12).unwrap();
        let positions = [0.0, 6e-4, 2e-4, 2e-4, 4.5e-4, 4.5e-4, 9e-4, 9e-4];
        let brute = 0.7f64.powi(8) * naive_permanent(&coherence_matrix(&positions, &source, &array));
        assert_relative_eq!(v, brute, max_relative = 1e-10);

        let too_many = vec![1e-4; 6];
        assert!(matches!(
            g_2n_general(0.0, 0.0, &too_many, 1.0, &source, &array, 12),
            Err(Error::OrderCapExceeded { order: 14, cap: 12 })
        ));
    }

    #[test]
    fn slit_geometry_uses_sinc_kernel() {
        let slit = SourceGeometry::new(SourceKind::Slit, 200e-6, 0.25).unwrap();
        let array = DetectorArray::default();
        let zero = slit.zero_separation(1, &array);
        assert_relative_eq!(g_n_scheme1(zero, 0.0, 3, 1.0, &slit, &array), 2.0, max_relative = 1e-12);
    }
    #[test]
    fn reference_block_expansion_matches_permanent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        for multiplicities in [vec![1], vec![3], vec![2, 2], vec![1, 1, 1], vec![2, 2, 2], vec![4], vec![2, 1, 3]] {
            let g = multiplicities.len();
            let mut distinct = DMatrix::identity(g, g);
            for a in 0..g {
                for b in (a + 1)..g {
                    let v = rng.random_range(-0.6..0.6);
                    distinct[(a, b)] = v;
                    distinct[(b, a)] = v;
                }
            }
            let block = ReferenceBlock::new(&distinct, &multiplicities).unwrap();
            let owner: Vec<usize> = multiplicities
                .iter()
                .enumerate()
                .flat_map(|(g, &m)| std::iter::repeat_n(g, m))
                .collect();
            let k = owner.len();
            for _ in 0..5 {
                let p: Vec<f64> = (0..g).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q: Vec<f64> = (0..g).map(|_| rng.random_range(-1.0..1.0)).collect();
                let gamma: f64 = rng.random_range(-1.0..1.0);
                let border = |rows: &[&[f64]]| {
                    let b = rows.len();
                    DMatrix::from_fn(b + k, b + k, |r, c| match (r < b, c < b) {
                        (true, true) if r == c => 1.0,
                        (true, true) => gamma,
                        (true, false) => rows[r][owner[c - b]],
                        (false, true) => rows[c][owner[r - b]],
                        (false, false) => distinct[(owner[r - b], owner[c - b])],
                    })
                };
                let single = naive_permanent(&border(&[&p]));
                assert_relative_eq!(block.single(&p), single, max_relative = 1e-11, epsilon = 1e-12);
                let pair = naive_permanent(&border(&[&p, &q]));
                assert_relative_eq!(block.pair(gamma, &p, &q), pair, max_relative = 1e-11, epsilon = 1e-12);
            }
        }
        assert!(ReferenceBlock::new(&DMatrix::identity(2, 2), &[1]).is_err());
    }
}
