//! Probability model of the measured correlation vector: mean, covariance,
//! Gaussian log-likelihood, Fisher information and Cramér–Rao bounds.
//!
//! The mean and covariance only depend on the source dimension `a`, the
//! effective intensity `I_eff = ν⟨I⟩` and the relative noise width
//! `χ = ς/ν`, because every noise moment factors as `νᵏ` times the matching
//! moment of `Normal(1, χ²)`.

mod gaussian;

pub use gaussian::{
    scaled_inverse, Bound, FisherInformation, GaussianFactor, GaussianModel, ModelPoint, Moments, ParamJacobians,
    COVARIANCE_JITTER, RELATIVE_STEP,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlations::{repeated_reference_g_2n, repeated_reference_g_n, ryser, ReferenceBlock, DEFAULT_ORDER_CAP};
use crate::error::{invalid, Error, Result};
use crate::geometry::{coherence_kernel, DetectorArray, SourceGeometry};
use crate::noise::{noise_moment_2n_case, NoiseCase, NoiseModel, ReferencePattern};

/// Relative tolerance of the closed-form versus permanent cross-check.
const CROSS_CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// One reference pixel used n−1 times.
    RepeatedReference,
    /// n−1 distinct reference pixels at uniform separation.
    DistinctReferences,
}

impl SchemeKind {
    /// Short numeric label used in reports.
    pub fn number(self) -> u8 {
        match self {
            SchemeKind::RepeatedReference => 1,
            SchemeKind::DistinctReferences => 2,
        }
    }
}

/// Which pixels enter each n-point correlation. The moving pixel scans the
/// whole array; references may sit anywhere on the sensor, including
/// outside the scan window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionScheme {
    order: usize,
    kind: SchemeKind,
    references: Vec<i64>,
}

impl DetectionScheme {
    /// Repeated reference at the central pixel ⌊M/2⌋.
    pub fn repeated(order: usize, array: &DetectorArray) -> Result<Self> {
        Self::repeated_at(order, (array.pixel_count() / 2) as i64)
    }

    pub fn repeated_at(order: usize, pixel: i64) -> Result<Self> {
        check_order(order)?;
        Ok(Self {
            order,
            kind: SchemeKind::RepeatedReference,
            references: vec![pixel],
        })
    }

    /// n−1 references at separation `d`, centred on ⌊M/2⌋.
    pub fn distinct(order: usize, separation: usize, array: &DetectorArray) -> Result<Self> {
        check_order(order)?;
        if separation == 0 {
            return Err(invalid("d", "reference pixels must be distinct"));
        }
        let centre = (array.pixel_count() / 2) as i64;
        let d = separation as i64;
        let start = centre - (order as i64 - 2) * d / 2;
        Self::distinct_at(order, (0..order as i64 - 1).map(|j| start + j * d).collect())
    }

    pub fn distinct_at(order: usize, references: Vec<i64>) -> Result<Self> {
        check_order(order)?;
        if references.len() != order - 1 {
            return Err(invalid(
                "references",
                format!("order {order} needs {} reference pixels, got {}", order - 1, references.len()),
            ));
        }
        let steps: Vec<i64> = references.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        if steps.contains(&0) {
            return Err(invalid("references", "reference pixels must be distinct"));
        }
        if steps.windows(2).any(|w| w[0] != w[1]) {
            return Err(invalid("references", "reference pixels must be uniformly spaced"));
        }
        ReferencePattern::classify(&references)?;
        Ok(Self {
            order,
            kind: SchemeKind::DistinctReferences,
            references,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    /// The distinct reference pixels (a single one for the repeated scheme).
    pub fn reference_pixels(&self) -> &[i64] {
        &self.references
    }

    /// s₂…s_n with multiplicity.
    pub fn reference_tuple(&self) -> Vec<i64> {
        match self.kind {
            SchemeKind::RepeatedReference => vec![self.references[0]; self.order - 1],
            SchemeKind::DistinctReferences => self.references.clone(),
        }
    }

    /// Uniform reference separation; `None` when there is a single reference.
    pub fn separation(&self) -> Option<usize> {
        match self.references.as_slice() {
            [a, b, ..] => Some((b - a).unsigned_abs() as usize),
            _ => None,
        }
    }

    /// Scan pixels followed by references lying outside the scan window,
    /// sorted and without duplicates.
    pub fn sensor_pixels(&self, array: &DetectorArray) -> Vec<i64> {
        let mut pixels: Vec<i64> = array.scan_indices().chain(self.references.iter().copied()).collect();
        pixels.sort_unstable();
        pixels.dedup();
        pixels
    }

    fn pattern(&self) -> ReferencePattern {
        ReferencePattern::classify(&self.reference_tuple()).expect("references validated at construction")
    }
}

fn check_order(order: usize) -> Result<()> {
    if order < 2 {
        return Err(invalid("order", format!("must be at least 2, got {order}")));
    }
    Ok(())
}

/// θ = (a, I_eff[, χ]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    /// Source dimension (disc radius or slit width) in metres.
    pub a: f64,
    pub i_eff: f64,
    /// Relative noise width ς/ν, present when it is estimated.
    pub chi: Option<f64>,
}

impl ParameterVector {
    pub fn new(a: f64, i_eff: f64) -> Result<Self> {
        Self::build(a, i_eff, None)
    }

    pub fn with_chi(a: f64, i_eff: f64, chi: f64) -> Result<Self> {
        Self::build(a, i_eff, Some(chi))
    }

    fn build(a: f64, i_eff: f64, chi: Option<f64>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("must be positive, got {a}")));
        }
        if !(i_eff > 0.0 && i_eff.is_finite()) {
            return Err(invalid("i_eff", format!("must be positive, got {i_eff}")));
        }
        if let Some(c) = chi {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(invalid("chi", format!("must be nonnegative, got {c}")));
            }
        }
        Ok(Self { a, i_eff, chi })
    }

    pub fn len(&self) -> usize {
        2 + usize::from(self.chi.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.a, self.i_eff];
        v.extend(self.chi);
        v
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        match *values {
            [a, i] => Self::new(a, i),
            [a, i, c] => Self::with_chi(a, i, c),
            _ => Err(invalid("theta", format!("expected 2 or 3 components, got {}", values.len()))),
        }
    }
}

/// Whether χ is a fixed, known quantity or a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum NoiseTreatment {
    Known { chi: f64 },
    Estimated,
}

/// Unit-intensity correlation tables at one source dimension: G⁽ⁿ⁾ per scan
/// pixel and G⁽²ⁿ⁾ per scan-pixel pair.
#[derive(Debug, Clone)]
pub struct CorrelationTables {
    pub g_n: DVector<f64>,
    pub g_2n: DMatrix<f64>,
}

/// Noise moments of Normal(1, χ²) for every pixel and pixel pair.
#[derive(Debug, Clone)]
struct NoiseTables {
    n: DVector<f64>,
    two_n: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct MeasurementModel {
    scheme: DetectionScheme,
    source: SourceGeometry,
    array: DetectorArray,
    frames: u64,
    noise: NoiseTreatment,
    cross_check: bool,
    order_cap: usize,
}

impl MeasurementModel {
    /// `source` fixes the kind and distance; its dimension is replaced by
    /// θ.a on every evaluation.
    pub fn new(
        scheme: DetectionScheme,
        source: SourceGeometry,
        array: DetectorArray,
        frames: u64,
        noise: NoiseTreatment,
    ) -> Result<Self> {
        if frames < 2 {
            return Err(invalid("frames", format!("need at least 2 frames, got {frames}")));
        }
        if let NoiseTreatment::Known { chi } = noise {
            if !(chi >= 0.0 && chi.is_finite()) {
                return Err(invalid("chi", format!("must be nonnegative, got {chi}")));
            }
        }
        let model = Self {
            scheme,
            source,
            array,
            frames,
            noise,
            cross_check: false,
            order_cap: DEFAULT_ORDER_CAP,
        };
        model.check_cap()?;
        Ok(model)
    }

    /// Verify every table entry against a direct Ryser permanent.
    pub fn with_cross_check(mut self, enabled: bool) -> Self {
        self.cross_check = enabled;
        self
    }

    pub fn with_order_cap(mut self, cap: usize) -> Result<Self> {
        self.order_cap = cap;
        self.check_cap()?;
        Ok(self)
    }

    pub fn with_frames(&self, frames: u64) -> Result<Self> {
        Self::new(self.scheme.clone(), self.source, self.array, frames, self.noise)
            .map(|m| m.with_cross_check(self.cross_check))
            .and_then(|m| m.with_order_cap(self.order_cap))
    }

    pub fn with_noise(&self, noise: NoiseTreatment) -> Result<Self> {
        Self::new(self.scheme.clone(), self.source, self.array, self.frames, noise)
            .map(|m| m.with_cross_check(self.cross_check))
            .and_then(|m| m.with_order_cap(self.order_cap))
    }

    fn check_cap(&self) -> Result<()> {
        let side = 2 * self.scheme.order;
        let needs_permanent = self.scheme.kind == SchemeKind::DistinctReferences || self.cross_check;
        if needs_permanent && side > self.order_cap {
            return Err(Error::OrderCapExceeded {
                order: side,
                cap: self.order_cap,
            });
        }
        Ok(())
    }

    pub fn scheme(&self) -> &DetectionScheme {
        &self.scheme
    }

    pub fn source(&self) -> &SourceGeometry {
        &self.source
    }

    pub fn array(&self) -> &DetectorArray {
        &self.array
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn noise(&self) -> NoiseTreatment {
        self.noise
    }

    pub fn order(&self) -> usize {
        self.scheme.order
    }

    /// Checks that θ carries χ exactly when it is estimated.
    pub fn check_theta(&self, theta: &ParameterVector) -> Result<()> {
        match (self.noise, theta.chi) {
            (NoiseTreatment::Known { .. }, Some(_)) => {
                Err(invalid("theta", "χ is known for this model and must not be a parameter"))
            }
            (NoiseTreatment::Estimated, None) => Err(invalid("theta", "χ is estimated and must be supplied")),
            _ => Ok(()),
        }
    }

    fn chi_of(&self, theta: &[f64]) -> f64 {
        match self.noise {
            NoiseTreatment::Known { chi } => chi,
            NoiseTreatment::Estimated => theta[2],
        }
    }

    /// Correlation tables in units of the mean intensity for source
    /// dimension `a`.
    pub fn correlation_tables(&self, a: f64) -> Result<CorrelationTables> {
        self.tables(a, true)
    }

    /// μ at unit effective intensity, skipping the pair table.
    pub fn unit_mean(&self, a: f64, chi: f64) -> Result<DVector<f64>> {
        let tables = self.tables(a, false)?;
        Ok(tables.g_n.component_mul(&self.noise_tables(chi)?.n))
    }

    fn tables(&self, a: f64, pairs: bool) -> Result<CorrelationTables> {
        let source = self.source.with_dimension(a)?;
        let n = self.scheme.order;
        let m = self.array.pixel_count();
        let refs = self.scheme.reference_tuple();
        let lo = refs.iter().copied().min().unwrap().min(1);
        let hi = refs.iter().copied().max().unwrap().max(m as i64);
        let pitch = self.array.pixel_pitch();
        let lut: Vec<f64> = (0..=(hi - lo) as usize)
            .map(|k| coherence_kernel(source.kind(), source.kernel_argument(k as f64 * pitch, &self.array)))
            .collect();
        let gamma = |p: i64, q: i64| lut[(p - q).unsigned_abs() as usize];
        let scan: Vec<i64> = self.array.scan_indices().collect();

        let permanent_of = |pixels: &[i64], buf: &mut Vec<f64>| {
            let side = pixels.len();
            buf.clear();
            for &p in pixels {
                buf.extend(pixels.iter().map(|&q| gamma(p, q)));
            }
            ryser(buf.as_slice(), side)
        };
        let g_n_permanent = |x: i64, buf: &mut Vec<f64>| {
            let mut pixels = vec![x];
            pixels.extend(&refs);
            permanent_of(&pixels, buf)
        };
        let g_2n_permanent = |xi: i64, xj: i64, buf: &mut Vec<f64>| {
            let mut pixels = vec![xi, xj];
            for &s in &refs {
                pixels.push(s);
                pixels.push(s);
            }
            permanent_of(&pixels, buf)
        };

        // the permanent path expands along the moving pixels; the reference
        // block minors are shared by every entry
        let distinct = self.scheme.reference_pixels();
        let core = DMatrix::from_fn(distinct.len(), distinct.len(), |a, b| gamma(distinct[a], distinct[b]));
        let repeated = self.scheme.kind == SchemeKind::RepeatedReference;
        let (block_n, block_2n) = if repeated {
            (None, None)
        } else {
            (
                Some(ReferenceBlock::new(&core, &vec![1; n - 1])?),
                Some(ReferenceBlock::new(&core, &vec![2; n - 1])?),
            )
        };
        let to_refs: Vec<Vec<f64>> = scan
            .iter()
            .map(|&x| distinct.iter().map(|&s| gamma(x, s)).collect())
            .collect();

        let s = refs[0];
        let c = |v: f64| Complex64::new(v, 0.0);

        let g_n = scan
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let value = if repeated {
                    repeated_reference_g_n(n, c(gamma(x, s)))
                } else {
                    block_n.as_ref().unwrap().single(&to_refs[i])
                };
                if self.cross_check {
                    verify(i, i, value, g_n_permanent(x, &mut Vec::new()))?;
                }
                Ok(value)
            })
            .collect::<Result<Vec<f64>>>()?;

        if !pairs {
            return Ok(CorrelationTables {
                g_n: DVector::from_vec(g_n),
                g_2n: DMatrix::zeros(0, 0),
            });
        }

        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut buf = Vec::new();
                let xi = scan[i];
                (i..m)
                    .map(|j| {
                        let xj = scan[j];
                        let value = if repeated {
                            repeated_reference_g_2n(n, c(gamma(xi, xj)), c(gamma(xj, s)), c(gamma(s, xi)))
                        } else {
                            block_2n.as_ref().unwrap().pair(gamma(xi, xj), &to_refs[i], &to_refs[j])
                        };
                        if self.cross_check {
                            verify(i, j, value, g_2n_permanent(xi, xj, &mut buf))?;
                        }
                        Ok(value)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g_2n = DMatrix::zeros(m, m);
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                g_2n[(i, i + off)] = v;
                g_2n[(i + off, i)] = v;
            }
        }
        Ok(CorrelationTables {
            g_n: DVector::from_vec(g_n),
            g_2n,
        })
    }

    fn noise_tables(&self, chi: f64) -> Result<NoiseTables> {
        let model = NoiseModel::normalized(chi)?;
        let pattern = self.scheme.pattern();
        let refs = self.scheme.reference_tuple();
        let cases = [NoiseCase::A, NoiseCase::B, NoiseCase::C, NoiseCase::D, NoiseCase::E, NoiseCase::F];
        let mut by_case = [0.0; 6];
        for (slot, &case) in by_case.iter_mut().zip(cases.iter()) {
            let possible = !(case == NoiseCase::C && matches!(pattern, ReferencePattern::Repeated { .. }));
            if possible {
                *slot = noise_moment_2n_case(case, &pattern, &model)?;
            }
        }
        let scan: Vec<i64> = self.array.scan_indices().collect();
        let m = scan.len();
        let n = DVector::from_iterator(
            m,
            scan.iter()
                .map(|&x| crate::noise::noise_moment_n(x, &refs, &model))
                .collect::<Result<Vec<_>>>()?,
        );
        let two_n = DMatrix::from_fn(m, m, |i, j| {
            let case = NoiseCase::classify(scan[i], scan[j], &pattern);
            by_case[case as usize]
        });
        Ok(NoiseTables { n, two_n })
    }

    fn assemble(&self, tables: &CorrelationTables, i_eff: f64, noise: &NoiseTables) -> Moments {
        let n = self.scheme.order as i32;
        let scale_n = i_eff.powi(n);
        let scale_2n = i_eff.powi(2 * n);
        let mean = tables.g_n.component_mul(&noise.n) * scale_n;
        let inv_frames = 1.0 / self.frames as f64;
        let m = mean.len();
        let cov = DMatrix::from_fn(m, m, |i, j| {
            (scale_2n * tables.g_2n[(i, j)] * noise.two_n[(i, j)] - mean[i] * mean[j]) * inv_frames
        });
        Moments { mean, cov }
    }

    fn moments_slice(&self, theta: &[f64]) -> Result<Moments> {
        let tables = self.correlation_tables(theta[0])?;
        let noise = self.noise_tables(self.chi_of(theta))?;
        Ok(self.assemble(&tables, theta[1], &noise))
    }

    fn slice_of(&self, theta: &ParameterVector) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(theta.to_vec())
    }
}

fn verify(i: usize, j: usize, closed: f64, permanent: f64) -> Result<()> {
    if (closed - permanent).abs() > CROSS_CHECK_TOLERANCE * permanent.abs().max(1.0) {
        return Err(Error::CrossCheckMismatch { i, j, closed, permanent });
    }
    Ok(())
}

impl GaussianModel for MeasurementModel {
    fn data_len(&self) -> usize {
        self.array.pixel_count()
    }

    fn param_count(&self) -> usize {
        match self.noise {
            NoiseTreatment::Known { .. } => 2,
            NoiseTreatment::Estimated => 3,
        }
    }

    fn param_name(&self, index: usize) -> &'static str {
        ["a", "i_eff", "chi"][index]
    }

    fn bound(&self, index: usize) -> Bound {
        if index == 2 {
            Bound::NonNegative
        } else {
            Bound::Positive
        }
    }

    fn moments(&self, theta: &[f64]) -> Result<Moments> {
        self.moments_slice(theta)
    }

    /// Central differences that reuse the correlation tables for the
    /// intensity and noise directions.
    fn jacobians(&self, theta: &[f64], active: &[bool]) -> Result<ParamJacobians> {
        let m = self.data_len();
        let p = self.param_count();
        let mut mean = DMatrix::zeros(m, p);
        let mut cov = vec![DMatrix::zeros(m, m); p];
        let tables = self.correlation_tables(theta[0])?;
        let chi = self.chi_of(theta);
        let noise = self.noise_tables(chi)?;
        let mut store = |k: usize, h: f64, hi: Moments, lo: Moments| {
            mean.set_column(k, &((hi.mean - lo.mean) / (2.0 * h)));
            cov[k] = (hi.cov - lo.cov) / (2.0 * h);
        };
        if active[0] {
            let h = gaussian::fd_step(theta[0], "a")?;
            let hi = self.assemble(&self.correlation_tables(theta[0] + h)?, theta[1], &noise);
            let lo = self.assemble(&self.correlation_tables(theta[0] - h)?, theta[1], &noise);
            store(0, h, hi, lo);
        }
        if active[1] {
            let h = gaussian::fd_step(theta[1], "i_eff")?;
            let hi = self.assemble(&tables, theta[1] + h, &noise);
            let lo = self.assemble(&tables, theta[1] - h, &noise);
            store(1, h, hi, lo);
        }
        if p == 3 && active[2] {
            let h = gaussian::fd_step(chi, "chi")?;
            let hi = self.assemble(&tables, theta[1], &self.noise_tables(chi + h)?);
            let lo = self.assemble(&tables, theta[1], &self.noise_tables(chi - h)?);
            store(2, h, hi, lo);
        }
        Ok(ParamJacobians { mean, cov })
    }
}

/// Expected correlation vector μ(θ).
pub fn mean_vector(theta: &ParameterVector, model: &MeasurementModel) -> Result<DVector<f64>> {
    Ok(model.moments_slice(&model.slice_of(theta)?)?.mean)
}

/// Covariance C(θ) of the correlation vector, without conditioning.
pub fn covariance_matrix(theta: &ParameterVector, model: &MeasurementModel) -> Result<DMatrix<f64>> {
    Ok(model.moments_slice(&model.slice_of(theta)?)?.cov)
}

/// ln p(x|θ) under the conditioned covariance.
pub fn log_likelihood(data: &[f64], theta: &ParameterVector, model: &MeasurementModel) -> Result<f64> {
    check_len(data, model)?;
    let point = ModelPoint::new(model, &model.slice_of(theta)?, None)?;
    Ok(point.log_likelihood(&DVector::from_column_slice(data)))
}

/// ∂ ln p(x|θ)/∂θ.
pub fn score(data: &[f64], theta: &ParameterVector, model: &MeasurementModel) -> Result<DVector<f64>> {
    check_len(data, model)?;
    let slice = model.slice_of(theta)?;
    let point = ModelPoint::new(model, &slice, Some(&vec![true; slice.len()]))?;
    Ok(point.score(&DVector::from_column_slice(data)))
}

pub fn param_jacobians(theta: &ParameterVector, model: &MeasurementModel) -> Result<ParamJacobians> {
    let slice = model.slice_of(theta)?;
    model.jacobians(&slice, &vec![true; slice.len()])
}

pub fn fisher_information(theta: &ParameterVector, model: &MeasurementModel) -> Result<FisherInformation> {
    let slice = model.slice_of(theta)?;
    Ok(ModelPoint::new(model, &slice, Some(&vec![true; slice.len()]))?.fisher())
}

/// Diagonal of the inverse Fisher matrix, ordered like θ.
pub fn crb(theta: &ParameterVector, model: &MeasurementModel) -> Result<Vec<f64>> {
    crb_from_fisher(&fisher_information(theta, model)?.total)
}

pub fn crb_from_fisher(fisher: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(scaled_inverse(fisher)?.diagonal().iter().copied().collect())
}

fn check_len(data: &[f64], model: &MeasurementModel) -> Result<()> {
    if data.len() != model.data_len() {
        return Err(Error::LengthMismatch {
            expected: model.data_len(),
            got: data.len(),
        });
    }
    Ok(())
}
