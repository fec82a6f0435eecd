//! Deterministic sweeps of the Cramér–Rao bound over reference separation
//! and detector noise, and analytic correlation curves along the scan axis.

use rayon::prelude::*;

use crate::correlations::g_n_scheme1;
use crate::error::{invalid, Result};
use crate::geometry::{DetectorArray, SourceGeometry};
use crate::noise::NoiseModel;
use crate::statistics::{crb, DetectionScheme, MeasurementModel, NoiseTreatment, ParameterVector, SchemeKind};

/// Bound on var(â) for one scheme at the true parameters.
pub fn crb_a(
    scheme: DetectionScheme,
    source: &SourceGeometry,
    array: &DetectorArray,
    frames: u64,
    mean_intensity: f64,
    noise: &NoiseModel,
    estimate_chi: bool,
) -> Result<f64> {
    let i_eff = noise.nu() * mean_intensity;
    let (theta, treatment) = if estimate_chi {
        (ParameterVector::with_chi(source.dimension(), i_eff, noise.chi())?, NoiseTreatment::Estimated)
    } else {
        (ParameterVector::new(source.dimension(), i_eff)?, NoiseTreatment::Known { chi: noise.chi() })
    };
    let model = MeasurementModel::new(scheme, *source, *array, frames, treatment)?;
    Ok(crb(&theta, &model)?[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationScan {
    pub source: SourceGeometry,
    pub array: DetectorArray,
    pub frames: u64,
    pub mean_intensity: f64,
    pub noise: NoiseModel,
    pub estimate_chi: bool,
    pub orders: Vec<usize>,
    pub separations: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationPoint {
    pub separation: usize,
    pub order: usize,
    /// √CRB of â, metres.
    pub std_a: f64,
    /// Index of the coherence zero whose separation rounds to this d.
    pub coherence_zero: Option<usize>,
}

/// Pixel separations of the coherence zeros up to `max_separation`.
pub fn zero_separations(source: &SourceGeometry, array: &DetectorArray, max_separation: f64) -> Vec<f64> {
    (1..)
        .map(|k| source.zero_separation(k, array) / array.pixel_pitch())
        .take_while(|&d| d <= max_separation)
        .collect()
}

/// √CRB of â per (d, n) for distinct references, ordered by d then n.
pub fn scan_separation(scan: &SeparationScan) -> Result<Vec<SeparationPoint>> {
    if scan.separations.is_empty() || scan.orders.is_empty() {
        return Err(invalid("scan", "needs at least one separation and one order"));
    }
    let max = *scan.separations.iter().max().unwrap() as f64 + 1.0;
    let zeros = zero_separations(&scan.source, &scan.array, max);
    let grid: Vec<(usize, usize)> = scan
        .separations
        .iter()
        .flat_map(|&d| scan.orders.iter().map(move |&n| (d, n)))
        .collect();
    grid.par_iter()
        .map(|&(d, n)| {
            let scheme = DetectionScheme::distinct(n, d, &scan.array)?;
            let var = crb_a(
                scheme,
                &scan.source,
                &scan.array,
                scan.frames,
                scan.mean_intensity,
                &scan.noise,
                scan.estimate_chi,
            )?;
            Ok(SeparationPoint {
                separation: d,
                order: n,
                std_a: var.sqrt(),
                coherence_zero: zeros.iter().position(|z| z.round() as usize == d).map(|k| k + 1),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseScan {
    pub source: SourceGeometry,
    pub array: DetectorArray,
    pub frames: u64,
    pub mean_intensity: f64,
    pub order: usize,
    pub scheme: SchemeKind,
    pub separation: Option<usize>,
    pub nus: Vec<f64>,
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePoint {
    pub nu: f64,
    pub sigma: f64,
    /// CRB of â, m².
    pub var_a: f64,
}

/// CRB of â per (ν, ς) with χ = ς/ν known, ordered by ν then ς.
pub fn scan_noise(scan: &NoiseScan) -> Result<Vec<NoisePoint>> {
    if scan.nus.is_empty() || scan.sigmas.is_empty() {
        return Err(invalid("scan", "needs at least one ν and one ς"));
    }
    let scheme = match scan.scheme {
        SchemeKind::RepeatedReference => DetectionScheme::repeated(scan.order, &scan.array)?,
        SchemeKind::DistinctReferences => DetectionScheme::distinct(
            scan.order,
            scan.separation
                .ok_or_else(|| invalid("separation", "distinct references need a separation d"))?,
            &scan.array,
        )?,
    };
    let grid: Vec<(f64, f64)> = scan
        .nus
        .iter()
        .flat_map(|&nu| scan.sigmas.iter().map(move |&s| (nu, s)))
        .collect();
    grid.par_iter()
        .map(|&(nu, sigma)| {
            let noise = NoiseModel::new(nu, sigma)?;
            let var_a = crb_a(
                scheme.clone(),
                &scan.source,
                &scan.array,
                scan.frames,
                scan.mean_intensity,
                &noise,
                false,
            )?;
            Ok(NoisePoint { nu, sigma, var_a })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub pixel: i64,
    /// x − s, metres.
    pub offset: f64,
    /// G⁽ⁿ⁾(x, s, …, s) for each requested order.
    pub values: Vec<f64>,
}

/// Analytic G⁽ⁿ⁾(x, s, …, s) over the scan pixels with every reference at
/// `reference`.
pub fn correlation_curves(
    source: &SourceGeometry,
    array: &DetectorArray,
    orders: &[usize],
    mean_intensity: f64,
    reference: i64,
) -> Result<Vec<CurvePoint>> {
    if orders.iter().any(|&n| n < 2) {
        return Err(invalid("orders", "correlation orders start at 2"));
    }
    if !(mean_intensity >= 0.0) {
        return Err(invalid("mean_intensity", "must be nonnegative"));
    }
    let s = array.sensor_position(reference);
    Ok(array
        .scan_indices()
        .map(|p| {
            let x = array.sensor_position(p);
            CurvePoint {
                pixel: p,
                offset: x - s,
                values: orders
                    .iter()
                    .map(|&n| g_n_scheme1(x, s, n, mean_intensity, source, array))
                    .collect(),
            }
        })
        .collect())
}
