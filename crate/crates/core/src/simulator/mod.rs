//! Synthetic detector frames of thermal light and the sample correlations
//! measured from them.
//!
//! Each frame draws a circular complex Gaussian field over the sensor
//! pixels with covariance ⟨I⟩Γ, records |α|², and optionally multiplies
//! every pixel by an independent efficiency η ~ Normal(ν, ς²).

mod io;

pub use io::{read_frames, sidecar_path, write_frames, FORMAT_VERSION, MAGIC};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{coherence_kernel, DetectorArray, SourceGeometry};
use crate::noise::NoiseModel;
use crate::rng::{counter_rng, Domain};
use crate::statistics::{DetectionScheme, SchemeKind};

/// Residual diagonal, relative to the unit coherence diagonal, at which the
/// pivoted factorization stops.
pub const FACTOR_TOLERANCE: f64 = 1e-12;

/// Frames per partial sum in the correlation reduction; fixed so that the
/// result does not depend on the thread count.
const REDUCTION_CHUNK: usize = 1024;

/// What produced a frame set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetadata {
    pub source: SourceGeometry,
    pub array: DetectorArray,
    pub mean_intensity: f64,
    /// Detector efficiency applied to the frames, with its seed.
    pub noise: Option<(NoiseModel, u64)>,
}

/// N frames of intensities over a set of sensor pixels, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    data: Vec<f64>,
    frame_count: usize,
    pixels: Vec<i64>,
    seed: u64,
    stream: u64,
    metadata: FrameMetadata,
}

impl FrameSet {
    pub fn new(
        data: Vec<f64>,
        frame_count: usize,
        pixels: Vec<i64>,
        seed: u64,
        stream: u64,
        metadata: FrameMetadata,
    ) -> Result<Self> {
        if data.len() != frame_count * pixels.len() {
            return Err(Error::LengthMismatch {
                expected: frame_count * pixels.len(),
                got: data.len(),
            });
        }
        if data.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("frames", "intensities must be finite and nonnegative"));
        }
        Ok(Self {
            data,
            frame_count,
            pixels,
            seed,
            stream,
            metadata,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    /// Sensor pixel of each column.
    pub fn pixels(&self) -> &[i64] {
        &self.pixels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn metadata(&self) -> &FrameMetadata {
        &self.metadata
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let w = self.pixels.len();
        &self.data[k * w..(k + 1) * w]
    }

    pub fn column_of(&self, pixel: i64) -> Result<usize> {
        self.pixels.binary_search(&pixel).map_err(|_| Error::MissingPixel(pixel))
    }
}

/// Pivoted Cholesky factor F (n×r) of a positive semidefinite matrix with
/// A ≈ F·Fᵀ, stopping once every residual diagonal entry is below
/// `tolerance`.
pub fn low_rank_factor(a: &DMatrix<f64>, tolerance: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare { rows: n, cols: a.ncols() });
    }
    let mut residual: Vec<f64> = a.diagonal().iter().copied().collect();
    if residual.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Factorization("diagonal must be finite and nonnegative".into()));
    }
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut used = vec![false; n];
    while columns.len() < n {
        let (pivot, &largest) = residual
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("unused pivots remain");
        if largest <= tolerance {
            break;
        }
        let root = largest.sqrt();
        let mut col: Vec<f64> = (0..n)
            .map(|i| {
                let prior: f64 = columns.iter().map(|c| c[i] * c[pivot]).sum();
                (a[(i, pivot)] - prior) / root
            })
            .collect();
        used[pivot] = true;
        for i in 0..n {
            if used[i] && i != pivot {
                col[i] = 0.0;
            }
            residual[i] -= col[i] * col[i];
        }
        residual[pivot] = 0.0;
        columns.push(col);
    }
    let r = columns.len();
    Ok(DMatrix::from_fn(n, r, |i, j| columns[j][i]))
}

/// Unit-diagonal coherence matrix over sensor pixels.
fn pixel_coherence(pixels: &[i64], source: &SourceGeometry, array: &DetectorArray) -> DMatrix<f64> {
    let pitch = array.pixel_pitch();
    let n = pixels.len();
    DMatrix::from_fn(n, n, |i, j| {
        let sep = (pixels[i] - pixels[j]) as f64 * pitch;
        coherence_kernel(source.kind(), source.kernel_argument(sep, array))
    })
}

/// Noise-free frames over the scan pixels of `array`, stream 0.
pub fn sample_thermal_fields(
    source: &SourceGeometry,
    array: &DetectorArray,
    mean_intensity: f64,
    frames: usize,
    seed: u64,
) -> Result<FrameSet> {
    let pixels: Vec<i64> = array.scan_indices().collect();
    sample_thermal_fields_at(source, array, &pixels, mean_intensity, frames, seed, 0)
}

/// Noise-free frames over arbitrary sensor pixels (sorted, distinct).
pub fn sample_thermal_fields_at(
    source: &SourceGeometry,
    array: &DetectorArray,
    pixels: &[i64],
    mean_intensity: f64,
    frames: usize,
    seed: u64,
    stream: u64,
) -> Result<FrameSet> {
    if !(mean_intensity > 0.0 && mean_intensity.is_finite()) {
        return Err(invalid("mean_intensity", format!("must be positive, got {mean_intensity}")));
    }
    if pixels.is_empty() || pixels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("pixels", "must be nonempty, sorted and distinct"));
    }
    let factor = low_rank_factor(&pixel_coherence(pixels, source, array), FACTOR_TOLERANCE)?;
    // α = √(⟨I⟩/2)·F·(z_re + i·z_im)
    let factor = factor * (0.5 * mean_intensity).sqrt();
    let (width, rank) = factor.shape();
    let mut data = vec![0.0; frames * width];
    data.par_chunks_mut(width).enumerate().for_each(|(k, out)| {
        let mut rng = counter_rng(seed, stream, Domain::Field, k as u64);
        let re = DVector::<f64>::from_fn(rank, |_, _| StandardNormal.sample(&mut rng));
        let im = DVector::<f64>::from_fn(rank, |_, _| StandardNormal.sample(&mut rng));
        let (a, b) = (&factor * re, &factor * im);
        for (o, (x, y)) in out.iter_mut().zip(a.iter().zip(b.iter())) {
            *o = x * x + y * y;
        }
    });
    FrameSet::new(
        data,
        frames,
        pixels.to_vec(),
        seed,
        stream,
        FrameMetadata {
            source: *source,
            array: *array,
            mean_intensity,
            noise: None,
        },
    )
}

/// Multiplies each intensity by an independent η ~ Normal(ν, ς²) clamped at
/// zero. Draws are keyed by (seed, the frame set's stream, frame).
pub fn apply_detector_noise(frames: FrameSet, noise: &NoiseModel, seed: u64) -> FrameSet {
    let FrameSet {
        mut data,
        frame_count,
        pixels,
        seed: field_seed,
        stream,
        mut metadata,
    } = frames;
    let width = pixels.len();
    let (nu, sigma) = (noise.nu(), noise.sigma());
    data.par_chunks_mut(width).enumerate().for_each(|(k, row)| {
        let mut rng = counter_rng(seed, stream, Domain::Noise, k as u64);
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v *= (nu + sigma * z).max(0.0);
        }
    });
    metadata.noise = Some((*noise, seed));
    FrameSet {
        data,
        frame_count,
        pixels,
        seed: field_seed,
        stream,
        metadata,
    }
}

/// 𝔊⁽ⁿ⁾(x_i, s₂, …, s_n) = (1/N)·Σ_k I_k(x_i)·I_k(s₂)⋯I_k(s_n) for every scan
/// pixel of the frame set's array.
pub fn sample_correlation(frames: &FrameSet, scheme: &DetectionScheme) -> Result<DVector<f64>> {
    let scan: Vec<usize> = frames
        .metadata
        .array
        .scan_indices()
        .map(|x| frames.column_of(x))
        .collect::<Result<_>>()?;
    let refs: Vec<usize> = scheme
        .reference_pixels()
        .iter()
        .map(|&s| frames.column_of(s))
        .collect::<Result<_>>()?;
    let power = match scheme.kind() {
        SchemeKind::RepeatedReference => scheme.order() as i32 - 1,
        SchemeKind::DistinctReferences => 1,
    };
    let m = scan.len();
    let width = frames.pixels.len();
    let partials: Vec<Vec<f64>> = frames
        .data
        .par_chunks(REDUCTION_CHUNK * width)
        .map(|chunk| {
            let mut acc = vec![0.0; m];
            for frame in chunk.chunks_exact(width) {
                let weight: f64 = refs.iter().map(|&c| frame[c].powi(power)).product();
                for (a, &c) in acc.iter_mut().zip(&scan) {
                    *a += frame[c] * weight;
                }
            }
            acc
        })
        .collect();
    let mut total = DVector::zeros(m);
    for p in partials {
        total += DVector::from_vec(p);
    }
    Ok(total / frames.frame_count as f64)
}
