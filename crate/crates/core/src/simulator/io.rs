//! Flat binary frame files with a human-readable sidecar.
//!
//! The binary file holds a 64-byte little-endian header (magic, format
//! version, frame count, column count, seed, stream, zero padding)
//! followed by the intensities as f64, frame after frame. The sidecar
//! `<file>.meta` lists `key = value` lines describing the geometry, noise
//! and the sensor pixel of each column.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{FrameMetadata, FrameSet};
use crate::error::{Error, Result};
use crate::geometry::{DetectorArray, SourceGeometry, SourceKind};
use crate::noise::NoiseModel;

pub const MAGIC: &[u8; 4] = b"HBTF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

pub fn write_frames(path: &Path, frames: &FrameSet) -> Result<()> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [frames.frame_count as u64, frames.pixels.len() as u64, frames.seed, frames.stream] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.resize(HEADER_LEN, 0);
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&header)?;
    for v in &frames.data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    std::fs::write(sidecar_path(path), sidecar(frames))?;
    Ok(())
}

fn sidecar(frames: &FrameSet) -> String {
    let meta = &frames.metadata;
    let mut lines = vec![
        format!("format_version = {FORMAT_VERSION}"),
        format!("frames = {}", frames.frame_count),
        format!("columns = {}", frames.pixels.len()),
        format!("seed = {}", frames.seed),
        format!("stream = {}", frames.stream),
        format!("source_kind = {}", meta.source.kind().name()),
        format!("source_dimension = {:?}", meta.source.dimension()),
        format!("distance = {:?}", meta.source.distance()),
        format!("pixel_count = {}", meta.array.pixel_count()),
        format!("pixel_pitch = {:?}", meta.array.pixel_pitch()),
        format!("wavelength = {:?}", meta.array.wavelength()),
        format!("mean_intensity = {:?}", meta.mean_intensity),
    ];
    if let Some((noise, seed)) = meta.noise {
        lines.push(format!("noise_nu = {:?}", noise.nu()));
        lines.push(format!("noise_sigma = {:?}", noise.sigma()));
        lines.push(format!("noise_seed = {seed}"));
    }
    let pixels: Vec<String> = frames.pixels.iter().map(|p| p.to_string()).collect();
    lines.push(format!("pixel_indices = {}", pixels.join(",")));
    lines.join("\n") + "\n"
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn parse_sidecar(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(format!("sidecar line without `=`: {line}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    map.get(key)
        .ok_or_else(|| format_err(format!("sidecar is missing `{key}`")))?
        .parse()
        .map_err(|_| format_err(format!("sidecar value of `{key}` does not parse")))
}

pub fn read_frames(path: &Path) -> Result<FrameSet> {
    let meta = parse_sidecar(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut input = BufReader::new(File::open(path)?);
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let word = |i: usize| u64::from_le_bytes(header[8 + 8 * i..16 + 8 * i].try_into().unwrap());
    let (frame_count, columns, seed, stream) = (word(0) as usize, word(1) as usize, word(2), word(3));

    let pixels: Vec<i64> = meta
        .get("pixel_indices")
        .ok_or_else(|| format_err("sidecar is missing `pixel_indices`"))?
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format_err("bad pixel index")))
        .collect::<Result<_>>()?;
    if pixels.len() != columns || field::<usize>(&meta, "frames")? != frame_count {
        return Err(format_err("header and sidecar disagree on the frame layout"));
    }

    let mut bytes = Vec::with_capacity(frame_count * columns * 8);
    input.read_to_end(&mut bytes)?;
    if bytes.len() != frame_count * columns * 8 {
        return Err(format_err(format!(
            "expected {} bytes of intensities, found {}",
            frame_count * columns * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let kind: SourceKind = meta
        .get("source_kind")
        .ok_or_else(|| format_err("sidecar is missing `source_kind`"))?
        .parse()?;
    let source = SourceGeometry::new(kind, field(&meta, "source_dimension")?, field(&meta, "distance")?)?;
    let array = DetectorArray::new(
        field(&meta, "pixel_count")?,
        field(&meta, "pixel_pitch")?,
        field(&meta, "wavelength")?,
    )?;
    let noise = if meta.contains_key("noise_nu") {
        Some((
            NoiseModel::new(field(&meta, "noise_nu")?, field(&meta, "noise_sigma")?)?,
            field(&meta, "noise_seed")?,
        ))
    } else {
        None
    };
    FrameSet::new(
        data,
        frame_count,
        pixels,
        seed,
        stream,
        FrameMetadata {
            source,
            array,
            mean_intensity: field(&meta, "mean_intensity")?,
            noise,
        },
    )
}
