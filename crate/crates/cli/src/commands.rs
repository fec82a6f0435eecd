//! One function per subcommand; each returns the paths it wrote.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hbt_core::estimation::{estimate as fit, monte_carlo_study};
use hbt_core::scans::{correlation_curves, scan_noise, scan_separation, NoiseScan, SeparationScan};
use hbt_core::simulator::{apply_detector_noise, read_frames, sample_correlation, sample_thermal_fields_at, sidecar_path, write_frames};
use hbt_core::statistics::{MeasurementModel, NoiseTreatment, SchemeKind};

use crate::config::ExperimentConfig;
use crate::svg::{line_plot, Series};
use crate::CliError;

fn write(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(path)
}

fn out(config: &ExperimentConfig, name: &str) -> PathBuf {
    config.run.output.join(name)
}

pub fn simulate(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let (source, array, noise) = (config.source()?, config.array()?, config.noise()?);
    let mut pixels: Vec<i64> = array.scan_indices().collect();
    for &n in config.orders()? {
        pixels.extend(config.detection_scheme(n, &array)?.sensor_pixels(&array));
    }
    pixels.sort_unstable();
    pixels.dedup();
    let frames = usize::try_from(config.run.frames).map_err(|_| CliError::Config("run.frames: too large".into()))?;
    let seed = config.run.seed;
    let set = sample_thermal_fields_at(&source, &array, &pixels, config.run.mean_intensity, frames, seed, 0)?;
    let set = apply_detector_noise(set, &noise, seed);
    let path = out(config, "frames.bin");
    write_frames(&path, &set)?;
    Ok(vec![sidecar_path(&path), path])
}

pub fn study(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let report = monte_carlo_study(&config.study()?)?;
    Ok(vec![write(out(config, "study.csv"), &report.to_csv())?])
}

pub fn scan_d(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    if config.scheme.kind != SchemeKind::DistinctReferences {
        return Err(CliError::Config(
            "scheme.kind: separation scans need \"distinct-references\"".into(),
        ));
    }
    let scan = SeparationScan {
        source: config.source()?,
        array: config.array()?,
        frames: config.run.frames,
        mean_intensity: config.run.mean_intensity,
        noise: config.noise()?,
        estimate_chi: config.run.estimate_chi,
        orders: config.orders()?.to_vec(),
        separations: config.separations()?,
    };
    let points = scan_separation(&scan)?;
    let mut csv = String::from("d,n,std_a_um,coherence_zero\n");
    for p in &points {
        let zero = p.coherence_zero.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{:?},{}", p.separation, p.order, p.std_a * 1e6, zero);
    }
    let mut written = vec![write(out(config, "scan_d.csv"), &csv)?];
    if config.run.svg {
        let series: Vec<Series> = scan
            .orders
            .iter()
            .map(|&n| Series {
                label: format!("n = {n}"),
                points: points
                    .iter()
                    .filter(|p| p.order == n)
                    .map(|p| (p.separation as f64, p.std_a * 1e6))
                    .collect(),
            })
            .collect();
        let svg = line_plot("CRB spread of â", "reference separation d (pixels)", "std(â) (µm)", &series);
        written.push(write(out(config, "scan_d.svg"), &svg)?);
    }
    Ok(written)
}

pub fn scan_sigma(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let grid = config.noise_grid()?;
    let mut csv = String::from("n,nu,sigma,var_crb_um2\n");
    let mut series = Vec::new();
    for &order in config.orders()? {
        let points = scan_noise(&NoiseScan {
            source: config.source()?,
            array: config.array()?,
            frames: config.run.frames,
            mean_intensity: config.run.mean_intensity,
            order,
            scheme: config.scheme.kind,
            separation: config.scheme.separation,
            nus: grid.nus.clone(),
            sigmas: grid.sigmas.clone(),
        })?;
        for p in &points {
            let _ = writeln!(csv, "{order},{:?},{:?},{:?}", p.nu, p.sigma, p.var_a * 1e12);
        }
        for &nu in &grid.nus {
            series.push(Series {
                label: format!("n = {order}, ν = {nu}"),
                points: points
                    .iter()
                    .filter(|p| p.nu == nu)
                    .map(|p| (p.sigma, p.var_a * 1e12))
                    .collect(),
            });
        }
    }
    let mut written = vec![write(out(config, "scan_sigma.csv"), &csv)?];
    if config.run.svg {
        let svg = line_plot("CRB of â against detector noise", "ς", "var(â) (µm²)", &series);
        written.push(write(out(config, "scan_sigma.svg"), &svg)?);
    }
    Ok(written)
}

pub fn curves(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let orders = config.orders()?;
    let points = correlation_curves(
        &config.source()?,
        &config.array()?,
        orders,
        config.run.mean_intensity,
        config.reference_pixel()?,
    )?;
    let mut csv = String::from("pixel,offset_um");
    for n in orders {
        let _ = write!(csv, ",g{n}");
    }
    csv.push('\n');
    for p in &points {
        let _ = write!(csv, "{},{:?}", p.pixel, p.offset * 1e6);
        for v in &p.values {
            let _ = write!(csv, ",{v:?}");
        }
        csv.push('\n');
    }
    let mut written = vec![write(out(config, "curves.csv"), &csv)?];
    if config.run.svg {
        let series: Vec<Series> = orders
            .iter()
            .enumerate()
            .map(|(k, n)| Series {
                label: format!("G({n})"),
                points: points.iter().map(|p| (p.offset * 1e6, p.values[k])).collect(),
            })
            .collect();
        let svg = line_plot("Correlation functions", "x − s (µm)", "G(n)", &series);
        written.push(write(out(config, "curves.svg"), &svg)?);
    }
    Ok(written)
}

/// Fits every configured order to the sample correlations of one frame
/// file. Geometry comes from the file; the scheme and χ handling from the
/// configuration.
pub fn estimate(config: &ExperimentConfig, data: &Path) -> Result<Vec<PathBuf>, CliError> {
    let frames = read_frames(data)?;
    let meta = *frames.metadata();
    let chi = meta.noise.map(|(noise, _)| noise.chi()).unwrap_or(config.noise()?.chi());
    let treatment = if config.run.estimate_chi {
        NoiseTreatment::Estimated
    } else {
        NoiseTreatment::Known { chi }
    };
    let scoring = config.scoring()?;
    let mut csv = String::from("n,scheme,d,a_um,i_eff,chi,std_crb_um,iterations,converged,log_likelihood\n");
    for &n in config.orders()? {
        let scheme = config.detection_scheme(n, &meta.array)?;
        let d = match scheme.kind() {
            SchemeKind::DistinctReferences => config.scheme.separation.map(|d| d.to_string()).unwrap_or_default(),
            SchemeKind::RepeatedReference => String::new(),
        };
        let kind = scheme.kind().number();
        let sample = sample_correlation(&frames, &scheme)?;
        let model = MeasurementModel::new(scheme, meta.source, meta.array, frames.frame_count() as u64, treatment)?;
        let result = fit(sample.as_slice(), &model, &scoring, None)?;
        let theta = result.theta_hat;
        let _ = writeln!(
            csv,
            "{n},{kind},{d},{:?},{:?},{},{:?},{},{},{:?}",
            theta.a * 1e6,
            theta.i_eff,
            theta.chi.map(|c| format!("{c:?}")).unwrap_or_default(),
            result.crb[0].sqrt() * 1e6,
            result.iterations,
            result.converged,
            result.log_likelihood
        );
    }
    Ok(vec![write(out(config, "estimate.csv"), &csv)?])
}
