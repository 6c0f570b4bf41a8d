//! `alcmv`: simulate EEG scenes, localize sources with the accelerated and
//! traditional LCMV pipelines, and benchmark their multiply-add costs.
//!
//! Exit codes: 0 success, 2 invalid parameters, 3 bad input data or I/O,
//! 4 numerical failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use alcmv_core::covstream::{EegWindow, DEFAULT_REFRESH_EVERY};
use alcmv_core::formats;
use alcmv_core::pipeline::{self, BenchConfig, LocalizeConfig, RunMode};
use alcmv_core::report::{self, RunReport, SimulateResult};
use alcmv_core::simkit::{simulate_eeg, SceneFile};
use alcmv_core::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const THREADS_ENV: &str = "ALCMV_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "alcmv",
    version,
    about = "Streaming LCMV beamformer for EEG source localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene file into an EEG recording and a lead field.
    Simulate {
        /// Scene description (JSON).
        scene: PathBuf,
        /// Output prefix; writes <prefix>.eeg and <prefix>.lfb.
        out_prefix: PathBuf,
        /// Write a JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Localize sources in a recording.
    Localize {
        /// EEG recording (EEGB binary, or CSV with one channel per row).
        eeg: PathBuf,
        /// Lead field (LFB1 binary).
        leadfield: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        /// Window length in samples [default: 4 x channels].
        #[arg(long)]
        ns: Option<usize>,
        /// Samples per window slide.
        #[arg(long, default_value_t = 1)]
        cy: usize,
        /// Diagonal loading added to the covariance.
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Slides between direct re-inversions of the maintained inverse (0 disables).
        #[arg(long, default_value_t = DEFAULT_REFRESH_EVERY)]
        refresh: u64,
        /// Do not subtract the first window's channel means.
        #[arg(long)]
        no_center: bool,
        /// Sample rate for CSV input, in Hz.
        #[arg(long)]
        sample_rate: Option<f64>,
        /// Scene file with the true sources, for accuracy metrics.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a per-point CSV table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Count multiply-adds of recursive vs batch updates on random data.
    Bench {
        /// Channels.
        #[arg(long, default_value_t = 32)]
        k: usize,
        /// Window length in samples [default: 4k].
        #[arg(long)]
        ns: Option<usize>,
        #[arg(long, default_value_t = 1)]
        cy: usize,
        #[arg(long, default_value_t = 125)]
        grid_points: usize,
        #[arg(long, default_value_t = 100)]
        slides: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Slides between direct re-inversions (0 disables).
        #[arg(long, default_value_t = DEFAULT_REFRESH_EVERY)]
        refresh: u64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Accelerated,
    Traditional,
    Both,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Accelerated => RunMode::Accelerated,
            ModeArg::Traditional => RunMode::Traditional,
            ModeArg::Both => RunMode::Both,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_parameter_error() {
        2
    } else if e.is_numerical_error() {
        4
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be a positive integer, got 0"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cmd: Command) -> alcmv_core::Result<()> {
    match cmd {
        Command::Simulate { scene, out_prefix, out } => simulate(&scene, &out_prefix, out.as_deref()),
        Command::Localize {
            eeg,
            leadfield,
            mode,
            ns,
            cy,
            ridge,
            refresh,
            no_center,
            sample_rate,
            scene,
            out,
            csv,
        } => {
            let cfg = LocalizeConfig {
                mode: mode.into(),
                ns,
                cy,
                ridge,
                refresh,
                center: !no_center,
            };
            localize(
                &eeg,
                &leadfield,
                &cfg,
                sample_rate,
                scene.as_deref(),
                out.as_deref(),
                csv.as_deref(),
            )
        }
        Command::Bench {
            k,
            ns,
            cy,
            grid_points,
            slides,
            seed,
            refresh,
            out,
        } => {
            let cfg = BenchConfig {
                k,
                ns,
                cy,
                grid_points,
                slides,
                seed,
                refresh,
            };
            bench(&cfg, out.as_deref())
        }
    }
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn simulate(scene_path: &Path, prefix: &Path, out: Option<&Path>) -> alcmv_core::Result<()> {
    let t0 = Instant::now();
    let (file, base) = SceneFile::load(scene_path)?;
    let scene = file.resolve(&base)?;
    let y = simulate_eeg(&scene.leadfield, &scene.dipoles)?;
    let eeg_path = with_extension(prefix, "eeg");
    let lf_path = with_extension(prefix, "lfb");
    formats::save_eeg(&eeg_path, &y)?;
    formats::save_leadfield(&lf_path, &scene.leadfield)?;

    let sources: Vec<usize> = scene
        .dipoles
        .sources
        .iter()
        .filter_map(|s| {
            scene
                .leadfield
                .find_point(s.position, alcmv_core::simkit::GRID_MATCH_TOL)
        })
        .collect();
    println!(
        "simulated {} channels x {} samples, {} grid points, {} sources (points {:?})",
        y.channels(),
        y.samples(),
        scene.leadfield.len(),
        sources.len(),
        sources
    );
    println!("wrote {} and {}", eeg_path.display(), lf_path.display());

    if let Some(out) = out {
        let mut report = RunReport::new("simulate");
        report.config = config_map(json!({
            "scene": scene_path.display().to_string(),
            "out_prefix": prefix.display().to_string(),
        }));
        report.simulate = Some(SimulateResult {
            channels: y.channels(),
            samples: y.samples(),
            grid_points: scene.leadfield.len(),
            sources,
            eeg: eeg_path.display().to_string(),
            leadfield: lf_path.display().to_string(),
        });
        report.timing.insert("total".into(), t0.elapsed().as_secs_f64());
        write_report(&report, Some(out))?;
    }
    Ok(())
}

fn localize(
    eeg: &Path,
    leadfield: &Path,
    cfg: &LocalizeConfig,
    sample_rate: Option<f64>,
    scene: Option<&Path>,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> alcmv_core::Result<()> {
    if let Some(rate) = sample_rate {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {rate}"
            )));
        }
    }
    let t0 = Instant::now();
    let y = match formats::load_eeg(eeg)? {
        y if sample_rate.is_some() && y.sample_rate().is_none() => EegWindow::new(y.into_data(), sample_rate)?,
        y => y,
    };
    let lf = formats::load_leadfield(leadfield)?;
    let load_time = t0.elapsed().as_secs_f64();

    let (result, timing) = pipeline::localize(&y, &lf, cfg)?;
    let truth = match scene {
        Some(path) => {
            let (file, base) = SceneFile::load(path)?;
            let scene = file.resolve(&base)?;
            Some(pipeline::truth_metrics(&result, &lf, &scene.dipoles))
        }
        None => None,
    };

    for run in &result.runs {
        let top = run.top_point();
        let flagged = run.points.iter().filter(|p| p.flag.is_some()).count();
        eprintln!(
            "{}: top point {:?}, {} estimated, {} flagged, {} multiply-adds",
            report::mode_name(run.mode),
            top,
            run.ranking.len(),
            flagged,
            run.costs.total()
        );
    }
    if let Some(cmp) = &result.comparison {
        if let Some(top) = &cmp.top {
            eprintln!(
                "agreement at top point {}: orientation error {:.3e}, reconstruction error {:.3e}",
                top.point, top.orientation_error, top.recon_error
            );
        }
    }

    let mut report = RunReport::new("localize");
    report.config = config_map(json!({
        "eeg": eeg.display().to_string(),
        "leadfield": leadfield.display().to_string(),
        "mode": cfg.mode,
        "ns": result.ns,
        "cy": cfg.cy,
        "ridge": cfg.ridge,
        "refresh": cfg.refresh,
        "center": cfg.center,
        "scene": scene.map(|p| p.display().to_string()),
    }));
    report.timing = timing;
    report.timing.insert("load".into(), load_time);
    if let Some(path) = csv {
        let file = std::fs::File::create(path)?;
        report::write_points_csv(std::io::BufWriter::new(file), &result)?;
    }
    report.localize = Some(result);
    report.truth = truth;
    report.timing.insert("total".into(), t0.elapsed().as_secs_f64());
    write_report(&report, out)
}

fn bench(cfg: &BenchConfig, out: Option<&Path>) -> alcmv_core::Result<()> {
    let (result, timing) = pipeline::bench(cfg)?;
    if let Some(u) = &result.update {
        eprintln!(
            "update multiply-adds per slide: recursive {:.0}, batch {:.0} (ratio {:.4})",
            u.recursive_per_slide, u.batch_per_slide, u.ratio
        );
    } else {
        eprintln!("no slides applied; init cost only");
    }
    eprintln!(
        "reconstruction multiply-adds per point: scalar {}, vector {} (ratio {:.4})",
        result.reconstruction.scalar_per_point, result.reconstruction.vector_per_point, result.reconstruction.ratio
    );
    let mut report = RunReport::new("bench");
    report.config = config_map(serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))?);
    report.bench = Some(result);
    report.timing = timing;
    write_report(&report, out)
}

fn config_map(v: Value) -> BTreeMap<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => BTreeMap::new(),
    }
}

fn write_report(report: &RunReport, out: Option<&Path>) -> alcmv_core::Result<()> {
    let text = report.to_json()?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alcmv_core::beamformer::ScanMode;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::RankRequirement { ns: 1, k: 2 }), 2);
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 3);
        assert_eq!(exit_code(&Error::InsufficientSamples("x".into())), 3);
        assert_eq!(
            exit_code(&Error::SingularMatrix {
                pivot: 0.0,
                threshold: 1.0
            }),
            4
        );
        assert_eq!(exit_code(&Error::UnresolvableSource("x".into())), 4);
    }

    #[test]
    fn prefix_extension() {
        assert_eq!(
            with_extension(Path::new("out/run.v1"), "eeg"),
            PathBuf::from("out/run.v1.eeg")
        );
    }

    #[test]
    fn mode_mapping() {
        assert_eq!(
            RunMode::from(ModeArg::Both).modes(),
            &[ScanMode::Accelerated, ScanMode::Traditional]
        );
    }
}
