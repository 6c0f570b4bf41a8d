//! End-to-end runs: streaming localization in either or both modes, accuracy
//! against a known scene, and the cost benchmark.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beamformer::{rank_sources, scan_grid, GridScan, LeadField, ScanCosts, ScanMode};
use crate::covstream::{init_state_counted, scatter, validate_window_params, EegWindow, StreamCounters};
use crate::error::{Error, Result};
use crate::linalg::{direct_inverse_counted, relative_frobenius_error, MaddCounter, Matrix};
use crate::millerinv::advance;
use crate::report::*;
use crate::simkit::{self, DipoleScene, LeadFieldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Accelerated,
    Traditional,
    Both,
}

impl RunMode {
    pub fn modes(self) -> &'static [ScanMode] {
        match self {
            RunMode::Accelerated => &[ScanMode::Accelerated],
            RunMode::Traditional => &[ScanMode::Traditional],
            RunMode::Both => &[ScanMode::Accelerated, ScanMode::Traditional],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    pub mode: RunMode,
    /// Window length; `None` means `4k`.
    pub ns: Option<usize>,
    pub cy: usize,
    pub ridge: f64,
    /// Slides between direct re-inversions; 0 disables.
    pub refresh: u64,
    /// Subtract the per-channel mean of the first window before analysis.
    pub center: bool,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Both,
            ns: None,
            cy: 1,
            ridge: 0.0,
            refresh: crate::covstream::DEFAULT_REFRESH_EVERY,
            center: true,
        }
    }
}

pub type Timing = BTreeMap<String, f64>;

/// Slides an `ns`-sample window over `y` in steps of `cy` and localizes on
/// the last full window. The accelerated mode maintains the inverse
/// recursively; the traditional mode inverts the batch covariance of the same
/// window.
pub fn localize(y: &EegWindow, leadfield: &LeadField, cfg: &LocalizeConfig) -> Result<(LocalizeResult, Timing)> {
    let k = y.channels();
    let n = y.samples();
    if leadfield.electrodes() != k {
        return Err(Error::DimensionMismatch(format!(
            "EEG has {k} channels, lead field has {} electrodes",
            leadfield.electrodes()
        )));
    }
    let ns = cfg.ns.unwrap_or(4 * k);
    validate_window_params(k, ns, cfg.cy)?;
    if !(cfg.ridge.is_finite() && cfg.ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge must be finite and >= 0, got {}",
            cfg.ridge
        )));
    }
    if n < ns {
        return Err(Error::InsufficientSamples(format!(
            "recording has {n} samples, window needs ns = {ns}"
        )));
    }
    let y = if cfg.center {
        y.centered_by(&y.channel_means(ns))?
    } else {
        y.clone()
    };
    let slides = ((n - ns) / cfg.cy) as u64;
    let final_start = slides as usize * cfg.cy;

    let mut timing = Timing::new();
    let mut runs = Vec::new();
    let mut scans = Vec::new();
    for &mode in cfg.mode.modes() {
        let (run, scan) = match mode {
            ScanMode::Accelerated => run_accelerated(&y, leadfield, cfg, ns, slides, &mut timing)?,
            ScanMode::Traditional => run_traditional(&y, leadfield, cfg, ns, final_start, &mut timing)?,
        };
        runs.push(run);
        scans.push(scan);
    }
    let comparison = match (scans.as_slice(), runs.as_slice()) {
        ([acc, trad], [racc, rtrad]) => Some(compare(acc, trad, racc, rtrad)?),
        _ => None,
    };
    Ok((
        LocalizeResult {
            channels: k,
            samples: n,
            grid_points: leadfield.len(),
            ns,
            cy: cfg.cy,
            slides,
            runs,
            comparison,
        },
        timing,
    ))
}

fn run_accelerated(
    y: &EegWindow,
    lf: &LeadField,
    cfg: &LocalizeConfig,
    ns: usize,
    slides: u64,
    timing: &mut Timing,
) -> Result<(ModeRun, GridScan)> {
    let mut costs = StageCosts::default();
    let (mut cov, mut inv) = (MaddCounter::new(), MaddCounter::new());
    let t0 = Instant::now();
    let mut state = init_state_counted(&y.slice(0, ns)?, cfg.cy, cfg.ridge, &mut cov, &mut inv)?;
    state.set_refresh_every((cfg.refresh > 0).then_some(cfg.refresh));
    costs.covariance = cov.take();
    costs.inverse = inv.take();
    for s in 0..slides as usize {
        let block = y.slice(ns + s * cfg.cy, cfg.cy)?.into_data();
        advance(&mut state, &block, &mut cov, &mut inv)?;
    }
    costs.covariance_update = cov.take();
    costs.inverse_update = inv.take();
    timing.insert("accelerated.stream".into(), t0.elapsed().as_secs_f64());

    let window = EegWindow::new(state.window_data(), y.sample_rate())?;
    let rinv = state
        .inverse()
        .ok_or_else(|| Error::InvalidParameter("maintained inverse is not current".into()))?;
    let t1 = Instant::now();
    let scan = scan_grid(lf, rinv, &window, ScanMode::Accelerated)?;
    timing.insert("accelerated.scan".into(), t1.elapsed().as_secs_f64());
    let run = mode_run(lf, &scan, state.window_start(), ns, costs, state.counters())?;
    Ok((run, scan))
}

fn run_traditional(
    y: &EegWindow,
    lf: &LeadField,
    cfg: &LocalizeConfig,
    ns: usize,
    start: usize,
    timing: &mut Timing,
) -> Result<(ModeRun, GridScan)> {
    let mut costs = StageCosts::default();
    let mut ops = MaddCounter::new();
    let t0 = Instant::now();
    let window = y.slice(start, ns)?;
    let mut c = scatter(window.data(), 0, ns, &mut ops);
    costs.covariance = ops.take();
    c.scale_in_place(1.0 / (ns - 1) as f64);
    c.add_diagonal(cfg.ridge);
    let rinv = direct_inverse_counted(&c, &mut ops)?;
    costs.inverse = ops.take();
    timing.insert("traditional.batch".into(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let scan = scan_grid(lf, &rinv, &window, ScanMode::Traditional)?;
    timing.insert("traditional.scan".into(), t1.elapsed().as_secs_f64());
    let run = mode_run(lf, &scan, start as u64, ns, costs, StreamCounters::default())?;
    Ok((run, scan))
}

fn mode_run(
    lf: &LeadField,
    scan: &GridScan,
    window_start: u64,
    window_len: usize,
    mut costs: StageCosts,
    counters: StreamCounters,
) -> Result<ModeRun> {
    if scan.estimates.is_empty() && !lf.is_empty() {
        let why = scan.flagged.first().map(|f| f.reason.clone()).unwrap_or_default();
        return Err(Error::UnresolvableSource(format!(
            "all {} grid points were flagged ({why})",
            lf.len()
        )));
    }
    let ScanCosts {
        orientation,
        weights,
        reconstruction,
    } = scan.costs;
    costs.orientation = orientation;
    costs.weights = weights;
    costs.reconstruction = reconstruction;

    let mut points: Vec<PointResult> = lf
        .points()
        .iter()
        .enumerate()
        .map(|(point, &position)| PointResult {
            point,
            position,
            activity: None,
            orientation: None,
            flag: None,
        })
        .collect();
    for e in &scan.estimates {
        points[e.point].activity = Some(e.activity);
        points[e.point].orientation = e.orientation.map(|o| o.as_array());
    }
    for f in &scan.flagged {
        points[f.point].flag = Some(f.reason.clone());
    }
    Ok(ModeRun {
        mode: scan.mode,
        window_start,
        window_len,
        points,
        ranking: rank_sources(&scan.estimates),
        costs,
        counters,
    })
}

fn compare(acc: &GridScan, trad: &GridScan, racc: &ModeRun, rtrad: &ModeRun) -> Result<Comparison> {
    let mut points = Vec::new();
    for a in &acc.estimates {
        let Some(t) = trad.estimate(a.point) else { continue };
        let (Some(oa), Some(ot)) = (a.orientation, t.orientation) else {
            continue;
        };
        let (oa, ot) = (oa.as_array(), ot.as_array());
        points.push(PointComparison {
            point: a.point,
            orientation_error: simkit::orientation_error(&oa, &ot),
            recon_error: simkit::recon_error(&a.series, &t.series)?,
            orientation_error_scaled: simkit::orientation_error_scaled(&oa, &ot),
            recon_error_scaled: simkit::recon_error_scaled(&a.series, &t.series)?,
        });
    }
    let top = racc
        .top_point()
        .and_then(|p| points.iter().find(|c| c.point == p).cloned());
    let ratio =
        (rtrad.costs.reconstruction > 0).then(|| racc.costs.reconstruction as f64 / rtrad.costs.reconstruction as f64);
    Ok(Comparison {
        orientation_error: Summary::of(points.iter().map(|c| c.orientation_error)),
        recon_error: Summary::of(points.iter().map(|c| c.recon_error)),
        orientation_error_scaled: Summary::of(points.iter().map(|c| c.orientation_error_scaled)),
        recon_error_scaled: Summary::of(points.iter().map(|c| c.recon_error_scaled)),
        top,
        same_top_point: racc.top_point() == rtrad.top_point(),
        same_ranking: racc.ranking == rtrad.ranking,
        reconstruction_cost_ratio: ratio,
        points,
    })
}

/// Scores each run's top-ranked point against the scene's true sources.
pub fn truth_metrics(result: &LocalizeResult, leadfield: &LeadField, scene: &DipoleScene) -> TruthMetrics {
    let runs = result
        .runs
        .iter()
        .map(|run| {
            let top = run.top_point();
            let nearest = top.and_then(|p| {
                let pos = leadfield.point(p);
                scene
                    .sources
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i, simkit::localization_error(&pos, &s.position)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            });
            let top_is_source = matches!(nearest, Some((_, d)) if d <= simkit::GRID_MATCH_TOL);
            let (oe, oes) = match (top, nearest, top_is_source) {
                (Some(p), Some((i, _)), true) => match run.points[p].orientation {
                    Some(o) => {
                        let truth = scene.sources[i].orientation;
                        (
                            Some(simkit::orientation_error(&o, &truth)),
                            Some(simkit::orientation_error_scaled(&o, &truth)),
                        )
                    }
                    None => (None, None),
                },
                _ => (None, None),
            };
            TruthRun {
                mode: run.mode,
                top_point: top,
                localization_error: nearest.map(|(_, d)| d),
                nearest_source: nearest.map(|(i, _)| i),
                top_is_source,
                orientation_error: oe,
                orientation_error_scaled: oes,
            }
        })
        .collect();
    TruthMetrics { runs }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub k: usize,
    /// `None` means `4k`.
    pub ns: Option<usize>,
    pub cy: usize,
    pub grid_points: usize,
    pub slides: u64,
    pub seed: u64,
    pub refresh: u64,
}

/// Multiply-add accounting of the recursive update against a full batch
/// recompute per slide, and of scalar against 3-column reconstruction, on
/// seeded random data.
pub fn bench(cfg: &BenchConfig) -> Result<(BenchResult, Timing)> {
    let k = cfg.k;
    let ns = cfg.ns.unwrap_or(4 * k);
    validate_window_params(k, ns, cfg.cy)?;
    if cfg.grid_points == 0 {
        return Err(Error::InvalidParameter("grid_points must be at least 1".into()));
    }
    let total = ns
        .checked_add((cfg.slides as usize).saturating_mul(cfg.cy))
        .filter(|&t| t.checked_mul(k).is_some_and(|c| c <= 1 << 31))
        .ok_or_else(|| Error::InvalidParameter("ns + slides·cy is too large".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let data = Matrix::from_vec(
        k,
        total,
        (0..k * total).map(|_| StandardNormal.sample(&mut rng)).collect(),
    );
    let y = EegWindow::new(data, None)?;
    let grid: Vec<[f64; 3]> = (0..cfg.grid_points).map(|i| [i as f64 * 1e-3, 0.0, 0.0]).collect();
    let electrodes = simkit::cap(0.1, k.max(4));
    let lf = if k >= 4 {
        simkit::make_leadfield(
            &electrodes,
            &grid,
            LeadFieldModel::RandomFullrank {
                seed: cfg.seed ^ 0x5eed,
            },
        )?
    } else {
        return Err(Error::InvalidParameter(format!("bench needs k >= 4, got {k}")));
    };

    let mut timing = Timing::new();
    let (mut cov, mut inv) = (MaddCounter::new(), MaddCounter::new());
    let mut state = init_state_counted(&y.slice(0, ns)?, cfg.cy, 0.0, &mut cov, &mut inv)?;
    state.set_refresh_every((cfg.refresh > 0).then_some(cfg.refresh));
    let init = InitCosts {
        covariance: cov.take(),
        inverse: inv.take(),
    };

    let t0 = Instant::now();
    for s in 0..cfg.slides as usize {
        let block = y.slice(ns + s * cfg.cy, cfg.cy)?.into_data();
        advance(&mut state, &block, &mut cov, &mut inv)?;
    }
    timing.insert("recursive_update".into(), t0.elapsed().as_secs_f64());
    let (rec_cov, rec_inv) = (cov.take(), inv.take());

    let (mut bcov, mut binv) = (MaddCounter::new(), MaddCounter::new());
    let t1 = Instant::now();
    let mut last_batch = None;
    for s in 1..=cfg.slides as usize {
        let mut c = scatter(y.data(), s * cfg.cy, ns, &mut bcov);
        c.scale_in_place(1.0 / (ns - 1) as f64);
        last_batch = Some(direct_inverse_counted(&c, &mut binv)?);
    }
    timing.insert("batch_recompute".into(), t1.elapsed().as_secs_f64());

    let update = (cfg.slides > 0).then(|| {
        let rec = (rec_cov + rec_inv) as f64;
        let batch = (bcov.madds + binv.madds) as f64;
        UpdateCosts {
            recursive_covariance: rec_cov,
            recursive_inverse: rec_inv,
            batch_covariance: bcov.madds,
            batch_inverse: binv.madds,
            recursive_per_slide: rec / cfg.slides as f64,
            batch_per_slide: batch / cfg.slides as f64,
            ratio: rec / batch,
        }
    });
    let inverse_drift = match (&last_batch, state.inverse()) {
        (Some(direct), Some(maintained)) => Some(relative_frobenius_error(maintained, direct)),
        _ => None,
    };

    let window = EegWindow::new(state.window_data(), None)?;
    let rinv = state
        .inverse()
        .ok_or_else(|| Error::InvalidParameter("maintained inverse is not current".into()))?
        .clone();
    let t2 = Instant::now();
    let acc = scan_grid(&lf, &rinv, &window, ScanMode::Accelerated)?;
    timing.insert("accelerated_scan".into(), t2.elapsed().as_secs_f64());
    let t3 = Instant::now();
    let trad = scan_grid(&lf, &rinv, &window, ScanMode::Traditional)?;
    timing.insert("traditional_scan".into(), t3.elapsed().as_secs_f64());
    if let (Some(&r), Some(&b)) = (timing.get("recursive_update"), timing.get("batch_recompute")) {
        if r > 0.0 {
            timing.insert("update_speedup".into(), b / r);
        }
    }

    let scan_costs = |s: &GridScan| StageCosts {
        orientation: s.costs.orientation,
        weights: s.costs.weights,
        reconstruction: s.costs.reconstruction,
        ..StageCosts::default()
    };
    let scalar_per_point = (k * ns) as u64;
    let vector_per_point = (3 * k * ns) as u64;
    Ok((
        BenchResult {
            k,
            ns,
            cy: cfg.cy,
            grid_points: cfg.grid_points,
            slides: cfg.slides,
            seed: cfg.seed,
            init,
            update,
            reconstruction: ReconstructionCosts {
                samples: ns,
                scalar_per_point,
                vector_per_point,
                ratio: scalar_per_point as f64 / vector_per_point as f64,
            },
            accelerated: StageCosts {
                covariance: init.covariance,
                covariance_update: rec_cov,
                inverse: init.inverse,
                inverse_update: rec_inv,
                ..scan_costs(&acc)
            },
            traditional: StageCosts {
                covariance: bcov.madds,
                inverse: binv.madds,
                ..scan_costs(&trad)
            },
            counters: state.counters(),
            inverse_drift,
        },
        timing,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::{make_leadfield, simulate_eeg, Dipole};

    fn scene_setup(noise: f64) -> (LeadField, DipoleScene, EegWindow) {
        let electrodes = simkit::cap(0.1, 16);
        let grid = simkit::lattice([-0.02, -0.02, 0.01], [0.02, 0.02, 0.05], [3, 3, 3]).unwrap();
        let lf = make_leadfield(&electrodes, &grid, LeadFieldModel::HomogeneousDipole).unwrap();
        let wave: Vec<f64> = (0..400)
            .map(|t| (t as f64 * 0.21).sin() + 0.5 * (t as f64 * 0.05).cos())
            .collect();
        let src = Dipole {
            position: grid[13],
            orientation: [0.0, 0.6, 0.8],
            waveform: wave,
        };
        let scene = DipoleScene::new(vec![src], 400, Some(250.0), noise, 9).unwrap();
        let y = simulate_eeg(&lf, &scene).unwrap();
        (lf, scene, y)
    }

    #[test]
    fn ns_below_channels_is_rank_error() {
        let (lf, _, y) = scene_setup(1e-9);
        let cfg = LocalizeConfig {
            ns: Some(8),
            ..Default::default()
        };
        let err = localize(&y, &lf, &cfg).unwrap_err();
        assert!(err.is_parameter_error());
        assert!(err.to_string().contains("full-rank"));
    }

    #[test]
    fn noise_free_rank_one_covariance_is_singular() {
        let (lf, _, y) = scene_setup(0.0);
        let err = localize(&y, &lf, &LocalizeConfig::default()).unwrap_err();
        assert!(err.is_numerical_error(), "{err}");
    }

    #[test]
    fn noise_free_with_ridge() {
        let (lf, scene, y) = scene_setup(0.0);
        let cfg = LocalizeConfig {
            ridge: 1e-6,
            ..Default::default()
        };
        let (res, _) = localize(&y, &lf, &cfg).unwrap();
        let truth = truth_metrics(&res, &lf, &scene);
        assert!(truth.runs.iter().all(|r| r.top_is_source), "{truth:?}");
    }

    #[test]
    fn both_modes_find_the_source() {
        let (lf, scene, y) = scene_setup(1e-2);
        let (res, _) = localize(&y, &lf, &LocalizeConfig::default()).unwrap();
        assert_eq!(res.runs.len(), 2);
        for run in &res.runs {
            assert_eq!(run.top_point(), Some(13), "{:?}", run.mode);
            assert_eq!(run.points.len(), 27);
        }
        let truth = truth_metrics(&res, &lf, &scene);
        assert!(truth
            .runs
            .iter()
            .all(|r| r.top_is_source && r.localization_error == Some(0.0)));
        let cmp = res.comparison.unwrap();
        assert!(cmp.same_top_point);
        assert_eq!(cmp.reconstruction_cost_ratio, Some(1.0 / 3.0));
        assert_eq!(res.slides, 400 - 64);
        assert_eq!(res.runs[0].counters.slides, 400 - 64);
    }

    #[test]
    fn too_short_recording() {
        let (lf, _, y) = scene_setup(1e-9);
        let short = y.slice(0, 30).unwrap();
        let err = localize(&short, &lf, &LocalizeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples(_)));
    }

    #[test]
    fn bench_ratios() {
        let cfg = BenchConfig {
            k: 8,
            ns: None,
            cy: 1,
            grid_points: 4,
            slides: 10,
            seed: 1,
            refresh: 4096,
        };
        let (b, _) = bench(&cfg).unwrap();
        assert_eq!(b.reconstruction.ratio, 1.0 / 3.0);
        let u = b.update.unwrap();
        assert!(u.ratio < 1.0);
        assert_eq!(u.batch_inverse, 10 * 8 * 8 * 8);
        let (none, _) = bench(&BenchConfig { slides: 0, ..cfg }).unwrap();
        assert!(none.update.is_none());
        assert!(none.init.covariance > 0);
    }
}
