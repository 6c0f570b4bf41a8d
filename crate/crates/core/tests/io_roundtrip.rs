//! File formats and reports survive a write/read cycle bit for bit.

use alcmv_core::beamformer::LeadField;
use alcmv_core::covstream::EegWindow;
use alcmv_core::formats::*;
use alcmv_core::linalg::Matrix;
use alcmv_core::pipeline::{localize, LocalizeConfig};
use alcmv_core::report::{write_points_csv, RunReport};
use alcmv_core::simkit::{cap, lattice, make_leadfield, simulate_eeg, Dipole, DipoleScene, LeadFieldModel};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #[test]
    fn eeg_round_trip(k in 1usize..6, n in 1usize..20, rate in prop::option::of(1.0..1e4f64), seed in prop::collection::vec(finite(), 120)) {
        let data: Vec<f64> = seed.iter().cycle().take(k * n).copied().collect();
        let x = EegWindow::new(Matrix::from_vec(k, n, data), rate).unwrap();
        let mut buf = Vec::new();
        write_eeg(&mut buf, &x).unwrap();
        prop_assert_eq!(buf.len(), 25 + 8 * k * n);
        let back = read_eeg(&buf[..]).unwrap();
        for (a, b) in back.data().as_slice().iter().zip(x.data().as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.sample_rate(), rate);
    }

    #[test]
    fn leadfield_round_trip(k in 1usize..6, p in 0usize..5, vals in prop::collection::vec(finite(), 100)) {
        let mut it = vals.iter().cycle().copied();
        let points: Vec<[f64; 3]> = (0..p).map(|_| [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]).collect();
        let gains: Vec<Matrix> = (0..p).map(|_| Matrix::from_vec(k, 3, (&mut it).take(3 * k).collect())).collect();
        let lf = LeadField::new(k, points, gains).unwrap();
        let mut buf = Vec::new();
        write_leadfield(&mut buf, &lf).unwrap();
        prop_assert_eq!(buf.len(), 12 + p * 8 * (3 + 3 * k));
        prop_assert_eq!(read_leadfield(&buf[..]).unwrap(), lf);
    }

    #[test]
    fn truncated_files_are_format_errors(cut in 0usize..60) {
        let x = EegWindow::new(Matrix::from_vec(2, 3, vec![1.0; 6]), None).unwrap();
        let mut buf = Vec::new();
        write_eeg(&mut buf, &x).unwrap();
        let cut = cut.min(buf.len() - 1);
        prop_assert!(matches!(read_eeg(&buf[..cut]), Err(alcmv_core::Error::Format(_))));
    }
}

fn demo_report() -> RunReport {
    let electrodes = cap(0.1, 8);
    let grid = lattice([-0.02, -0.02, 0.01], [0.02, 0.02, 0.05], [2, 2, 2]).unwrap();
    let lf = make_leadfield(&electrodes, &grid, LeadFieldModel::HomogeneousDipole).unwrap();
    let n = 120;
    let scene = DipoleScene::new(
        vec![Dipole {
            position: grid[3],
            orientation: [0.0, 0.0, 1.0],
            waveform: (0..n).map(|t| (t as f64 * 0.2).sin()).collect(),
        }],
        n,
        Some(100.0),
        0.01,
        3,
    )
    .unwrap();
    let y = simulate_eeg(&lf, &scene).unwrap();
    let (res, timing) = localize(&y, &lf, &LocalizeConfig::default()).unwrap();
    let mut report = RunReport::new("localize");
    report.config.insert("ns".into(), serde_json::json!(res.ns));
    report.localize = Some(res);
    report.timing = timing;
    report
}

#[test]
fn report_round_trips_losslessly() {
    let report = demo_report();
    let text = report.to_json().unwrap();
    let back = RunReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap(), text);
}

#[test]
fn report_is_deterministic_without_timing() {
    assert_eq!(demo_report().without_timing(), demo_report().without_timing());
}

#[test]
fn points_csv_has_one_row_per_point() {
    let report = demo_report();
    let mut buf = Vec::new();
    write_points_csv(&mut buf, report.localize.as_ref().unwrap()).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    assert!(lines[0].starts_with("point,x,y,z,accelerated_activity"));
    let cols = lines[0].split(',').count();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == cols));
}

#[test]
fn eeg_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let x = EegWindow::new(Matrix::from_rows(&[[1.0, 2.5], [-3.0, 4.0]]), Some(512.0)).unwrap();
    let path = dir.path().join("x.eeg");
    save_eeg(&path, &x).unwrap();
    assert_eq!(load_eeg(&path).unwrap(), x);
    let csv = dir.path().join("x.csv");
    std::fs::write(&csv, "1,2.5\n-3,4\n").unwrap();
    assert_eq!(load_eeg(&csv).unwrap().data(), x.data());
}
