//! Synthetic EEG: dipole lead fields, forward simulation and the evaluation
//! metrics used to compare the two localization pipelines.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::beamformer::{check_leadfield_rank, LeadField};
use crate::covstream::EegWindow;
use crate::eig3::norm3;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Minimum electrode-to-source distance for the dipole kernel, in meters.
pub const MIN_ELECTRODE_DISTANCE: f64 = 1e-3;

/// Distance within which a scene source is matched to a grid point.
pub const GRID_MATCH_TOL: f64 = 1e-9;

const MAX_RESAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LeadFieldModel {
    /// Point dipole in an infinite homogeneous conductor of unit conductivity.
    #[default]
    HomogeneousDipole,
    /// Independent standard-normal gains per point, redrawn until full rank.
    RandomFullrank { seed: u64 },
}

/// Lead field of each grid point seen from `electrodes`.
pub fn make_leadfield(electrodes: &[[f64; 3]], grid: &[[f64; 3]], model: LeadFieldModel) -> Result<LeadField> {
    let k = electrodes.len();
    if k < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 electrodes, got {k}")));
    }
    if !electrodes.iter().chain(grid).flatten().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("electrode or grid positions"));
    }
    let gains = match model {
        LeadFieldModel::HomogeneousDipole => grid
            .iter()
            .enumerate()
            .map(|(pi, p)| dipole_gain(electrodes, p, pi))
            .collect::<Result<Vec<_>>>()?,
        LeadFieldModel::RandomFullrank { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            grid.iter()
                .map(|_| random_gain(k, &mut rng))
                .collect::<Result<Vec<_>>>()?
        }
    };
    LeadField::new(k, grid.to_vec(), gains)
}

fn dipole_gain(electrodes: &[[f64; 3]], p: &[f64; 3], point: usize) -> Result<Matrix> {
    let mut l = Matrix::zeros(electrodes.len(), 3);
    for (i, e) in electrodes.iter().enumerate() {
        let d = [e[0] - p[0], e[1] - p[1], e[2] - p[2]];
        let r = norm3(&d);
        if r < MIN_ELECTRODE_DISTANCE {
            return Err(Error::Scene(format!(
                "electrode {i} is {r:.2e} m from grid point {point} (minimum {MIN_ELECTRODE_DISTANCE} m)"
            )));
        }
        let s = 1.0 / (4.0 * PI * r * r * r);
        for j in 0..3 {
            l[(i, j)] = d[j] * s;
        }
    }
    Ok(l)
}

fn random_gain(k: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    for _ in 0..MAX_RESAMPLES {
        let l = Matrix::from_vec(k, 3, (0..3 * k).map(|_| StandardNormal.sample(rng)).collect());
        if check_leadfield_rank(&l).is_ok() {
            return Ok(l);
        }
    }
    Err(Error::DegenerateLeadField(format!(
        "no full-rank {k}x3 draw in {MAX_RESAMPLES} attempts"
    )))
}

/// An active dipole with a fixed orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dipole {
    pub position: [f64; 3],
    /// Unit vector.
    pub orientation: [f64; 3],
    pub waveform: Vec<f64>,
}

/// Sources plus noise; `seed` fixes the noise realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleScene {
    pub sources: Vec<Dipole>,
    pub samples: usize,
    pub sample_rate: Option<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DipoleScene {
    pub fn new(
        sources: Vec<Dipole>,
        samples: usize,
        sample_rate: Option<f64>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Scene("scene needs at least one sample".into()));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::Scene(format!(
                "noise_sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        for (i, s) in sources.iter().enumerate() {
            if s.waveform.len() != samples {
                return Err(Error::Scene(format!(
                    "source {i} waveform has {} samples, scene has {samples}",
                    s.waveform.len()
                )));
            }
            if !s.waveform.iter().chain(&s.position).all(|v| v.is_finite()) {
                return Err(Error::NonFinite("source definition"));
            }
            let n = norm3(&s.orientation);
            if !((n - 1.0).abs() <= 1e-9) {
                return Err(Error::Scene(format!("source {i} orientation has norm {n}, expected 1")));
            }
        }
        Ok(Self {
            sources,
            samples,
            sample_rate,
            noise_sigma,
            seed,
        })
    }
}

/// `Y = Σ_j L(p_j) η_j s_j(t) + noise`.
pub fn simulate_eeg(leadfield: &LeadField, scene: &DipoleScene) -> Result<EegWindow> {
    let mut y = clean_signal(leadfield, scene)?;
    if scene.noise_sigma > 0.0 {
        add_noise(&mut y, scene.noise_sigma, scene.seed);
    }
    EegWindow::new(y, scene.sample_rate)
}

/// Noise-free part of the forward model.
pub fn clean_signal(leadfield: &LeadField, scene: &DipoleScene) -> Result<Matrix> {
    let k = leadfield.electrodes();
    let n = scene.samples;
    let mut y = Matrix::zeros(k, n);
    for (i, src) in scene.sources.iter().enumerate() {
        let p = leadfield
            .find_point(src.position, GRID_MATCH_TOL)
            .ok_or_else(|| Error::Scene(format!("source {i} at {:?} is not a grid point", src.position)))?;
        let gain = leadfield.gain(p).matvec(&src.orientation);
        for (c, g) in gain.iter().enumerate() {
            for (o, s) in y.row_mut(c).iter_mut().zip(&src.waveform) {
                *o += g * s;
            }
        }
    }
    Ok(y)
}

/// Adds i.i.d. `N(0, sigma²)` noise, drawn channel by channel.
pub fn add_noise(y: &mut Matrix, sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in y.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += sigma * z;
    }
}

/// Noise level giving `snr_db` against the mean signal power of `clean`.
pub fn noise_sigma_for_snr(clean: &Matrix, snr_db: f64) -> f64 {
    let n = clean.as_slice().len().max(1) as f64;
    let power = clean.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}

fn abs_diff_sum_max(est: &[f64], reference: &[f64]) -> (f64, f64) {
    est.iter().zip(reference).fold((0.0, 0.0), |(sum, max), (e, r)| {
        let d = (e.abs() - r.abs()).abs();
        (sum + d, f64::max(max, d))
    })
}

/// `Σ_c ||est_c| − |ref_c|| / (3 · max_c ||est_c| − |ref_c||)`, 0 when the
/// vectors agree up to component signs.
pub fn orientation_error(est: &[f64; 3], reference: &[f64; 3]) -> f64 {
    let (sum, max) = abs_diff_sum_max(est, reference);
    if max == 0.0 {
        0.0
    } else {
        sum / (3.0 * max)
    }
}

/// Elementwise `Σ ||a| − |b|| / (N · max ||a| − |b||)` over two series of
/// equal shape, flattened; 0 when the maximum difference is 0.
pub fn recon_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "series lengths {} and {} differ or are empty",
            a.len(),
            b.len()
        )));
    }
    let (sum, max) = abs_diff_sum_max(a, b);
    Ok(if max == 0.0 { 0.0 } else { sum / (a.len() as f64 * max) })
}

/// Orientation error scaled by the largest component magnitude instead of
/// the largest difference.
pub fn orientation_error_scaled(est: &[f64; 3], reference: &[f64; 3]) -> f64 {
    let (sum, _) = abs_diff_sum_max(est, reference);
    let peak = est.iter().chain(reference).fold(0.0_f64, |m, v| m.max(v.abs()));
    if sum == 0.0 {
        0.0
    } else {
        sum / (3.0 * peak)
    }
}

/// Reconstruction error scaled by the largest sample magnitude instead of
/// the largest difference.
pub fn recon_error_scaled(a: &[f64], b: &[f64]) -> Result<f64> {
    recon_error(a, b)?;
    let (sum, _) = abs_diff_sum_max(a, b);
    let peak = a.iter().chain(b).fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(if sum == 0.0 { 0.0 } else { sum / (a.len() as f64 * peak) })
}

pub fn localization_error(est: &[f64; 3], truth: &[f64; 3]) -> f64 {
    norm3(&[est[0] - truth[0], est[1] - truth[1], est[2] - truth[2]])
}

/// `|corr(a, b)|` (Pearson); 0 when either series is constant.
pub fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).abs()
    }
}

// Scene files.

/// Grid points, listed or generated on a regular lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<[f64; 3]>),
    Lattice {
        min: [f64; 3],
        max: [f64; 3],
        steps: [usize; 3],
    },
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<[f64; 3]>> {
        match self {
            GridSpec::Points(p) => Ok(p.clone()),
            GridSpec::Lattice { min, max, steps } => lattice(*min, *max, *steps),
        }
    }
}

/// `steps[0]·steps[1]·steps[2]` points, x varying slowest.
pub fn lattice(min: [f64; 3], max: [f64; 3], steps: [usize; 3]) -> Result<Vec<[f64; 3]>> {
    if steps.contains(&0) {
        return Err(Error::Scene("lattice steps must be positive".into()));
    }
    let coord = |axis: usize, i: usize| {
        if steps[axis] == 1 {
            min[axis]
        } else {
            min[axis] + (max[axis] - min[axis]) * i as f64 / (steps[axis] - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(steps.iter().product());
    for i in 0..steps[0] {
        for j in 0..steps[1] {
            for l in 0..steps[2] {
                out.push([coord(0, i), coord(1, j), coord(2, l)]);
            }
        }
    }
    Ok(out)
}

/// Electrode positions, listed or spread over the upper half of a sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElectrodeSpec {
    Points(Vec<[f64; 3]>),
    Cap { radius: f64, count: usize },
}

impl ElectrodeSpec {
    pub fn points(&self) -> Result<Vec<[f64; 3]>> {
        match self {
            ElectrodeSpec::Points(p) => Ok(p.clone()),
            ElectrodeSpec::Cap { radius, count } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::Scene(format!("cap radius must be positive, got {radius}")));
                }
                Ok(cap(*radius, *count))
            }
        }
    }
}

/// `count` points on the hemisphere `z ≥ 0` of radius `radius` (Fibonacci
/// spiral).
pub fn cap(radius: f64, count: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [radius * r * phi.cos(), radius * r * phi.sin(), radius * z]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WaveformSpec {
    /// `amplitude · sin(2π f t + phase)`.
    Sine {
        frequency: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Hann-windowed sine between `onset` and `onset + duration` seconds.
    Burst {
        frequency: f64,
        #[serde(default = "one")]
        amplitude: f64,
        onset: f64,
        duration: f64,
    },
    /// Samples read from a text file (whitespace or comma separated), path
    /// relative to the scene file.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl WaveformSpec {
    pub fn render(&self, samples: usize, sample_rate: f64, base: &Path) -> Result<Vec<f64>> {
        let t = |n: usize| n as f64 / sample_rate;
        match self {
            WaveformSpec::Sine {
                frequency,
                amplitude,
                phase,
            } => Ok((0..samples)
                .map(|n| amplitude * (2.0 * PI * frequency * t(n) + phase).sin())
                .collect()),
            WaveformSpec::Burst {
                frequency,
                amplitude,
                onset,
                duration,
            } => {
                if !(*duration > 0.0) {
                    return Err(Error::Scene(format!("burst duration must be positive, got {duration}")));
                }
                Ok((0..samples)
                    .map(|n| {
                        let u = (t(n) - onset) / duration;
                        if (0.0..=1.0).contains(&u) {
                            let window = 0.5 - 0.5 * (2.0 * PI * u).cos();
                            amplitude * window * (2.0 * PI * frequency * (t(n) - onset)).sin()
                        } else {
                            0.0
                        }
                    })
                    .collect())
            }
            WaveformSpec::File { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)?;
                let values = text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|e| Error::Scene(format!("{}: bad sample {s:?}: {e}", full.display())))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if values.len() != samples {
                    return Err(Error::Scene(format!(
                        "{} holds {} samples, scene has {samples}",
                        full.display(),
                        values.len()
                    )));
                }
                Ok(values)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
    pub waveform: WaveformSpec,
}

/// On-disk scene description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub electrodes: ElectrodeSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub samples: usize,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub model: LeadFieldModel,
}

fn default_rate() -> f64 {
    250.0
}

/// A scene file resolved into positions, lead field and dipoles.
#[derive(Debug, Clone)]
pub struct Scene {
    pub electrodes: Vec<[f64; 3]>,
    pub leadfield: LeadField,
    pub dipoles: DipoleScene,
}

impl SceneFile {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Scene(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text)?, base))
    }

    /// Builds the lead field and renders waveforms; `base` anchors relative
    /// waveform file paths.
    pub fn resolve(&self, base: &Path) -> Result<Scene> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Scene(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        let electrodes = self.electrodes.points()?;
        let grid = self.grid.points()?;
        let leadfield = make_leadfield(&electrodes, &grid, self.model)?;
        let sources = self
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = norm3(&s.orientation);
                if !(n.is_finite() && n > 0.0) {
                    return Err(Error::Scene(format!("source {i} has a zero orientation")));
                }
                Ok(Dipole {
                    position: s.position,
                    orientation: s.orientation.map(|v| v / n),
                    waveform: s.waveform.render(self.samples, self.sample_rate, base)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dipoles = DipoleScene::new(
            sources,
            self.samples,
            Some(self.sample_rate),
            self.noise_sigma,
            self.seed,
        )?;
        Ok(Scene {
            electrodes,
            leadfield,
            dipoles,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> Vec<[f64; 3]> {
        vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.2], [-0.5, 0.8, 0.1], [-0.5, -0.8, 0.3]]
    }

    #[test]
    fn dipole_row_on_axis() {
        let l = make_leadfield(&tetra(), &[[0.0; 3]], LeadFieldModel::HomogeneousDipole).unwrap();
        let row = l.gain(0).row(0).to_vec();
        let want = 1.0 / (4.0 * PI);
        assert_eq!(row, vec![0.0, 0.0, want]);
    }

    #[test]
    fn mirrored_electrodes_negate_rows() {
        let e = vec![[0.3, -0.2, 0.5], [-0.3, 0.2, -0.5], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let l = make_leadfield(&e, &[[0.0; 3]], LeadFieldModel::HomogeneousDipole).unwrap();
        let g = l.gain(0);
        for j in 0..3 {
            assert_eq!(g[(0, j)], -g[(1, j)]);
        }
    }

    #[test]
    fn random_model_is_deterministic() {
        let grid = [[0.0; 3], [0.01, 0.0, 0.0]];
        let m = LeadFieldModel::RandomFullrank { seed: 11 };
        let a = make_leadfield(&tetra(), &grid, m).unwrap();
        let b = make_leadfield(&tetra(), &grid, m).unwrap();
        assert_eq!(a, b);
        let c = make_leadfield(&tetra(), &grid, LeadFieldModel::RandomFullrank { seed: 12 }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn leadfield_preconditions() {
        let three = &tetra()[..3];
        assert!(make_leadfield(three, &[[0.0; 3]], LeadFieldModel::HomogeneousDipole).is_err());
        let on_source = make_leadfield(&tetra(), &[[0.0, 0.0, 0.9995]], LeadFieldModel::HomogeneousDipole);
        assert!(matches!(on_source, Err(Error::Scene(_))));
    }

    fn impulse(n: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        v
    }

    #[test]
    fn empty_scene_is_zero() {
        let lf = make_leadfield(&tetra(), &[[0.0; 3]], LeadFieldModel::HomogeneousDipole).unwrap();
        let scene = DipoleScene::new(vec![], 8, None, 0.0, 1).unwrap();
        let y = simulate_eeg(&lf, &scene).unwrap();
        assert!(y.data().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_source_copies_leadfield_column() {
        let lf = make_leadfield(&tetra(), &[[0.0; 3]], LeadFieldModel::HomogeneousDipole).unwrap();
        let src = Dipole {
            position: [0.0; 3],
            orientation: [1.0, 0.0, 0.0],
            waveform: impulse(10, 5),
        };
        let y = simulate_eeg(&lf, &DipoleScene::new(vec![src], 10, None, 0.0, 1).unwrap()).unwrap();
        for t in 0..10 {
            let col = y.column(t);
            if t == 5 {
                assert_eq!(col, lf.gain(0).column(0));
            } else {
                assert!(col.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn superposition() {
        let grid = [[0.0; 3], [0.0, 0.02, 0.0]];
        let lf = make_leadfield(&tetra(), &grid, LeadFieldModel::HomogeneousDipole).unwrap();
        let a = Dipole {
            position: grid[0],
            orientation: [0.0, 0.6, 0.8],
            waveform: (0..6).map(|t| t as f64).collect(),
        };
        let b = Dipole {
            position: grid[1],
            orientation: [1.0, 0.0, 0.0],
            waveform: (0..6).map(|t| (t as f64).cos()).collect(),
        };
        let sim = |s: Vec<Dipole>| simulate_eeg(&lf, &DipoleScene::new(s, 6, None, 0.0, 0).unwrap()).unwrap();
        let both = sim(vec![a.clone(), b.clone()]);
        let sum = sim(vec![a]).data().add(sim(vec![b]).data());
        assert!(both.data().sub(&sum).max_abs() < 1e-15);
    }

    #[test]
    fn off_grid_source_rejected() {
        let lf = make_leadfield(&tetra(), &[[0.0; 3]], LeadFieldModel::HomogeneousDipole).unwrap();
        let src = Dipole {
            position: [0.001, 0.0, 0.0],
            orientation: [1.0, 0.0, 0.0],
            waveform: vec![1.0],
        };
        let scene = DipoleScene::new(vec![src], 1, None, 0.0, 0).unwrap();
        assert!(matches!(simulate_eeg(&lf, &scene), Err(Error::Scene(_))));
    }

    #[test]
    fn noise_is_seeded() {
        let lf = make_leadfield(&tetra(), &[[0.0; 3]], LeadFieldModel::HomogeneousDipole).unwrap();
        let scene = |seed| DipoleScene::new(vec![], 50, None, 0.5, seed).unwrap();
        let a = simulate_eeg(&lf, &scene(3)).unwrap();
        let b = simulate_eeg(&lf, &scene(3)).unwrap();
        let c = simulate_eeg(&lf, &scene(4)).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn orientation_error_examples() {
        let r = [0.6, -0.8, 0.0];
        assert_eq!(orientation_error(&r, &r), 0.0);
        assert_eq!(orientation_error(&r.map(|v| -v), &r), 0.0);
        assert_eq!(orientation_error(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), 2.0 / 3.0);
    }

    #[test]
    fn recon_error_examples() {
        assert_eq!(recon_error(&[1.0, -2.0, 3.0], &[1.0, -2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(recon_error(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(recon_error(&[1.0, -2.0], &[-1.0, 2.0]).unwrap(), 0.0);
        assert!(recon_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scaled_metric_variants() {
        assert_eq!(orientation_error_scaled(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), 2.0 / 3.0);
        assert_eq!(recon_error_scaled(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        // One small difference: the literal form saturates, the scaled one does not.
        let a = [1.0, 0.5, 0.25];
        let b = [1.0, 0.5, 0.25 + 1e-9];
        assert!((orientation_error(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
        assert!(orientation_error_scaled(&a, &b) < 1e-9);
    }

    #[test]
    fn localization_error_examples() {
        assert_eq!(localization_error(&[0.0; 3], &[0.0; 3]), 0.0);
        assert_eq!(localization_error(&[0.0; 3], &[0.0, 0.0, 0.003]), 0.003);
        let e = localization_error(&[1e-3, 2e-3, 2e-3], &[0.0; 3]);
        assert!((e - 3e-3).abs() < 1e-18);
    }

    #[test]
    fn snr_helper() {
        let clean = Matrix::from_rows(&[[1.0, -1.0], [1.0, -1.0]]);
        assert!((noise_sigma_for_snr(&clean, 0.0) - 1.0).abs() < 1e-15);
        assert!((noise_sigma_for_snr(&clean, 20.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn correlation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((abs_correlation(&a, &a.map(|v| -2.0 * v + 1.0)) - 1.0).abs() < 1e-15);
        assert_eq!(abs_correlation(&a, &[1.0; 4]), 0.0);
    }

    #[test]
    fn lattice_and_cap() {
        let g = lattice([-1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [3, 1, 2]).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], [-1.0, 0.0, 0.0]);
        assert_eq!(g[5], [1.0, 0.0, 1.0]);
        let c = cap(0.1, 16);
        assert_eq!(c.len(), 16);
        for p in c {
            assert!((norm3(&p) - 0.1).abs() < 1e-15);
            assert!(p[2] > 0.0);
        }
    }

    #[test]
    fn scene_file_round_trip() {
        let json = r#"{
            "electrodes": {"radius": 0.1, "count": 8},
            "grid": {"min": [-0.02, -0.02, 0.0], "max": [0.02, 0.02, 0.04], "steps": [3, 3, 3]},
            "sources": [
                {"position": [0.0, 0.0, 0.02], "orientation": [0, 0, 2],
                 "waveform": {"kind": "sine", "frequency": 10}},
                {"position": [0.02, 0.0, 0.0], "orientation": [1, 0, 0],
                 "waveform": {"kind": "burst", "frequency": 20, "onset": 0.1, "duration": 0.2}}
            ],
            "noise_sigma": 0.0,
            "seed": 5,
            "samples": 100
        }"#;
        let file = SceneFile::parse(json).unwrap();
        let scene = file.resolve(Path::new(".")).unwrap();
        assert_eq!(scene.leadfield.len(), 27);
        assert_eq!(scene.electrodes.len(), 8);
        assert_eq!(scene.dipoles.sources[0].orientation, [0.0, 0.0, 1.0]);
        assert_eq!(scene.dipoles.sample_rate, Some(250.0));
        let back = SceneFile::parse(&serde_json::to_string(&file).unwrap()).unwrap();
        assert_eq!(back, file);
        assert!(SceneFile::parse(r#"{"electrodes": [], "grid": [], "samples": 1, "bogus": 1}"#).is_err());
    }

    #[test]
    fn waveform_from_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("w.txt"), "1, 2\n3 4\n").unwrap();
        let spec = WaveformSpec::File { path: "w.txt".into() };
        assert_eq!(spec.render(4, 100.0, dir.path()).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(spec.render(5, 100.0, dir.path()).is_err());
    }
}
