//! Orientation detection, LCMV weights, source reconstruction and grid scans.
//!
//! Two pipelines share the building blocks here:
//!
//! * accelerated: the dipole orientation at each point is the smallest
//!   eigenvector of `Lᵀ R⁻¹ L` from the closed-form 3×3 solver, the lead field
//!   collapses to `l = L η`, and the beamformer is a single `k`-vector
//!   `w = R⁻¹ l / (lᵀ R⁻¹ l)`;
//! * traditional: orientation from the iterative Jacobi solver and the full
//!   `k×3` weight matrix `W = R⁻¹ L (Lᵀ R⁻¹ L)⁻¹`, whose three output
//!   components are collapsed to a magnitude.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covstream::EegWindow;
use crate::eig3::{self, EigenCase, Sym3};
use crate::error::{Error, Result};
use crate::linalg::{direct_inverse, dot, singular_values_k3, MaddCounter, Matrix};

/// Lead fields `L(r)` (k×3) on a set of candidate source positions (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct LeadField {
    electrodes: usize,
    points: Vec<[f64; 3]>,
    gains: Vec<Matrix>,
}

impl LeadField {
    pub fn new(electrodes: usize, points: Vec<[f64; 3]>, gains: Vec<Matrix>) -> Result<Self> {
        if electrodes == 0 {
            return Err(Error::InvalidParameter(
                "lead field needs at least one electrode".into(),
            ));
        }
        if points.len() != gains.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} gain matrices",
                points.len(),
                gains.len()
            )));
        }
        for (i, (p, g)) in points.iter().zip(&gains).enumerate() {
            if g.shape() != (electrodes, 3) {
                return Err(Error::DimensionMismatch(format!(
                    "gain matrix {i} is {}x{}, expected {electrodes}x3",
                    g.rows(),
                    g.cols()
                )));
            }
            if !g.is_finite() || !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("lead field"));
            }
        }
        Ok(Self {
            electrodes,
            points,
            gains,
        })
    }

    pub fn electrodes(&self) -> usize {
        self.electrodes
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    pub fn gain(&self, i: usize) -> &Matrix {
        &self.gains[i]
    }

    pub fn gains(&self) -> &[Matrix] {
        &self.gains
    }

    /// Index of the grid point within `tol` meters of `pos`, if any.
    pub fn find_point(&self, pos: [f64; 3], tol: f64) -> Option<usize> {
        self.points.iter().position(|p| {
            let d = [p[0] - pos[0], p[1] - pos[1], p[2] - pos[2]];
            eig3::norm3(&d) <= tol
        })
    }
}

/// Smallest-to-largest singular value ratio a lead field must exceed to be
/// used for orientation estimation.
pub const LEADFIELD_RANK_RTOL: f64 = 1e-10;

/// Eigenvalue gap, relative to `‖A‖_F`, below which the two smallest
/// eigenvalues of `Lᵀ R⁻¹ L` count as repeated.
pub const REPEATED_EIGENVALUE_RTOL: f64 = 1e-10;

/// Checks that `L` has full column rank.
pub fn check_leadfield_rank(l: &Matrix) -> Result<()> {
    if l.cols() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "lead field has {} columns, expected 3",
            l.cols()
        )));
    }
    let sv = singular_values_k3(l);
    if !(sv[2] > LEADFIELD_RANK_RTOL * sv[0]) {
        return Err(Error::DegenerateLeadField(format!(
            "singular values {:.3e}, {:.3e}, {:.3e} (rank < 3)",
            sv[0], sv[1], sv[2]
        )));
    }
    Ok(())
}

/// Unit dipole orientation with canonical sign (largest-magnitude component
/// non-negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Orientation([f64; 3]);

impl Orientation {
    /// Normalizes and sign-canonicalizes `v`.
    pub fn new(v: [f64; 3]) -> Result<Self> {
        let n = eig3::norm3(&v);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "orientation {v:?} cannot be normalized"
            )));
        }
        Ok(Self(eig3::canonical_sign(v.map(|x| x / n))))
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }
}

/// An orientation plus how the eigensolver got there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationEstimate {
    pub orientation: Orientation,
    /// Smallest eigenvalue of `Lᵀ R⁻¹ L` is repeated.
    pub degenerate: bool,
    pub case: Option<EigenCase>,
    pub madds: u64,
}

/// `Lᵀ R⁻¹ L`, symmetrized.
pub fn gram3(l: &Matrix, rinv: &Matrix) -> Result<Sym3> {
    gram3_counted(l, rinv, &mut MaddCounter::new())
}

pub fn gram3_counted(l: &Matrix, rinv: &Matrix, ops: &mut MaddCounter) -> Result<Sym3> {
    let k = l.rows();
    if l.cols() != 3 || rinv.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "lead field {}x{} against inverse covariance {}x{}",
            l.rows(),
            l.cols(),
            rinv.rows(),
            rinv.cols()
        )));
    }
    let m = rinv.matmul_counted(l, ops);
    let mut a = l.transpose().matmul_counted(&m, ops);
    a.symmetrize();
    Sym3::from_matrix(&a)
}

/// Closed-form orientation: smallest eigenvector of `Lᵀ R⁻¹ L`.
pub fn aori_orientation(l: &Matrix, rinv: &Matrix) -> Result<OrientationEstimate> {
    check_leadfield_rank(l)?;
    let mut ops = MaddCounter::new();
    let a = gram3_counted(l, rinv, &mut ops)?;
    let vals = eig3::eigvals_sym3(&a)?;
    let ev = eig3::eigvec_sym3(&a, vals[0])?;
    // The eigenvector solver only sees λ₁; a near-tie with λ₂ leaves the
    // orientation undetermined even when its null space looks rank one.
    let tied = vals[1] - vals[0] <= REPEATED_EIGENVALUE_RTOL * a.frobenius_norm();
    Ok(OrientationEstimate {
        orientation: Orientation::new(ev.vector)?,
        degenerate: ev.degenerate || tied,
        case: Some(ev.case),
        madds: ops.madds + eig3::CLOSED_FORM_MADDS,
    })
}

/// Reference orientation from the iterative Jacobi eigensolver.
pub fn reference_orientation(l: &Matrix, rinv: &Matrix) -> Result<OrientationEstimate> {
    check_leadfield_rank(l)?;
    let mut ops = MaddCounter::new();
    let a = gram3_counted(l, rinv, &mut ops)?;
    let jac = eig3::jacobi_sym3(&a)?;
    Ok(OrientationEstimate {
        orientation: Orientation::new(jac.system.vectors[0])?,
        degenerate: jac.system.degenerate[0],
        case: None,
        madds: ops.madds + jac.rotations as u64 * eig3::JACOBI_ROTATION_MADDS,
    })
}

/// `l = L η`.
pub fn scalar_leadfield(l: &Matrix, eta: &Orientation) -> Vec<f64> {
    l.matvec(&eta.as_array())
}

/// Spatial filter for one grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// Fixed-orientation filter, one output per sample.
    Scalar(Vec<f64>),
    /// `k×3` filter, three outputs per sample.
    Vector(Matrix),
}

/// `w = R⁻¹ l / (lᵀ R⁻¹ l)`.
pub fn scalar_weights(l: &[f64], rinv: &Matrix) -> Result<Vec<f64>> {
    scalar_weights_counted(l, rinv, &mut MaddCounter::new())
}

pub fn scalar_weights_counted(l: &[f64], rinv: &Matrix, ops: &mut MaddCounter) -> Result<Vec<f64>> {
    let k = l.len();
    if rinv.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "lead vector of length {k} against inverse covariance {}x{}",
            rinv.rows(),
            rinv.cols()
        )));
    }
    let rl = rinv.matvec_counted(l, ops);
    let denom = dot(l, &rl);
    ops.add(k as u64 * 2);
    let floor = 1e-13 * dot(l, l) * rinv.frobenius_norm();
    if !(denom > floor) {
        return Err(Error::UnresolvableSource(format!(
            "lᵀR⁻¹l = {denom:e} does not exceed {floor:e}"
        )));
    }
    Ok(rl.into_iter().map(|v| v / denom).collect())
}

/// `W = R⁻¹ L (Lᵀ R⁻¹ L)⁻¹`.
pub fn vector_weights(l: &Matrix, rinv: &Matrix) -> Result<Matrix> {
    vector_weights_counted(l, rinv, &mut MaddCounter::new())
}

pub fn vector_weights_counted(l: &Matrix, rinv: &Matrix, ops: &mut MaddCounter) -> Result<Matrix> {
    let k = l.rows();
    if l.cols() != 3 || rinv.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "lead field {}x{} against inverse covariance {}x{}",
            l.rows(),
            l.cols(),
            rinv.rows(),
            rinv.cols()
        )));
    }
    let m = rinv.matmul_counted(l, ops);
    let a = l.transpose().matmul_counted(&m, ops);
    let a_inv = crate::linalg::direct_inverse_counted(&a, ops)
        .map_err(|e| Error::UnresolvableSource(format!("LᵀR⁻¹L is not invertible: {e}")))?;
    Ok(m.matmul_counted(&a_inv, ops))
}

/// One reconstructed source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEstimate {
    pub point: usize,
    pub orientation: Option<Orientation>,
    /// Source time series; for vector weights the per-sample magnitude of
    /// the three components.
    pub series: Vec<f64>,
    /// `Σ_t |series(t)|`.
    pub activity: f64,
}

/// Applies `w` to every sample of `y`.
pub fn reconstruct(w: &Weights, y: &EegWindow, point: usize) -> Result<SourceEstimate> {
    reconstruct_counted(w, y, point, &mut MaddCounter::new())
}

pub fn reconstruct_counted(w: &Weights, y: &EegWindow, point: usize, ops: &mut MaddCounter) -> Result<SourceEstimate> {
    let k = y.channels();
    let n = y.samples();
    let data = y.data();
    let series = match w {
        Weights::Scalar(w) => {
            if w.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "weights of length {} for {k} channels",
                    w.len()
                )));
            }
            // wᵀY accumulated row by row: k multiply-adds per sample.
            let mut out = vec![0.0; n];
            for (c, &wc) in w.iter().enumerate() {
                for (o, &v) in out.iter_mut().zip(data.row(c)) {
                    *o += wc * v;
                }
            }
            ops.add((k * n) as u64);
            out
        }
        Weights::Vector(wm) => {
            if wm.shape() != (k, 3) {
                return Err(Error::DimensionMismatch(format!(
                    "weights of shape {}x{} for {k} channels",
                    wm.rows(),
                    wm.cols()
                )));
            }
            let mut comps = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            for c in 0..k {
                let row = data.row(c);
                for (j, comp) in comps.iter_mut().enumerate() {
                    let wc = wm[(c, j)];
                    for (o, &v) in comp.iter_mut().zip(row) {
                        *o += wc * v;
                    }
                }
            }
            ops.add((3 * k * n) as u64);
            (0..n)
                .map(|t| (comps[0][t].powi(2) + comps[1][t].powi(2) + comps[2][t].powi(2)).sqrt())
                .collect()
        }
    };
    let activity = series.iter().map(|v| v.abs()).sum();
    Ok(SourceEstimate {
        point,
        orientation: None,
        series,
        activity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    /// Closed-form orientation and scalar weights.
    Accelerated,
    /// Iterative orientation and `k×3` weights.
    Traditional,
}

/// Multiply-add counts of one grid scan, by stage.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanCosts {
    pub orientation: u64,
    pub weights: u64,
    pub reconstruction: u64,
}

impl ScanCosts {
    fn merge(self, o: ScanCosts) -> ScanCosts {
        ScanCosts {
            orientation: self.orientation + o.orientation,
            weights: self.weights + o.weights,
            reconstruction: self.reconstruction + o.reconstruction,
        }
    }
}

/// A grid point that could not be estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPoint {
    pub point: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScan {
    pub mode: ScanMode,
    /// Estimates in ascending point order; flagged points are absent.
    pub estimates: Vec<SourceEstimate>,
    pub flagged: Vec<FlaggedPoint>,
    pub costs: ScanCosts,
}

impl GridScan {
    pub fn estimate(&self, point: usize) -> Option<&SourceEstimate> {
        self.estimates
            .binary_search_by_key(&point, |e| e.point)
            .ok()
            .map(|i| &self.estimates[i])
    }
}

/// Estimates every grid point of `leadfield` from the window `y` given an
/// inverse covariance. Points run in parallel; output order is by point index.
pub fn scan_grid(leadfield: &LeadField, rinv: &Matrix, y: &EegWindow, mode: ScanMode) -> Result<GridScan> {
    let k = leadfield.electrodes();
    if y.channels() != k || rinv.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "lead field has {k} electrodes, data has {} channels, inverse is {}x{}",
            y.channels(),
            rinv.rows(),
            rinv.cols()
        )));
    }

    let results: Vec<(std::result::Result<SourceEstimate, FlaggedPoint>, ScanCosts)> = (0..leadfield.len())
        .into_par_iter()
        .map(|p| {
            let mut costs = ScanCosts::default();
            let res = estimate_point(leadfield.gain(p), rinv, y, p, mode, &mut costs).map_err(|e| FlaggedPoint {
                point: p,
                reason: e.to_string(),
            });
            (res, costs)
        })
        .collect();

    let mut scan = GridScan {
        mode,
        estimates: Vec::with_capacity(results.len()),
        flagged: Vec::new(),
        costs: ScanCosts::default(),
    };
    for (res, costs) in results {
        scan.costs = scan.costs.merge(costs);
        match res {
            Ok(est) => scan.estimates.push(est),
            Err(flag) => scan.flagged.push(flag),
        }
    }
    Ok(scan)
}

fn estimate_point(
    l: &Matrix,
    rinv: &Matrix,
    y: &EegWindow,
    point: usize,
    mode: ScanMode,
    costs: &mut ScanCosts,
) -> Result<SourceEstimate> {
    let orient = match mode {
        ScanMode::Accelerated => aori_orientation(l, rinv)?,
        ScanMode::Traditional => reference_orientation(l, rinv)?,
    };
    costs.orientation += orient.madds;
    if orient.degenerate {
        return Err(Error::UnresolvableSource(
            "smallest eigenvalue of LᵀR⁻¹L is repeated; orientation undefined".into(),
        ));
    }
    let mut w_ops = MaddCounter::new();
    let weights = match mode {
        ScanMode::Accelerated => {
            let lvec = l.matvec_counted(&orient.orientation.as_array(), &mut w_ops);
            Weights::Scalar(scalar_weights_counted(&lvec, rinv, &mut w_ops)?)
        }
        ScanMode::Traditional => Weights::Vector(vector_weights_counted(l, rinv, &mut w_ops)?),
    };
    costs.weights += w_ops.madds;
    let mut r_ops = MaddCounter::new();
    let mut est = reconstruct_counted(&weights, y, point, &mut r_ops)?;
    costs.reconstruction += r_ops.madds;
    est.orientation = Some(orient.orientation);
    Ok(est)
}

/// Point indices ordered by descending activity; ties go to the lower index.
pub fn rank_sources(estimates: &[SourceEstimate]) -> Vec<usize> {
    let mut order: Vec<&SourceEstimate> = estimates.iter().collect();
    order.sort_by(|a, b| b.activity.total_cmp(&a.activity).then(a.point.cmp(&b.point)));
    order.into_iter().map(|e| e.point).collect()
}

/// Convenience used by tests and the CLI: direct inverse of a covariance.
pub fn inverse_covariance(c: &Matrix) -> Result<Matrix> {
    direct_inverse(c)
}
