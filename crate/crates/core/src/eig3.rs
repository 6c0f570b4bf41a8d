//! Closed-form eigendecomposition of 3×3 real symmetric matrices.
//!
//! Eigenvalues come from the trigonometric solution of the characteristic
//! cubic of the trace-shifted matrix. Eigenvectors are built from the
//! analytic case tables: with `B = A − λI`, every non-trivial case pins one
//! component of the eigenvector to 1, takes a second component as a ratio of
//! 2×2 subdeterminants of `B`, and solves the remaining component from one
//! row of `B v = 0`. Structurally sparse matrices (diagonal, or with one
//! coordinate decoupled) are handled by dedicated closed forms first.
//!
//! A cyclic Jacobi solver ([`jacobi_sym3`]) lives here as well; it is the
//! iterative reference used by the traditional orientation path.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// The six unique entries of a symmetric 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym3 {
    pub a11: f64,
    pub a22: f64,
    pub a33: f64,
    pub a12: f64,
    pub a13: f64,
    pub a23: f64,
}

impl Sym3 {
    pub fn new(a11: f64, a22: f64, a33: f64, a12: f64, a13: f64, a23: f64) -> Result<Self> {
        let s = Self {
            a11,
            a22,
            a33,
            a12,
            a13,
            a23,
        };
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFinite("symmetric 3x3 matrix"))
        }
    }

    pub fn diag(a11: f64, a22: f64, a33: f64) -> Self {
        Self {
            a11,
            a22,
            a33,
            a12: 0.0,
            a13: 0.0,
            a23: 0.0,
        }
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    /// Reads a 3×3 matrix, averaging mirrored off-diagonal entries.
    pub fn from_rows(m: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[1][2] + m[2][1]),
        )
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.shape() != (3, 3) {
            return Err(Error::DimensionMismatch(format!(
                "expected 3x3, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Self::from_rows([
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ])
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        [
            [self.a11, self.a12, self.a13],
            [self.a12, self.a22, self.a23],
            [self.a13, self.a23, self.a33],
        ]
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a22, self.a33, self.a12, self.a13, self.a23]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn is_diagonal(&self) -> bool {
        self.a12 == 0.0 && self.a13 == 0.0 && self.a23 == 0.0
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22 + self.a33
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.a11 * self.a11
            + self.a22 * self.a22
            + self.a33 * self.a33
            + 2.0 * (self.a12 * self.a12 + self.a13 * self.a13 + self.a23 * self.a23))
            .sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            a11: c * self.a11,
            a22: c * self.a22,
            a33: c * self.a33,
            a12: c * self.a12,
            a13: c * self.a13,
            a23: c * self.a23,
        }
    }

    /// `A − λI`.
    pub fn shifted(&self, lambda: f64) -> Self {
        Self {
            a11: self.a11 - lambda,
            a22: self.a22 - lambda,
            a33: self.a33 - lambda,
            ..*self
        }
    }

    pub fn mul_vec(&self, v: &[f64; 3]) -> [f64; 3] {
        let r = self.to_rows();
        [dot3(&r[0], v), dot3(&r[1], v), dot3(&r[2], v)]
    }

    pub fn determinant(&self) -> f64 {
        let Sym3 {
            a11,
            a22,
            a33,
            a12,
            a13,
            a23,
        } = *self;
        a11 * (a22 * a33 - a23 * a23) - a12 * (a12 * a33 - a23 * a13) + a13 * (a12 * a23 - a22 * a13)
    }

    /// `‖A v − λ v‖₂`.
    pub fn residual(&self, lambda: f64, v: &[f64; 3]) -> f64 {
        let av = self.mul_vec(v);
        norm3(&[av[0] - lambda * v[0], av[1] - lambda * v[1], av[2] - lambda * v[2]])
    }
}

/// Which closed form produced an eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenCase {
    /// All off-diagonal entries are zero; the vector is a standard basis vector.
    Diagonal,
    /// Coordinate `axis` is decoupled (its two off-diagonal entries are zero);
    /// the vector is either that basis vector or lies in the remaining 2×2 block.
    Decoupled { axis: usize },
    /// One of the general analytic cases, numbered in listed order
    /// (0–2: first table cases 3.1–3.3, 3–7: continuation table).
    General { case: u8 },
    /// No general case was well conditioned; the eigenvector was taken as the
    /// largest cross product of two rows of `A − λI`.
    CrossProduct,
    /// `λ` is nearly repeated; the vector was solved in the plane orthogonal
    /// to the eigenvector of the isolated eigenvalue.
    Deflated,
    /// `A − λI` has rank ≤ 1 (repeated eigenvalue); any vector of the
    /// eigenspace is valid and a deterministic one was picked.
    RepeatedEigenvalue,
}

/// A unit eigenvector together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenVector {
    pub vector: [f64; 3],
    pub case: EigenCase,
    /// Set when the eigenvalue is (numerically) repeated, so the returned
    /// direction is one arbitrary member of a higher-dimensional eigenspace.
    pub degenerate: bool,
}

/// Eigenvalues ascending, with `vectors[i]` paired to `values[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem3 {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
    pub degenerate: [bool; 3],
}

/// Relative threshold on 2×2 subdeterminants of `A − λI` below which the
/// shifted matrix is treated as rank ≤ 1.
pub const RANK_RTOL: f64 = 1e-12;

/// Relative threshold on a general-case guard (`subdeterminant × divisor`)
/// below which that case is not trusted.
pub const GUARD_RTOL: f64 = 1e-6;

/// Approximate multiply-add count of one closed-form smallest-eigenvector
/// evaluation on the general path (eigenvalues, subdeterminants, guards,
/// formula, normalization). Used for cost reporting only.
pub const CLOSED_FORM_MADDS: u64 = 100;

/// Approximate multiply-add count of one Jacobi rotation on a 3×3 matrix,
/// including accumulation into the eigenvector matrix.
pub const JACOBI_ROTATION_MADDS: u64 = 40;

/// The three eigenvalues of `a`, ascending.
pub fn eigvals_sym3(a: &Sym3) -> Result<[f64; 3]> {
    if !a.is_finite() {
        return Err(Error::NonFinite("symmetric 3x3 matrix"));
    }
    let q = a.trace() / 3.0;
    let off = a.a12 * a.a12 + a.a13 * a.a13 + a.a23 * a.a23;
    let (d1, d2, d3) = (a.a11 - q, a.a22 - q, a.a33 - q);
    let p = ((d1 * d1 + d2 * d2 + d3 * d3 + 2.0 * off) / 6.0).sqrt();
    if p == 0.0 {
        return Ok([q, q, q]);
    }
    let b = Sym3 {
        a11: d1 / p,
        a22: d2 / p,
        a33: d3 / p,
        a12: a.a12 / p,
        a13: a.a13 / p,
        a23: a.a23 / p,
    };
    let r = (0.5 * b.determinant()).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let largest = q + 2.0 * p * phi.cos();
    let smallest = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let middle = 3.0 * q - largest - smallest;
    let mut vals = [smallest, middle, largest];
    vals.sort_by(f64::total_cmp);
    if (vals[1] - vals[0]).min(vals[2] - vals[1]) < cluster_threshold(a, vals[2] - vals[0]) {
        vals = deflated_eigvals(a, q, vals)?;
    }
    Ok(vals)
}

/// Gaps below `CLUSTER_RTOL · sqrt(‖A‖_F · spread)` are resolved by
/// deflation. The trigonometric roots carry an error of roughly
/// `eps · ‖A‖ · spread / gap`, which the eigenvector then amplifies by
/// `1 / gap`.
const CLUSTER_RTOL: f64 = 1e-2;

fn cluster_threshold(a: &Sym3, spread: f64) -> f64 {
    CLUSTER_RTOL * (a.frobenius_norm() * spread).sqrt()
}

/// Near a double root the trigonometric form is only accurate to about
/// `sqrt(eps)`. The isolated root is still accurate, so take its eigenvector
/// and solve the remaining 2×2 problem in the orthogonal plane.
fn deflated_eigvals(a: &Sym3, q: f64, vals: [f64; 3]) -> Result<[f64; 3]> {
    let shifted = a.shifted(q);
    let lower_pair = vals[1] - vals[0] < vals[2] - vals[1];
    let isolated = if lower_pair { vals[2] } else { vals[0] };
    let plane = Plane::orthogonal_to(&shifted, isolated - q)?;
    let (lo, hi) = plane.eigvals();
    let mut out = [lo + q, hi + q, isolated];
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// `A` restricted to the plane orthogonal to the eigenvector of an isolated
/// eigenvalue, in the orthonormal basis `u1, u2`.
struct Plane {
    u1: [f64; 3],
    u2: [f64; 3],
    m11: f64,
    m22: f64,
    m12: f64,
}

impl Plane {
    fn orthogonal_to(a: &Sym3, isolated: f64) -> Result<Self> {
        let v = eigvec_dispatch(a, isolated, false)?.vector;
        let mut e = [0.0; 3];
        e[argmin(&v.map(f64::abs))] = 1.0;
        let u1 = normalize3(cross3(&v, &e));
        let u2 = cross3(&v, &u1);
        let (au1, au2) = (a.mul_vec(&u1), a.mul_vec(&u2));
        Ok(Self {
            u1,
            u2,
            m11: dot3(&u1, &au1),
            m22: dot3(&u2, &au2),
            m12: 0.5 * (dot3(&u1, &au2) + dot3(&u2, &au1)),
        })
    }

    fn eigvals(&self) -> (f64, f64) {
        let mean = 0.5 * (self.m11 + self.m22);
        let radius = (0.5 * (self.m11 - self.m22)).hypot(self.m12);
        (mean - radius, mean + radius)
    }

    /// Eigenvector of the 2×2 block whose eigenvalue is nearest `lambda`,
    /// mapped back to 3-space.
    fn eigvec(&self, lambda: f64) -> [f64; 3] {
        let theta = 0.5 * (2.0 * self.m12).atan2(self.m11 - self.m22);
        let (s, c) = theta.sin_cos();
        let (lo, hi) = self.eigvals();
        let (x, y) = if (lambda - hi).abs() <= (lambda - lo).abs() {
            (c, s)
        } else {
            (-s, c)
        };
        [
            x * self.u1[0] + y * self.u2[0],
            x * self.u1[1] + y * self.u2[1],
            x * self.u1[2] + y * self.u2[2],
        ]
    }
}

/// Unit eigenvector of `a` for eigenvalue `lambda`, canonical sign.
pub fn eigvec_sym3(a: &Sym3, lambda: f64) -> Result<EigenVector> {
    eigvec_dispatch(a, lambda, true)
}

fn eigvec_dispatch(a: &Sym3, lambda: f64, deflate: bool) -> Result<EigenVector> {
    if !a.is_finite() || !lambda.is_finite() {
        return Err(Error::NonFinite("eigenvector input"));
    }
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Ok(EigenVector {
            vector: [1.0, 0.0, 0.0],
            case: EigenCase::RepeatedEigenvalue,
            degenerate: true,
        });
    }

    let b = a.shifted(lambda);
    let rows = b.to_rows();
    let crosses = [
        cross3(&rows[0], &rows[1]),
        cross3(&rows[0], &rows[2]),
        cross3(&rows[1], &rows[2]),
    ];
    let cross_norms = crosses.map(|c| norm3(&c));
    let largest_minor = crosses
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let b_norm = b.frobenius_norm();
    let degenerate = largest_minor <= RANK_RTOL * scale * b_norm;

    if degenerate {
        let vector = rank_one_null_vector(&rows, scale);
        return Ok(EigenVector {
            vector: canonical_sign(vector),
            case: EigenCase::RepeatedEigenvalue,
            degenerate: true,
        });
    }

    if a.is_diagonal() {
        let diag = [b.a11.abs(), b.a22.abs(), b.a33.abs()];
        let idx = argmin(&diag);
        let mut vector = [0.0; 3];
        vector[idx] = 1.0;
        return Ok(EigenVector {
            vector,
            case: EigenCase::Diagonal,
            degenerate: false,
        });
    }

    if let Some(axis) = decoupled_axis(a) {
        let vector = decoupled_vector(&b, axis);
        return Ok(EigenVector {
            vector: canonical_sign(vector),
            case: EigenCase::Decoupled { axis },
            degenerate: false,
        });
    }

    // Within a tight cluster every 2×2 subdeterminant is of the order of the
    // gap, so the table formulas lose half the digits. Deflate instead.
    let vals = if deflate { eigvals_sym3(a)? } else { [lambda; 3] };
    let limit = cluster_threshold(a, vals[2] - vals[0]);
    let nearest = argmin(&vals.map(|v| (v - lambda).abs()));
    let lower_pair = vals[1] - vals[0] < vals[2] - vals[1];
    let (pair_gap, isolated_idx) = if lower_pair {
        (vals[1] - vals[0], 2)
    } else {
        (vals[2] - vals[1], 0)
    };
    if deflate && nearest != isolated_idx && pair_gap < limit {
        let isolated = vals[isolated_idx];
        let plane = Plane::orthogonal_to(a, isolated)?;
        return Ok(EigenVector {
            vector: canonical_sign(normalize3(plane.eigvec(lambda))),
            case: EigenCase::Deflated,
            degenerate: false,
        });
    }

    // General cases: pick the best-conditioned one (largest guard).
    let mut best: Option<(f64, u8)> = None;
    for (idx, case) in GENERAL_CASES.iter().enumerate() {
        let guard = case.guard(&rows, &crosses);
        if best.is_none_or(|(g, _)| guard > g) {
            best = Some((guard, idx as u8));
        }
    }
    let (guard, idx) = best.expect("case list is non-empty");
    if guard > GUARD_RTOL * b_norm * b_norm * b_norm {
        let vector = GENERAL_CASES[idx as usize].solve(&rows, &crosses);
        return Ok(EigenVector {
            vector: canonical_sign(normalize3(vector)),
            case: EigenCase::General { case: idx },
            degenerate: false,
        });
    }

    let widest = argmax(&cross_norms);
    Ok(EigenVector {
        vector: canonical_sign(normalize3(crosses[widest])),
        case: EigenCase::CrossProduct,
        degenerate: false,
    })
}

/// Eigenvector of the smallest eigenvalue.
pub fn smallest_eigvec(a: &Sym3) -> Result<EigenVector> {
    let vals = eigvals_sym3(a)?;
    eigvec_sym3(a, vals[0])
}

/// Full closed-form eigensystem. Repeated eigenvalues get an orthonormal
/// basis of their eigenspace.
pub fn eigen_sym3(a: &Sym3) -> Result<EigenSystem3> {
    let values = eigvals_sym3(a)?;
    let mut vecs = [
        eigvec_sym3(a, values[0])?,
        eigvec_sym3(a, values[1])?,
        eigvec_sym3(a, values[2])?,
    ];
    let flags = [vecs[0].degenerate, vecs[1].degenerate, vecs[2].degenerate];
    match flags {
        [true, true, true] => {
            vecs[0].vector = [1.0, 0.0, 0.0];
            vecs[1].vector = [0.0, 1.0, 0.0];
            vecs[2].vector = [0.0, 0.0, 1.0];
        }
        [true, true, false] => {
            vecs[1].vector = canonical_sign(normalize3(cross3(&vecs[2].vector, &vecs[0].vector)));
        }
        [false, true, true] => {
            vecs[2].vector = canonical_sign(normalize3(cross3(&vecs[0].vector, &vecs[1].vector)));
        }
        _ => {}
    }
    Ok(EigenSystem3 {
        values,
        vectors: [vecs[0].vector, vecs[1].vector, vecs[2].vector],
        degenerate: flags,
    })
}

/// Outcome of the cyclic Jacobi solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiResult {
    pub system: EigenSystem3,
    pub rotations: u32,
}

/// Cyclic Jacobi eigensolver. Iterates until the off-diagonal mass is at
/// rounding level; eigenvectors are sign-canonicalized like the closed form.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_sym3(a: &Sym3) -> Result<JacobiResult> {
    if !a.is_finite() {
        return Err(Error::NonFinite("symmetric 3x3 matrix"));
    }
    let mut m = a.to_rows();
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = a.frobenius_norm();
    let mut rotations = 0;

    for _sweep in 0..64 {
        let off = (m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2]).sqrt();
        if off <= f64::EPSILON * 1e-2 * scale || off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = m[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (mkp, mkq) = (m[k][p], m[k][q]);
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let (mpk, mqk) = (m[p][k], m[q][k]);
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
            rotations += 1;
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let values = order.map(|i| m[i][i]);
    let vectors = order.map(|i| canonical_sign(normalize3([v[0][i], v[1][i], v[2][i]])));
    let gap_tol = 1e-10 * scale;
    let degenerate = [
        (values[1] - values[0]) <= gap_tol,
        (values[1] - values[0]) <= gap_tol || (values[2] - values[1]) <= gap_tol,
        (values[2] - values[1]) <= gap_tol,
    ];
    Ok(JacobiResult {
        system: EigenSystem3 {
            values,
            vectors,
            degenerate,
        },
        rotations,
    })
}

/// One general case: component `pinned` is set to 1, component `ratio` is
/// `cross[ratio] / cross[pinned]` for the cross product of rows `pair`, and
/// component `solved` comes from row `row` of `B v = 0`.
struct GeneralCase {
    pinned: usize,
    ratio: usize,
    solved: usize,
    pair: usize,
    row: usize,
}

/// Listed order of the analytic cases. `pair` indexes the cross products
/// `[r1×r2, r1×r3, r2×r3]`.
const GENERAL_CASES: [GeneralCase; 8] = [
    // z = 1, Q from rows 1,2; P from row 3.
    GeneralCase {
        pinned: 2,
        ratio: 1,
        solved: 0,
        pair: 0,
        row: 2,
    },
    // z = 1, Q from rows 1,3; P from row 2.
    GeneralCase {
        pinned: 2,
        ratio: 1,
        solved: 0,
        pair: 1,
        row: 1,
    },
    // z = 1, Q from rows 2,3; P from row 1.
    GeneralCase {
        pinned: 2,
        ratio: 1,
        solved: 0,
        pair: 2,
        row: 0,
    },
    // z = 1, P from rows 1,2; Q from row 3.
    GeneralCase {
        pinned: 2,
        ratio: 0,
        solved: 1,
        pair: 0,
        row: 2,
    },
    // z = 1, P from rows 1,3; Q from row 2.
    GeneralCase {
        pinned: 2,
        ratio: 0,
        solved: 1,
        pair: 1,
        row: 1,
    },
    // z = 1, P from rows 2,3; Q from row 1.
    GeneralCase {
        pinned: 2,
        ratio: 0,
        solved: 1,
        pair: 2,
        row: 0,
    },
    // y = 1, P from rows 1,2; R from row 3.
    GeneralCase {
        pinned: 1,
        ratio: 0,
        solved: 2,
        pair: 0,
        row: 2,
    },
    // y = 1, P from rows 1,3; R from row 2.
    GeneralCase {
        pinned: 1,
        ratio: 0,
        solved: 2,
        pair: 1,
        row: 1,
    },
];

impl GeneralCase {
    fn guard(&self, rows: &[[f64; 3]; 3], crosses: &[[f64; 3]; 3]) -> f64 {
        (crosses[self.pair][self.pinned] * rows[self.row][self.solved]).abs()
    }

    fn solve(&self, rows: &[[f64; 3]; 3], crosses: &[[f64; 3]; 3]) -> [f64; 3] {
        let c = &crosses[self.pair];
        let r = &rows[self.row];
        let mut v = [0.0; 3];
        v[self.pinned] = 1.0;
        v[self.ratio] = c[self.ratio] / c[self.pinned];
        v[self.solved] = -(r[self.pinned] + r[self.ratio] * v[self.ratio]) / r[self.solved];
        v
    }
}

/// Axis whose two off-diagonal entries are exactly zero while the remaining
/// 2×2 block is coupled.
fn decoupled_axis(a: &Sym3) -> Option<usize> {
    if a.a12 == 0.0 && a.a13 == 0.0 {
        Some(0)
    } else if a.a12 == 0.0 && a.a23 == 0.0 {
        Some(1)
    } else if a.a13 == 0.0 && a.a23 == 0.0 {
        Some(2)
    } else {
        None
    }
}

fn decoupled_vector(b: &Sym3, axis: usize) -> [f64; 3] {
    let rows = b.to_rows();
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (bii, bij, bjj) = (rows[i][i], rows[i][j], rows[j][j]);
    // Null vector of the 2×2 block from either of its rows; keep the longer.
    let from_first = [-bij, bii];
    let from_second = [-bjj, bij];
    let block = if from_first[0].hypot(from_first[1]) >= from_second[0].hypot(from_second[1]) {
        from_first
    } else {
        from_second
    };
    let block_norm = block[0].hypot(block[1]);
    let mut in_block = [0.0; 3];
    let block_residual = if block_norm > 0.0 {
        in_block[i] = block[0] / block_norm;
        in_block[j] = block[1] / block_norm;
        norm3(&b.mul_vec(&in_block))
    } else {
        f64::INFINITY
    };
    let axis_residual = rows[axis][axis].abs();
    if axis_residual <= block_residual {
        let mut v = [0.0; 3];
        v[axis] = 1.0;
        v
    } else {
        in_block
    }
}

/// Null vector of a matrix of rank ≤ 1 given by its rows.
fn rank_one_null_vector(rows: &[[f64; 3]; 3], scale: f64) -> [f64; 3] {
    let norms = rows.map(|r| norm3(&r));
    let dominant = argmax(&norms);
    if norms[dominant] <= RANK_RTOL * scale {
        return [1.0, 0.0, 0.0];
    }
    let r = rows[dominant];
    let mut basis = [0.0; 3];
    basis[argmin(&r.map(f64::abs))] = 1.0;
    normalize3(cross3(&r, &basis))
}

/// Flips `v` so its largest-magnitude component is non-negative (first such
/// component on ties).
pub fn canonical_sign(v: [f64; 3]) -> [f64; 3] {
    let idx = argmax(&v.map(f64::abs));
    if v[idx] < 0.0 {
        v.map(|x| -x)
    } else {
        v
    }
}

#[inline]
pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3(v: &[f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

pub fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = norm3(&v);
    v.map(|x| x / n)
}

/// First index of the maximum.
fn argmax(v: &[f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// First index of the minimum.
fn argmin(v: &[f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn assert_vec_close(a: [f64; 3], b: [f64; 3], tol: f64) {
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    fn coupled_block() -> Sym3 {
        Sym3::from_rows([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]]).unwrap()
    }

    #[test]
    fn eigenvalues_of_identity() {
        assert_eq!(eigvals_sym3(&Sym3::identity()).unwrap(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn eigenvalues_of_diagonal_are_sorted() {
        let vals = eigvals_sym3(&Sym3::diag(3.0, 1.0, 2.0)).unwrap();
        assert_vec_close(vals, [1.0, 2.0, 3.0], 1e-14);
    }

    #[test]
    fn eigenvalues_of_coupled_block() {
        // (2-λ)² - 1 = 0 gives 1 and 3; the decoupled entry gives 5.
        let vals = eigvals_sym3(&coupled_block()).unwrap();
        assert_vec_close(vals, [1.0, 3.0, 5.0], 1e-14);
        let jac = jacobi_sym3(&coupled_block()).unwrap().system.values;
        assert_vec_close(vals, jac, 1e-13);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(Sym3::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        let bad = Sym3 {
            a11: f64::INFINITY,
            ..Sym3::identity()
        };
        assert!(eigvals_sym3(&bad).is_err());
        assert!(eigvec_sym3(&Sym3::identity(), f64::NAN).is_err());
    }

    #[test]
    fn diagonal_case_returns_basis_vector() {
        let ev = eigvec_sym3(&Sym3::diag(1.0, 2.0, 3.0), 1.0).unwrap();
        assert_eq!(ev.vector, [1.0, 0.0, 0.0]);
        assert_eq!(ev.case, EigenCase::Diagonal);
        assert!(!ev.degenerate);
    }

    #[test]
    fn coupled_block_smallest_vector() {
        let ev = eigvec_sym3(&coupled_block(), 1.0).unwrap();
        assert_vec_close(ev.vector, [FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0], 1e-15);
        assert_eq!(ev.case, EigenCase::Decoupled { axis: 2 });
        let sm = smallest_eigvec(&coupled_block()).unwrap();
        assert_vec_close(sm.vector, [FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0], 1e-12);
    }

    #[test]
    fn decoupled_axis_vector_is_found() {
        let ev = eigvec_sym3(&coupled_block(), 5.0).unwrap();
        assert_eq!(ev.vector, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_is_flagged_degenerate() {
        let ev = eigvec_sym3(&Sym3::identity(), 1.0).unwrap();
        assert_eq!(ev.vector, [1.0, 0.0, 0.0]);
        assert!(ev.degenerate);
    }

    #[test]
    fn smallest_of_diagonals() {
        assert_eq!(
            smallest_eigvec(&Sym3::diag(1.0, 4.0, 9.0)).unwrap().vector,
            [1.0, 0.0, 0.0]
        );
        assert_eq!(
            smallest_eigvec(&Sym3::diag(9.0, 4.0, 1.0)).unwrap().vector,
            [0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn general_case_residual() {
        let a = Sym3::from_rows([[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]]).unwrap();
        let vals = eigvals_sym3(&a).unwrap();
        for &l in &vals {
            let ev = eigvec_sym3(&a, l).unwrap();
            assert!(matches!(ev.case, EigenCase::General { .. }));
            assert!((norm3(&ev.vector) - 1.0).abs() < 1e-14);
            assert!(a.residual(l, &ev.vector) < 1e-12);
        }
    }

    #[test]
    fn repeated_pair_gets_orthonormal_basis() {
        // Rotated diag(1, 1, 4).
        let u = normalize3([1.0, 2.0, 2.0]);
        let mut rows = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[i][j] = if i == j { 1.0 } else { 0.0 } + 3.0 * u[i] * u[j];
            }
        }
        let a = Sym3::from_rows(rows).unwrap();
        let sys = eigen_sym3(&a).unwrap();
        assert!(sys.degenerate[0] && sys.degenerate[1] && !sys.degenerate[2]);
        for i in 0..3 {
            assert!(a.residual(sys.values[i], &sys.vectors[i]) < 1e-12);
        }
        assert!(dot3(&sys.vectors[0], &sys.vectors[1]).abs() < 1e-12);
        assert!(dot3(&sys.vectors[0], &sys.vectors[2]).abs() < 1e-12);
    }

    #[test]
    fn canonical_sign_rules() {
        assert_eq!(canonical_sign([-0.6, 0.8, 0.0]), [-0.6, 0.8, 0.0]);
        assert_eq!(canonical_sign([0.6, -0.8, 0.0]), [-0.6, 0.8, 0.0]);
        // Tie: first largest-magnitude component decides.
        assert_eq!(canonical_sign([-0.5, 0.5, 0.0]), [0.5, -0.5, 0.0]);
    }

    #[test]
    fn zero_matrix_is_fully_degenerate() {
        let z = Sym3::diag(0.0, 0.0, 0.0);
        assert_eq!(eigvals_sym3(&z).unwrap(), [0.0, 0.0, 0.0]);
        let ev = smallest_eigvec(&z).unwrap();
        assert!(ev.degenerate);
        assert_eq!(ev.vector, [1.0, 0.0, 0.0]);
    }
}
