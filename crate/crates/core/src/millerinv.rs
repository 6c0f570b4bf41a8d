//! Recursive inverse maintenance with rank-one updates.
//!
//! For `C_{j+1} = C_j + E_j` with `rank(E_j) = 1`,
//!
//! ```text
//! C_{j+1}⁻¹ = C_j⁻¹ − v_j C_j⁻¹ E_j C_j⁻¹,    v_j = 1 / (1 + tr(C_j⁻¹ E_j))
//! ```
//!
//! and a general update `H = E_1 + … + E_r` is folded one term at a time, so
//! `(G + H)⁻¹` is reached without a fresh inversion. Two decompositions are
//! provided: keeping one column of `H` per term (works for any `H`), and one
//! outer product per added or evicted sample (the natural factorization of a
//! sliding-window delta, `r = 2·cy` terms instead of `k`).

use crate::covstream::{CovarianceState, SlideDelta};
use crate::error::{Error, Result};
use crate::linalg::{direct_inverse_counted, norm2, MaddCounter, Matrix};

/// Relative tolerance on `|1 + tr(C⁻¹E)|`.
pub const PIVOT_RTOL: f64 = 1e-10;

/// One rank-one summand of an update.
#[derive(Debug, Clone, PartialEq)]
pub enum RankOneTerm {
    /// `E = h e_iᵀ`: column `index` of `H`, every other entry zero.
    Column { index: usize, values: Vec<f64> },
    /// `E = scale · x xᵀ`.
    Outer { scale: f64, vector: Vec<f64> },
}

impl RankOneTerm {
    pub fn dim(&self) -> usize {
        match self {
            RankOneTerm::Column { values, .. } => values.len(),
            RankOneTerm::Outer { vector, .. } => vector.len(),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let k = self.dim();
        let mut m = Matrix::zeros(k, k);
        match self {
            RankOneTerm::Column { index, values } => {
                for (r, &v) in values.iter().enumerate() {
                    m[(r, *index)] = v;
                }
            }
            RankOneTerm::Outer { scale, vector } => {
                m.rank_one_update(*scale, vector, vector, &mut MaddCounter::new());
            }
        }
        m
    }
}

/// Splits `H` into one term per nonzero column.
pub fn rank_one_terms(h: &Matrix) -> Vec<RankOneTerm> {
    (0..h.cols())
        .filter_map(|c| {
            let values = h.column(c);
            values
                .iter()
                .any(|&v| v != 0.0)
                .then_some(RankOneTerm::Column { index: c, values })
        })
        .collect()
}

/// Outer-product terms of a slide delta scaled by `scale`: added samples
/// first, then evicted ones.
pub fn slide_terms(delta: &SlideDelta, scale: f64) -> Vec<RankOneTerm> {
    let adds = delta.added.iter().map(|x| RankOneTerm::Outer {
        scale,
        vector: x.clone(),
    });
    let evicts = delta.evicted.iter().map(|x| RankOneTerm::Outer {
        scale: -scale,
        vector: x.clone(),
    });
    adds.chain(evicts)
        .filter(|t| match t {
            RankOneTerm::Outer { vector, .. } => vector.iter().any(|&v| v != 0.0),
            RankOneTerm::Column { .. } => true,
        })
        .collect()
}

/// `(C + E)⁻¹` from `C⁻¹`.
pub fn miller_step(cinv: &Matrix, term: &RankOneTerm) -> Result<Matrix> {
    let mut out = cinv.clone();
    miller_step_in_place(&mut out, term, 0, &mut MaddCounter::new())?;
    Ok(out)
}

/// In-place form of [`miller_step`]; `term_index` is only used for error
/// reporting. `Outer` terms assume `cinv` is symmetric and keep it so.
pub fn miller_step_in_place(
    cinv: &mut Matrix,
    term: &RankOneTerm,
    term_index: usize,
    ops: &mut MaddCounter,
) -> Result<()> {
    let k = cinv.rows();
    if !cinv.is_square() || term.dim() != k {
        return Err(Error::DimensionMismatch(format!(
            "rank-one term of size {} against a {}x{} inverse",
            term.dim(),
            cinv.rows(),
            cinv.cols()
        )));
    }
    match term {
        RankOneTerm::Column { index, values } => {
            if *index >= k {
                return Err(Error::DimensionMismatch(format!(
                    "column index {index} out of range for k = {k}"
                )));
            }
            // C⁻¹E C⁻¹ = (C⁻¹h)(row `index` of C⁻¹); tr(C⁻¹E) = (C⁻¹h)_index.
            let ch = cinv.matvec_counted(values, ops);
            let trace = ch[*index];
            let pivot = 1.0 + trace;
            check_pivot(pivot, norm2(&ch), term_index)?;
            let row = cinv.row(*index).to_vec();
            cinv.rank_one_update(-1.0 / pivot, &ch, &row, ops);
        }
        RankOneTerm::Outer { scale, vector } => {
            let y = cinv.matvec_counted(vector, ops);
            let quad: f64 = vector.iter().zip(&y).map(|(a, b)| a * b).sum();
            ops.add(k as u64);
            let pivot = 1.0 + scale * quad;
            check_pivot(pivot, scale.abs() * norm2(&y) * norm2(vector), term_index)?;
            let coeff = -scale / pivot;
            for i in 0..k {
                let ci = coeff * y[i];
                for j in i..k {
                    let v = cinv[(i, j)] + ci * y[j];
                    cinv[(i, j)] = v;
                    cinv[(j, i)] = v;
                }
            }
            ops.add((k * (k + 1) / 2 + k) as u64);
        }
    }
    Ok(())
}

fn check_pivot(pivot: f64, correction_norm: f64, term: usize) -> Result<()> {
    let threshold = PIVOT_RTOL * (1.0 + correction_norm);
    if pivot.abs() <= threshold || !pivot.is_finite() {
        return Err(Error::SingularUpdate {
            term,
            pivot: pivot.abs(),
            threshold,
        });
    }
    Ok(())
}

/// Folds [`miller_step`] over a sequence of terms.
pub fn apply_terms(cinv: &Matrix, terms: &[RankOneTerm], ops: &mut MaddCounter) -> Result<Matrix> {
    let mut out = cinv.clone();
    for (i, t) in terms.iter().enumerate() {
        miller_step_in_place(&mut out, t, i, ops)?;
    }
    Ok(out)
}

/// `(G + H)⁻¹` from `G⁻¹` via the column decomposition of `H`.
pub fn apply_sum(cinv: &Matrix, h: &Matrix) -> Result<Matrix> {
    apply_sum_counted(cinv, h, &mut MaddCounter::new())
}

pub fn apply_sum_counted(cinv: &Matrix, h: &Matrix, ops: &mut MaddCounter) -> Result<Matrix> {
    if h.shape() != cinv.shape() {
        return Err(Error::DimensionMismatch(format!(
            "update is {}x{}, inverse is {}x{}",
            h.rows(),
            h.cols(),
            cinv.rows(),
            cinv.cols()
        )));
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("update matrix"));
    }
    apply_terms(cinv, &rank_one_terms(h), ops)
}

/// How a slide delta is split into rank-one terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decomposition {
    /// One `±x xᵀ` term per added/evicted sample (`2·cy` terms).
    #[default]
    Samples,
    /// One term per nonzero column of the dense delta (up to `k` terms).
    Columns,
}

/// What happened during one inverse update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseUpdate {
    Recursive,
    /// A pivot broke down and the inverse was recomputed directly.
    Fallback,
    /// The recursive update succeeded and a scheduled re-inversion followed.
    Refreshed,
}

/// Brings the maintained inverse up to date after one [`CovarianceState::slide`].
pub fn recursive_inverse_slide(state: &mut CovarianceState, delta: &SlideDelta) -> Result<InverseUpdate> {
    recursive_inverse_slide_with(state, delta, Decomposition::Samples, &mut MaddCounter::new())
}

pub fn recursive_inverse_slide_with(
    state: &mut CovarianceState,
    delta: &SlideDelta,
    decomposition: Decomposition,
    ops: &mut MaddCounter,
) -> Result<InverseUpdate> {
    let k = state.channels();
    if delta.dense.shape() != (k, k) {
        return Err(Error::DimensionMismatch(format!(
            "delta is {}x{}, state has k = {k}",
            delta.dense.rows(),
            delta.dense.cols()
        )));
    }
    if state.inverse_lag != Some(1) {
        return Err(Error::InvalidParameter(format!(
            "maintained inverse must be exactly one slide behind (lag {:?})",
            state.inverse_lag
        )));
    }

    let scale = 1.0 / state.normalizer();
    let terms = match decomposition {
        _ if delta.is_zero() => Vec::new(),
        Decomposition::Samples => slide_terms(delta, scale),
        Decomposition::Columns => rank_one_terms(&delta.dense.scaled(scale)),
    };

    let mut outcome = InverseUpdate::Recursive;
    let mut failed = false;
    for (i, t) in terms.iter().enumerate() {
        if miller_step_in_place(&mut state.inverse, t, i, ops).is_err() {
            failed = true;
            break;
        }
    }
    if failed {
        state.counters.fallbacks += 1;
        state.since_refresh = 0;
        outcome = InverseUpdate::Fallback;
        reinvert(state, ops)?;
    } else {
        state.inverse_lag = Some(0);
        state.since_refresh += 1;
        if let Some(every) = state.refresh_every {
            if state.since_refresh >= every {
                state.counters.refreshes += 1;
                state.since_refresh = 0;
                outcome = InverseUpdate::Refreshed;
                reinvert(state, ops)?;
            }
        }
    }
    Ok(outcome)
}

/// Replaces the maintained inverse with a direct inversion of the current
/// covariance. Leaves the state without a usable inverse on failure.
pub fn refresh_inverse(state: &mut CovarianceState) -> Result<()> {
    reinvert(state, &mut MaddCounter::new())
}

fn reinvert(state: &mut CovarianceState, ops: &mut MaddCounter) -> Result<()> {
    match direct_inverse_counted(&state.covariance(), ops) {
        Ok(inv) => {
            state.inverse = inv;
            state.inverse_lag = Some(0);
            Ok(())
        }
        Err(e) => {
            state.inverse_lag = None;
            Err(e)
        }
    }
}

/// Slide and update the inverse in one call, splitting the multiply-add
/// counts between the covariance and inverse stages.
pub fn advance(
    state: &mut CovarianceState,
    block: &Matrix,
    cov_ops: &mut MaddCounter,
    inv_ops: &mut MaddCounter,
) -> Result<InverseUpdate> {
    let delta = state.slide_counted(block, cov_ops)?;
    recursive_inverse_slide_with(state, &delta, Decomposition::Samples, inv_ops)
}
