//! Channel covariance, batch and sliding-window.
//!
//! The streaming state keeps the *scatter* matrix `Σ x xᵀ` of the raw
//! (uncentered) columns in the current window. In scatter units the
//! add/subtract update is exact; normalization by `ns − 1` and the ridge are
//! applied only when the covariance is read out. Inputs are expected to be
//! centered once up front (see [`EegWindow::centered_by`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{MaddCounter, Matrix};

/// A k-channel × N-sample block of real-valued signal, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegWindow {
    data: Matrix,
    sample_rate: Option<f64>,
}

impl EegWindow {
    pub fn new(data: Matrix, sample_rate: Option<f64>) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::InvalidParameter(format!(
                "signal block must have at least one channel and one sample, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        if !data.is_finite() {
            return Err(Error::NonFinite("signal samples"));
        }
        if let Some(fs) = sample_rate {
            if !(fs.is_finite() && fs > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "sample rate must be positive, got {fs}"
                )));
            }
        }
        Ok(Self { data, sample_rate })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows), None)
    }

    pub fn channels(&self) -> usize {
        self.data.rows()
    }

    pub fn samples(&self) -> usize {
        self.data.cols()
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        self.data.column(t)
    }

    /// Columns `[start, start + len)` as a new window.
    pub fn slice(&self, start: usize, len: usize) -> Result<EegWindow> {
        if len == 0 || start + len > self.samples() {
            return Err(Error::InsufficientSamples(format!(
                "requested samples {start}..{} of a {}-sample block",
                start + len,
                self.samples()
            )));
        }
        let k = self.channels();
        let mut out = Matrix::zeros(k, len);
        for r in 0..k {
            out.row_mut(r).copy_from_slice(&self.data.row(r)[start..start + len]);
        }
        Ok(EegWindow {
            data: out,
            sample_rate: self.sample_rate,
        })
    }

    /// Per-channel mean over the first `len` samples.
    pub fn channel_means(&self, len: usize) -> Vec<f64> {
        let len = len.clamp(1, self.samples());
        (0..self.channels())
            .map(|r| self.data.row(r)[..len].iter().sum::<f64>() / len as f64)
            .collect()
    }

    /// Copy with `offsets[c]` subtracted from every sample of channel `c`.
    pub fn centered_by(&self, offsets: &[f64]) -> Result<EegWindow> {
        if offsets.len() != self.channels() {
            return Err(Error::DimensionMismatch(format!(
                "{} offsets for {} channels",
                offsets.len(),
                self.channels()
            )));
        }
        let mut data = self.data.clone();
        for (r, &m) in offsets.iter().enumerate() {
            data.row_mut(r).iter_mut().for_each(|v| *v -= m);
        }
        Ok(EegWindow {
            data,
            sample_rate: self.sample_rate,
        })
    }
}

/// Sample covariance of a window.
///
/// With `center`, each channel's mean is removed first and the sum of
/// products is divided by `N − 1`. Without it, the raw scatter is divided by
/// `N − 1` (the convention the streaming state uses).
pub fn batch_covariance(x: &EegWindow, center: bool) -> Result<Matrix> {
    let n = x.samples();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let mut s = if center {
        let means = x.channel_means(n);
        scatter(x.centered_by(&means)?.data(), 0, n, &mut MaddCounter::new())
    } else {
        scatter(x.data(), 0, n, &mut MaddCounter::new())
    };
    s.scale_in_place(1.0 / (n - 1) as f64);
    Ok(s)
}

/// `Σ_{t ∈ [start, start+len)} x_t x_tᵀ` over columns of `data`.
pub fn scatter(data: &Matrix, start: usize, len: usize, ops: &mut MaddCounter) -> Matrix {
    let k = data.rows();
    let mut s = Matrix::zeros(k, k);
    for i in 0..k {
        let xi = &data.row(i)[start..start + len];
        for j in i..k {
            let xj = &data.row(j)[start..start + len];
            let v: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    ops.add((k * (k + 1) / 2 * len) as u64);
    s
}

/// Scatter-unit change produced by one slide, both dense and factored.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideDelta {
    /// `H = Σ new newᵀ − Σ old oldᵀ`.
    pub dense: Matrix,
    /// Columns entering the window, oldest first.
    pub added: Vec<Vec<f64>>,
    /// Columns leaving the window, oldest first.
    pub evicted: Vec<Vec<f64>>,
}

impl SlideDelta {
    pub fn is_zero(&self) -> bool {
        self.dense.as_slice().iter().all(|&v| v == 0.0)
    }
}

/// Counters kept alongside the sliding state.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCounters {
    pub slides: u64,
    /// Inverse updates that fell back to direct inversion after a pivot breakdown.
    pub fallbacks: u64,
    /// Scheduled direct re-inversions.
    pub refreshes: u64,
}

/// Sliding-window covariance with a maintained inverse.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    k: usize,
    ns: usize,
    cy: usize,
    pub(crate) scatter: Matrix,
    pub(crate) inverse: Matrix,
    /// Slides since the inverse last matched the scatter; `None` when no
    /// usable inverse is held.
    pub(crate) inverse_lag: Option<u64>,
    /// Ring buffer of the `ns` columns in the window, column-major.
    window: Vec<f64>,
    /// Ring position of the oldest column.
    head: usize,
    window_start: u64,
    ridge: f64,
    pub(crate) counters: StreamCounters,
    /// Direct re-inversion cadence in slides; `None` disables it.
    pub(crate) refresh_every: Option<u64>,
    pub(crate) since_refresh: u64,
}

/// Default number of slides between scheduled direct re-inversions.
pub const DEFAULT_REFRESH_EVERY: u64 = 4096;

/// Checks `ns ≥ k` and `1 ≤ cy < ns/2`.
pub fn validate_window_params(k: usize, ns: usize, cy: usize) -> Result<()> {
    if ns < k {
        return Err(Error::RankRequirement { ns, k });
    }
    if cy == 0 || 2 * cy >= ns {
        return Err(Error::InvalidParameter(format!(
            "update block size cy = {cy} must satisfy 1 <= cy < ns/2 (ns = {ns})"
        )));
    }
    Ok(())
}

/// Initializes the sliding state from the first window of `ns = x.samples()`
/// columns: batch scatter plus a direct inversion of the exposed covariance.
pub fn init_state(x: &EegWindow, cy: usize, ridge: f64) -> Result<CovarianceState> {
    init_state_counted(x, cy, ridge, &mut MaddCounter::new(), &mut MaddCounter::new())
}

pub fn init_state_counted(
    x: &EegWindow,
    cy: usize,
    ridge: f64,
    cov_ops: &mut MaddCounter,
    inv_ops: &mut MaddCounter,
) -> Result<CovarianceState> {
    let (k, ns) = (x.channels(), x.samples());
    validate_window_params(k, ns, cy)?;
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge must be finite and >= 0, got {ridge}"
        )));
    }
    let scatter = scatter(x.data(), 0, ns, cov_ops);
    let mut window = Vec::with_capacity(k * ns);
    for t in 0..ns {
        window.extend(x.column(t));
    }
    let mut state = CovarianceState {
        k,
        ns,
        cy,
        inverse: Matrix::zeros(k, k),
        scatter,
        inverse_lag: None,
        window,
        head: 0,
        window_start: 0,
        ridge,
        counters: StreamCounters::default(),
        refresh_every: Some(DEFAULT_REFRESH_EVERY),
        since_refresh: 0,
    };
    state.inverse = crate::linalg::direct_inverse_counted(&state.covariance(), inv_ops)?;
    state.inverse_lag = Some(0);
    Ok(state)
}

impl CovarianceState {
    pub fn channels(&self) -> usize {
        self.k
    }

    pub fn window_len(&self) -> usize {
        self.ns
    }

    pub fn block_len(&self) -> usize {
        self.cy
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Stream index of the oldest sample in the window.
    pub fn window_start(&self) -> u64 {
        self.window_start
    }

    pub fn scatter(&self) -> &Matrix {
        &self.scatter
    }

    /// The maintained inverse, if it is currently valid.
    pub fn inverse(&self) -> Option<&Matrix> {
        self.inverse_valid().then_some(&self.inverse)
    }

    pub fn inverse_valid(&self) -> bool {
        self.inverse_lag == Some(0)
    }

    pub fn counters(&self) -> StreamCounters {
        self.counters
    }

    pub fn refresh_every(&self) -> Option<u64> {
        self.refresh_every
    }

    /// Sets the scheduled re-inversion cadence; `None` or `Some(0)` disables it.
    pub fn set_refresh_every(&mut self, every: Option<u64>) {
        self.refresh_every = every.filter(|&n| n > 0);
    }

    /// `scatter / (ns − 1) + δI`.
    pub fn covariance(&self) -> Matrix {
        let mut c = self.scatter.scaled(1.0 / self.normalizer());
        c.add_diagonal(self.ridge);
        c
    }

    /// `ns − 1`, the factor between scatter and covariance units.
    pub fn normalizer(&self) -> f64 {
        (self.ns - 1) as f64
    }

    /// The columns currently in the window, oldest first, as a `k × ns` block.
    pub fn window_data(&self) -> Matrix {
        let cols: Vec<&[f64]> = (0..self.ns).map(|i| self.window_column(i)).collect();
        Matrix::from_columns(&cols)
    }

    fn window_column(&self, age: usize) -> &[f64] {
        let slot = (self.head + age) % self.ns;
        &self.window[slot * self.k..(slot + 1) * self.k]
    }

    /// Evicts the oldest `cy` columns and appends `new_block` (`k × cy`).
    ///
    /// Updates the scatter matrix only; the returned delta is what the
    /// inverse maintainer consumes. The inverse is marked stale until it is
    /// brought up to date.
    pub fn slide(&mut self, new_block: &Matrix) -> Result<SlideDelta> {
        self.slide_counted(new_block, &mut MaddCounter::new())
    }

    pub fn slide_counted(&mut self, new_block: &Matrix, ops: &mut MaddCounter) -> Result<SlideDelta> {
        if new_block.rows() != self.k || new_block.cols() != self.cy {
            return Err(Error::DimensionMismatch(format!(
                "slide expects a {}x{} block, got {}x{}",
                self.k,
                self.cy,
                new_block.rows(),
                new_block.cols()
            )));
        }
        if !new_block.is_finite() {
            return Err(Error::NonFinite("new signal block"));
        }

        let evicted: Vec<Vec<f64>> = (0..self.cy).map(|i| self.window_column(i).to_vec()).collect();
        let added: Vec<Vec<f64>> = (0..self.cy).map(|j| new_block.column(j)).collect();

        // H = −Σ old oldᵀ + Σ new newᵀ, subtraction first.
        let k = self.k;
        let mut dense = Matrix::zeros(k, k);
        for (cols, sign) in [(&evicted, -1.0), (&added, 1.0)] {
            for x in cols.iter() {
                for i in 0..k {
                    let xi = sign * x[i];
                    for j in i..k {
                        dense[(i, j)] += xi * x[j];
                    }
                }
            }
        }
        for i in 0..k {
            for j in (i + 1)..k {
                dense[(j, i)] = dense[(i, j)];
            }
        }
        ops.add((2 * self.cy * k * (k + 1) / 2) as u64);
        self.scatter.add_assign(&dense);

        for x in &added {
            let slot = self.head;
            self.window[slot * k..(slot + 1) * k].copy_from_slice(x);
            self.head = (self.head + 1) % self.ns;
        }
        self.window_start += self.cy as u64;
        self.counters.slides += 1;
        self.inverse_lag = self.inverse_lag.map(|n| n + 1);

        Ok(SlideDelta { dense, added, evicted })
    }
}
