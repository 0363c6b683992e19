//! Per-agent Gaussian-process regression of residual dynamics, plus the
//! probabilistic error-bound machinery (information gain, the bound
//! coefficient beta, and pointwise error bounds).
//!
//! Every agent owns one model over inputs `p_i = [q_i^T, v_i^T]^T` with one
//! shared ARD squared-exponential kernel across its `d` output dimensions,
//! so the posterior variance is a single scalar per query while the mean is
//! a `d`-vector.

use nalgebra::{DMatrix, DVector};

use crate::error::GpError;
use crate::util::{format_float, linspace};

/// Diagonal jitter applied (relative to the signal variance) when the Gram
/// factorization fails; one retry, then a conditioning error.
const JITTER_RELATIVE: f64 = 1e-10;

/// Negative posterior variances above this clamp to zero; anything more
/// negative reports a conditioning failure.
const VARIANCE_CLAMP: f64 = -1e-10;

/// ARD squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    /// Positive lengthscale per input dimension.
    pub lengthscales: Vec<f64>,
    /// Signal variance `sigma_f^2 > 0`; the kernel value at zero distance.
    pub signal_variance: f64,
    /// Observation noise variance `sigma^2 >= 0`.
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self, GpError> {
        for &l in &lengthscales {
            if !(l > 0.0) || !l.is_finite() {
                return Err(GpError::BadKernelParam("lengthscale", l));
            }
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(GpError::BadKernelParam("signal_variance", signal_variance));
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(GpError::BadKernelParam("noise_variance", noise_variance));
        }
        Ok(Self { lengthscales, signal_variance, noise_variance })
    }

    /// Unit lengthscales (normalized state units), `sigma_f^2 = 1e4` sized
    /// to force magnitudes in the hundreds, unit noise.
    pub fn default_for_dim(input_dim: usize) -> Self {
        Self { lengthscales: vec![1.0; input_dim], signal_variance: 1e4, noise_variance: 1.0 }
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `sigma_f^2 * exp(-1/2 * sum_j (x_j - y_j)^2 / l_j^2)`.
pub fn kernel_eval(params: &KernelParams, x: &[f64], y: &[f64]) -> Result<f64, GpError> {
    if x.len() != params.lengthscales.len() || y.len() != params.lengthscales.len() {
        return Err(GpError::DimensionMismatch {
            expected: params.lengthscales.len(),
            actual: if x.len() != params.lengthscales.len() { x.len() } else { y.len() },
        });
    }
    Ok(kernel_unchecked(params, x, y))
}

#[inline]
fn kernel_unchecked(params: &KernelParams, x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((a, b), l) in x.iter().zip(y).zip(&params.lengthscales) {
        let d = (a - b) / l;
        s += d * d;
    }
    params.signal_variance * (-0.5 * s).exp()
}

/// Training pairs `(p_i, y_i)` for one agent. Once frozen the length is
/// fixed for good.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    input_dim: usize,
    output_dim: usize,
    frozen: bool,
}

impl AgentDataset {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self { inputs: Vec::new(), outputs: Vec::new(), input_dim, output_dim, frozen: false }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i]
    }

    pub fn push(&mut self, p: Vec<f64>, y: Vec<f64>) -> Result<(), GpError> {
        if self.frozen {
            return Err(GpError::FrozenDataset);
        }
        if p.len() != self.input_dim {
            return Err(GpError::DimensionMismatch { expected: self.input_dim, actual: p.len() });
        }
        if y.len() != self.output_dim {
            return Err(GpError::OutputDimension { expected: self.output_dim, actual: y.len() });
        }
        self.inputs.push(p);
        self.outputs.push(y);
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// CSV export: header `p_1,...,p_k,y_1,...,y_d`, one observation per
    /// row, 17-significant-digit floats, `\n` line endings.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for j in 1..=self.input_dim {
            if j > 1 {
                out.push(',');
            }
            out.push_str(&format!("p_{j}"));
        }
        for j in 1..=self.output_dim {
            out.push_str(&format!(",y_{j}"));
        }
        out.push('\n');
        for (p, y) in self.inputs.iter().zip(&self.outputs) {
            let row: Vec<String> = p.iter().chain(y.iter()).map(|&x| format_float(x)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV format written by [`to_csv_string`](Self::to_csv_string).
    /// The mandatory header determines the input and output dimensions.
    pub fn from_csv_str(text: &str) -> Result<Self, GpError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(GpError::Csv { line: 1, msg: "missing header".into() })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let input_dim = cols.iter().take_while(|c| c.starts_with("p_")).count();
        let output_dim = cols.len() - input_dim;
        if input_dim == 0 || output_dim == 0 || !cols[input_dim..].iter().all(|c| c.starts_with("y_")) {
            return Err(GpError::Csv { line: 1, msg: format!("bad header {header:?}") });
        }
        for (j, c) in cols.iter().enumerate() {
            let want = if j < input_dim { format!("p_{}", j + 1) } else { format!("y_{}", j - input_dim + 1) };
            if *c != want {
                return Err(GpError::Csv { line: 1, msg: format!("expected column {want}, got {c:?}") });
            }
        }
        let mut ds = AgentDataset::new(input_dim, output_dim);
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(GpError::Csv {
                    line: idx + 1,
                    msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
                });
            }
            let mut vals = Vec::with_capacity(fields.len());
            for f in &fields {
                let v: f64 = f.trim().parse().map_err(|e| GpError::Csv {
                    line: idx + 1,
                    msg: format!("bad float {f:?}: {e}"),
                })?;
                if !v.is_finite() {
                    return Err(GpError::Csv { line: idx + 1, msg: format!("non-finite value {f:?}") });
                }
                vals.push(v);
            }
            let y = vals.split_off(input_dim);
            ds.push(vals, y)?;
        }
        Ok(ds)
    }
}

/// Builds the GP training pair for one control step: `p_i = [q_i; v_i]` and
/// `y_i = measured_accel - fhat_i - u_i`, the observed residual acceleration.
pub fn collect_sample(
    q_i: &[f64],
    v_i: &[f64],
    u_i: &[f64],
    measured_accel: &[f64],
    fhat_i: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(q_i.len(), v_i.len());
    debug_assert_eq!(u_i.len(), v_i.len());
    debug_assert_eq!(measured_accel.len(), v_i.len());
    debug_assert_eq!(fhat_i.len(), v_i.len());
    let mut p = Vec::with_capacity(q_i.len() + v_i.len());
    p.extend_from_slice(q_i);
    p.extend_from_slice(v_i);
    let y = measured_accel
        .iter()
        .zip(fhat_i)
        .zip(u_i)
        .map(|((a, f), u)| a - f - u)
        .collect();
    (p, y)
}

/// Posterior at one query: a mean per output dimension and the variance
/// shared by all of them (identical kernels per dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Exact GP regression state for one agent: kernel, dataset, and the
/// cached Cholesky factor of `K + sigma^2 I` with per-dimension solves.
///
/// The model is a value: [`add_observation`](Self::add_observation) returns
/// a new model, so posterior queries on a fixed model are freely concurrent.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelParams,
    dataset: AgentDataset,
    chol_lower: Option<DMatrix<f64>>,
    alpha: Option<DMatrix<f64>>,
    applied_jitter: f64,
}

impl GpModel {
    pub fn new(kernel: KernelParams, output_dim: usize) -> Self {
        let input_dim = kernel.input_dim();
        Self {
            kernel,
            dataset: AgentDataset::new(input_dim, output_dim),
            chol_lower: None,
            alpha: None,
            applied_jitter: 0.0,
        }
    }

    pub fn from_dataset(kernel: KernelParams, dataset: AgentDataset) -> Result<Self, GpError> {
        if dataset.input_dim() != kernel.input_dim() {
            return Err(GpError::DimensionMismatch {
                expected: kernel.input_dim(),
                actual: dataset.input_dim(),
            });
        }
        let mut model = Self {
            kernel,
            dataset,
            chol_lower: None,
            alpha: None,
            applied_jitter: 0.0,
        };
        model.refit()?;
        Ok(model)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn dataset(&self) -> &AgentDataset {
        &self.dataset
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.dataset.output_dim()
    }

    /// Refreshes the Gram factorization and per-dimension solves.
    fn refit(&mut self) -> Result<(), GpError> {
        let m = self.dataset.len();
        if m == 0 {
            self.chol_lower = None;
            self.alpha = None;
            self.applied_jitter = 0.0;
            return Ok(());
        }
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let k = kernel_unchecked(&self.kernel, self.dataset.input(i), self.dataset.input(j));
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
        }
        for i in 0..m {
            gram[(i, i)] += self.kernel.noise_variance;
        }
        let jitter = JITTER_RELATIVE * self.kernel.signal_variance;
        let (lower, applied) = match gram.clone().cholesky() {
            Some(c) => (c.l(), 0.0),
            None => {
                for i in 0..m {
                    gram[(i, i)] += jitter;
                }
                match gram.cholesky() {
                    Some(c) => (c.l(), jitter),
                    None => return Err(GpError::Conditioning),
                }
            }
        };
        // alpha = (K + sigma^2 I)^{-1} Y, one column per output dimension.
        let d_out = self.dataset.output_dim();
        let mut y = DMatrix::zeros(m, d_out);
        for i in 0..m {
            for (j, &v) in self.dataset.output(i).iter().enumerate() {
                y[(i, j)] = v;
            }
        }
        let w = lower
            .solve_lower_triangular(&y)
            .ok_or(GpError::Conditioning)?;
        let alpha = lower
            .transpose()
            .solve_upper_triangular(&w)
            .ok_or(GpError::Conditioning)?;
        self.chol_lower = Some(lower);
        self.alpha = Some(alpha);
        self.applied_jitter = applied;
        Ok(())
    }

    /// Posterior mean and shared variance at `x`.
    ///
    /// The empty model returns the prior: zero mean and variance
    /// `k(x, x) = sigma_f^2`.
    pub fn posterior(&self, x: &[f64]) -> Result<Posterior, GpError> {
        if x.len() != self.kernel.input_dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.kernel.input_dim(),
                actual: x.len(),
            });
        }
        let m = self.dataset.len();
        if m == 0 {
            return Ok(Posterior {
                mean: vec![0.0; self.dataset.output_dim()],
                variance: self.kernel.signal_variance,
            });
        }
        let lower = self.chol_lower.as_ref().expect("factorization cached for nonempty dataset");
        let alpha = self.alpha.as_ref().expect("alpha cached for nonempty dataset");
        let kstar = DVector::from_fn(m, |i, _| {
            kernel_unchecked(&self.kernel, self.dataset.input(i), x)
        });
        let mean: Vec<f64> = (0..self.dataset.output_dim())
            .map(|j| kstar.dot(&alpha.column(j)))
            .collect();
        let w = lower
            .solve_lower_triangular(&kstar)
            .ok_or(GpError::Conditioning)?;
        let raw = self.kernel.signal_variance - w.norm_squared();
        let variance = if raw >= 0.0 {
            raw
        } else if raw >= VARIANCE_CLAMP {
            0.0
        } else {
            return Err(GpError::NegativeVariance(raw));
        };
        Ok(Posterior { mean, variance })
    }

    /// Returns a new model conditioned on one more pair. Refactorizes the
    /// Gram matrix in full; the sizes here make that cheap and it keeps the
    /// update path identical to construction.
    pub fn add_observation(&self, p: Vec<f64>, y: Vec<f64>) -> Result<GpModel, GpError> {
        if self.dataset.is_frozen() {
            return Err(GpError::FrozenDataset);
        }
        let mut next = self.clone();
        next.dataset.push(p, y)?;
        next.refit()?;
        Ok(next)
    }

    /// Returns the model with its dataset frozen (Assumption: dataset sizes
    /// eventually stop changing). Optionally refits hyperparameters by
    /// maximizing the log marginal likelihood first.
    pub fn freeze(&self, fit_hyperparameters: bool) -> Result<GpModel, GpError> {
        let mut next = self.clone();
        if fit_hyperparameters && !next.dataset.is_empty() {
            next.fit_marginal_likelihood()?;
        }
        next.dataset.freeze();
        Ok(next)
    }

    /// Sum over output dimensions of the per-dimension log marginal
    /// likelihood under the shared kernel.
    pub fn log_marginal_likelihood(&self) -> Result<f64, GpError> {
        let m = self.dataset.len();
        if m == 0 {
            return Err(GpError::EmptyDataset);
        }
        let lower = self.chol_lower.as_ref().ok_or(GpError::Conditioning)?;
        let alpha = self.alpha.as_ref().ok_or(GpError::Conditioning)?;
        let log_det_half: f64 = (0..m).map(|i| lower[(i, i)].ln()).sum();
        let mut total = 0.0;
        for j in 0..self.dataset.output_dim() {
            let fit: f64 = (0..m).map(|i| self.dataset.output(i)[j] * alpha[(i, j)]).sum();
            total += -0.5 * fit - log_det_half - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
        }
        Ok(total)
    }

    /// Deterministic coordinate search over multiplicative perturbations of
    /// the lengthscales and signal variance.
    fn fit_marginal_likelihood(&mut self) -> Result<(), GpError> {
        const FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
        const SWEEPS: usize = 2;
        let mut best = self.log_marginal_likelihood()?;
        for _ in 0..SWEEPS {
            for axis in 0..=self.kernel.lengthscales.len() {
                let mut best_factor = 1.0;
                for &f in &FACTORS {
                    if f == 1.0 {
                        continue;
                    }
                    let mut trial = self.clone();
                    if axis < trial.kernel.lengthscales.len() {
                        trial.kernel.lengthscales[axis] *= f;
                    } else {
                        trial.kernel.signal_variance *= f;
                    }
                    if trial.refit().is_err() {
                        continue;
                    }
                    if let Ok(l) = trial.log_marginal_likelihood() {
                        if l > best {
                            best = l;
                            best_factor = f;
                        }
                    }
                }
                if best_factor != 1.0 {
                    if axis < self.kernel.lengthscales.len() {
                        self.kernel.lengthscales[axis] *= best_factor;
                    } else {
                        self.kernel.signal_variance *= best_factor;
                    }
                    self.refit()?;
                }
            }
        }
        Ok(())
    }

    /// Data-driven RKHS-norm surrogate per output dimension: the RKHS norm
    /// of the posterior mean, `(alpha_j^T K alpha_j)^{1/2}`. A lower
    /// surrogate for the true norm, not an upper bound.
    pub fn rkhs_norm_estimate(&self) -> Result<Vec<f64>, GpError> {
        let m = self.dataset.len();
        if m == 0 {
            return Err(GpError::EmptyDataset);
        }
        let alpha = self.alpha.as_ref().ok_or(GpError::Conditioning)?;
        let reg = self.kernel.noise_variance + self.applied_jitter;
        // alpha^T K alpha = alpha^T (A - reg I) alpha = alpha^T y - reg ||alpha||^2
        // since A alpha = y by construction.
        let mut out = Vec::with_capacity(self.dataset.output_dim());
        for j in 0..self.dataset.output_dim() {
            let fit: f64 = (0..m).map(|i| self.dataset.output(i)[j] * alpha[(i, j)]).sum();
            let quad = fit - reg * alpha.column(j).norm_squared();
            out.push(quad.max(0.0).sqrt());
        }
        Ok(out)
    }
}

/// Pointwise error bound `||beta ⊙ sigma(x)||`, where `sigma(x)` is the
/// per-dimension posterior standard deviation. With the shared kernel this
/// is `sqrt(var(x)) * ||beta||`.
pub fn pointwise_error_bound(model: &GpModel, beta: &[f64], x: &[f64]) -> Result<f64, GpError> {
    if beta.len() != model.output_dim() {
        return Err(GpError::OutputDimension { expected: model.output_dim(), actual: beta.len() });
    }
    let post = model.posterior(x)?;
    let sq: f64 = beta.iter().map(|b| b * b * post.variance).sum();
    Ok(sq.sqrt())
}

/// Axis-aligned box, the compact domain on which bounds are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl AxisBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self, GpError> {
        if min.len() != max.len() {
            return Err(GpError::DimensionMismatch { expected: min.len(), actual: max.len() });
        }
        for (axis, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(GpError::BadBox(axis));
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    /// Sub-box over a contiguous axis range.
    pub fn slice(&self, start: usize, len: usize) -> AxisBox {
        AxisBox {
            min: self.min[start..start + len].to_vec(),
            max: self.max[start..start + len].to_vec(),
        }
    }

    /// Symmetrically widens every axis by `fraction` of its range.
    pub fn inflated(&self, fraction: f64) -> AxisBox {
        let mut min = self.min.clone();
        let mut max = self.max.clone();
        for (lo, hi) in min.iter_mut().zip(max.iter_mut()) {
            let pad = 0.5 * fraction * (*hi - *lo);
            *lo -= pad;
            *hi += pad;
        }
        AxisBox { min, max }
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(v, (lo, hi))| *v >= lo - slack && *v <= hi + slack)
    }

    /// Full tensor grid with `points_per_axis` per axis, first axis slowest
    /// (lexicographic order).
    pub fn grid(&self, points_per_axis: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .min
            .iter()
            .zip(&self.max)
            .map(|(&lo, &hi)| linspace(lo, hi, points_per_axis))
            .collect();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        for _ in 0..total {
            out.push(idx.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect());
            for pos in (0..axes.len()).rev() {
                idx[pos] += 1;
                if idx[pos] < axes[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
        out
    }

    pub fn grid_cells(&self, points_per_axis: usize) -> usize {
        points_per_axis.max(1).checked_pow(self.dim() as u32).unwrap_or(usize::MAX)
    }
}

/// Inputs to the error-bound computation: confidence level, per-output-
/// dimension RKHS norm bounds (stacked over agents), the compact domain,
/// and the search grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBoundParams {
    pub epsilon: f64,
    /// One bound per stacked output dimension (`d * n` entries).
    pub rkhs_bounds: Vec<f64>,
    /// Stacked state box over all agents (`2 d n` axes, `[q_i; v_i]` blocks).
    pub omega: AxisBox,
    pub grid_points_per_axis: usize,
    pub cell_cap: usize,
}

impl ErrorBoundParams {
    pub fn new(
        epsilon: f64,
        rkhs_bounds: Vec<f64>,
        omega: AxisBox,
        grid_points_per_axis: usize,
        cell_cap: usize,
    ) -> Result<Self, GpError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(GpError::BadEpsilon(epsilon));
        }
        for (i, &b) in rkhs_bounds.iter().enumerate() {
            if !(b > 0.0) || !b.is_finite() {
                return Err(GpError::BadRkhsBound(i));
            }
        }
        if grid_points_per_axis < 2 {
            return Err(GpError::BadBox(grid_points_per_axis));
        }
        Ok(Self { epsilon, rkhs_bounds, omega, grid_points_per_axis, cell_cap })
    }
}

/// Greedy lower approximation of the maximum information gain
/// `max 1/2 log |I + sigma^{-2} K|` over `m + 1` points of `omega`.
///
/// Candidates come from a finite tensor grid; selection is with
/// replacement (a multiset of locations), each step picking the candidate
/// of maximal posterior variance, lowest grid index on ties.
pub fn information_gain(
    kernel: &KernelParams,
    omega: &AxisBox,
    grid_points_per_axis: usize,
    m: usize,
    noise_variance: f64,
) -> Result<f64, GpError> {
    information_gain_prefix(kernel, omega, grid_points_per_axis, m, noise_variance)
        .map(|prefix| prefix[m])
}

/// Prefix variant: entry `i` is the greedy information gain for a dataset
/// of size `i` (that is, after `i + 1` selections). Greedy selections nest,
/// so one sweep serves every dataset size up to `m_max`.
pub fn information_gain_prefix(
    kernel: &KernelParams,
    omega: &AxisBox,
    grid_points_per_axis: usize,
    m_max: usize,
    noise_variance: f64,
) -> Result<Vec<f64>, GpError> {
    if !(noise_variance > 0.0) {
        return Err(GpError::ZeroNoise);
    }
    if omega.dim() != kernel.input_dim() {
        return Err(GpError::DimensionMismatch { expected: kernel.input_dim(), actual: omega.dim() });
    }
    let candidates = omega.grid(grid_points_per_axis);
    let n_cand = candidates.len();

    // Posterior variance per candidate given the selected multiset S,
    // maintained through the growing Cholesky factor of K_S + sigma^2 I:
    // w_x = L^{-1} k(S, x), var(x) = k(x,x) - ||w_x||^2.
    let mut variance: Vec<f64> = candidates
        .iter()
        .map(|c| kernel_unchecked(kernel, c, c))
        .collect();
    let mut w: Vec<Vec<f64>> = vec![Vec::new(); n_cand];
    let mut gamma = Vec::with_capacity(m_max + 1);
    let mut total = 0.0;

    for _ in 0..=m_max {
        // Lowest index wins ties via strict comparison.
        let mut best = 0;
        for i in 1..n_cand {
            if variance[i] > variance[best] {
                best = i;
            }
        }
        let var_sel = variance[best].max(0.0);
        total += 0.5 * (var_sel / noise_variance).ln_1p();
        gamma.push(total);

        // Extend the factorization with the selected point and refresh the
        // candidate variances.
        let ell = (var_sel + noise_variance).sqrt();
        let w_sel = w[best].clone();
        for (i, cand) in candidates.iter().enumerate() {
            let cross = kernel_unchecked(kernel, &candidates[best], cand);
            let dot: f64 = w_sel.iter().zip(&w[i]).map(|(a, b)| a * b).sum();
            let entry = (cross - dot) / ell;
            w[i].push(entry);
            variance[i] -= entry * entry;
        }
    }
    Ok(gamma)
}

/// Bound coefficient per output dimension:
/// `beta_j = sqrt(2 ||rho_j||_k^2 + 300 gamma_j ln^3((m+1)/(1 - eps^(1/stacked_dim))))`.
///
/// `stacked_dim` is the full stacked output dimension `d * n`, also used
/// when evaluating per-agent coefficients.
pub fn beta(
    epsilon: f64,
    rkhs_bounds: &[f64],
    gamma: &[f64],
    m: usize,
    stacked_dim: usize,
) -> Result<Vec<f64>, GpError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(GpError::BadEpsilon(epsilon));
    }
    if rkhs_bounds.len() != gamma.len() {
        return Err(GpError::DimensionMismatch { expected: rkhs_bounds.len(), actual: gamma.len() });
    }
    let denom = 1.0 - epsilon.powf(1.0 / stacked_dim as f64);
    let log_term = ((m as f64 + 1.0) / denom).ln();
    let log_cubed = log_term * log_term * log_term;
    Ok(rkhs_bounds
        .iter()
        .zip(gamma)
        .map(|(b, g)| (2.0 * b * b + 300.0 * g * log_cubed).sqrt())
        .collect())
}
