//! Memory statistics: memory capacity, norm of the variation, delay
//! capacity, and the nonlinear index.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::readout::{features_from_states, Regularization, RidgeSolver};
use crate::reservoir::{AdjacencyMatrix, Reservoir, ReservoirConfig, StateTrajectory};
use crate::seeding;
use crate::signals::{gaussian_noise, sine_probe};
use crate::TimeSeries;

pub const DEFAULT_TAU_MAX: usize = 100;
pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_L_REG: f64 = 1e-10;

/// Per-delay statistic, indexed from `first_tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryCurve {
    pub first_tau: usize,
    pub values: Vec<f64>,
}

impl MemoryCurve {
    pub fn tau_max(&self) -> usize {
        self.first_tau + self.values.len() - 1
    }

    pub fn get(&self, tau: usize) -> Option<f64> {
        tau.checked_sub(self.first_tau).and_then(|i| self.values.get(i).copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, v)| (self.first_tau + i, *v))
    }
}

/// `MC = sum_tau MC_tau`.
pub fn total_memory_capacity(curve: &MemoryCurve) -> f64 {
    curve.values.iter().sum()
}

/// Squared Pearson correlation; zero when either signal is constant.
pub fn squared_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
}

/// Memory capacity of the reservoir driven by unit Gaussian noise drawn from `seed`.
pub fn memory_capacity_curve(config: &ReservoirConfig, a: &AdjacencyMatrix, seed: u64) -> Result<MemoryCurve> {
    memory_capacity_with(config, a, seed, DEFAULT_TAU_MAX, Regularization::default())
}

pub fn memory_capacity_with(
    config: &ReservoirConfig,
    a: &AdjacencyMatrix,
    seed: u64,
    tau_max: usize,
    regularization: Regularization,
) -> Result<MemoryCurve> {
    let s = gaussian_noise(config.washout + config.n_fit, seed);
    let traj = crate::reservoir::drive(config, a, &s)?;
    memory_capacity_from_states(&traj, s.values(), tau_max, regularization)
}

/// Fits each delayed input `s(n - tau)`, `tau = 1..=tau_max`, from the
/// linear state signals and scores it by squared correlation.
pub fn memory_capacity_from_states(
    traj: &StateTrajectory,
    input: &[f64],
    tau_max: usize,
    regularization: Regularization,
) -> Result<MemoryCurve> {
    if tau_max == 0 {
        return Err(Error::InvalidParameter("tau_max must be at least 1".into()));
    }
    if traj.start() < tau_max {
        return Err(Error::InsufficientData { needed: tau_max, available: traj.start() });
    }
    let n = traj.len();
    if input.len() < traj.start() + n {
        return Err(Error::InsufficientData { needed: traj.start() + n, available: input.len() });
    }
    if traj.states().iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateState);
    }
    let features = features_from_states(traj.states(), false);
    let lambda = regularization.lambda_for(&features);
    let solver = RidgeSolver::new(&features, lambda)?;
    let targets = DMatrix::from_fn(n, tau_max, |k, j| input[traj.start() + k - (j + 1)]);
    let fits = features.data() * solver.solve_many(&targets)?;
    let values = (0..tau_max)
        .map(|j| squared_correlation(targets.column(j).as_slice(), fits.column(j).as_slice()))
        .collect();
    Ok(MemoryCurve { first_tau: 1, values })
}

/// Matrix norm applied to the propagated perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixNorm {
    /// Frobenius norm; `sqrt(D)` for an orthonormal `D x D` start.
    #[default]
    Frobenius,
    /// Largest singular value.
    Spectral,
}

impl MatrixNorm {
    fn apply(self, m: &DMatrix<f64>) -> f64 {
        match self {
            MatrixNorm::Frobenius => m.norm(),
            MatrixNorm::Spectral => m.clone().singular_values().max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationOptions {
    pub tau_max: usize,
    pub n_samples: usize,
    pub norm: MatrixNorm,
    pub seed: u64,
}

impl Default for VariationOptions {
    fn default() -> Self {
        Self { tau_max: DEFAULT_TAU_MAX, n_samples: DEFAULT_SAMPLES, norm: MatrixNorm::Frobenius, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationResult {
    /// Mean `|delta_n|` over samples for `n = 0..=tau_max`.
    pub norms: Vec<f64>,
    pub d_var: f64,
    pub n_samples: usize,
}

/// Random `d x d` matrix with orthonormal rows.
pub fn random_orthonormal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeding::rng(seed);
    let m = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    orthonormal_columns(m)
}

/// Modified Gram-Schmidt on the columns of `m`.
pub(crate) fn orthonormal_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..m.ncols() {
        for i in 0..j {
            let dot = m.column(i).dot(&m.column(j));
            let qi = m.column(i).into_owned();
            m.column_mut(j).axpy(-dot, &qi, 1.0);
        }
        let norm = m.column(j).norm();
        m.column_mut(j).unscale_mut(norm);
    }
    m
}

pub fn norm_of_variation(
    config: &ReservoirConfig,
    a: &AdjacencyMatrix,
    drive: &TimeSeries,
    tau_max: usize,
    n_samples: usize,
) -> Result<VariationResult> {
    norm_of_variation_with(config, a, drive, &VariationOptions { tau_max, n_samples, ..Default::default() })
}

/// Propagates an orthonormal perturbation for `tau_max` steps from
/// `n_samples` evenly spaced points of the driven run and averages the
/// summed norms.
pub fn norm_of_variation_with(
    config: &ReservoirConfig,
    a: &AdjacencyMatrix,
    drive: &TimeSeries,
    opts: &VariationOptions,
) -> Result<VariationResult> {
    let (tau_max, n_samples) = (opts.tau_max, opts.n_samples);
    if tau_max == 0 || n_samples == 0 {
        return Err(Error::InvalidParameter("tau_max and n_samples must be positive".into()));
    }
    let res = Reservoir::new(config, a)?;
    let s = drive.values();
    let washout = config.washout;
    let available = s.len().saturating_sub(washout);
    let stride = available / n_samples;
    if stride < tau_max {
        return Err(Error::InsufficientData { needed: washout + n_samples * tau_max, available: s.len() });
    }
    let states = res.run_columns(s, washout, available)?;
    let d = res.state_dim();
    let delta0 = random_orthonormal(d, d, seeding::derive_seed(opts.seed, seeding::stream::VARIATION));
    let per_sample: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let offset = j * stride;
            let mut delta = delta0.clone();
            let mut next = DMatrix::zeros(d, d);
            let mut norms = Vec::with_capacity(tau_max + 1);
            norms.push(opts.norm.apply(&delta));
            for n in offset..offset + tau_max {
                let state = states.column(n).into_owned();
                let gains = res.gains(&state, s[washout + n]);
                res.apply_jacobian_into(&gains, &delta, &mut next);
                std::mem::swap(&mut delta, &mut next);
                let norm = opts.norm.apply(&delta);
                if !norm.is_finite() {
                    return Err(Error::Numerical(format!("non-finite perturbation at step {}", washout + n)));
                }
                norms.push(norm);
            }
            Ok(norms)
        })
        .collect::<Result<_>>()?;
    let mut norms = vec![0.0; tau_max + 1];
    let mut total = 0.0;
    for sample in &per_sample {
        for (acc, v) in norms.iter_mut().zip(sample) {
            *acc += v;
        }
        total += sample[1..].iter().sum::<f64>();
    }
    norms.iter_mut().for_each(|v| *v /= n_samples as f64);
    Ok(VariationResult { norms, d_var: total / n_samples as f64, n_samples })
}

/// Signals normalized to identity covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedEnsemble {
    /// `M x N` whitened signals.
    pub signals: DMatrix<f64>,
    /// `M x M` map taking centered signals to whitened ones.
    pub transform: DMatrix<f64>,
    pub l_reg: f64,
}

/// Whitens the centered `M x N` signal matrix `r0`.
///
/// With `C = r0 r0^T / N + l_reg I = V S V^T`, the transform is
/// `S^{-1/2} V^T`.
pub fn whiten(r0: &DMatrix<f64>, l_reg: f64) -> Result<WhitenedEnsemble> {
    let transform = whitening_transform(r0, l_reg)?;
    Ok(WhitenedEnsemble { signals: &transform * r0, transform, l_reg })
}

fn whitening_transform(r0: &DMatrix<f64>, l_reg: f64) -> Result<DMatrix<f64>> {
    let (m, n) = r0.shape();
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("empty signal matrix".into()));
    }
    if !(l_reg >= 0.0) {
        return Err(Error::InvalidParameter(format!("l_reg must be >= 0, got {l_reg}")));
    }
    if r0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite signal".into()));
    }
    let t = r0.transpose();
    let mut c = r0 * t / n as f64;
    for i in 0..m {
        c[(i, i)] += l_reg;
    }
    let eig = c.symmetric_eigen();
    let mut w = eig.eigenvectors.transpose();
    for (i, &s) in eig.eigenvalues.iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::Numerical(format!("covariance eigenvalue {s} is not positive")));
        }
        w.row_mut(i).unscale_mut(s.sqrt());
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayCapacity {
    /// `Trace|C(tau)|` for `tau = 0..=tau_max`.
    pub curve: MemoryCurve,
    pub theta_d: f64,
}

/// Trace of the absolute cross covariance between whitened signals and
/// their delayed copies.
///
/// The window is the last `N = len - tau_max` rows; its centered signals
/// define the whitener, which is also applied to every delayed window.
pub fn delay_capacity(traj: &StateTrajectory, tau_max: usize, l_reg: f64) -> Result<DelayCapacity> {
    let rows = traj.len();
    let dim = traj.dim();
    if tau_max == 0 {
        return Err(Error::InvalidParameter("tau_max must be at least 1".into()));
    }
    if rows <= tau_max + dim {
        return Err(Error::InsufficientData { needed: tau_max + dim + 1, available: rows });
    }
    let n = rows - tau_max;
    // Columns are time, rows are signals.
    let all = traj.states().transpose();
    let window = all.columns(tau_max, n);
    let means: DVector<f64> = window.column_mean();
    let mut centered = all.clone();
    for mut col in centered.column_iter_mut() {
        col -= &means;
    }
    let transform = whitening_transform(&centered.columns(tau_max, n).into_owned(), l_reg)?;
    let y = &transform * &centered;
    let values: Vec<f64> = (0..=tau_max)
        .into_par_iter()
        .map(|tau| {
            (0..dim)
                .map(|i| {
                    let row = y.row(i);
                    let mut acc = 0.0;
                    for t in tau_max..rows {
                        acc += row[t] * row[t - tau];
                    }
                    (acc / n as f64).abs()
                })
                .sum()
        })
        .collect();
    let theta_d = values.iter().sum::<f64>() / tau_max as f64;
    Ok(DelayCapacity { curve: MemoryCurve { first_tau: 0, values }, theta_d })
}

/// Probe periods `T_j = 10 + 40 (j - 1) / (count - 1)`.
pub fn probe_periods(count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![10.0],
        _ => (0..count).map(|j| 10.0 + 40.0 * j as f64 / (count - 1) as f64).collect(),
    }
}

/// Smallest length `>= min_len` holding a whole number of periods.
pub fn probe_length(period: f64, min_len: usize) -> Result<usize> {
    const SEARCH: usize = 1 << 20;
    (min_len..min_len + SEARCH)
        .find(|&l| {
            let cycles = l as f64 / period;
            (cycles - cycles.round()).abs() <= 1e-9 * cycles.max(1.0)
        })
        .ok_or_else(|| Error::InvalidParameter(format!("no whole-cycle probe length for period {period}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearIndexOptions {
    pub n_probes: usize,
    pub min_probe_len: usize,
    pub washout: usize,
}

impl Default for NonlinearIndexOptions {
    fn default() -> Self {
        Self { n_probes: 100, min_probe_len: 4096, washout: 1000 }
    }
}

/// Harmonic content above the fundamental relative to the fundamental,
/// averaged over the columns of `signals` (rows are time).
///
/// `signals` must span exactly `cycles` periods, so the fundamental sits in
/// DFT bin `cycles`.
pub fn harmonic_ratio(signals: &DMatrix<f64>, cycles: usize, period: f64) -> Result<f64> {
    let (len, nodes) = signals.shape();
    if cycles == 0 || 2 * cycles >= len {
        return Err(Error::InvalidParameter(format!("fundamental bin {cycles} outside 1..{}", len / 2)));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut total = 0.0;
    for (node, col) in signals.column_iter().enumerate() {
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = Complex::new(*v, 0.0);
        }
        fft.process(&mut buf);
        let fundamental = buf[cycles].norm();
        let scale = col.amax() * len as f64;
        if !(fundamental > 1e-12 * scale) || fundamental == 0.0 {
            return Err(Error::DegenerateResponse { node, period });
        }
        let above: f64 = buf[cycles + 1..=len / 2].iter().map(|c| c.norm()).sum();
        total += above / fundamental;
    }
    Ok(total / nodes as f64)
}

/// Mean nonlinear index over sine probes, for an arbitrary system.
///
/// `respond` maps a probe input to its response, one row per input sample
/// and one column per node.
pub fn nonlinear_index_of<F>(opts: &NonlinearIndexOptions, respond: F) -> Result<f64>
where
    F: Fn(&TimeSeries) -> Result<DMatrix<f64>> + Sync,
{
    let periods = probe_periods(opts.n_probes);
    if periods.is_empty() {
        return Err(Error::InvalidParameter("at least one probe is required".into()));
    }
    let ratios: Vec<f64> = periods
        .par_iter()
        .map(|&period| {
            let len = probe_length(period, opts.min_probe_len)?;
            let probe = sine_probe(period, opts.washout + len)?;
            let response = respond(&probe)?;
            if response.nrows() < len {
                return Err(Error::InsufficientData { needed: len, available: response.nrows() });
            }
            let tail = response.rows(response.nrows() - len, len).into_owned();
            harmonic_ratio(&tail, (len as f64 / period).round() as usize, period)
        })
        .collect::<Result<_>>()?;
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Nonlinear index of the reservoir's node outputs (first component of each node).
pub fn nonlinear_index(config: &ReservoirConfig, a: &AdjacencyMatrix) -> Result<f64> {
    nonlinear_index_with(config, a, &NonlinearIndexOptions { washout: config.washout, ..Default::default() })
}

pub fn nonlinear_index_with(
    config: &ReservoirConfig,
    a: &AdjacencyMatrix,
    opts: &NonlinearIndexOptions,
) -> Result<f64> {
    let res = Reservoir::new(config, a)?;
    let m = res.nodes();
    nonlinear_index_of(opts, |probe| {
        let s = probe.values();
        let cols = res.run_columns(s, 1, s.len())?;
        Ok(cols.rows(0, m).transpose())
    })
}
