//! Adjacency matrices and reservoir maps.
//!
//! Three node models share one trajectory type:
//!
//! - tanh nodes, `R(n+1) = g tanh(A R(n) + eps s(n) 1)`;
//! - delay-line ("multidimensional") nodes, where each node carries `d_e`
//!   components, the first driven through tanh with `delay_feedback` times the
//!   last component fed back, the rest a shift register;
//! - the linear map `R(n+1) = rho A R(n) + W s(n)`.
//!
//! A [`StateTrajectory`] row `k` holds `R(start + k)`, the state after the
//! inputs `s(0) .. s(start + k - 1)` have been consumed. Delay-line states are
//! stored component-major: columns `j*M .. (j+1)*M` hold component `j + 1` of
//! every node, so the first `M` columns are the `r_{i,1}` signals.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Norm beyond which the linear reservoir is declared divergent.
const LINEAR_DIVERGENCE: f64 = 1e12;

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidMatrix(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    let radius = |x: DMatrix<f64>| {
        nalgebra::Schur::try_new(x, f64::EPSILON, 10_000)
            .map(|s| s.complex_eigenvalues().iter().fold(0.0f64, |acc, z| acc.max(z.norm())))
    };
    if let Some(r) = radius(m.clone()) {
        return Ok(r);
    }
    // Shifted QR can stall on permutation-like matrices; a random orthogonal
    // similarity leaves the eigenvalues unchanged and breaks the symmetry.
    for attempt in 0..4u64 {
        let mut rng = seeding::rng(seeding::derive_seed(attempt, 0x5c4u64));
        let n = m.nrows();
        let q = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        if let Some(r) = radius(q.transpose() * m * &q) {
            return Ok(r);
        }
    }
    Err(Error::Numerical("Schur decomposition did not converge".into()))
}

/// Square coupling matrix with its occupied fraction and spectral radius.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
    eta_f: f64,
    spectral_radius: f64,
    seed: Option<u64>,
}

impl AdjacencyMatrix {
    /// Wraps an existing matrix, measuring its occupancy and spectral radius.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        let radius = spectral_radius(&entries)?;
        let n = entries.nrows();
        if n == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        let nnz = entries.iter().filter(|v| **v != 0.0).count();
        Ok(Self {
            eta_f: nnz as f64 / (n * n) as f64,
            entries,
            spectral_radius: radius,
            seed: None,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn eta_f(&self) -> f64 {
        self.eta_f
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|v| **v != 0.0).count()
    }

    /// Multiplies every entry by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self {
            entries: &self.entries * factor,
            eta_f: self.eta_f,
            spectral_radius: self.spectral_radius * factor,
            seed: self.seed,
        })
    }

    /// Dense row-major CSV, one matrix row per line, shortest round-trip floats.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in self.entries.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| Error::InvalidMatrix(format!("bad entry {f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("CSV matrix must be square and non-empty".into()));
        }
        Self::from_entries(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Random Gaussian adjacency matrix with `round(eta_f M^2)` nonzeros, at least
/// one in every row and column, rescaled to `spectral_radius`.
///
/// Coverage is guaranteed by seeding the pattern with a random permutation;
/// the remaining nonzeros are placed uniformly among the free positions.
pub fn make_adjacency(m: usize, eta_f: f64, spectral_radius: f64, seed: u64) -> Result<AdjacencyMatrix> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("matrix size must be at least 2, got {m}")));
    }
    if !(eta_f > 0.0 && eta_f <= 1.0) {
        return Err(Error::InvalidParameter(format!("eta_f must lie in (0, 1], got {eta_f}")));
    }
    if !(spectral_radius > 0.0 && spectral_radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("spectral radius must be positive, got {spectral_radius}")));
    }
    let total = m * m;
    let target = ((eta_f * total as f64).round() as usize).min(total);
    if target < m {
        return Err(Error::InvalidSparsity { m, eta_f });
    }

    let mut rng = seeding::rng(seed);
    let mut mask = vec![false; total];
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    for (i, &j) in perm.iter().enumerate() {
        mask[i * m + j] = true;
    }
    let free: Vec<usize> = (0..total).filter(|&p| !mask[p]).collect();
    for k in index::sample(&mut rng, free.len(), target - m) {
        mask[free[k]] = true;
    }

    // draw in row-major order so the values depend only on (seed, mask)
    let mut entries = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if mask[i * m + j] {
                entries[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let mut adj = AdjacencyMatrix::from_entries(entries)?;
    adj.seed = Some(seed);
    rescale_spectral_radius(&adj, spectral_radius)
}

/// Rescales every entry by `rho / current radius`.
pub fn rescale_spectral_radius(a: &AdjacencyMatrix, rho: f64) -> Result<AdjacencyMatrix> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("target spectral radius must be positive, got {rho}")));
    }
    if !(a.spectral_radius > 0.0) {
        return Err(Error::InvalidMatrix("matrix has zero spectral radius".into()));
    }
    let mut out = a.scaled(rho / a.spectral_radius)?;
    out.spectral_radius = rho;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Scalar tanh node.
    #[default]
    Tanh,
    /// Tanh node extended with a `d_e`-long internal delay line.
    Multidim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirConfig {
    /// Number of nodes.
    pub m: usize,
    /// Feedback gain.
    pub g: f64,
    /// Input multiplier.
    pub epsilon: f64,
    pub node: NodeKind,
    /// Components per node; only used by [`NodeKind::Multidim`].
    pub d_e: usize,
    /// Weight of the last delay component fed back into the tanh.
    pub delay_feedback: f64,
    pub washout: usize,
    pub n_fit: usize,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            m: 100,
            g: 1.0,
            epsilon: 1.0,
            node: NodeKind::Tanh,
            d_e: 1,
            delay_feedback: 0.5,
            washout: 1000,
            n_fit: 10_000,
        }
    }
}

impl ReservoirConfig {
    pub fn tanh(g: f64, epsilon: f64) -> Self {
        Self { g, epsilon, ..Self::default() }
    }

    pub fn multidim(g: f64, epsilon: f64, d_e: usize) -> Self {
        Self {
            g,
            epsilon,
            node: NodeKind::Multidim,
            d_e,
            ..Self::default()
        }
    }

    /// Components per node under the configured node model.
    pub fn components(&self) -> usize {
        match self.node {
            NodeKind::Tanh => 1,
            NodeKind::Multidim => self.d_e,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.m * self.components()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("node count must be at least 1".into()));
        }
        if self.d_e == 0 {
            return Err(Error::InvalidParameter("node dimension d_e must be at least 1".into()));
        }
        for (name, v) in [("g", self.g), ("epsilon", self.epsilon), ("delay_feedback", self.delay_feedback)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Reservoir states after washout.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    states: DMatrix<f64>,
    nodes: usize,
    components: usize,
    start: usize,
}

impl StateTrajectory {
    pub fn new(states: DMatrix<f64>, nodes: usize, components: usize, start: usize) -> Result<Self> {
        if states.ncols() != nodes * components {
            return Err(Error::DimensionMismatch(format!(
                "{} columns for {nodes} nodes x {components} components",
                states.ncols()
            )));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite reservoir state".into()));
        }
        Ok(Self { states, nodes, components, start })
    }

    /// `N x D` state matrix, one row per time step.
    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Time index of the first row.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Only the first component of every node.
    pub fn first_components(&self) -> StateTrajectory {
        StateTrajectory {
            states: self.states.columns(0, self.nodes).into_owned(),
            nodes: self.nodes,
            components: 1,
            start: self.start,
        }
    }

    /// Drops the first `rows` time steps.
    pub fn skip(&self, rows: usize) -> StateTrajectory {
        let rows = rows.min(self.len());
        StateTrajectory {
            states: self.states.rows(rows, self.len() - rows).into_owned(),
            nodes: self.nodes,
            components: self.components,
            start: self.start + rows,
        }
    }
}

/// A configured reservoir bound to its adjacency matrix.
#[derive(Debug, Clone, Copy)]
pub struct Reservoir<'a> {
    config: &'a ReservoirConfig,
    a: &'a DMatrix<f64>,
    kind: NodeKind,
}

impl<'a> Reservoir<'a> {
    pub fn new(config: &'a ReservoirConfig, a: &'a AdjacencyMatrix) -> Result<Self> {
        Self::with_kind(config, a, config.node)
    }

    fn with_kind(config: &'a ReservoirConfig, a: &'a AdjacencyMatrix, kind: NodeKind) -> Result<Self> {
        config.validate()?;
        if a.size() != config.m {
            return Err(Error::DimensionMismatch(format!(
                "adjacency is {0}x{0} but config has {1} nodes",
                a.size(),
                config.m
            )));
        }
        Ok(Self { config, a: &a.entries, kind })
    }

    pub fn config(&self) -> &ReservoirConfig {
        self.config
    }

    pub fn nodes(&self) -> usize {
        self.config.m
    }

    pub fn components(&self) -> usize {
        match self.kind {
            NodeKind::Tanh => 1,
            NodeKind::Multidim => self.config.d_e,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.nodes() * self.components()
    }

    /// Argument of the tanh for every node.
    pub fn preactivation(&self, state: &DVector<f64>, s: f64) -> DVector<f64> {
        let m = self.nodes();
        let mut u = DVector::from_element(m, self.config.epsilon * s);
        self.preactivation_into(state.as_slice(), s, &mut u);
        u
    }

    fn preactivation_into(&self, state: &[f64], s: f64, u: &mut DVector<f64>) {
        let m = self.nodes();
        u.fill(self.config.epsilon * s);
        let first = nalgebra::DVectorView::from_slice(&state[..m], m);
        u.gemv(1.0, self.a, &first, 1.0);
        if self.kind == NodeKind::Multidim {
            let last = &state[(self.components() - 1) * m..];
            for (ui, li) in u.iter_mut().zip(last) {
                *ui += self.config.delay_feedback * li;
            }
        }
    }

    /// Advances `state` by one input sample, using `u` as scratch.
    fn advance(&self, state: &mut [f64], s: f64, u: &mut DVector<f64>) {
        let m = self.nodes();
        self.preactivation_into(state, s, u);
        if self.kind == NodeKind::Multidim && self.components() > 1 {
            state.copy_within(0..(self.components() - 1) * m, m);
        }
        let g = self.config.g;
        for (r, ui) in state[..m].iter_mut().zip(u.iter()) {
            *r = g * ui.tanh();
        }
    }

    pub fn step(&self, state: &DVector<f64>, s: f64) -> DVector<f64> {
        let mut next = state.clone();
        let mut u = DVector::zeros(self.nodes());
        self.advance(next.as_mut_slice(), s, &mut u);
        next
    }

    /// Derivative of the node nonlinearity, `g sech^2(u)`, per node.
    pub fn gains(&self, state: &DVector<f64>, s: f64) -> DVector<f64> {
        let u = self.preactivation(state, s);
        u.map(|v| self.config.g * sech2(v))
    }

    /// Applies the Jacobian with node gains `gains` to the columns of `delta`.
    pub fn apply_jacobian(&self, gains: &DVector<f64>, delta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.state_dim(), delta.ncols());
        self.apply_jacobian_into(gains, delta, &mut out);
        out
    }

    pub(crate) fn apply_jacobian_into(&self, gains: &DVector<f64>, delta: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let m = self.nodes();
        let c = self.components();
        let k = delta.ncols();
        let mut head = out.rows_mut(0, m);
        head.gemm(1.0, self.a, &delta.rows(0, m), 0.0);
        if self.kind == NodeKind::Multidim {
            head += delta.rows((c - 1) * m, m) * self.config.delay_feedback;
        }
        for j in 0..k {
            for i in 0..m {
                head[(i, j)] *= gains[i];
            }
        }
        if self.kind == NodeKind::Multidim && c > 1 {
            out.rows_mut(m, (c - 1) * m).copy_from(&delta.rows(0, (c - 1) * m));
        }
    }

    /// Explicit `D x D` Jacobian of [`Reservoir::step`] at `(state, s)`.
    pub fn jacobian(&self, state: &DVector<f64>, s: f64) -> DMatrix<f64> {
        let d = self.state_dim();
        self.apply_jacobian(&self.gains(state, s), &DMatrix::identity(d, d))
    }

    /// Drives from the zero state and returns the `D x n_record` states
    /// `R(record_from) .. R(record_from + n_record - 1)` as columns.
    pub(crate) fn run_columns(&self, s: &[f64], record_from: usize, n_record: usize) -> Result<DMatrix<f64>> {
        let needed = record_from + n_record;
        if s.len() + 1 < needed {
            return Err(Error::InsufficientData { needed: needed - 1, available: s.len() });
        }
        if let Some(i) = s[..needed.saturating_sub(1)].iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite input sample at index {i}")));
        }
        let d = self.state_dim();
        let mut out = DMatrix::zeros(d, n_record);
        let mut state = vec![0.0; d];
        let mut u = DVector::zeros(self.nodes());
        for n in 0..needed {
            if n >= record_from {
                out.column_mut(n - record_from).copy_from_slice(&state);
            }
            if n + 1 < needed {
                self.advance(&mut state, s[n], &mut u);
            }
        }
        Ok(out)
    }

    /// Drives from `R(0) = 0` and keeps the `n_fit` states after `washout`.
    pub fn drive(&self, s: &[f64]) -> Result<StateTrajectory> {
        let (washout, n_fit) = (self.config.washout, self.config.n_fit);
        if s.len() < washout + n_fit {
            return Err(Error::InsufficientData { needed: washout + n_fit, available: s.len() });
        }
        let cols = self.run_columns(s, washout, n_fit)?;
        StateTrajectory::new(cols.transpose(), self.nodes(), self.components(), washout)
    }
}

fn sech2(u: f64) -> f64 {
    let c = u.cosh();
    if c.is_finite() {
        1.0 / (c * c)
    } else {
        0.0
    }
}

/// Scalar tanh reservoir, regardless of `config.node`.
pub fn drive_tanh(config: &ReservoirConfig, a: &AdjacencyMatrix, s: &crate::TimeSeries) -> Result<StateTrajectory> {
    Reservoir::with_kind(config, a, NodeKind::Tanh)?.drive(s.values())
}

/// Delay-line reservoir with `config.d_e` components per node.
pub fn drive_multidim(config: &ReservoirConfig, a: &AdjacencyMatrix, s: &crate::TimeSeries) -> Result<StateTrajectory> {
    Reservoir::with_kind(config, a, NodeKind::Multidim)?.drive(s.values())
}

/// Dispatches on `config.node`.
pub fn drive(config: &ReservoirConfig, a: &AdjacencyMatrix, s: &crate::TimeSeries) -> Result<StateTrajectory> {
    Reservoir::new(config, a)?.drive(s.values())
}

/// Linear reservoir with all-ones input vector; returns `R(1) ..= R(n_steps)`.
pub fn drive_linear(a: &AdjacencyMatrix, rho: f64, s: &crate::TimeSeries, n_steps: usize) -> Result<StateTrajectory> {
    let w = DVector::from_element(a.size(), 1.0);
    drive_linear_weighted(a, rho, &w, s.values(), n_steps)
}

/// Linear reservoir `R(n+1) = rho A R(n) + w s(n)` from `R(0) = 0`.
pub fn drive_linear_weighted(
    a: &AdjacencyMatrix,
    rho: f64,
    w: &DVector<f64>,
    s: &[f64],
    n_steps: usize,
) -> Result<StateTrajectory> {
    let m = a.size();
    if w.len() != m {
        return Err(Error::DimensionMismatch(format!("input vector has {} entries for {m} nodes", w.len())));
    }
    if s.len() < n_steps {
        return Err(Error::InsufficientData { needed: n_steps, available: s.len() });
    }
    if let Some(i) = s[..n_steps].iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite input sample at index {i}")));
    }
    let mut out = DMatrix::zeros(m, n_steps);
    let mut state = DVector::zeros(m);
    let mut next = DVector::zeros(m);
    for (n, &sn) in s[..n_steps].iter().enumerate() {
        next.copy_from(w);
        next.gemv(rho, &a.entries, &state, sn);
        std::mem::swap(&mut state, &mut next);
        if !(state.norm() <= LINEAR_DIVERGENCE) {
            return Err(Error::LinearDiverged { step: n + 1 });
        }
        out.set_column(n, &state);
    }
    StateTrajectory::new(out.transpose(), m, 1, 1)
}
