//! Seeded parameter sweeps over the reservoir statistics.
//!
//! A [`SweepSpec`] names a driver, a parameter grid, a list of seeds and the
//! metrics to evaluate. [`run_sweep`] evaluates the Cartesian product of the
//! grid for every seed, one grid point per task, and returns a
//! [`MetricReport`] whose CSV rendering is bit-identical across runs and
//! worker counts. Wall time is recorded only in the JSON manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lyapunov::{lyapunov_spectrum, LyapunovSpec};
use crate::memory::{
    delay_capacity, memory_capacity_with, nonlinear_index_with, norm_of_variation_with, total_memory_capacity,
    MatrixNorm, NonlinearIndexOptions, VariationOptions, DEFAULT_L_REG, DEFAULT_SAMPLES, DEFAULT_TAU_MAX,
};
use crate::netstats::{calibrate_spectral_radius, linear_delay_coefficients, path_lengths};
use crate::readout::{fit_and_test, FitComponents, ReadoutOptions, Regularization};
use crate::reservoir::{self, make_adjacency, rescale_spectral_radius, AdjacencyMatrix, NodeKind, ReservoirConfig};
use crate::seeding::{derive_seed, stream};
use crate::signals::{autocorrelation, gaussian_noise, integrate, narma_generate, NarmaParams, OdeSystem, TimeSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driver {
    /// Lorenz x drives the reservoir, Lorenz z is the fit target.
    Lorenz,
    /// Rössler x drives the reservoir, Rössler z is the fit target.
    Rossler,
    /// NARMA input drives the reservoir, the NARMA output is the fit target.
    Narma,
    /// Gaussian white noise with no fit target.
    Noise,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::Lorenz => "lorenz",
            Driver::Rossler => "rossler",
            Driver::Narma => "narma",
            Driver::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Total memory capacity from a white-noise drive.
    MemoryCapacity,
    /// Per-delay memory capacity, indexed by τ.
    MemoryCurve,
    /// Delay capacity of the driver response.
    DelayCapacity,
    /// Whitened cross-covariance trace, indexed by τ.
    DelayTrace,
    NormOfVariation,
    /// Mean perturbation norm, indexed by step.
    VariationCurve,
    /// Train and test NRMSE for each configured fit mode.
    Fit,
    /// Largest Lyapunov exponents, indexed by rank.
    Lyapunov,
    NonlinearIndex,
    /// Mean unweighted and weighted path lengths.
    PathLength,
    /// Spectral radius of the adjacency matrix actually used.
    SpectralRadius,
    /// Node-averaged linear delay coefficients, indexed 1 to 4.
    DelayCoefficients,
    /// Autocorrelation of the drive signal, indexed by lag.
    Autocorrelation,
}

/// Parameter axes. Every combination is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub g: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub eta_f: Vec<f64>,
    pub d_e: Vec<usize>,
    pub narma_order: Vec<usize>,
    /// Spectral radius of the adjacency matrix; ignored when calibrating.
    pub rho: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { g: vec![1.0], epsilon: vec![1.0], eta_f: vec![1.0], d_e: vec![1], narma_order: vec![10], rho: vec![1.0] }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub g: f64,
    pub epsilon: f64,
    pub eta_f: f64,
    pub d_e: usize,
    pub narma_order: usize,
    pub rho: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.g.len() * self.epsilon.len() * self.eta_f.len() * self.d_e.len() * self.narma_order.len() * self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points with `narma_order` varying fastest and `eta_f` slowest.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &eta_f in &self.eta_f {
            for &rho in &self.rho {
                for &g in &self.g {
                    for &epsilon in &self.epsilon {
                        for &d_e in &self.d_e {
                            for &narma_order in &self.narma_order {
                                out.push(GridPoint { g, epsilon, eta_f, d_e, narma_order, rho });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub experiment: String,
    pub driver: Driver,
    pub metrics: Vec<Metric>,
    pub seeds: Vec<u64>,
    pub node: NodeKind,
    pub m: usize,
    pub washout: usize,
    pub n_fit: usize,
    pub delay_feedback: f64,
    pub grid: Grid,
    /// Rescale every adjacency matrix so its mean weighted path length hits this value.
    pub calibrate_weighted_path: Option<f64>,
    pub tau_max: usize,
    pub n_samples: usize,
    pub l_reg: f64,
    pub variation_norm: MatrixNorm,
    /// Regularization of the memory-capacity fits.
    pub mc_regularization: Regularization,
    pub readout: ReadoutOptions,
    pub fit_modes: Vec<FitComponents>,
    pub lyapunov: LyapunovSpec,
    pub nonlinear: NonlinearIndexOptions,
    pub output: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            experiment: "custom".into(),
            driver: Driver::Lorenz,
            metrics: vec![Metric::MemoryCapacity],
            seeds: vec![0, 1, 2, 3],
            node: NodeKind::Tanh,
            m: 100,
            washout: 1000,
            n_fit: 10_000,
            delay_feedback: 0.5,
            grid: Grid::default(),
            calibrate_weighted_path: None,
            tau_max: DEFAULT_TAU_MAX,
            n_samples: DEFAULT_SAMPLES,
            l_reg: DEFAULT_L_REG,
            variation_norm: MatrixNorm::Frobenius,
            mc_regularization: Regularization::default(),
            readout: ReadoutOptions::default(),
            fit_modes: vec![FitComponents::All],
            lyapunov: LyapunovSpec::default(),
            nonlinear: NonlinearIndexOptions::default(),
            output: None,
        }
    }
}

impl SweepSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.experiment.is_empty() {
            return bad("experiment name is empty".into());
        }
        if self.metrics.is_empty() {
            return bad("no metrics requested".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds given".into());
        }
        if self.grid.is_empty() {
            return bad("parameter grid is empty".into());
        }
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.n_fit == 0 {
            return bad("n_fit must be positive".into());
        }
        if self.fit_modes.is_empty() && self.metrics.contains(&Metric::Fit) {
            return bad("fit requested with no fit modes".into());
        }
        let g = &self.grid;
        if let Some(v) = g.g.iter().chain(&g.epsilon).find(|v| !v.is_finite()) {
            return bad(format!("g and epsilon must be finite, got {v}"));
        }
        if let Some(v) = g.eta_f.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return bad(format!("eta_f must lie in (0, 1], got {v}"));
        }
        if let Some(v) = g.rho.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return bad(format!("rho must be positive, got {v}"));
        }
        if g.d_e.contains(&0) || g.narma_order.contains(&0) {
            return bad("d_e and narma_order must be at least 1".into());
        }
        if let Some(t) = self.calibrate_weighted_path {
            if !t.is_finite() {
                return bad("calibration target must be finite".into());
            }
            if g.rho.len() > 1 {
                return bad("rho cannot be swept while calibrating the weighted path length".into());
            }
        }
        Ok(())
    }

    /// A reduced copy for smoke runs: one seed, at most three values per
    /// axis, short fits and few samples.
    pub fn quick(&self) -> SweepSpec {
        fn thin<T: Copy>(v: &[T]) -> Vec<T> {
            match v.len() {
                0..=3 => v.to_vec(),
                n => vec![v[0], v[n / 2], v[n - 1]],
            }
        }
        let mut q = self.clone();
        q.seeds.truncate(1);
        q.grid = Grid {
            g: thin(&self.grid.g),
            epsilon: thin(&self.grid.epsilon),
            eta_f: thin(&self.grid.eta_f),
            d_e: thin(&self.grid.d_e),
            narma_order: thin(&self.grid.narma_order),
            rho: thin(&self.grid.rho),
        };
        q.m = self.m.min(30);
        q.washout = self.washout.min(200);
        q.n_fit = self.n_fit.min(1000);
        q.tau_max = self.tau_max.min(20);
        q.n_samples = self.n_samples.min(10);
        q.lyapunov.n_steps = self.lyapunov.n_steps.min(2000);
        q.lyapunov.report_every = self.lyapunov.report_every.min(500);
        q.nonlinear = NonlinearIndexOptions { n_probes: 4, min_probe_len: 512, washout: 200 };
        q
    }

    fn reservoir_config(&self, p: &GridPoint) -> ReservoirConfig {
        ReservoirConfig {
            m: self.m,
            g: p.g,
            epsilon: p.epsilon,
            node: self.node,
            d_e: p.d_e,
            delay_feedback: self.delay_feedback,
            washout: self.washout,
            n_fit: self.n_fit,
        }
    }
}

/// One CSV row. `seed == None` marks a mean over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub experiment: String,
    pub driver: Driver,
    pub seed: Option<u64>,
    pub g: f64,
    pub epsilon: f64,
    pub eta_f: f64,
    pub d_e: usize,
    pub narma_order: usize,
    pub rho: f64,
    pub metric: String,
    pub index: usize,
    pub value: f64,
    pub status: String,
}

impl MetricRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn is_mean(&self) -> bool {
        self.seed.is_none()
    }
}

pub const CSV_HEADER: [&str; 13] = [
    "experiment",
    "driver",
    "seed",
    "g",
    "epsilon",
    "eta_f",
    "d_e",
    "narma_order",
    "rho",
    "metric",
    "index",
    "value",
    "status",
];

/// Timing of one (grid point, seed) task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub point: usize,
    pub seed: u64,
    pub adjacency_seed: u64,
    pub params: GridPoint,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub spec: SweepSpec,
    pub rows: Vec<MetricRow>,
    pub points: Vec<PointRecord>,
    pub wall_time_s: f64,
}

impl MetricReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let seed = r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
            out.write_record([
                r.experiment.clone(),
                r.driver.name().to_string(),
                seed,
                r.g.to_string(),
                r.epsilon.to_string(),
                r.eta_f.to_string(),
                r.d_e.to_string(),
                r.narma_order.to_string(),
                r.rho.to_string(),
                r.metric.clone(),
                r.index.to_string(),
                r.value.to_string(),
                r.status.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "software": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "spec": self.spec,
            "rows": self.rows.len(),
            "points": self.points,
            "wall_time_s": self.wall_time_s,
        })
    }

    /// Writes `<experiment>.csv` and `<experiment>.json` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.spec.experiment));
        let json_path = dir.join(format!("{}.json", self.spec.experiment));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
        std::fs::write(&json_path, serde_json::to_string_pretty(&self.manifest())?)?;
        Ok((csv_path, json_path))
    }

    /// Rows of `metric` at `index`, either per seed or the means.
    pub fn select<'a>(&'a self, metric: &'a str, index: usize, means: bool) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric && r.index == index && r.is_mean() == means)
    }
}

struct Network {
    adjacency: AdjacencyMatrix,
    rho: f64,
}

fn build_network(spec: &SweepSpec, seed: u64, eta_f: f64, rho: f64) -> Result<Network> {
    let unit = make_adjacency(spec.m, eta_f, 1.0, derive_seed(seed, stream::ADJACENCY))?;
    let rho = match spec.calibrate_weighted_path {
        Some(target) => calibrate_spectral_radius(&unit, target)?,
        None => rho,
    };
    let adjacency = if rho == 1.0 { unit } else { rescale_spectral_radius(&unit, rho)? };
    Ok(Network { adjacency, rho })
}

/// Drive and target series for one seed.
struct DriveData {
    train_in: TimeSeries,
    train_target: Option<TimeSeries>,
    test_in: TimeSeries,
    test_target: Option<TimeSeries>,
}

fn generate(driver: Driver, narma_order: usize, len: usize, seed: u64) -> Result<(TimeSeries, Option<TimeSeries>)> {
    match driver {
        Driver::Lorenz | Driver::Rossler => {
            let system = if driver == Driver::Lorenz { OdeSystem::Lorenz } else { OdeSystem::Rossler };
            let t = integrate(system, &system.default_params(), len, seed)?;
            Ok((t.x, Some(t.z)))
        }
        Driver::Narma => {
            let (u, y) = narma_generate(&NarmaParams::new(narma_order), len, seed)?;
            Ok((u, Some(y)))
        }
        Driver::Noise => Ok((gaussian_noise(len, seed), None)),
    }
}

fn drive_data(spec: &SweepSpec, p: &GridPoint, seed: u64) -> Result<DriveData> {
    let len = spec.washout + spec.n_fit;
    let (train_in, train_target) = generate(spec.driver, p.narma_order, len, derive_seed(seed, stream::TRAIN))?;
    let (test_in, test_target) = generate(spec.driver, p.narma_order, len, derive_seed(seed, stream::TEST))?;
    Ok(DriveData { train_in, train_target, test_in, test_target })
}

fn cached_drive<'d>(
    data: &'d mut Option<Result<DriveData>>,
    spec: &SweepSpec,
    p: &GridPoint,
    seed: u64,
) -> Result<&'d DriveData> {
    let d = data.get_or_insert_with(|| drive_data(spec, p, seed));
    d.as_ref().map_err(|e| Error::InvalidInput(format!("drive generation failed: {e}")))
}

fn fit_suffix(mode: FitComponents) -> &'static str {
    match mode {
        FitComponents::All => "",
        FitComponents::First => "_first",
    }
}

/// Metric rows for one metric at one point: `(name, index, value)`.
type Values = Vec<(String, usize, f64)>;

fn evaluate_metric(
    spec: &SweepSpec,
    metric: Metric,
    p: &GridPoint,
    seed: u64,
    net: &Network,
    data: &mut Option<Result<DriveData>>,
) -> Result<Values> {
    let cfg = spec.reservoir_config(p);
    let a = &net.adjacency;
    let one = |name: &str, v: f64| vec![(name.to_string(), 0, v)];
    Ok(match metric {
        Metric::MemoryCapacity | Metric::MemoryCurve => {
            let curve = memory_capacity_with(&cfg, a, derive_seed(seed, stream::NOISE), spec.tau_max, spec.mc_regularization)?;
            if metric == Metric::MemoryCapacity {
                one("memory_capacity", total_memory_capacity(&curve))
            } else {
                curve.iter().map(|(tau, v)| ("memory_curve".to_string(), tau, v)).collect()
            }
        }
        Metric::DelayCapacity | Metric::DelayTrace => {
            let traj = reservoir::drive(&cfg, a, &cached_drive(data, spec, p, seed)?.train_in)?;
            let dc = delay_capacity(&traj, spec.tau_max, spec.l_reg)?;
            if metric == Metric::DelayCapacity {
                one("delay_capacity", dc.theta_d)
            } else {
                dc.curve.iter().map(|(tau, v)| ("delay_trace".to_string(), tau, v)).collect()
            }
        }
        Metric::NormOfVariation | Metric::VariationCurve => {
            let opts = VariationOptions {
                tau_max: spec.tau_max,
                n_samples: spec.n_samples,
                norm: spec.variation_norm,
                seed,
            };
            let v = norm_of_variation_with(&cfg, a, &cached_drive(data, spec, p, seed)?.train_in, &opts)?;
            if metric == Metric::NormOfVariation {
                one("norm_of_variation", v.d_var)
            } else {
                v.norms.iter().enumerate().map(|(n, &x)| ("variation_curve".to_string(), n, x)).collect()
            }
        }
        Metric::Fit => {
            let d = cached_drive(data, spec, p, seed)?;
            let (Some(train_target), Some(test_target)) = (&d.train_target, &d.test_target) else {
                return Err(Error::InvalidParameter(format!("driver {} has no fit target", spec.driver.name())));
            };
            let train = reservoir::drive(&cfg, a, &d.train_in)?;
            let test = reservoir::drive(&cfg, a, &d.test_in)?;
            let mut out = Vec::new();
            for &mode in &spec.fit_modes {
                let opts = ReadoutOptions { components: mode, ..spec.readout };
                let r = fit_and_test(&train, train_target.values(), &test, test_target.values(), &opts)?;
                let sfx = fit_suffix(mode);
                out.push((format!("train_error{sfx}"), 0, r.train_error));
                out.push((format!("test_error{sfx}"), 0, r.test_error));
            }
            out
        }
        Metric::Lyapunov => {
            let len = spec.washout + spec.lyapunov.n_steps;
            let (drive, _) = generate(spec.driver, p.narma_order, len, derive_seed(seed, stream::TRAIN))?;
            let res = lyapunov_spectrum(&cfg, a, &drive, &spec.lyapunov, seed)?;
            res.exponents.iter().enumerate().map(|(k, &x)| ("lyapunov".to_string(), k, x)).collect()
        }
        Metric::NonlinearIndex => one("nonlinear_index", nonlinear_index_with(&cfg, a, &spec.nonlinear)?),
        Metric::PathLength => {
            let r = path_lengths(a)?;
            vec![
                ("mean_unweighted_path_length".to_string(), 0, r.mean_unweighted),
                ("mean_weighted_path_length".to_string(), 0, r.mean_weighted),
                ("unreachable_pairs".to_string(), 0, r.unreachable_pairs as f64),
            ]
        }
        Metric::SpectralRadius => one("spectral_radius", net.rho),
        Metric::DelayCoefficients => {
            let unit = a.scaled(1.0 / net.rho)?;
            let b = linear_delay_coefficients(&unit, net.rho)?;
            b.mean_abs.iter().enumerate().map(|(j, &x)| ("delay_coefficient".to_string(), j + 1, x)).collect()
        }
        Metric::Autocorrelation => {
            let c = autocorrelation(&cached_drive(data, spec, p, seed)?.train_in, spec.tau_max)?;
            c.into_iter().enumerate().map(|(lag, x)| ("autocorrelation".to_string(), lag, x)).collect()
        }
    })
}

fn metric_label(metric: Metric) -> String {
    serde_json::to_value(metric)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{metric:?}"))
}

fn evaluate_point(spec: &SweepSpec, p: &GridPoint, seed: u64, net: &Result<Network>) -> Vec<MetricRow> {
    let row = |rho: f64, metric: String, index: usize, value: f64, status: String| MetricRow {
        experiment: spec.experiment.clone(),
        driver: spec.driver,
        seed: Some(seed),
        g: p.g,
        epsilon: p.epsilon,
        eta_f: p.eta_f,
        d_e: p.d_e,
        narma_order: p.narma_order,
        rho,
        metric,
        index,
        value,
        status,
    };
    let net = match net {
        Ok(n) => n,
        Err(e) => {
            return spec
                .metrics
                .iter()
                .map(|&m| row(p.rho, metric_label(m), 0, f64::NAN, format!("error: {e}")))
                .collect();
        }
    };
    let mut data = None;
    let mut out = Vec::new();
    for &m in &spec.metrics {
        match evaluate_metric(spec, m, p, seed, net, &mut data) {
            Ok(values) => {
                out.extend(values.into_iter().map(|(name, i, v)| row(net.rho, name, i, v, "ok".into())));
            }
            Err(e) => out.push(row(net.rho, metric_label(m), 0, f64::NAN, format!("error: {e}"))),
        }
    }
    out
}

/// Mean rows over seeds for one grid point, in first-seen row order.
fn mean_rows(per_seed: &[Vec<MetricRow>], n_seeds: usize) -> Vec<MetricRow> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, usize), Vec<&MetricRow>> = BTreeMap::new();
    for r in per_seed.iter().flatten() {
        let key = (r.metric.clone(), r.index);
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let ok: Vec<&&MetricRow> = rows.iter().filter(|r| r.is_ok()).collect();
            let mean = |f: &dyn Fn(&MetricRow) -> f64| -> f64 {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            let status = match ok.len() {
                0 => "error".to_string(),
                k if k == n_seeds => "ok".to_string(),
                k => format!("partial {k}/{n_seeds}"),
            };
            let first = rows[0];
            MetricRow {
                seed: None,
                rho: if ok.is_empty() { first.rho } else { mean(&|r| r.rho) },
                value: mean(&|r| r.value),
                status,
                ..first.clone()
            }
        })
        .collect()
}

/// Evaluates every (grid point, seed) pair on a pool of `workers` threads
/// (0 means the rayon default). Rows are ordered by grid point, then seed,
/// then metric, followed by the mean rows of that grid point.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<MetricReport> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    let started = Instant::now();
    let points = spec.grid.points();
    let n_seeds = spec.seeds.len();

    pool.install(|| {
        // One network per (seed, eta_f, rho), shared by the rest of the grid.
        let net_keys: Vec<(u64, f64, f64)> = spec
            .seeds
            .iter()
            .flat_map(|&s| spec.grid.eta_f.iter().flat_map(move |&e| spec.grid.rho.iter().map(move |&r| (s, e, r))))
            .collect();
        let nets: Vec<Result<Network>> =
            net_keys.par_iter().map(|&(s, e, r)| build_network(spec, s, e, r)).collect();
        let net_for = |seed_idx: usize, p: &GridPoint| -> &Result<Network> {
            let e = spec.grid.eta_f.iter().position(|&v| v == p.eta_f).expect("grid value");
            let r = spec.grid.rho.iter().position(|&v| v == p.rho).expect("grid value");
            &nets[(seed_idx * spec.grid.eta_f.len() + e) * spec.grid.rho.len() + r]
        };

        let tasks: Vec<(usize, usize)> = (0..points.len()).flat_map(|i| (0..n_seeds).map(move |s| (i, s))).collect();
        let results: Vec<(Vec<MetricRow>, PointRecord)> = tasks
            .par_iter()
            .map(|&(i, s)| {
                let t0 = Instant::now();
                let seed = spec.seeds[s];
                let net = net_for(s, &points[i]);
                let rows = evaluate_point(spec, &points[i], seed, net);
                let record = PointRecord {
                    point: i,
                    seed,
                    adjacency_seed: derive_seed(seed, stream::ADJACENCY),
                    params: GridPoint { rho: net.as_ref().map_or(points[i].rho, |n| n.rho), ..points[i] },
                    wall_time_s: t0.elapsed().as_secs_f64(),
                };
                (rows, record)
            })
            .collect();

        let mut rows = Vec::new();
        let mut records = Vec::with_capacity(results.len());
        for chunk in results.chunks(n_seeds) {
            let per_seed: Vec<Vec<MetricRow>> = chunk.iter().map(|(r, _)| r.clone()).collect();
            rows.extend(per_seed.iter().flatten().cloned());
            rows.extend(mean_rows(&per_seed, n_seeds));
            records.extend(chunk.iter().map(|(_, rec)| rec.clone()));
        }
        Ok(MetricReport { spec: spec.clone(), rows, points: records, wall_time_s: started.elapsed().as_secs_f64() })
    })
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Sparsity values used by the network sweeps.
pub const ETA_GRID: [f64; 11] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Input multipliers used by the sparsity sweeps.
pub const SPARSITY_EPSILON: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];

/// Weighted path length held fixed by the calibrated sweeps.
pub const CALIBRATED_WEIGHTED_PATH: f64 = 2.0;

/// Gain of the calibrated sparsity sweeps.
pub const SPARSITY_GAIN: f64 = 0.35;

/// Named sweeps reproducing each experiment at desk scale.
pub fn preset_experiments() -> Vec<SweepSpec> {
    let base = SweepSpec::default();
    let surface = log_space(0.05, 2.0, 20);
    let memory = vec![Metric::MemoryCapacity, Metric::DelayCapacity, Metric::NormOfVariation];
    let with_fit = |mut v: Vec<Metric>| {
        v.push(Metric::Fit);
        v
    };
    let both_fits = vec![FitComponents::All, FitComponents::First];
    let d_e: Vec<usize> = (1..=10).collect();
    let sparsity = |name: &str, driver: Driver| SweepSpec {
        experiment: name.into(),
        driver,
        metrics: with_fit(vec![Metric::SpectralRadius, Metric::MemoryCapacity, Metric::DelayCapacity, Metric::NormOfVariation]),
        calibrate_weighted_path: Some(CALIBRATED_WEIGHTED_PATH),
        grid: Grid { g: vec![SPARSITY_GAIN], epsilon: SPARSITY_EPSILON.to_vec(), eta_f: ETA_GRID.to_vec(), ..Grid::default() },
        ..base.clone()
    };
    let multidim_fits = |name: &str, driver: Driver| SweepSpec {
        experiment: name.into(),
        driver,
        metrics: vec![Metric::Fit],
        node: NodeKind::Multidim,
        fit_modes: both_fits.clone(),
        grid: Grid { g: vec![0.35], epsilon: vec![0.5], d_e: d_e.clone(), ..Grid::default() },
        ..base.clone()
    };
    let single = |name: &str, driver: Driver, metrics: Vec<Metric>| SweepSpec {
        experiment: name.into(),
        driver,
        metrics,
        ..base.clone()
    };
    vec![
        SweepSpec {
            experiment: "lorenz-grid".into(),
            metrics: with_fit(memory.clone()),
            grid: Grid { g: surface.clone(), epsilon: surface.clone(), ..Grid::default() },
            ..base.clone()
        },
        SweepSpec {
            experiment: "lorenz-nonlinearity".into(),
            metrics: vec![Metric::NonlinearIndex, Metric::Lyapunov, Metric::MemoryCapacity],
            grid: Grid { g: log_space(0.05, 2.0, 10), epsilon: log_space(0.05, 2.0, 10), ..Grid::default() },
            ..base.clone()
        },
        sparsity("sparsity", Driver::Lorenz),
        sparsity("sparsity-rossler", Driver::Rossler),
        SweepSpec {
            experiment: "sparsity-uncalibrated".into(),
            metrics: vec![Metric::MemoryCapacity, Metric::PathLength],
            grid: Grid { g: vec![1.0], epsilon: SPARSITY_EPSILON.to_vec(), eta_f: ETA_GRID.to_vec(), ..Grid::default() },
            ..base.clone()
        },
        SweepSpec {
            experiment: "multidim-memory".into(),
            metrics: memory.clone(),
            node: NodeKind::Multidim,
            grid: Grid { g: vec![0.35], epsilon: vec![0.5], d_e: d_e.clone(), ..Grid::default() },
            ..base.clone()
        },
        multidim_fits("multidim-fits", Driver::Lorenz),
        multidim_fits("multidim-fits-rossler", Driver::Rossler),
        SweepSpec {
            experiment: "narma-grid".into(),
            driver: Driver::Narma,
            metrics: vec![Metric::Fit],
            node: NodeKind::Multidim,
            grid: Grid {
                g: vec![0.35],
                epsilon: vec![0.35],
                d_e: (1..=12).collect(),
                narma_order: (1..=10).collect(),
                ..Grid::default()
            },
            ..base.clone()
        },
        SweepSpec {
            experiment: "path-length".into(),
            metrics: vec![Metric::PathLength],
            grid: Grid { eta_f: ETA_GRID.to_vec(), ..Grid::default() },
            ..base.clone()
        },
        SweepSpec {
            experiment: "spectral-radius".into(),
            metrics: vec![Metric::SpectralRadius, Metric::PathLength],
            calibrate_weighted_path: Some(CALIBRATED_WEIGHTED_PATH),
            grid: Grid { eta_f: ETA_GRID.to_vec(), ..Grid::default() },
            ..base.clone()
        },
        SweepSpec {
            experiment: "delay-coefficients".into(),
            metrics: vec![Metric::SpectralRadius, Metric::DelayCoefficients],
            calibrate_weighted_path: Some(CALIBRATED_WEIGHTED_PATH),
            grid: Grid { eta_f: ETA_GRID.to_vec(), ..Grid::default() },
            ..base.clone()
        },
        single("memory-curve", Driver::Noise, vec![Metric::MemoryCurve]),
        single("perturbation", Driver::Lorenz, vec![Metric::VariationCurve]),
        single("delay-trace", Driver::Lorenz, vec![Metric::DelayTrace]),
        SweepSpec { tau_max: 1000, ..single("autocorrelation-lorenz", Driver::Lorenz, vec![Metric::Autocorrelation]) },
        SweepSpec { tau_max: 1000, ..single("autocorrelation-rossler", Driver::Rossler, vec![Metric::Autocorrelation]) },
    ]
}

pub fn preset(name: &str) -> Option<SweepSpec> {
    preset_experiments().into_iter().find(|s| s.experiment == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::memory_capacity_with;

    fn tiny(metrics: Vec<Metric>) -> SweepSpec {
        SweepSpec {
            experiment: "tiny".into(),
            metrics,
            seeds: vec![3, 4],
            m: 12,
            washout: 100,
            n_fit: 600,
            tau_max: 10,
            n_samples: 5,
            grid: Grid { g: vec![0.5, 0.9], epsilon: vec![0.3], eta_f: vec![0.5], ..Grid::default() },
            ..SweepSpec::default()
        }
    }

    #[test]
    fn grid_points_cover_the_product() {
        let g = Grid { g: vec![1.0, 2.0], epsilon: vec![0.1, 0.2, 0.3], d_e: vec![1, 2], ..Grid::default() };
        let pts = g.points();
        assert_eq!(pts.len(), 12);
        assert_eq!(g.len(), 12);
        assert_eq!(pts[0].d_e, 1);
        assert_eq!(pts[1].d_e, 2);
        assert_eq!(pts[2].epsilon, 0.2);
    }

    #[test]
    fn single_point_matches_direct_call() {
        let spec = SweepSpec { seeds: vec![5], grid: Grid { g: vec![0.8], epsilon: vec![0.4], ..Grid::default() }, ..tiny(vec![Metric::MemoryCapacity]) };
        let report = run_sweep(&spec, 1).unwrap();
        let a = make_adjacency(12, 1.0, 1.0, derive_seed(5, stream::ADJACENCY)).unwrap();
        let cfg = ReservoirConfig { m: 12, washout: 100, n_fit: 600, ..ReservoirConfig::tanh(0.8, 0.4) };
        let curve = memory_capacity_with(&cfg, &a, derive_seed(5, stream::NOISE), 10, Regularization::default()).unwrap();
        let row = report.select("memory_capacity", 0, false).next().unwrap();
        assert_eq!(row.value, total_memory_capacity(&curve));
        let mean = report.select("memory_capacity", 0, true).next().unwrap();
        assert_eq!(mean.value, row.value);
    }

    #[test]
    fn csv_is_identical_across_runs_and_workers() {
        let spec = tiny(vec![Metric::MemoryCapacity, Metric::Fit, Metric::NormOfVariation, Metric::PathLength]);
        let a = run_sweep(&spec, 1).unwrap().to_csv_string().unwrap();
        let b = run_sweep(&spec, 3).unwrap().to_csv_string().unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("experiment,driver,seed,g,epsilon"));
    }

    #[test]
    fn failures_become_error_rows() {
        let spec = SweepSpec { driver: Driver::Noise, ..tiny(vec![Metric::Fit, Metric::MemoryCapacity]) };
        let report = run_sweep(&spec, 1).unwrap();
        let fit: Vec<_> = report.rows.iter().filter(|r| r.metric == "fit").collect();
        assert_eq!(fit.len(), 2 * 2 + 2);
        assert!(fit.iter().all(|r| r.status.starts_with("error") && r.value.is_nan()));
        assert!(report.select("memory_capacity", 0, false).all(|r| r.is_ok()));
    }

    #[test]
    fn invalid_sparsity_does_not_abort() {
        let spec = SweepSpec {
            grid: Grid { eta_f: vec![0.001, 0.5], ..Grid::default() },
            ..tiny(vec![Metric::PathLength])
        };
        let report = run_sweep(&spec, 1).unwrap();
        assert!(report.rows.iter().any(|r| r.eta_f == 0.001 && r.status.starts_with("error")));
        assert!(report.rows.iter().any(|r| r.eta_f == 0.5 && r.is_ok()));
    }

    #[test]
    fn mean_rows_average_seeds() {
        let report = run_sweep(&tiny(vec![Metric::MemoryCapacity]), 2).unwrap();
        for g in [0.5, 0.9] {
            let per: Vec<f64> = report.select("memory_capacity", 0, false).filter(|r| r.g == g).map(|r| r.value).collect();
            let mean = report.select("memory_capacity", 0, true).find(|r| r.g == g).unwrap();
            assert_eq!(per.len(), 2);
            assert!((mean.value - (per[0] + per[1]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_sets_rho() {
        let spec = SweepSpec {
            calibrate_weighted_path: Some(2.0),
            seeds: vec![0],
            ..tiny(vec![Metric::SpectralRadius, Metric::PathLength, Metric::DelayCoefficients])
        };
        let report = run_sweep(&spec, 1).unwrap();
        let lw = report.select("mean_weighted_path_length", 0, false).next().unwrap();
        assert!((lw.value - 2.0).abs() < 1e-6);
        let rho = report.select("spectral_radius", 0, false).next().unwrap();
        assert_eq!(rho.value, lw.rho);
        assert_eq!(report.select("delay_coefficient", 4, false).count(), 2);
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let spec = preset("multidim-fits").unwrap();
        let text = spec.to_toml_string().unwrap();
        assert_eq!(SweepSpec::from_toml_str(&text).unwrap(), spec);
        let partial = SweepSpec::from_toml_str(
            "experiment = \"x\"\nmetrics = [\"memory_capacity\", \"delay_trace\"]\n[grid]\ng = [0.1, 0.2]\n",
        )
        .unwrap();
        assert_eq!(partial.grid.g, vec![0.1, 0.2]);
        assert_eq!(partial.grid.epsilon, vec![1.0]);
        assert_eq!(partial.m, 100);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let ok = tiny(vec![Metric::MemoryCapacity]);
        let cases = [
            SweepSpec { metrics: vec![], ..ok.clone() },
            SweepSpec { seeds: vec![], ..ok.clone() },
            SweepSpec { grid: Grid { g: vec![], ..ok.grid.clone() }, ..ok.clone() },
            SweepSpec { grid: Grid { eta_f: vec![1.5], ..ok.grid.clone() }, ..ok.clone() },
            SweepSpec { grid: Grid { d_e: vec![0], ..ok.grid.clone() }, ..ok.clone() },
            SweepSpec { calibrate_weighted_path: Some(2.0), grid: Grid { rho: vec![1.0, 2.0], ..ok.grid.clone() }, ..ok.clone() },
        ];
        for c in cases {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
        assert!(SweepSpec::from_toml_str("metrics = [\"nope\"]").is_err());
    }

    #[test]
    fn presets_are_valid_and_named_uniquely() {
        let all = preset_experiments();
        let mut names: Vec<_> = all.iter().map(|s| s.experiment.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), all.len());
        for s in &all {
            s.validate().unwrap();
            s.quick().validate().unwrap();
        }
        let narma = preset("narma-grid").unwrap();
        assert_eq!(narma.grid.narma_order, (1..=10).collect::<Vec<_>>());
        assert_eq!(narma.grid.d_e, (1..=12).collect::<Vec<_>>());
        assert_eq!(preset("sparsity").unwrap().calibrate_weighted_path, Some(2.0));
        assert_eq!(preset("multidim-fits").unwrap().fit_modes, vec![FitComponents::All, FitComponents::First]);
        let grid = preset("lorenz-grid").unwrap();
        assert_eq!(grid.grid.len(), 400);
        assert!((grid.grid.g[0] - 0.05).abs() < 1e-12 && (grid.grid.g[19] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quick_thins_axes() {
        let q = preset("narma-grid").unwrap().quick();
        assert_eq!(q.grid.d_e, vec![1, 7, 12]);
        assert_eq!(q.seeds.len(), 1);
    }

    #[test]
    fn written_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_sweep(&tiny(vec![Metric::SpectralRadius]), 1).unwrap();
        let (csv_path, json_path) = report.write_to_dir(dir.path()).unwrap();
        let text = std::fs::read_to_string(csv_path).unwrap();
        assert_eq!(text, report.to_csv_string().unwrap());
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
        assert_eq!(manifest["spec"]["experiment"], "tiny");
        assert_eq!(manifest["points"].as_array().unwrap().len(), 4);
        assert!(manifest["points"][0]["wall_time_s"].is_number());
        assert!(!text.contains("wall"));
    }
}
