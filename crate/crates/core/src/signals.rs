//! Driving and training signals.
//!
//! Chaotic flows are integrated with fixed-step RK4. Each seeded entry point
//! perturbs the nominal initial condition by a uniform offset in
//! `[-0.1, 0.1]^3` and discards a transient, so different seeds give different
//! trajectories on the same attractor.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Magnitude beyond which an integration is declared divergent.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// A uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    dt: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self { values, dt })
    }

    /// A discrete-time series (`dt = 1`).
    pub fn discrete(values: Vec<f64>) -> Result<Self> {
        Self::new(values, 1.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        std_dev(&self.values)
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Parameters of a three-variable flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// Unused by the Lorenz system.
    pub p4: f64,
    /// Sampling interval of the returned series.
    pub dt: f64,
    /// RK4 steps per sample; the integration step is `dt / substeps`.
    pub substeps: usize,
    pub n_transient: usize,
    pub initial_state: [f64; 3],
}

impl OdeParams {
    pub fn lorenz() -> Self {
        Self {
            p1: 10.0,
            p2: 28.0,
            p3: 8.0 / 3.0,
            p4: 0.0,
            dt: 0.02,
            substeps: 1,
            n_transient: 5000,
            initial_state: [1.0, 1.0, 1.0],
        }
    }

    pub fn rossler() -> Self {
        Self {
            p1: 1.0,
            p2: 0.2,
            p3: 0.2,
            p4: 5.7,
            dt: 0.3,
            // RK4 is unstable on this flow at h = 0.3
            substeps: 10,
            n_transient: 5000,
            initial_state: [1.0, 1.0, 1.0],
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial state must be finite".into()));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeSystem {
    Lorenz,
    Rossler,
}

impl OdeSystem {
    pub fn default_params(self) -> OdeParams {
        match self {
            OdeSystem::Lorenz => OdeParams::lorenz(),
            OdeSystem::Rossler => OdeParams::rossler(),
        }
    }

    pub fn derivative(self, p: &OdeParams, s: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = s;
        match self {
            OdeSystem::Lorenz => [p.p1 * (y - x), x * (p.p2 - z) - y, x * y - p.p3 * z],
            OdeSystem::Rossler => [-y - p.p1 * z, x + p.p2 * y, p.p3 + z * (x - p.p4)],
        }
    }

    /// One classical fourth-order Runge-Kutta step of size `dt`.
    pub fn rk4_step(self, p: &OdeParams, s: [f64; 3], dt: f64) -> [f64; 3] {
        let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
        let k1 = self.derivative(p, s);
        let k2 = self.derivative(p, add(s, k1, 0.5 * dt));
        let k3 = self.derivative(p, add(s, k2, 0.5 * dt));
        let k4 = self.derivative(p, add(s, k3, dt));
        let mut out = s;
        for i in 0..3 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Advances one sampling interval `p.dt` in `p.substeps` RK4 steps.
    pub fn sample_step(self, p: &OdeParams, s: [f64; 3]) -> [f64; 3] {
        let h = p.dt / p.substeps as f64;
        (0..p.substeps).fold(s, |acc, _| self.rk4_step(p, acc, h))
    }
}

/// The three coordinates of an integrated flow.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub x: TimeSeries,
    pub y: TimeSeries,
    pub z: TimeSeries,
}

/// Integrates `system` from exactly `initial_state`, discards
/// `params.n_transient` steps and returns the next `n_steps` samples.
pub fn integrate_from(
    system: OdeSystem,
    params: &OdeParams,
    initial_state: [f64; 3],
    n_steps: usize,
) -> Result<OdeTrajectory> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
    }
    let mut state = initial_state;
    let mut xs = Vec::with_capacity(n_steps);
    let mut ys = Vec::with_capacity(n_steps);
    let mut zs = Vec::with_capacity(n_steps);
    for step in 0..params.n_transient + n_steps {
        if step >= params.n_transient {
            xs.push(state[0]);
            ys.push(state[1]);
            zs.push(state[2]);
        }
        state = system.sample_step(params, state);
        let magnitude = state.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(Error::IntegrationDiverged { step, magnitude });
        }
    }
    Ok(OdeTrajectory {
        x: TimeSeries::new(xs, params.dt)?,
        y: TimeSeries::new(ys, params.dt)?,
        z: TimeSeries::new(zs, params.dt)?,
    })
}

/// Integrates from the nominal initial state plus a seeded perturbation.
pub fn integrate(system: OdeSystem, params: &OdeParams, n_steps: usize, seed: u64) -> Result<OdeTrajectory> {
    let mut rng = seeding::rng(seed);
    let offset = Uniform::new_inclusive(-0.1, 0.1).expect("valid range");
    let mut start = params.initial_state;
    for v in start.iter_mut() {
        *v += offset.sample(&mut rng);
    }
    integrate_from(system, params, start, n_steps)
}

pub fn integrate_lorenz(params: &OdeParams, n_steps: usize, seed: u64) -> Result<OdeTrajectory> {
    integrate(OdeSystem::Lorenz, params, n_steps, seed)
}

pub fn integrate_rossler(params: &OdeParams, n_steps: usize, seed: u64) -> Result<OdeTrajectory> {
    integrate(OdeSystem::Rossler, params, n_steps, seed)
}

/// NARMA recurrence of order `order`:
/// `y(n+1) = a0 y(n) + a1 y(n) sum_{j=1..N} y(n-j) + a2 u(n-N+1) u(n) + a3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarmaParams {
    pub order: usize,
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub u_low: f64,
    pub u_high: f64,
}

impl NarmaParams {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            a0: 0.3,
            a1: 0.05,
            a2: 1.5,
            a3: 0.1,
            u_low: 0.0,
            u_high: 0.5,
        }
    }
}

/// Largest |y| tolerated before a NARMA run is declared divergent.
pub const NARMA_LIMIT: f64 = 1.0;
/// Regeneration attempts before giving up.
pub const NARMA_MAX_ATTEMPTS: usize = 10;

/// Runs the recurrence on a given input. Outputs before index `order` are
/// zero and samples at negative indices are taken as zero. Returns `None` when
/// the output leaves `[-NARMA_LIMIT, NARMA_LIMIT]`.
pub fn narma_response(params: &NarmaParams, u: &[f64]) -> Option<Vec<f64>> {
    let order = params.order;
    let mut y = vec![0.0; u.len()];
    for n in order.max(1)..u.len() {
        let prev = y[n - 1];
        let history: f64 = (1..=order).filter(|&j| n > j).map(|j| y[n - 1 - j]).sum();
        let lagged_u = if n >= order { u[n - order] } else { 0.0 };
        let next = params.a0 * prev + params.a1 * prev * history + params.a2 * lagged_u * u[n - 1] + params.a3;
        if !(next.abs() <= NARMA_LIMIT) {
            return None;
        }
        y[n] = next;
    }
    Some(y)
}

/// Draws `u` uniformly from `[u_low, u_high)` and iterates the recurrence.
/// A divergent draw is regenerated with seed `seed + 10^6 * attempt`.
pub fn narma_generate(params: &NarmaParams, n_steps: usize, seed: u64) -> Result<(TimeSeries, TimeSeries)> {
    if params.order == 0 {
        return Err(Error::InvalidParameter("NARMA order must be at least 1".into()));
    }
    if n_steps <= params.order {
        return Err(Error::InvalidParameter(format!(
            "n_steps ({n_steps}) must exceed the NARMA order ({})",
            params.order
        )));
    }
    if !(params.u_low < params.u_high) {
        return Err(Error::InvalidParameter("u_low must be below u_high".into()));
    }
    let dist = Uniform::new(params.u_low, params.u_high).expect("valid range");
    for attempt in 0..NARMA_MAX_ATTEMPTS {
        let mut rng = seeding::rng(seed.wrapping_add(1_000_000 * attempt as u64));
        let u: Vec<f64> = (0..n_steps).map(|_| dist.sample(&mut rng)).collect();
        if let Some(y) = narma_response(params, &u) {
            return Ok((TimeSeries::discrete(u)?, TimeSeries::discrete(y)?));
        }
    }
    Err(Error::NarmaDiverged { attempts: NARMA_MAX_ATTEMPTS })
}

/// Zero-mean, unit-variance Gaussian white noise.
pub fn gaussian_noise(n: usize, seed: u64) -> TimeSeries {
    let mut rng = seeding::rng(seed);
    let values = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    TimeSeries { values, dt: 1.0 }
}

/// `sin(2 pi k / period)` for `k = 0..n`.
pub fn sine_probe(period: f64, n: usize) -> Result<TimeSeries> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
    }
    let values = (0..n)
        .map(|k| (2.0 * std::f64::consts::PI * k as f64 / period).sin())
        .collect();
    Ok(TimeSeries { values, dt: 1.0 })
}

/// Normalized autocorrelation for lags `0..=max_lag`.
///
/// The mean is removed first; each lag sum is divided by its overlap length
/// `n - lag` and the result by the lag-zero variance, so the lag-0 value is 1.
pub fn autocorrelation(x: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let v = x.values();
    let n = v.len();
    if n <= max_lag {
        return Err(Error::InsufficientData { needed: max_lag + 1, available: n });
    }
    let m = mean(v);
    let centered: Vec<f64> = v.iter().map(|a| a - m).collect();
    let var = centered.iter().map(|a| a * a).sum::<f64>() / n as f64;
    let scale = v.iter().fold(0.0_f64, |acc, a| acc.max(a.abs())).max(f64::MIN_POSITIVE);
    if var <= (1e-14 * scale).powi(2) {
        return Err(Error::DegenerateSignal);
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for lag in 1..=max_lag {
        let s: f64 = centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
        out.push(s / (n - lag) as f64 / var);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dormand-Prince 5(4) with step control; independent of the RK4 path.
    fn dopri_max_abs(system: OdeSystem, p: &OdeParams, start: [f64; 3], t_end: f64) -> [f64; 3] {
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let (mut t, mut h, mut s) = (0.0, 0.01, start);
        let mut max = [0.0f64; 3];
        while t < t_end {
            let mut k = [[0.0; 3]; 7];
            for stage in 0..7 {
                let mut arg = s;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    for d in 0..3 {
                        arg[d] += h * A[stage][j] * kj[d];
                    }
                }
                k[stage] = system.derivative(p, arg);
            }
            let mut hi = s;
            let mut err = 0.0f64;
            for d in 0..3 {
                let (mut s5, mut s4) = (0.0, 0.0);
                for st in 0..7 {
                    s5 += B5[st] * k[st][d];
                    s4 += B4[st] * k[st][d];
                }
                hi[d] += h * s5;
                err = err.max((h * (s5 - s4)).abs() / (1e-9 + 1e-9 * hi[d].abs()));
            }
            if err <= 1.0 {
                t += h;
                s = hi;
                if t > 100.0 {
                    for d in 0..3 {
                        max[d] = max[d].max(s[d].abs());
                    }
                }
            }
            h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        }
        max
    }

    #[test]
    fn lorenz_stays_on_bounded_attractor() {
        let p = OdeParams::lorenz();
        let traj = integrate_lorenz(&p, 100_000, 3).unwrap();
        let max_x = traj.x.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let max_z = traj.z.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let reference = dopri_max_abs(OdeSystem::Lorenz, &p, [1.0, 1.0, 1.0], 2000.0);
        assert!(reference[0] < 25.0 && reference[2] < 55.0, "reference {reference:?}");
        assert!(max_x < 25.0 && max_z < 55.0, "rk4 max x {max_x} z {max_z}");
        // same attractor: extrema agree with the adaptive reference
        assert!((max_x - reference[0]).abs() / reference[0] < 0.1);
        assert!((max_z - reference[2]).abs() / reference[2] < 0.1);
    }

    #[test]
    fn rossler_stays_bounded() {
        let p = OdeParams::rossler();
        let traj = integrate_rossler(&p, 100_000, 5).unwrap();
        let max_x = traj.x.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let reference = dopri_max_abs(OdeSystem::Rossler, &p, [1.0, 1.0, 1.0], 20_000.0);
        assert!(reference[0] < 15.0, "reference {reference:?}");
        assert!(max_x < 15.0, "max x {max_x}");
    }

    #[test]
    fn origin_is_a_lorenz_fixed_point() {
        let p = OdeParams { n_transient: 0, ..OdeParams::lorenz() };
        let traj = integrate_from(OdeSystem::Lorenz, &p, [0.0; 3], 1000).unwrap();
        assert!(traj.x.values().iter().chain(traj.y.values()).chain(traj.z.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn nearby_lorenz_states_separate() {
        let p = OdeParams { n_transient: 0, ..OdeParams::lorenz() };
        let a = integrate_from(OdeSystem::Lorenz, &p, [1.0, 1.0, 1.0], 2000).unwrap();
        let b = integrate_from(OdeSystem::Lorenz, &p, [1.0 + 1e-6, 1.0, 1.0], 2000).unwrap();
        let sep = a.x.values().iter().zip(b.x.values()).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        assert!(sep > 5.0, "separation {sep}");
    }

    #[test]
    fn seeds_give_distinct_trajectories() {
        let p = OdeParams::lorenz();
        let a = integrate_lorenz(&p, 100, 1).unwrap();
        let b = integrate_lorenz(&p, 100, 2).unwrap();
        assert_ne!(a.x, b.x);
        assert_eq!(a, integrate_lorenz(&p, 100, 1).unwrap());
    }

    #[test]
    fn large_rossler_z_diverges() {
        let p = OdeParams { n_transient: 0, ..OdeParams::rossler() };
        let err = integrate_from(OdeSystem::Rossler, &p, [1.0, 1.0, 1e5], 1000).unwrap_err();
        assert!(matches!(err, Error::IntegrationDiverged { .. }), "{err}");
    }

    #[test]
    fn step_halving_is_consistent() {
        for system in [OdeSystem::Lorenz, OdeSystem::Rossler] {
            let p = system.default_params();
            let start = integrate(system, &p, 1, 11).unwrap();
            let s0 = [start.x.values()[0], start.y.values()[0], start.z.values()[0]];
            let halved = OdeParams { substeps: 2 * p.substeps, ..p };
            let (mut coarse, mut fine) = (s0, s0);
            let mut worst = 0.0f64;
            for _ in 0..100 {
                coarse = system.sample_step(&p, coarse);
                fine = system.sample_step(&halved, fine);
                let norm = fine.iter().map(|v| v * v).sum::<f64>().sqrt();
                let diff = (0..3).map(|i| (coarse[i] - fine[i]).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(diff / norm);
            }
            assert!(worst < 1e-4, "{system:?}: relative deviation {worst}");
        }
    }

    #[test]
    fn narma_first_output_is_constant_term() {
        let p = NarmaParams::new(1);
        let y = narma_response(&p, &[0.0; 5]).unwrap();
        assert_eq!(y[0], 0.0);
        assert_eq!(y[1], 0.1);
    }

    #[test]
    fn narma_order_one_converges_to_quadratic_root() {
        let p = NarmaParams::new(1);
        let y = narma_response(&p, &vec![0.0; 500]).unwrap();
        // root of a1 y^2 + (a0 - 1) y + a3 = 0 nearest zero
        let (a, b, c) = (p.a1, p.a0 - 1.0, p.a3);
        let root = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((root - 0.144_34).abs() < 1e-5);
        assert!((y[499] - root).abs() < 1e-12);
    }

    #[test]
    fn narma_order_ten_reaches_fixed_point() {
        let p = NarmaParams::new(10);
        let y = narma_response(&p, &vec![0.0; 2000]).unwrap();
        let last = y[1999];
        let history: f64 = (1..=10).map(|j| y[1998 - j]).sum();
        let next = p.a0 * y[1998] + p.a1 * y[1998] * history + p.a3;
        assert!((next - last).abs() < 1e-12);
        // autonomous fixed point: y = a0 y + a1 * 10 y^2 + a3
        let (a, b, c) = (10.0 * p.a1, p.a0 - 1.0, p.a3);
        let root = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((last - root).abs() < 1e-10);
    }

    #[test]
    fn narma_is_deterministic_and_in_range() {
        let p = NarmaParams::new(10);
        let (u1, y1) = narma_generate(&p, 5000, 42).unwrap();
        let (u2, y2) = narma_generate(&p, 5000, 42).unwrap();
        assert_eq!(u1, u2);
        assert_eq!(y1, y2);
        assert!(u1.values().iter().all(|&v| (0.0..0.5).contains(&v)));
        assert!(y1.values()[..10].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn narma_rejects_short_runs() {
        assert!(narma_generate(&NarmaParams::new(10), 10, 0).is_err());
    }

    #[test]
    fn narma_reports_persistent_divergence() {
        let p = NarmaParams { a3: 2.0, ..NarmaParams::new(3) };
        assert!(matches!(narma_generate(&p, 100, 0), Err(Error::NarmaDiverged { attempts: 10 })));
    }

    #[test]
    fn gaussian_noise_statistics() {
        let a = gaussian_noise(100_000, 1);
        assert!(a.mean().abs() < 0.01);
        assert!((0.99..=1.01).contains(&a.std()), "std {}", a.std());
        assert_eq!(a, gaussian_noise(100_000, 1));
        let b = gaussian_noise(100_000, 2);
        let rho: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>()
            / (a.len() as f64 * a.std() * b.std());
        assert!(rho.abs() < 0.02, "cross-correlation {rho}");
    }

    #[test]
    fn sine_probe_values() {
        let s = sine_probe(4.0, 4).unwrap();
        let expect = [0.0, 1.0, 0.0, -1.0];
        for (a, b) in s.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = sine_probe(7.3, 1000).unwrap();
        assert!(s.values().iter().all(|v| v.abs() <= 1.0));
        assert!(sine_probe(0.0, 3).is_err());
    }

    #[test]
    fn sine_probe_is_a_pure_tone() {
        use rustfft::{num_complex::Complex, FftPlanner};
        let n = 1000;
        let s = sine_probe(10.0, n).unwrap();
        let mut buf: Vec<Complex<f64>> = s.values().iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mags: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm()).collect();
        let peak = (0..n / 2).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        assert_eq!(peak, n / 10);
        assert!(mags.iter().enumerate().filter(|&(k, _)| k != peak).all(|(_, &m)| m < 1e-9 * mags[peak]));
    }

    #[test]
    fn autocorrelation_of_constant_is_degenerate() {
        let x = TimeSeries::discrete(vec![3.0; 100]).unwrap();
        assert!(matches!(autocorrelation(&x, 10), Err(Error::DegenerateSignal)));
    }

    #[test]
    fn autocorrelation_of_white_noise_is_small() {
        let c = autocorrelation(&gaussian_noise(100_000, 9), 200).unwrap();
        assert_eq!(c[0], 1.0);
        assert!(c[1..].iter().all(|v| v.abs() < 0.02));
    }

    #[test]
    fn autocorrelation_of_sine_is_periodic() {
        let c = autocorrelation(&sine_probe(25.0, 5000).unwrap(), 50).unwrap();
        assert!((c[25] - 1.0).abs() < 0.01, "C(T) = {}", c[25]);
        assert!((c[50] - 1.0).abs() < 0.01);
    }

    #[test]
    fn rossler_autocorrelation_persists() {
        let traj = integrate_rossler(&OdeParams::rossler(), 20_000, 1).unwrap();
        let c = autocorrelation(&traj.x, 400).unwrap();
        let late = c[200..=400].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(late > 0.5, "late autocorrelation peak {late}");
    }

    #[test]
    fn time_series_rejects_non_finite() {
        assert!(TimeSeries::discrete(vec![1.0, f64::NAN]).is_err());
        assert!(TimeSeries::new(vec![1.0], 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn lag_zero_is_one(values in proptest::collection::vec(-10.0f64..10.0, 20..200)) {
                let x = TimeSeries::discrete(values).unwrap();
                if let Ok(c) = autocorrelation(&x, 5) {
                    prop_assert_eq!(c[0], 1.0);
                }
            }

            #[test]
            fn narma_is_a_function_of_seed(seed in 0u64..1000, order in 1usize..=10) {
                let p = NarmaParams::new(order);
                let a = narma_generate(&p, 300, seed).unwrap();
                let b = narma_generate(&p, 300, seed).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
