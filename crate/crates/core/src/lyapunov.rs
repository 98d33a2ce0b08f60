//! Lyapunov exponents of the driven reservoir by repeated Gram-Schmidt
//! reorthonormalization of the variational flow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::random_orthonormal;
use crate::reservoir::{AdjacencyMatrix, NodeKind, Reservoir, ReservoirConfig};
use crate::seeding;
use crate::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovSpec {
    pub n_lambda: usize,
    pub n_steps: usize,
    pub renorm_every: usize,
    /// Norms outside `[1/t, t]` trigger a reset of the tangent vectors.
    pub norm_reset_threshold: f64,
    pub report_every: usize,
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        Self { n_lambda: 1, n_steps: 100_000, renorm_every: 1, norm_reset_threshold: 1e12, report_every: 1000 }
    }
}

impl LyapunovSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_lambda == 0 || self.n_lambda > dim {
            return Err(Error::InvalidParameter(format!("n_lambda must be in 1..={dim}, got {}", self.n_lambda)));
        }
        if self.n_steps == 0 || self.renorm_every == 0 || self.report_every == 0 {
            return Err(Error::InvalidParameter("n_steps, renorm_every and report_every must be positive".into()));
        }
        if !(self.norm_reset_threshold > 1.0) {
            return Err(Error::InvalidParameter("norm_reset_threshold must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningEstimate {
    pub step: usize,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    /// Nats per step, largest first.
    pub exponents: Vec<f64>,
    pub running: Vec<RunningEstimate>,
    /// Some norm fell below `1/threshold`; the affected exponents are upper bounds.
    pub saturated: bool,
    pub resets: usize,
}

/// `diag(g sech^2(A r + eps s)) A`.
pub fn jacobian_tanh(config: &ReservoirConfig, a: &AdjacencyMatrix, r: &DVector<f64>, s: f64) -> Result<DMatrix<f64>> {
    let tanh_only = ReservoirConfig { node: NodeKind::Tanh, ..config.clone() };
    let res = Reservoir::new(&tanh_only, a)?;
    if r.len() != res.state_dim() {
        return Err(Error::DimensionMismatch(format!("state has {} entries for {} nodes", r.len(), config.m)));
    }
    Ok(res.jacobian(r, s))
}

/// Orthonormalizes the columns of `q` in place, returning their norms
/// before normalization.
fn modified_gram_schmidt(q: &mut DMatrix<f64>, norms: &mut [f64]) {
    for j in 0..q.ncols() {
        for i in 0..j {
            let (qi, mut qj) = q.columns_range_pair_mut(i, j);
            let dot = qi.dot(&qj);
            qj.axpy(-dot, &qi, 1.0);
        }
        let n = q.column(j).norm();
        norms[j] = n;
        if n > 0.0 && n.is_finite() {
            q.column_mut(j).unscale_mut(n);
        }
    }
}

/// Lyapunov exponents of the tangent flow generated by `propagate`.
///
/// `propagate(n, q, out)` must write `J(n) q` into `out` for step `n`.
pub fn lyapunov_of<F>(dim: usize, spec: &LyapunovSpec, seed: u64, mut propagate: F) -> Result<LyapunovResult>
where
    F: FnMut(usize, &DMatrix<f64>, &mut DMatrix<f64>) -> Result<()>,
{
    spec.validate(dim)?;
    let k = spec.n_lambda;
    let threshold = spec.norm_reset_threshold;
    let (lo, hi) = (threshold.recip(), threshold);
    let seed = seeding::derive_seed(seed, seeding::stream::LYAPUNOV);
    let mut q = random_orthonormal(dim, k, seed);
    let mut next = DMatrix::zeros(dim, k);
    let mut sums = vec![0.0; k];
    let mut norms = vec![0.0; k];
    let mut running = Vec::new();
    let mut saturated = false;
    let mut resets = 0;
    let mut since_renorm = 0;
    let mut accounted = 0;
    for n in 0..spec.n_steps {
        propagate(n, &q, &mut next)?;
        std::mem::swap(&mut q, &mut next);
        since_renorm += 1;
        let step = n + 1;
        if since_renorm == spec.renorm_every || step == spec.n_steps {
            modified_gram_schmidt(&mut q, &mut norms);
            let mut reset = false;
            for (sum, &norm) in sums.iter_mut().zip(&norms) {
                if norm.is_nan() || norm == f64::INFINITY {
                    return Err(Error::Numerical(format!("non-finite tangent norm at step {step}")));
                }
                if norm < lo {
                    saturated = true;
                    reset = true;
                    *sum += lo.ln();
                } else {
                    reset |= norm > hi;
                    *sum += norm.ln();
                }
            }
            if reset {
                resets += 1;
                q = random_orthonormal(dim, k, seeding::derive_seed(seed, resets as u64));
            }
            accounted = step;
            since_renorm = 0;
        }
        if step % spec.report_every == 0 && accounted > 0 {
            running.push(RunningEstimate {
                step,
                exponents: sums.iter().map(|s| s / accounted as f64).collect(),
            });
        }
    }
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / spec.n_steps as f64).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovResult { exponents, running, saturated, resets })
}

/// Exponents of the reservoir driven by `drive`, measured after the washout.
pub fn lyapunov_spectrum(
    config: &ReservoirConfig,
    a: &AdjacencyMatrix,
    drive: &TimeSeries,
    spec: &LyapunovSpec,
    seed: u64,
) -> Result<LyapunovResult> {
    let res = Reservoir::new(config, a)?;
    let s = drive.values();
    let washout = config.washout;
    if s.len() < washout + spec.n_steps {
        return Err(Error::InsufficientData { needed: washout + spec.n_steps, available: s.len() });
    }
    if let Some(i) = s[..washout + spec.n_steps].iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite input sample at index {i}")));
    }
    let mut state = DVector::zeros(res.state_dim());
    for &sn in &s[..washout] {
        state = res.step(&state, sn);
    }
    lyapunov_of(res.state_dim(), spec, seed, |n, q, out| {
        let sn = s[washout + n];
        let gains = res.gains(&state, sn);
        res.apply_jacobian_into(&gains, q, out);
        state = res.step(&state, sn);
        Ok(())
    })
}

/// Exponents of the constant map `x -> j x`.
pub fn lyapunov_constant(j: &DMatrix<f64>, spec: &LyapunovSpec, seed: u64) -> Result<LyapunovResult> {
    if !j.is_square() {
        return Err(Error::InvalidMatrix("Jacobian must be square".into()));
    }
    lyapunov_of(j.nrows(), spec, seed, |_, q, out| {
        out.gemm(1.0, j, q, 0.0);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{make_adjacency, spectral_radius};
    use crate::signals::{gaussian_noise, integrate_lorenz, OdeParams};

    fn spec(n_lambda: usize, n_steps: usize) -> LyapunovSpec {
        LyapunovSpec { n_lambda, n_steps, ..LyapunovSpec::default() }
    }

    #[test]
    fn jacobian_at_origin_is_scaled_adjacency() {
        let a = make_adjacency(10, 1.0, 1.0, 1).unwrap();
        let cfg = ReservoirConfig { m: 10, ..ReservoirConfig::tanh(0.7, 1.0) };
        let j = jacobian_tanh(&cfg, &a, &DVector::zeros(10), 0.0).unwrap();
        assert!((j - a.entries() * 0.7).amax() < 1e-15);
    }

    #[test]
    fn saturated_jacobian_vanishes() {
        let a = make_adjacency(10, 1.0, 1.0, 1).unwrap();
        let cfg = ReservoirConfig { m: 10, ..ReservoirConfig::tanh(1.0, 1.0) };
        let j = jacobian_tanh(&cfg, &a, &DVector::zeros(10), 50.0).unwrap();
        assert!(j.amax() < 1e-30);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let a = make_adjacency(12, 1.0, 1.0, 3).unwrap();
        let cfg = ReservoirConfig { m: 12, ..ReservoirConfig::tanh(0.9, 0.7) };
        let res = Reservoir::new(&cfg, &a).unwrap();
        let r = DVector::from_fn(12, |i, _| ((i * 7) as f64).sin() * 0.5);
        let s = 0.3;
        let j = jacobian_tanh(&cfg, &a, &r, s).unwrap();
        let h = 1e-5;
        for k in 0..12 {
            let mut up = r.clone();
            let mut down = r.clone();
            up[k] += h;
            down[k] -= h;
            let col = (res.step(&up, s) - res.step(&down, s)) / (2.0 * h);
            assert!((col - j.column(k)).amax() < 1e-6, "column {k}");
        }
    }

    #[test]
    fn constant_map_oracle() {
        let a = make_adjacency(5, 1.0, 1.0, 4).unwrap();
        let j = a.entries() * 0.6;
        let r = lyapunov_constant(&j, &spec(1, 100_000), 1).unwrap();
        let expected = spectral_radius(&j).unwrap().ln();
        assert!((r.exponents[0] - expected).abs() < 1e-3, "{} vs {expected}", r.exponents[0]);
        assert!(!r.saturated);
        assert_eq!(r.running.len(), 100);
        assert_eq!(r.running.last().unwrap().exponents, r.exponents);
    }

    #[test]
    fn diagonal_map_gives_full_spectrum() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, -0.5, 0.2, 0.05]));
        let r = lyapunov_constant(&j, &spec(4, 2000), 2).unwrap();
        let expected = [0.9f64.ln(), 0.5f64.ln(), 0.2f64.ln(), 0.05f64.ln()];
        for (e, x) in r.exponents.iter().zip(expected) {
            assert!((e - x).abs() < 1e-2, "{e} vs {x}");
        }
    }

    #[test]
    fn zero_gain_reports_saturation() {
        let a = make_adjacency(10, 1.0, 1.0, 1).unwrap();
        let cfg = ReservoirConfig { m: 10, washout: 10, ..ReservoirConfig::tanh(0.0, 1.0) };
        let s = gaussian_noise(1010, 1);
        let r = lyapunov_spectrum(&cfg, &a, &s, &spec(2, 1000), 3).unwrap();
        assert!(r.saturated);
        assert_eq!(r.resets, 1000);
        assert!(r.exponents.iter().all(|e| *e <= -1e12f64.ln() + 1e-12));
    }

    #[test]
    fn reset_keeps_growth_finite() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![1e7, 1.0]));
        let s = LyapunovSpec { n_lambda: 1, n_steps: 200, renorm_every: 4, ..LyapunovSpec::default() };
        let r = lyapunov_constant(&j, &s, 5).unwrap();
        assert!(r.resets > 0);
        // Each reset restarts from a random direction, costing about ln|cos| of growth.
        assert!(r.exponents[0].is_finite());
        assert!((r.exponents[0] - 1e7f64.ln()).abs() < 1.0, "{}", r.exponents[0]);
    }

    #[test]
    fn short_drive_is_rejected() {
        let a = make_adjacency(10, 1.0, 1.0, 1).unwrap();
        let cfg = ReservoirConfig { m: 10, washout: 100, ..ReservoirConfig::tanh(1.0, 1.0) };
        let s = gaussian_noise(500, 1);
        assert!(matches!(
            lyapunov_spectrum(&cfg, &a, &s, &spec(1, 1000), 0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn renormalization_interval_does_not_matter() {
        let a = make_adjacency(50, 1.0, 1.0, 6).unwrap();
        let cfg = ReservoirConfig { m: 50, washout: 1000, ..ReservoirConfig::tanh(0.9, 0.5) };
        let s = gaussian_noise(1000 + 50_000, 2);
        let run = |every| {
            let sp = LyapunovSpec { n_lambda: 3, n_steps: 50_000, renorm_every: every, ..LyapunovSpec::default() };
            lyapunov_spectrum(&cfg, &a, &s, &sp, 7).unwrap()
        };
        let (one, five) = (run(1), run(5));
        assert!((one.exponents[0] - five.exponents[0]).abs() < 2e-3);
        for r in [&one, &five] {
            assert!(r.exponents.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn lorenz_driven_exponent_rises_with_gain() {
        let a = make_adjacency(100, 1.0, 1.0, 2).unwrap();
        let x = integrate_lorenz(&OdeParams::lorenz(), 1000 + 20_000, 1).unwrap().x;
        let top = |g| {
            let cfg = ReservoirConfig { washout: 1000, ..ReservoirConfig::tanh(g, 0.1) };
            lyapunov_spectrum(&cfg, &a, &x, &spec(1, 20_000), 1).unwrap().exponents[0]
        };
        let (low, mid, high) = (top(0.3), top(0.6), top(0.9));
        assert!(low < mid && mid < high && high < 0.0, "{low} {mid} {high}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn constant_jacobian_top_exponent(seed in 0u64..10_000, rho in 0.2f64..0.95) {
                let a = make_adjacency(5, 1.0, rho, seed).unwrap();
                let r = lyapunov_constant(a.entries(), &spec(1, 20_000), seed).unwrap();
                prop_assert!((r.exponents[0] - rho.ln()).abs() < 1e-3);
            }

            #[test]
            fn exponents_are_ordered(seed in 0u64..10_000, g in 0.2f64..1.2) {
                let a = make_adjacency(15, 0.5, 1.0, seed).unwrap();
                let cfg = ReservoirConfig { m: 15, washout: 100, ..ReservoirConfig::tanh(g, 0.5) };
                let s = gaussian_noise(100 + 5000, seed);
                let r = lyapunov_spectrum(&cfg, &a, &s, &spec(4, 5000), seed).unwrap();
                prop_assert!(r.exponents.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }
}
