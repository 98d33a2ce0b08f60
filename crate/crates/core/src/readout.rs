//! Linear readout: feature matrix, ridge fit and normalized errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{self, AdjacencyMatrix, ReservoirConfig, StateTrajectory};
use crate::signals::std_dev;
use crate::TimeSeries;

/// Rows are time steps; columns are the states, then (optionally) their squares.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    include_squares: bool,
}

impl FeatureMatrix {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn include_squares(&self) -> bool {
        self.include_squares
    }

    /// Sum of squared entries, i.e. `trace(Omega^T Omega)`.
    pub fn gram_trace(&self) -> f64 {
        self.data.norm_squared()
    }
}

pub fn build_features(traj: &StateTrajectory, include_squares: bool) -> FeatureMatrix {
    features_from_states(traj.states(), include_squares)
}

pub fn features_from_states(states: &DMatrix<f64>, include_squares: bool) -> FeatureMatrix {
    let (n, d) = states.shape();
    let data = if include_squares {
        let mut data = DMatrix::zeros(n, 2 * d);
        data.columns_mut(0, d).copy_from(states);
        data.columns_mut(d, d).copy_from(&states.map(|v| v * v));
        data
    } else {
        states.clone()
    };
    FeatureMatrix { data, include_squares }
}

/// How the ridge parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// `lambda = k * trace(Omega^T Omega) / cols`.
    Relative(f64),
    Absolute(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Relative(1e-8)
    }
}

impl Regularization {
    pub fn lambda_for(&self, features: &FeatureMatrix) -> f64 {
        match *self {
            Regularization::Relative(k) => k * features.gram_trace() / features.cols().max(1) as f64,
            Regularization::Absolute(l) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub coefficients: Vec<f64>,
    pub ridge_lambda: f64,
    pub include_squares: bool,
}

impl ReadoutModel {
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.cols() != self.coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} coefficients, features have {} columns",
                self.coefficients.len(),
                features.cols()
            )));
        }
        let c = DVector::from_column_slice(&self.coefficients);
        Ok((features.data() * c).data.into())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    /// Eigenvectors and regularized eigenvalues of the Gram matrix; zero
    /// entries in the inverse mark numerically null directions.
    Eigen { vectors: DMatrix<f64>, inv_values: DVector<f64> },
    Svd(nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Factorization of a ridge problem, reusable across targets.
///
/// With `lambda > 0` the regularized normal equations are factored by
/// Cholesky, which the regularization keeps well posed; should that fail the
/// symmetric eigendecomposition is used instead. With `lambda == 0` the
/// feature matrix itself is decomposed by SVD and a rank-deficient system is
/// reported as singular.
pub struct RidgeSolver<'a> {
    features: &'a FeatureMatrix,
    lambda: f64,
    factor: Factor,
}

impl<'a> RidgeSolver<'a> {
    pub fn new(features: &'a FeatureMatrix, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge parameter must be >= 0, got {lambda}")));
        }
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::InvalidInput("empty feature matrix".into()));
        }
        if features.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite feature".into()));
        }
        let factor = if lambda == 0.0 {
            let svd = features.data().clone().svd(true, true);
            let cols = features.cols();
            let smax = svd.singular_values.max();
            let tol = features.rows().max(cols) as f64 * f64::EPSILON * smax;
            let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
            if rank < cols {
                return Err(Error::SingularSystem { rank, cols });
            }
            Factor::Svd(svd)
        } else {
            let mut gram = features.data().transpose() * features.data();
            for i in 0..gram.nrows() {
                gram[(i, i)] += lambda;
            }
            match gram.clone().cholesky() {
                Some(ch) => Factor::Cholesky(ch),
                None => {
                    let eig = gram.symmetric_eigen();
                    let top = eig.eigenvalues.amax();
                    let tol = top * f64::EPSILON * eig.eigenvalues.len() as f64;
                    let inv_values = eig.eigenvalues.map(|v| if v > tol { 1.0 / v } else { 0.0 });
                    Factor::Eigen { vectors: eig.eigenvectors, inv_values }
                }
            }
        };
        Ok(Self { features, lambda, factor })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn solve(&self, target: &[f64]) -> Result<ReadoutModel> {
        let c = self.solve_many(&DMatrix::from_column_slice(target.len(), 1, target))?;
        Ok(ReadoutModel {
            coefficients: c.data.into(),
            ridge_lambda: self.lambda,
            include_squares: self.features.include_squares(),
        })
    }

    /// Coefficients for every column of `targets`, one column each.
    pub fn solve_many(&self, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if targets.nrows() != self.features.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows, {} target samples",
                self.features.rows(),
                targets.nrows()
            )));
        }
        let c = match &self.factor {
            Factor::Svd(svd) => svd
                .solve(targets, 0.0)
                .map_err(|e| Error::Numerical(format!("SVD solve failed: {e}")))?,
            Factor::Cholesky(ch) => ch.solve(&(self.features.data().transpose() * targets)),
            Factor::Eigen { vectors, inv_values } => {
                let mut rhs = vectors.transpose() * (self.features.data().transpose() * targets);
                for mut col in rhs.column_iter_mut() {
                    col.component_mul_assign(inv_values);
                }
                vectors * rhs
            }
        };
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite readout coefficient".into()));
        }
        Ok(c)
    }
}

/// `C = argmin |Omega C - f|^2 + lambda |C|^2`.
pub fn ridge_fit(features: &FeatureMatrix, target: &[f64], lambda: f64) -> Result<ReadoutModel> {
    RidgeSolver::new(features, lambda)?.solve(target)
}

/// `std(target - predicted) / std(target)`.
pub fn nrmse(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} targets",
            predicted.len(),
            target.len()
        )));
    }
    if target.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, available: target.len() });
    }
    let spread = std_dev(target);
    let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread <= 1e-14 * scale || spread == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let residual: Vec<f64> = target.iter().zip(predicted).map(|(t, p)| t - p).collect();
    Ok(std_dev(&residual) / spread)
}

/// Which reservoir signals enter the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitComponents {
    /// Every component of every node.
    #[default]
    All,
    /// Only the first component of each node.
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutOptions {
    pub include_squares: bool,
    pub components: FitComponents,
    pub regularization: Regularization,
}

impl Default for ReadoutOptions {
    fn default() -> Self {
        Self {
            include_squares: true,
            components: FitComponents::All,
            regularization: Regularization::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTestResult {
    /// Training error on the fitted window.
    pub train_error: f64,
    /// Error of the frozen readout on the test run.
    pub test_error: f64,
    pub model: ReadoutModel,
}

/// The target samples aligned with the rows of `traj`.
pub fn aligned_target<'t>(traj: &StateTrajectory, target: &'t [f64]) -> Result<&'t [f64]> {
    let end = traj.start() + traj.len();
    if target.len() < end {
        return Err(Error::InsufficientData { needed: end, available: target.len() });
    }
    Ok(&target[traj.start()..end])
}

fn select(traj: &StateTrajectory, components: FitComponents) -> std::borrow::Cow<'_, StateTrajectory> {
    match components {
        FitComponents::All => std::borrow::Cow::Borrowed(traj),
        FitComponents::First => std::borrow::Cow::Owned(traj.first_components()),
    }
}

/// Fits on `train` and evaluates the frozen readout on `test`. Targets are
/// full series indexed like the driving input.
pub fn fit_and_test(
    train: &StateTrajectory,
    train_target: &[f64],
    test: &StateTrajectory,
    test_target: &[f64],
    options: &ReadoutOptions,
) -> Result<TrainTestResult> {
    let train_features = build_features(&select(train, options.components), options.include_squares);
    let test_features = build_features(&select(test, options.components), options.include_squares);
    let train_target = aligned_target(train, train_target)?;
    let test_target = aligned_target(test, test_target)?;
    let lambda = options.regularization.lambda_for(&train_features);
    let model = ridge_fit(&train_features, train_target, lambda)?;
    let train_error = nrmse(&model.predict(&train_features)?, train_target)?;
    let test_error = nrmse(&model.predict(&test_features)?, test_target)?;
    Ok(TrainTestResult { train_error, test_error, model })
}

/// Drives the reservoir with both inputs, fits on the training run and
/// reports training and testing errors.
pub fn train_test(
    config: &ReservoirConfig,
    a: &AdjacencyMatrix,
    train_input: &TimeSeries,
    train_target: &TimeSeries,
    test_input: &TimeSeries,
    test_target: &TimeSeries,
    options: &ReadoutOptions,
) -> Result<TrainTestResult> {
    let train = reservoir::drive(config, a, train_input)?;
    let test = reservoir::drive(config, a, test_input)?;
    fit_and_test(&train, train_target.values(), &test, test_target.values(), options)
}
