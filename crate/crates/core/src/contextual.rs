//! Batch Thompson Sampling for linear contextual bandits.
//!
//! The posterior is `Normal(mu_hat, v^2 M^-1)` with `M = I + sum b b^T`
//! and `mu_hat = M^-1 sum b r`, both over revealed plays only. `M` is
//! refactorized at every flush; between flushes the posterior is frozen.

use nalgebra::{DMatrix, DVector};

use crate::env::{dot, ContextSet};
use crate::error::{invalid, Error, Result};
use crate::sampling::RandomStream;

/// Exploration scale `sigma * sqrt(9 d ln(T / delta))`.
pub fn v_parameter(sigma: f64, dim: usize, horizon: u64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(invalid(
            "sigma",
            format!("must be finite and >= 0, got {sigma}"),
        ));
    }
    let ratio = horizon as f64 / delta;
    if ratio.is_nan() || ratio <= 1.0 {
        return Err(invalid("horizon", "T / delta must exceed 1"));
    }
    Ok(sigma * (9.0 * dim as f64 * ratio.ln()).sqrt())
}

#[derive(Debug, Clone)]
pub struct LinearPosterior {
    design: DMatrix<f64>,
    response: DVector<f64>,
    mean: DVector<f64>,
    /// Lower Cholesky factor `L` of `design`.
    lower: DMatrix<f64>,
    /// `L^T`, kept for the per-round triangular solve.
    upper: DMatrix<f64>,
}

impl LinearPosterior {
    pub fn new(dim: usize) -> Self {
        Self {
            design: DMatrix::identity(dim, dim),
            response: DVector::zeros(dim),
            mean: DVector::zeros(dim),
            lower: DMatrix::identity(dim, dim),
            upper: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.response.len()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Folds revealed `(context, reward)` plays into the posterior. All
    /// contexts are checked before anything is modified.
    pub fn flush_update<'a, I>(&mut self, plays: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let d = self.dim();
        let plays: Vec<_> = plays.into_iter().collect();
        if let Some((b, _)) = plays.iter().find(|(b, _)| b.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: b.len(),
            });
        }
        for (b, r) in &plays {
            let b = DVector::from_column_slice(b);
            self.design.ger(1.0, &b, &b, 1.0);
            self.response.axpy(*r, &b, 1.0);
        }
        self.refactor()
    }

    fn refactor(&mut self) -> Result<()> {
        let chol = self
            .design
            .clone()
            .cholesky()
            .ok_or(Error::ContractViolation(
                "design matrix lost positive definiteness",
            ))?;
        self.mean = chol.solve(&self.response);
        self.lower = chol.unpack();
        self.upper = self.lower.transpose();
        Ok(())
    }

    /// Draws `mu_hat + v x` with `L^T x = z`, `z` standard normal, so that
    /// `x ~ Normal(0, M^-1)`. Consumes `2 d` uniforms.
    pub fn sample_mu_tilde(&self, v: f64, stream: &mut RandomStream) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| stream.standard_normal());
        let x = self
            .upper
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + x * v
    }
}

/// Argmax of `<b_a, theta>` over arms, lowest index on ties.
pub fn argmax_inner(contexts: &ContextSet, theta: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for a in 0..contexts.num_arms() {
        let value = dot(contexts.arm(a), theta);
        if value > best_value {
            best = a;
            best_value = value;
        }
    }
    best
}

/// Thompson Sampling policy over a [`LinearPosterior`].
#[derive(Debug, Clone)]
pub struct ContextualPolicy {
    posterior: LinearPosterior,
    v: f64,
}

impl ContextualPolicy {
    pub fn new(dim: usize, v: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !v.is_finite() || v < 0.0 {
            return Err(invalid("v", format!("must be finite and >= 0, got {v}")));
        }
        Ok(Self {
            posterior: LinearPosterior::new(dim),
            v,
        })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn posterior(&self) -> &LinearPosterior {
        &self.posterior
    }

    pub fn posterior_mut(&mut self) -> &mut LinearPosterior {
        &mut self.posterior
    }

    /// One posterior draw, then the greedy arm under that draw.
    pub fn select(&self, contexts: &ContextSet, stream: &mut RandomStream) -> Result<usize> {
        if contexts.dim() != self.posterior.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.posterior.dim(),
                actual: contexts.dim(),
            });
        }
        let theta = self.posterior.sample_mu_tilde(self.v, stream);
        Ok(argmax_inner(contexts, theta.as_slice()))
    }
}
