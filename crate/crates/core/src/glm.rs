//! Log-link Poisson (claim counts) and gamma (claim costs) regressions.

use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::irls::{fit_log_link_from, IrlsConfig, IrlsOutput};
use crate::scalar::Scalar;
use crate::special::{digamma, ln_factorial, ln_gamma, trigamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    Gamma,
}

impl Family {
    pub fn variance_power<T: Scalar>(self) -> T {
        match self {
            Family::Poisson => T::one(),
            Family::Gamma => T::of(2.0),
        }
    }
}

/// Fitted log-link GLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit<T> {
    pub family: Family,
    pub labels: Vec<String>,
    pub beta: Vec<T>,
    /// Gamma shape; `None` for Poisson.
    pub shape: Option<T>,
    pub loglik: T,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Labels of collinear columns held at zero.
    pub dropped: Vec<String>,
}

impl<T: Scalar> GlmFit<T> {
    pub fn coefficient(&self, label: &str) -> Option<T> {
        self.labels.iter().position(|l| l == label).map(|j| self.beta[j])
    }

    pub fn likelihood(&self) -> Likelihood<T> {
        match self.shape {
            Some(shape) => Likelihood::Gamma { shape },
            None => Likelihood::Poisson,
        }
    }

    pub(crate) fn from_irls(
        family: Family,
        design: &DesignMatrix<T>,
        out: IrlsOutput<T>,
        shape: Option<T>,
        loglik: T,
    ) -> Self {
        let free = design.n_cols() - out.dropped.len();
        Self {
            family,
            labels: design.labels().to_vec(),
            beta: out.beta,
            shape,
            loglik,
            n_params: free + usize::from(shape.is_some()),
            converged: out.converged,
            iterations: out.iterations,
            dropped: out.dropped.iter().map(|&j| design.labels()[j].clone()).collect(),
        }
    }
}

/// Likelihood with every nuisance parameter pinned, used for scoring and gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Likelihood<T> {
    Poisson,
    Gamma { shape: T },
}

/// `−μ + n log μ − log n!`
#[inline]
pub fn poisson_log_pmf<T: Scalar>(n: u32, mu: T) -> T {
    if n == 0 {
        -mu
    } else {
        T::of_usize(n as usize) * mu.ln() - mu - ln_factorial::<T>(n as u64)
    }
}

/// Gamma log-density with mean `mu` and shape `shape`.
#[inline]
pub fn gamma_log_pdf<T: Scalar>(z: T, mu: T, shape: T) -> T {
    shape * shape.ln() - ln_gamma(shape) - shape * mu.ln() + (shape - T::one()) * z.ln() - shape * z / mu
}

pub fn poisson_loglik<T: Scalar>(counts: &[u32], mu: &[T]) -> T {
    counts.iter().zip(mu).map(|(&n, &m)| poisson_log_pmf(n, m)).sum()
}

pub fn gamma_loglik<T: Scalar>(costs: &[T], mu: &[T], shape: T) -> T {
    costs.iter().zip(mu).map(|(&z, &m)| gamma_log_pdf(z, m, shape)).sum()
}

fn check_rows<T: Scalar>(design: &DesignMatrix<T>, len: usize, what: &str) -> Result<()> {
    if design.n_rows() != len {
        return Err(Error::argument(format!(
            "{what} has {len} entries, design has {} rows",
            design.n_rows()
        )));
    }
    Ok(())
}

fn log_exposure<T: Scalar>(exposure: &[T]) -> Result<Vec<T>> {
    exposure
        .iter()
        .map(|&d| {
            if d > T::zero() && d.is_finite() {
                Ok(d.ln())
            } else {
                Err(Error::argument("exposure must be positive and finite"))
            }
        })
        .collect()
}

/// Poisson regression with `E[N] = d · exp(Xβ)`.
pub fn fit_poisson<T: Scalar>(
    design: &DesignMatrix<T>,
    counts: &[u32],
    exposure: &[T],
    config: &IrlsConfig,
) -> Result<GlmFit<T>> {
    fit_poisson_from(design, counts, exposure, config, None)
}

/// [`fit_poisson`] warm-started at `start`.
pub fn fit_poisson_from<T: Scalar>(
    design: &DesignMatrix<T>,
    counts: &[u32],
    exposure: &[T],
    config: &IrlsConfig,
    start: Option<&[T]>,
) -> Result<GlmFit<T>> {
    check_rows(design, counts.len(), "counts")?;
    check_rows(design, exposure.len(), "exposure")?;
    let offset = log_exposure(exposure)?;
    let y: Vec<T> = counts.iter().map(|&n| T::of_usize(n as usize)).collect();
    let out = fit_log_link_from(design, &y, Some(&offset), None, T::one(), config, start)?;
    let loglik = poisson_loglik(counts, &out.mu);
    Ok(GlmFit::from_irls(Family::Poisson, design, out, None, loglik))
}

/// Gamma regression with `E[Z] = exp(Xβ)`; one row per claim. The shape is the
/// maximum-likelihood value given the fitted means.
pub fn fit_gamma<T: Scalar>(design: &DesignMatrix<T>, costs: &[T], config: &IrlsConfig) -> Result<GlmFit<T>> {
    fit_gamma_from(design, costs, config, None)
}

/// [`fit_gamma`] warm-started at `start`.
pub fn fit_gamma_from<T: Scalar>(
    design: &DesignMatrix<T>,
    costs: &[T],
    config: &IrlsConfig,
    start: Option<&[T]>,
) -> Result<GlmFit<T>> {
    check_rows(design, costs.len(), "costs")?;
    if costs.iter().any(|&z| !(z > T::zero() && z.is_finite())) {
        return Err(Error::argument("claim costs must be positive and finite"));
    }
    let out = fit_log_link_from(design, costs, None, None, T::of(2.0), config, start)?;
    let shape = gamma_shape_mle(costs, &out.mu)?;
    let loglik = gamma_loglik(costs, &out.mu, shape);
    Ok(GlmFit::from_irls(Family::Gamma, design, out, Some(shape), loglik))
}

/// Solves `log γ − ψ(γ) = c` where `c` is half the mean unit gamma deviance.
pub fn gamma_shape_mle<T: Scalar>(costs: &[T], mu: &[T]) -> Result<T> {
    if costs.is_empty() {
        return Err(Error::argument("no claims to estimate the gamma shape"));
    }
    let n = T::of_usize(costs.len());
    let c = costs
        .iter()
        .zip(mu)
        .map(|(&z, &m)| z / m - (z / m).ln() - T::one())
        .sum::<T>()
        / n;
    let floor = T::of(1e-12);
    let c = if c < floor {
        log::warn!("costs match their fitted means exactly; gamma shape capped");
        floor
    } else {
        c
    };
    // Minka's starting point, then Newton on log γ
    let three = T::of(3.0);
    let mut shape = (three - c + ((c - three).powi(2) + T::of(24.0) * c).sqrt()) / (T::of(12.0) * c);
    for _ in 0..100 {
        let g = shape.ln() - digamma(shape) - c;
        let dg = T::one() - shape * trigamma(shape);
        let step = g / dg;
        let next = (shape.ln() - step).exp();
        let done = (next / shape - T::one()).abs() < T::of(1e-14);
        shape = next;
        if done {
            break;
        }
    }
    if shape > T::zero() && shape.is_finite() {
        Ok(shape)
    } else {
        Err(Error::Divergence("gamma shape estimate is not finite".into()))
    }
}

/// Analytic gradient of the log-likelihood with respect to `β`.
pub fn loglik_gradient<T: Scalar>(
    likelihood: Likelihood<T>,
    design: &DesignMatrix<T>,
    response: &[T],
    exposure: Option<&[T]>,
    beta: &[T],
) -> Vec<T> {
    let eta = design.linear_predictor(beta);
    let mut grad = vec![T::zero(); design.n_cols()];
    for (i, row) in design.rows().enumerate() {
        let d = exposure.map_or(T::one(), |e| e[i]);
        let mu = d * eta[i].exp();
        let score = match likelihood {
            Likelihood::Poisson => response[i] - mu,
            Likelihood::Gamma { shape } => shape * (response[i] / mu - T::one()),
        };
        for (g, x) in grad.iter_mut().zip(row) {
            *g = *g + score * *x;
        }
    }
    grad
}

/// `d · exp(Xβ)` for Poisson, `exp(Xβ)` for gamma.
pub fn predict_mean<T: Scalar>(fit: &GlmFit<T>, design: &DesignMatrix<T>, exposure: Option<&[T]>) -> Result<Vec<T>> {
    if design.labels() != fit.labels.as_slice() {
        return Err(Error::Schema(format!(
            "design columns {:?} differ from fitted columns {:?}",
            design.labels(),
            fit.labels
        )));
    }
    let eta = design.linear_predictor(&fit.beta);
    Ok(match (fit.family, exposure) {
        (Family::Poisson, Some(d)) => eta.iter().zip(d).map(|(e, d)| *d * e.exp()).collect(),
        _ => eta.iter().map(|e| e.exp()).collect(),
    })
}
