//! Iteratively reweighted least squares for log-link models whose variance is
//! proportional to a power of the mean (Poisson `v = 1`, gamma `v = 2`,
//! Tweedie mean model `1 < v < 2`).
//!
//! Each step solves `(XᵀWX) β = XᵀW z` with working weights `w·μ^{2−v}` and
//! working response `z = η − offset + (y − μ)/μ`. The step is halved until the
//! quasi log-likelihood
//!
//! ```text
//! Σ w · ( y μ^{1−v}/(1−v) − μ^{2−v}/(2−v) )
//! ```
//!
//! does not decrease. That objective is maximized by the maximum-likelihood
//! coefficients of each of the three families, whatever the dispersion.

use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, weighted_normal_equations, SpdSolution};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlsConfig {
    /// Relative change of the objective below which the fit has converged.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Largest `|Xβ|` accepted before the fit is declared divergent.
    pub eta_bound: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            max_halvings: 40,
            eta_bound: 40.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IrlsOutput<T> {
    pub beta: Vec<T>,
    pub mu: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    pub dropped: Vec<usize>,
}

/// Per-observation quasi log-likelihood at variance power `v`, up to terms free of `μ`.
#[inline]
pub fn unit_loglik<T: Scalar>(y: T, mu: T, v: T) -> T {
    if v == T::one() {
        if y == T::zero() {
            -mu
        } else {
            y * mu.ln() - mu
        }
    } else if v == T::of(2.0) {
        -y / mu - mu.ln()
    } else {
        let one = T::one();
        let two = T::of(2.0);
        y * mu.powf(one - v) / (one - v) - mu.powf(two - v) / (two - v)
    }
}

/// Weighted least-squares step; columns in `forced_out` are held at zero.
pub(crate) fn wls_solve<T: Scalar>(
    design: &DesignMatrix<T>,
    weights: &[T],
    z: &[T],
    forced_out: &[usize],
) -> SpdSolution<T> {
    let p = design.n_cols();
    let (mut a, mut b) = weighted_normal_equations(design.values(), p, weights, z);
    for &j in forced_out {
        for k in 0..p {
            a[j * p + k] = T::zero();
            a[k * p + j] = T::zero();
        }
        b[j] = T::zero();
    }
    let mut sol = solve_spd(&a, &b, p);
    for &j in forced_out {
        sol.x[j] = T::zero();
    }
    sol
}

struct Problem<'a, T> {
    design: &'a DesignMatrix<T>,
    y: &'a [T],
    offset: Option<&'a [T]>,
    prior: Option<&'a [T]>,
    power: T,
    eta_bound: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn offset(&self, i: usize) -> T {
        self.offset.map_or(T::zero(), |o| o[i])
    }

    fn prior(&self, i: usize) -> T {
        self.prior.map_or(T::one(), |w| w[i])
    }

    /// Fitted means, objective, and whether `|Xβ|` stayed inside the bound.
    fn evaluate(&self, beta: &[T]) -> Option<(Vec<T>, T, bool)> {
        let eta = self.design.linear_predictor(beta);
        let mut inside = true;
        let mut obj = T::zero();
        let mut mu = Vec::with_capacity(eta.len());
        for (i, e) in eta.into_iter().enumerate() {
            inside &= e.abs() <= self.eta_bound;
            let m = (e + self.offset(i)).exp();
            if !(m.is_finite() && m > T::zero()) {
                return None;
            }
            obj = obj + self.prior(i) * unit_loglik(self.y[i], m, self.power);
            mu.push(m);
        }
        obj.is_finite().then_some((mu, obj, inside))
    }

    fn working(&self, beta: Option<&[T]>, mu: &[T]) -> (Vec<T>, Vec<T>) {
        let two = T::of(2.0);
        let eta = beta.map(|b| self.design.linear_predictor(b));
        let mut w = Vec::with_capacity(mu.len());
        let mut z = Vec::with_capacity(mu.len());
        for (i, &m) in mu.iter().enumerate() {
            let lin = match &eta {
                Some(e) => e[i],
                None => m.ln() - self.offset(i),
            };
            let v = if self.power == T::one() {
                m
            } else if self.power == two {
                T::one()
            } else {
                m.powf(two - self.power)
            };
            w.push(self.prior(i) * v);
            z.push(lin + (self.y[i] - m) / m);
        }
        (w, z)
    }
}

/// Maximizes the quasi log-likelihood of a log-link model with `μ = exp(offset + Xβ)`.
pub fn fit_log_link<T: Scalar>(
    design: &DesignMatrix<T>,
    y: &[T],
    offset: Option<&[T]>,
    prior_weights: Option<&[T]>,
    variance_power: T,
    config: &IrlsConfig,
) -> Result<IrlsOutput<T>> {
    fit_log_link_from(design, y, offset, prior_weights, variance_power, config, None)
}

/// As [`fit_log_link`], starting from `start` when it gives finite means.
pub fn fit_log_link_from<T: Scalar>(
    design: &DesignMatrix<T>,
    y: &[T],
    offset: Option<&[T]>,
    prior_weights: Option<&[T]>,
    variance_power: T,
    config: &IrlsConfig,
    start: Option<&[T]>,
) -> Result<IrlsOutput<T>> {
    let n = design.n_rows();
    if start.is_some_and(|b| b.len() != design.n_cols()) {
        return Err(Error::argument("starting coefficients must match the design columns"));
    }
    if y.len() != n || offset.is_some_and(|o| o.len() != n) || prior_weights.is_some_and(|w| w.len() != n) {
        return Err(Error::argument("response, offset and weights must match the design rows"));
    }
    if n == 0 {
        return Err(Error::argument("no observations"));
    }
    let prob = Problem {
        design,
        y,
        offset,
        prior: prior_weights,
        power: variance_power,
        eta_bound: T::of(config.eta_bound),
    };

    let (mut num, mut den) = (T::zero(), T::zero());
    for i in 0..n {
        num = num + prob.prior(i) * y[i];
        den = den + prob.prior(i) * prob.offset(i).exp();
    }
    let rate = num / den;
    if !(rate > T::zero()) {
        return Err(Error::Divergence(
            "every response is zero; the intercept estimate is unbounded below".into(),
        ));
    }
    let warm = start.and_then(|b| prob.evaluate(b).map(|(m, _, _)| (b, m)));
    let (w, z) = match &warm {
        Some((b, m)) => prob.working(Some(b), m),
        None => {
            let mu0: Vec<T> = (0..n)
                .map(|i| (y[i] + rate * prob.offset(i).exp()) * T::of(0.5))
                .collect();
            prob.working(None, &mu0)
        }
    };
    let first = wls_solve(design, &w, &z, &[]);
    let dropped = first.dropped.clone();
    if !dropped.is_empty() {
        log::warn!(
            "collinear design columns dropped: {:?}",
            dropped.iter().map(|&j| &design.labels()[j]).collect::<Vec<_>>()
        );
    }
    let mut beta = first.x;
    let (mut mu, mut obj) = match prob.evaluate(&beta) {
        Some((m, o, _)) => (m, o),
        None => return Err(Error::Divergence("initial step overflowed".into())),
    };

    let tol = T::of(config.tol);
    for iter in 1..=config.max_iter {
        let (w, z) = prob.working(Some(&beta), &mu);
        let target = wls_solve(design, &w, &z, &dropped).x;
        let mut step: Vec<T> = target.iter().zip(&beta).map(|(t, b)| *t - *b).collect();
        let slack = T::of(1e-13) * (obj.abs() + T::one());
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let trial: Vec<T> = beta.iter().zip(&step).map(|(b, s)| *b + *s).collect();
            if let Some((m, o, inside)) = prob.evaluate(&trial) {
                if o >= obj - slack {
                    accepted = Some((trial, m, o, inside));
                    break;
                }
            }
            step.iter_mut().for_each(|s| *s = *s * T::of(0.5));
        }
        let Some((trial, m, o, inside)) = accepted else {
            // no ascent direction left at working precision
            return Ok(IrlsOutput {
                beta,
                mu,
                objective: obj,
                iterations: iter,
                converged: true,
                dropped,
            });
        };
        if !inside {
            return Err(Error::Divergence(format!(
                "linear predictor left [-{b}, {b}] at iteration {iter}; coefficients unbounded (separation)",
                b = config.eta_bound
            )));
        }
        let change = (o - obj).abs();
        let max_step = step
            .iter()
            .zip(&trial)
            .map(|(s, b)| s.abs() / (T::one() + b.abs()))
            .fold(T::zero(), T::max);
        beta = trial;
        mu = m;
        obj = o;
        if change <= tol * (obj.abs() + T::one()) && max_step < T::of(1e-6) {
            return Ok(IrlsOutput {
                beta,
                mu,
                objective: obj,
                iterations: iter,
                converged: true,
                dropped,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        last: beta.iter().map(|b| b.to_f64_lossy()).collect(),
    })
}
