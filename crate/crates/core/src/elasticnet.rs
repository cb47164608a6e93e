//! Elastic-net penalized log-link regression and cross-validated choice of
//! `(α, λ)`.
//!
//! The maximized objective is
//!
//! ```text
//! ℓ(β) − n λ [ α Σ|β̃ⱼ| + (1 − α)/2 Σ β̃ⱼ² ]
//! ```
//!
//! where `β̃` are the coefficients of the standardized (centred, unit-variance)
//! columns and `ℓ` is the unit-dispersion quasi log-likelihood of the family.
//! `α = 1` is the pure absolute-value penalty. Each outer step builds the IRLS
//! quadratic approximation, solves it by cyclic coordinate descent and then
//! polishes the active set with an exact Newton solve.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::glm::{gamma_loglik, gamma_shape_mle, poisson_loglik, Family, GlmFit};
use crate::irls::{fit_log_link, unit_loglik, IrlsConfig};
use crate::linalg::solve_spd;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum PenalizedFamily {
    Poisson,
    Gamma,
    /// Mean model of a Tweedie amount with variance power `p` and prior weights.
    TweedieMean { p: f64 },
}

impl PenalizedFamily {
    pub fn variance_power(self) -> f64 {
        match self {
            Self::Poisson => 1.0,
            Self::Gamma => 2.0,
            Self::TweedieMean { p } => p,
        }
    }
}

/// Penalty weights and which coefficients they apply to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub alpha: f64,
    pub lambda: f64,
    pub penalize: Vec<bool>,
}

impl PenaltySpec {
    /// Penalizes every column except the intercept and the `exempt` labels.
    pub fn new(labels: &[String], alpha: f64, lambda: f64, exempt: &[&str]) -> Result<Self> {
        let penalize = labels
            .iter()
            .enumerate()
            .map(|(j, l)| j > 0 && !exempt.contains(&l.as_str()))
            .collect();
        let spec = Self { alpha, lambda, penalize };
        spec.validate(labels.len())?;
        Ok(spec)
    }

    pub fn validate(&self, n_cols: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::argument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::argument(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        if self.penalize.len() != n_cols {
            return Err(Error::argument("penalty mask length differs from the design columns"));
        }
        if self.penalize.first() == Some(&true) {
            return Err(Error::argument("the intercept is never penalized"));
        }
        Ok(())
    }

    fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnetConfig {
    /// Relative change of the penalized objective at convergence.
    pub tol: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
    /// Convergence of the coordinate sweeps, on the weighted squared coefficient change.
    pub sweep_tol: f64,
    pub eta_bound: f64,
}

impl Default for EnetConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_outer: 100,
            max_sweeps: 100_000,
            sweep_tol: 1e-14,
            eta_bound: 40.0,
        }
    }
}

/// Response, exposure and prior weights shared by every fit on the same rows.
#[derive(Debug, Clone, Copy)]
pub struct PenalizedData<'a, T> {
    pub design: &'a DesignMatrix<T>,
    pub y: &'a [T],
    /// Enters the mean as `d · exp(Xβ)`.
    pub exposure: Option<&'a [T]>,
    pub weights: Option<&'a [T]>,
}

impl<T: Scalar> PenalizedData<'_, T> {
    fn check(&self) -> Result<()> {
        let n = self.design.n_rows();
        if self.y.len() != n || self.exposure.is_some_and(|d| d.len() != n) || self.weights.is_some_and(|w| w.len() != n) {
            return Err(Error::argument("response, exposure and weights must match the design rows"));
        }
        if n == 0 {
            return Err(Error::argument("no observations"));
        }
        Ok(())
    }

    fn offset(&self, i: usize) -> T {
        self.exposure.map_or(T::zero(), |d| d[i].ln())
    }

    fn prior(&self, i: usize) -> T {
        self.weights.map_or(T::one(), |w| w[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedFit<T> {
    pub family: PenalizedFamily,
    pub labels: Vec<String>,
    /// Coefficients on the original column scale.
    pub beta: Vec<T>,
    pub alpha: f64,
    pub lambda: f64,
    /// Unit-dispersion quasi log-likelihood at `beta`.
    pub quasi_loglik: T,
    pub objective: T,
    /// Largest violation of the optimality conditions, on the per-observation scale.
    pub kkt_violation: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> PenalizedFit<T> {
    /// Penalized coefficients that are not exactly zero.
    pub fn nonzero(&self, spec: &PenaltySpec) -> usize {
        self.beta
            .iter()
            .zip(&spec.penalize)
            .filter(|(b, &p)| p && **b != T::zero())
            .count()
    }

    /// Full-likelihood [`GlmFit`] of a Poisson or gamma fit (gamma shape by maximum likelihood).
    pub fn to_glm(&self, data: &PenalizedData<'_, T>) -> Result<GlmFit<T>> {
        let eta = data.design.linear_predictor(&self.beta);
        let mu: Vec<T> = eta.iter().enumerate().map(|(i, e)| (*e + data.offset(i)).exp()).collect();
        let free = self.beta.iter().filter(|b| **b != T::zero()).count().max(1);
        let (family, shape, loglik) = match self.family {
            PenalizedFamily::Poisson => {
                let counts: Vec<u32> = data.y.iter().map(|v| v.to_f64_lossy().round() as u32).collect();
                (Family::Poisson, None, poisson_loglik(&counts, &mu))
            }
            PenalizedFamily::Gamma => {
                let shape = gamma_shape_mle(data.y, &mu)?;
                (Family::Gamma, Some(shape), gamma_loglik(data.y, &mu, shape))
            }
            PenalizedFamily::TweedieMean { .. } => {
                return Err(Error::argument("a Tweedie mean fit has no GlmFit form; use the double GLM"))
            }
        };
        Ok(GlmFit {
            family,
            labels: self.labels.clone(),
            beta: self.beta.clone(),
            shape,
            loglik,
            n_params: free + usize::from(shape.is_some()),
            converged: self.converged,
            iterations: self.iterations,
            dropped: Vec::new(),
        })
    }
}

/// `sign(z) · max(|z| − γ, 0)`
#[inline]
pub fn soft_threshold<T: Scalar>(z: T, gamma: T) -> T {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}

/// Column-major standardized copy of the design; column 0 stays the intercept.
struct Standardized<T> {
    n: usize,
    p: usize,
    cols: Vec<Vec<T>>,
    mean: Vec<T>,
    scale: Vec<T>,
    constant: Vec<bool>,
}

impl<T: Scalar> Standardized<T> {
    fn new(design: &DesignMatrix<T>) -> Self {
        let n = design.n_rows();
        let p = design.n_cols();
        let nf = T::of_usize(n);
        let mut cols = Vec::with_capacity(p);
        let mut mean = vec![T::zero(); p];
        let mut scale = vec![T::one(); p];
        let mut constant = vec![false; p];
        for j in 0..p {
            let col: Vec<T> = design.column(j).collect();
            if j == 0 {
                cols.push(col);
                continue;
            }
            let m = col.iter().copied().sum::<T>() / nf;
            let var = col.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / nf;
            let sd = var.sqrt();
            if !(sd > T::epsilon().sqrt() * (T::one() + m.abs())) {
                constant[j] = true;
                cols.push(vec![T::zero(); n]);
                mean[j] = m;
                continue;
            }
            mean[j] = m;
            scale[j] = sd;
            cols.push(col.iter().map(|&x| (x - m) / sd).collect());
        }
        Self {
            n,
            p,
            cols,
            mean,
            scale,
            constant,
        }
    }

    fn eta(&self, b: &[T]) -> Vec<T> {
        let mut eta = vec![b[0]; self.n];
        for j in 1..self.p {
            if b[j] != T::zero() {
                for (e, x) in eta.iter_mut().zip(&self.cols[j]) {
                    *e = *e + b[j] * *x;
                }
            }
        }
        eta
    }

    fn to_original(&self, b: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.p];
        out[0] = b[0];
        for j in 1..self.p {
            if self.constant[j] {
                continue;
            }
            out[j] = b[j] / self.scale[j];
            out[0] = out[0] - out[j] * self.mean[j];
        }
        out
    }

    fn from_original(&self, b: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.p];
        out[0] = b[0];
        for j in 1..self.p {
            if self.constant[j] {
                continue;
            }
            out[j] = b[j] * self.scale[j];
            out[0] = out[0] + b[j] * self.mean[j];
        }
        out
    }
}

struct Solver<'a, T> {
    data: PenalizedData<'a, T>,
    std: Standardized<T>,
    power: T,
    alpha: T,
    /// `n λ` on the summed log-likelihood scale.
    n_lambda: T,
    penalize: Vec<bool>,
    config: EnetConfig,
}

impl<T: Scalar> Solver<'_, T> {
    fn means(&self, eta: &[T]) -> Option<Vec<T>> {
        let bound = T::of(self.config.eta_bound);
        let mut mu = Vec::with_capacity(eta.len());
        for (i, &e) in eta.iter().enumerate() {
            if e.abs() > bound {
                return None;
            }
            mu.push((e + self.data.offset(i)).exp());
        }
        Some(mu)
    }

    fn penalty(&self, b: &[T]) -> T {
        let half = T::of(0.5);
        let mut s = T::zero();
        for j in 1..self.std.p {
            if self.penalize[j] {
                s = s + self.alpha * b[j].abs() + (T::one() - self.alpha) * half * b[j] * b[j];
            }
        }
        self.n_lambda * s
    }

    fn quasi(&self, mu: &[T]) -> T {
        mu.iter()
            .enumerate()
            .map(|(i, &m)| self.data.prior(i) * unit_loglik(self.data.y[i], m, self.power))
            .sum()
    }

    /// Objective, means and quasi log-likelihood at standardized coefficients `b`.
    fn objective(&self, b: &[T]) -> Option<(T, Vec<T>, T)> {
        let mu = self.means(&self.std.eta(b))?;
        let q = self.quasi(&mu);
        let f = q - self.penalty(b);
        f.is_finite().then_some((f, mu, q))
    }

    /// Score of the quasi log-likelihood in the standardized coordinates.
    fn score(&self, mu: &[T]) -> Vec<T> {
        let one = T::one();
        let s: Vec<T> = mu
            .iter()
            .enumerate()
            .map(|(i, &m)| self.data.prior(i) * m.powf(one - self.power) * (self.data.y[i] - m))
            .collect();
        self.std
            .cols
            .iter()
            .map(|c| c.iter().zip(&s).map(|(x, v)| *x * *v).sum())
            .collect()
    }

    fn kkt(&self, b: &[T], mu: &[T]) -> T {
        let g = self.score(mu);
        let nf = T::of_usize(self.std.n);
        let lam = self.n_lambda / nf;
        let mut worst = T::zero();
        for j in 0..self.std.p {
            if self.std.constant[j] {
                continue;
            }
            let gj = g[j] / nf;
            let v = if !self.penalize[j] {
                gj.abs()
            } else if b[j] == T::zero() {
                (gj.abs() - lam * self.alpha).max(T::zero())
            } else {
                (gj - lam * (self.alpha * b[j].signum() + (T::one() - self.alpha) * b[j])).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Minimizes `½ Σ W (z − X̃b)² + penalty` starting from `b`.
    fn solve_quadratic(&self, w: &[T], z: &[T], b: &mut [T]) {
        let p = self.std.p;
        let one = T::one();
        let eta = self.std.eta(b);
        let mut r: Vec<T> = z.iter().zip(&eta).map(|(z, e)| *z - *e).collect();
        let xwx: Vec<T> = self
            .std
            .cols
            .iter()
            .map(|c| c.iter().zip(w).map(|(x, w)| *w * *x * *x).sum())
            .collect();
        let wsum: T = w.iter().copied().sum();
        let l1 = self.n_lambda * self.alpha;
        let l2 = self.n_lambda * (one - self.alpha);
        let tol = T::of(self.config.sweep_tol) * wsum;

        for _round in 0..20 {
            for _ in 0..self.config.max_sweeps {
                let mut max_change = T::zero();
                for j in 0..p {
                    if self.std.constant[j] || xwx[j] == T::zero() {
                        continue;
                    }
                    let col = &self.std.cols[j];
                    let grad: T = col.iter().zip(w).zip(&r).map(|((x, w), r)| *x * *w * *r).sum();
                    let old = b[j];
                    let new = if self.penalize[j] {
                        soft_threshold(grad + xwx[j] * old, l1) / (xwx[j] + l2)
                    } else {
                        old + grad / xwx[j]
                    };
                    let delta = new - old;
                    if delta != T::zero() {
                        for (ri, x) in r.iter_mut().zip(col) {
                            *ri = *ri - delta * *x;
                        }
                        b[j] = new;
                        max_change = max_change.max(xwx[j] * delta * delta);
                    }
                }
                if max_change < tol {
                    break;
                }
            }
            // exact solve on the active set with the signs found by the sweeps
            let active: Vec<usize> = (0..p)
                .filter(|&j| !self.std.constant[j] && xwx[j] > T::zero() && (!self.penalize[j] || b[j] != T::zero()))
                .collect();
            let k = active.len();
            let mut a = vec![T::zero(); k * k];
            let mut rhs = vec![T::zero(); k];
            for (u, &ju) in active.iter().enumerate() {
                let cu = &self.std.cols[ju];
                rhs[u] = cu.iter().zip(w).zip(z).map(|((x, w), z)| *x * *w * *z).sum();
                if self.penalize[ju] {
                    rhs[u] = rhs[u] - l1 * b[ju].signum();
                }
                for (v, &jv) in active.iter().enumerate().skip(u) {
                    let cv = &self.std.cols[jv];
                    let mut s: T = cu.iter().zip(cv).zip(w).map(|((x, y), w)| *x * *y * *w).sum();
                    if u == v && self.penalize[ju] {
                        s = s + l2;
                    }
                    a[u * k + v] = s;
                    a[v * k + u] = s;
                }
            }
            let sol = solve_spd(&a, &rhs, k);
            let signs_hold = sol.dropped.is_empty()
                && active
                    .iter()
                    .zip(&sol.x)
                    .all(|(&j, x)| !self.penalize[j] || x.signum() == b[j].signum() && *x != T::zero());
            if signs_hold {
                for (&j, x) in active.iter().zip(&sol.x) {
                    b[j] = *x;
                }
                let eta = self.std.eta(b);
                r = z.iter().zip(&eta).map(|(z, e)| *z - *e).collect();
            }
            // inactive coordinates must stay inside the threshold
            let slack = T::of(1e-10) * (l1 + wsum);
            let violated = (0..p).any(|j| {
                self.penalize[j] && !self.std.constant[j] && b[j] == T::zero() && {
                    let grad: T = self.std.cols[j].iter().zip(w).zip(&r).map(|((x, w), r)| *x * *w * *r).sum();
                    grad.abs() > l1 + slack
                }
            });
            if signs_hold && !violated {
                return;
            }
        }
    }

    fn run(&self, start: Option<&[T]>) -> Result<PenalizedFit<T>> {
        let p = self.std.p;
        let two = T::of(2.0);
        let mut b = match start {
            Some(s) => self.std.from_original(s),
            None => {
                // intercept at the weighted mean rate
                let (mut num, mut den) = (T::zero(), T::zero());
                for i in 0..self.std.n {
                    num = num + self.data.prior(i) * self.data.y[i];
                    den = den + self.data.prior(i) * self.data.offset(i).exp();
                }
                if !(num > T::zero()) {
                    return Err(Error::Divergence("every response is zero".into()));
                }
                let mut b = vec![T::zero(); p];
                b[0] = (num / den).ln();
                b
            }
        };
        let (mut f, mut mu, mut q) = self
            .objective(&b)
            .ok_or_else(|| Error::Divergence("starting values overflow".into()))?;
        let tol = T::of(self.config.tol);
        for iter in 1..=self.config.max_outer {
            let eta = self.std.eta(&b);
            let mut w = Vec::with_capacity(self.std.n);
            let mut z = Vec::with_capacity(self.std.n);
            for (i, &m) in mu.iter().enumerate() {
                w.push(self.data.prior(i) * m.powf(two - self.power));
                z.push(eta[i] + (self.data.y[i] - m) / m);
            }
            let mut target = b.clone();
            self.solve_quadratic(&w, &z, &mut target);

            let mut step: Vec<T> = target.iter().zip(&b).map(|(t, o)| *t - *o).collect();
            let slack = T::of(1e-13) * (f.abs() + T::one());
            let mut accepted = None;
            for _ in 0..50 {
                let trial: Vec<T> = b.iter().zip(&step).map(|(o, s)| *o + *s).collect();
                if let Some((ft, mt, qt)) = self.objective(&trial) {
                    if ft >= f - slack {
                        accepted = Some((trial, ft, mt, qt));
                        break;
                    }
                }
                step.iter_mut().for_each(|s| *s = *s * T::of(0.5));
            }
            let Some((trial, ft, mt, qt)) = accepted else {
                return Ok(self.finish(b, f, q, &mu, iter, true));
            };
            let change = (ft - f).abs();
            let max_step = step.iter().map(|s| s.abs()).fold(T::zero(), T::max);
            b = trial;
            f = ft;
            mu = mt;
            q = qt;
            if change <= tol * (f.abs() + T::one()) && max_step < T::of(1e-9) {
                return Ok(self.finish(b, f, q, &mu, iter, true));
            }
        }
        Err(Error::NonConvergence {
            iterations: self.config.max_outer,
            last: self.std.to_original(&b).iter().map(|v| v.to_f64_lossy()).collect(),
        })
    }

    fn finish(&self, b: Vec<T>, f: T, q: T, mu: &[T], iterations: usize, converged: bool) -> PenalizedFit<T> {
        PenalizedFit {
            family: PenalizedFamily::Poisson,
            labels: self.data.design.labels().to_vec(),
            beta: self.std.to_original(&b),
            alpha: 0.0,
            lambda: 0.0,
            quasi_loglik: q,
            objective: f,
            kkt_violation: self.kkt(&b, mu),
            iterations,
            converged,
        }
    }
}

fn solver<'a, T: Scalar>(
    data: &PenalizedData<'a, T>,
    family: PenalizedFamily,
    spec: &PenaltySpec,
    config: &EnetConfig,
) -> Result<Solver<'a, T>> {
    data.check()?;
    spec.validate(data.design.n_cols())?;
    let p = family.variance_power();
    if let PenalizedFamily::TweedieMean { p } = family {
        if !(p > 1.0 && p < 2.0) {
            return Err(Error::argument(format!("variance power {p} outside (1, 2)")));
        }
    }
    if data.y.iter().any(|&v| v < T::zero() || !v.is_finite()) || (family == PenalizedFamily::Gamma && data.y.iter().any(|&v| v <= T::zero())) {
        return Err(Error::argument("response outside the family's support"));
    }
    let std = Standardized::new(data.design);
    if let Some(j) = (1..std.p).find(|&j| std.constant[j]) {
        log::warn!("column {} is constant and is held at zero", data.design.labels()[j]);
    }
    Ok(Solver {
        data: *data,
        std,
        power: T::of(p),
        alpha: T::of(spec.alpha),
        n_lambda: T::of(spec.lambda) * T::of_usize(data.design.n_rows()),
        penalize: spec.penalize.clone(),
        config: *config,
    })
}

/// Elastic-net fit at one `(α, λ)`.
pub fn fit_penalized<T: Scalar>(
    data: &PenalizedData<'_, T>,
    family: PenalizedFamily,
    spec: &PenaltySpec,
    config: &EnetConfig,
) -> Result<PenalizedFit<T>> {
    fit_penalized_from(data, family, spec, config, None)
}

/// As [`fit_penalized`], warm-started at `start` (original scale).
pub fn fit_penalized_from<T: Scalar>(
    data: &PenalizedData<'_, T>,
    family: PenalizedFamily,
    spec: &PenaltySpec,
    config: &EnetConfig,
    start: Option<&[T]>,
) -> Result<PenalizedFit<T>> {
    let s = solver(data, family, spec, config)?;
    let mut fit = s.run(start)?;
    fit.family = family;
    fit.alpha = spec.alpha;
    fit.lambda = spec.lambda;
    Ok(fit)
}

/// Smallest `λ` at which every penalized coefficient is zero (per-observation scale).
/// For `α = 0` the value at `α = 0.001` is returned, as no finite `λ` zeroes a ridge fit.
pub fn lambda_max<T: Scalar>(data: &PenalizedData<'_, T>, family: PenalizedFamily, spec: &PenaltySpec) -> Result<f64> {
    data.check()?;
    let keep: Vec<usize> = (0..data.design.n_cols()).filter(|&j| !spec.penalize[j]).collect();
    let null_design = data.design.select_columns(&keep)?;
    let offset: Option<Vec<T>> = data.exposure.map(|d| d.iter().map(|v| v.ln()).collect());
    let null = fit_log_link(
        &null_design,
        data.y,
        offset.as_deref(),
        data.weights,
        T::of(family.variance_power()),
        &IrlsConfig::default(),
    )?;
    let std = Standardized::new(data.design);
    let one = T::one();
    let v = T::of(family.variance_power());
    let s: Vec<T> = null
        .mu
        .iter()
        .enumerate()
        .map(|(i, &m)| data.prior(i) * m.powf(one - v) * (data.y[i] - m))
        .collect();
    let nf = T::of_usize(data.design.n_rows());
    let mut g = 0.0f64;
    for j in 1..std.p {
        if spec.penalize[j] && !std.constant[j] {
            let gj: T = std.cols[j].iter().zip(&s).map(|(x, v)| *x * *v).sum::<T>() / nf;
            g = g.max(gj.abs().to_f64_lossy());
        }
    }
    // a relative margin keeps rounding in the coordinate updates from admitting
    // a coefficient of order 1e-16 exactly at the boundary
    Ok(g / spec.alpha.max(1e-3) * (1.0 + 1e-9))
}

/// Geometric path from `lambda_max` down to `ratio · lambda_max`.
pub fn lambda_path(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda <= 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda).map(|k| lambda_max * (step * k as f64).exp()).collect()
}

/// Mean unit deviance of a family at fitted means `mu`.
pub fn mean_deviance<T: Scalar>(family: PenalizedFamily, y: &[T], mu: &[T], weights: Option<&[T]>) -> T {
    let one = T::one();
    let two = T::of(2.0);
    let mut total = T::zero();
    let mut wsum = T::zero();
    for (i, (&y, &m)) in y.iter().zip(mu).enumerate() {
        let w = weights.map_or(one, |w| w[i]);
        let d = match family {
            PenalizedFamily::Poisson => {
                let head = if y > T::zero() { y * (y / m).ln() } else { T::zero() };
                two * (head - (y - m))
            }
            PenalizedFamily::Gamma => two * (-(y / m).ln() + (y - m) / m),
            PenalizedFamily::TweedieMean { p } => {
                let p = T::of(p);
                let head = if y > T::zero() {
                    y.powf(two - p) / ((one - p) * (two - p))
                } else {
                    T::zero()
                };
                two * (head - y * m.powf(one - p) / (one - p) + m.powf(two - p) / (two - p))
            }
        };
        total = total + w * d;
        wsum = wsum + w;
    }
    total / wsum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub alpha: f64,
    pub lambda: f64,
    pub mean_deviance: f64,
    pub se_deviance: f64,
    pub nonzero_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Minimum mean out-of-fold deviance.
    pub best: PenaltySpec,
    /// Largest `λ` (same `α`) within one standard error of the minimum.
    pub one_se: PenaltySpec,
    pub table: Vec<CvRow>,
}

impl CvResult {
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.table {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub alpha_grid: Vec<f64>,
    pub n_lambda: usize,
    /// Smallest `λ` as a fraction of `λ_max`.
    pub lambda_ratio: f64,
    pub folds: usize,
    pub seed: u64,
    pub exempt: Vec<String>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            alpha_grid: vec![0.0, 0.5, 1.0],
            n_lambda: 30,
            lambda_ratio: 1e-3,
            folds: 5,
            seed: 1,
            exempt: Vec::new(),
        }
    }
}

/// Folds drawn at group granularity: groups are shuffled and dealt round-robin.
pub fn assign_folds(groups: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut fold_of = std::collections::HashMap::with_capacity(ids.len());
    for (k, g) in ids.into_iter().enumerate() {
        fold_of.insert(g, k % folds);
    }
    groups.iter().map(|g| fold_of[g]).collect()
}

fn subset<T: Copy>(v: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&i| v[i]).collect()
}

/// Cross-validated `(α, λ)` by out-of-fold deviance. `groups` holds a policy
/// number per row so that no policy straddles two folds.
pub fn cv_select<T: Scalar>(
    data: &PenalizedData<'_, T>,
    family: PenalizedFamily,
    groups: &[usize],
    cv: &CvConfig,
    config: &EnetConfig,
) -> Result<CvResult> {
    data.check()?;
    if cv.folds < 2 {
        return Err(Error::argument("at least two folds are needed"));
    }
    if groups.len() != data.design.n_rows() {
        return Err(Error::argument("one group label per row is needed"));
    }
    if cv.alpha_grid.is_empty() || cv.n_lambda == 0 {
        return Err(Error::argument("empty alpha grid or lambda path"));
    }
    let fold = assign_folds(groups, cv.folds, cv.seed);
    let mut train_rows = vec![Vec::new(); cv.folds];
    let mut test_rows = vec![Vec::new(); cv.folds];
    for (i, &f) in fold.iter().enumerate() {
        for k in 0..cv.folds {
            if k == f {
                test_rows[k].push(i);
            } else {
                train_rows[k].push(i);
            }
        }
    }
    for k in 0..cv.folds {
        let positive = train_rows[k].iter().any(|&i| data.y[i] > T::zero());
        if test_rows[k].is_empty() || !positive {
            return Err(Error::FoldAssignment(format!(
                "fold {k} has {} held-out rows and {} training rows with a positive response; \
                 use fewer folds or another seed",
                test_rows[k].len(),
                train_rows[k].iter().filter(|&&i| data.y[i] > T::zero()).count()
            )));
        }
    }
    let exempt: Vec<&str> = cv.exempt.iter().map(String::as_str).collect();
    let labels = data.design.labels();

    struct AlphaPath {
        spec: PenaltySpec,
        lambdas: Vec<f64>,
        nonzero: Vec<usize>,
    }

    let paths: Vec<AlphaPath> = cv
        .alpha_grid
        .par_iter()
        .map(|&alpha| -> Result<AlphaPath> {
            let spec = PenaltySpec::new(labels, alpha, 0.0, &exempt)?;
            let lmax = lambda_max(data, family, &spec)?;
            let lambdas = lambda_path(lmax, cv.n_lambda, cv.lambda_ratio);
            let mut start: Option<Vec<T>> = None;
            let mut nonzero = Vec::with_capacity(lambdas.len());
            for &l in &lambdas {
                let s = spec.with_lambda(l);
                let fit = fit_penalized_from(data, family, &s, config, start.as_deref())?;
                nonzero.push(fit.nonzero(&s));
                start = Some(fit.beta);
            }
            Ok(AlphaPath {
                spec,
                lambdas,
                nonzero,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // (alpha index, fold) work units
    let units: Vec<(usize, usize)> = (0..paths.len()).flat_map(|a| (0..cv.folds).map(move |k| (a, k))).collect();
    let deviances: Vec<Vec<f64>> = units
        .par_iter()
        .map(|&(a, k)| -> Result<Vec<f64>> {
            let path = &paths[a];
            let tr = &train_rows[k];
            let te = &test_rows[k];
            let d_tr = data.design.select_rows(tr);
            let d_te = data.design.select_rows(te);
            let y_tr = subset(data.y, tr);
            let y_te = subset(data.y, te);
            let e_tr = data.exposure.map(|e| subset(e, tr));
            let e_te = data.exposure.map(|e| subset(e, te));
            let w_tr = data.weights.map(|w| subset(w, tr));
            let w_te = data.weights.map(|w| subset(w, te));
            let train = PenalizedData {
                design: &d_tr,
                y: &y_tr,
                exposure: e_tr.as_deref(),
                weights: w_tr.as_deref(),
            };
            let mut start: Option<Vec<T>> = None;
            let mut out = Vec::with_capacity(path.lambdas.len());
            for &l in &path.lambdas {
                let fit = fit_penalized_from(&train, family, &path.spec.with_lambda(l), config, start.as_deref())?;
                let eta = d_te.linear_predictor(&fit.beta);
                let mu: Vec<T> = eta
                    .iter()
                    .enumerate()
                    .map(|(i, e)| e.exp() * e_te.as_ref().map_or(T::one(), |d| d[i]))
                    .collect();
                out.push(mean_deviance(family, &y_te, &mu, w_te.as_deref()).to_f64_lossy());
                start = Some(fit.beta);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let kf = cv.folds as f64;
    let mut table = Vec::new();
    for (a, path) in paths.iter().enumerate() {
        for (li, &lambda) in path.lambdas.iter().enumerate() {
            let vals: Vec<f64> = (0..cv.folds).map(|k| deviances[a * cv.folds + k][li]).collect();
            let mean = vals.iter().sum::<f64>() / kf;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (kf - 1.0);
            table.push(CvRow {
                alpha: path.spec.alpha,
                lambda,
                mean_deviance: mean,
                se_deviance: (var / kf).sqrt(),
                nonzero_count: path.nonzero[li],
            });
        }
    }
    let best_row = table
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.mean_deviance.total_cmp(&y.1.mean_deviance).then(x.0.cmp(&y.0)))
        .map(|(i, _)| i)
        .expect("non-empty table");
    let best = &table[best_row];
    let limit = best.mean_deviance + best.se_deviance;
    let one_se_row = table
        .iter()
        .filter(|r| r.alpha == best.alpha && r.mean_deviance <= limit)
        .max_by(|x, y| x.lambda.total_cmp(&y.lambda))
        .expect("the minimum qualifies");
    let a_idx = paths.iter().position(|p| p.spec.alpha == best.alpha).expect("alpha present");
    let spec = &paths[a_idx].spec;
    Ok(CvResult {
        best: spec.with_lambda(best.lambda),
        one_se: spec.with_lambda(one_se_row.lambda),
        table,
    })
}
