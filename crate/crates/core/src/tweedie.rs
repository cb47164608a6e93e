//! Tweedie model of the annual claims amount for `1 < p < 2`, written as the
//! joint law of the claim count `N` and the amount `Y`.
//!
//! With `γ = (2 − p)/(p − 1)` the pair is compound Poisson-gamma:
//! `N ~ Poisson(λ)` with `λ = w μ^{2−p} / ((2 − p) φ)`, and
//! `Y | N = n ~ Gamma(nγ, scale (p − 1) φ μ^{p−1} / w)`.
//!
//! Mean and dispersion are estimated jointly by a double GLM: Fisher scoring on
//! the exact joint log-likelihood, where the dispersion block is a gamma GLM on
//! the deviance response `D` (with `E[D] = φ`) weighted by `ν / 2`.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson as PoissonDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::glm::{gamma_log_pdf, poisson_log_pmf, GlmFit};
use crate::irls::{fit_log_link, wls_solve, IrlsConfig};
use crate::scalar::Scalar;
use crate::special::{ln_factorial, ln_gamma};

/// One contract-year for the loss-cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweedieObservation<T> {
    /// Annual claims amount.
    pub y: T,
    /// Annual claims number.
    pub n: u32,
    /// Tweedie weight (distinct from the exposure).
    pub weight: T,
    /// Risk exposure in years; enters the mean as `μ = d · exp(Xβ)`.
    pub exposure: T,
}

impl<T: Scalar> TweedieObservation<T> {
    pub fn new(y: T, n: u32, weight: T, exposure: T) -> Result<Self> {
        check_support(y, n)?;
        if !(weight > T::zero() && exposure > T::zero()) {
            return Err(Error::argument("weight and exposure must be positive"));
        }
        Ok(Self { y, n, weight, exposure })
    }

    /// Weight rule `w = d^{p−1}`.
    pub fn with_default_weight(y: T, n: u32, exposure: T, p: T) -> Result<Self> {
        Self::new(y, n, exposure.powf(p - T::one()), exposure)
    }
}

/// `γ = (2 − p)/(p − 1)`, the gamma shape of a single claim.
pub fn shape_from_power<T: Scalar>(p: T) -> T {
    (T::of(2.0) - p) / (p - T::one())
}

/// Inverse of [`shape_from_power`]: `p = (γ + 2)/(γ + 1)`.
pub fn power_from_shape<T: Scalar>(shape: T) -> T {
    (shape + T::of(2.0)) / (shape + T::one())
}

fn check_power<T: Scalar>(p: T) -> Result<()> {
    if p > T::one() && p < T::of(2.0) {
        Ok(())
    } else {
        Err(Error::argument(format!("variance power {p} outside (1, 2)")))
    }
}

fn check_support<T: Scalar>(y: T, n: u32) -> Result<()> {
    if !(y >= T::zero() && y.is_finite()) {
        return Err(Error::argument(format!("amount {y} must be finite and non-negative")));
    }
    match (y == T::zero(), n == 0) {
        (true, true) | (false, false) => Ok(()),
        (true, false) => Err(Error::Support(format!("zero amount with {n} claims"))),
        (false, true) => Err(Error::Support(format!("amount {y} with no claims"))),
    }
}

fn check_params<T: Scalar>(mu: T, phi: T, p: T, w: T) -> Result<()> {
    check_power(p)?;
    if mu > T::zero() && phi > T::zero() && w > T::zero() && mu.is_finite() && phi.is_finite() && w.is_finite() {
        Ok(())
    } else {
        Err(Error::argument(format!("need mu, phi, w > 0 (got {mu}, {phi}, {w})")))
    }
}

/// Expected claim count `λ = w μ^{2−p} / ((2 − p) φ)`.
pub fn poisson_rate<T: Scalar>(mu: T, phi: T, p: T, w: T) -> T {
    let two = T::of(2.0);
    w * mu.powf(two - p) / ((two - p) * phi)
}

/// `y μ^{1−p}/(1−p) − μ^{2−p}/(2−p)`
#[inline]
fn kernel<T: Scalar>(y: T, mu: T, p: T) -> T {
    let one = T::one();
    let two = T::of(2.0);
    let head = if y == T::zero() {
        T::zero()
    } else {
        y * mu.powf(one - p) / (one - p)
    };
    head - mu.powf(two - p) / (two - p)
}

#[inline]
fn joint_log_density_unchecked<T: Scalar>(y: T, n: u32, mu: T, phi: T, p: T, w: T) -> T {
    let ratio = w / phi;
    let head = ratio * kernel(y, mu, p);
    if n == 0 {
        return head;
    }
    let one = T::one();
    let g = shape_from_power(p);
    let nf = T::of_usize(n as usize);
    head + nf * ((g + one) * ratio.ln() + g * y.ln() - g * (p - one).ln() - (T::of(2.0) - p).ln())
        - ln_factorial::<T>(n as u64)
        - ln_gamma(nf * g)
        - y.ln()
}

/// Log of the joint density of `(N, Y)` at `(n, y)`.
pub fn joint_log_density<T: Scalar>(y: T, n: u32, mu: T, phi: T, p: T, w: T) -> Result<T> {
    check_params(mu, phi, p, w)?;
    check_support(y, n)?;
    Ok(joint_log_density_unchecked(y, n, mu, phi, p, w))
}

/// `ν = (2w/φ) μ^{2−p} / ((p − 1)(2 − p))`; twice the Fisher information for `log φ`.
pub fn dispersion_weight<T: Scalar>(mu: T, phi: T, p: T, w: T) -> T {
    let two = T::of(2.0);
    two * w / phi * mu.powf(two - p) / ((p - T::one()) * (two - p))
}

#[inline]
fn deviance_response_unchecked<T: Scalar>(y: T, n: u32, mu: T, phi: T, p: T, w: T) -> T {
    let nu = dispersion_weight(mu, phi, p, w);
    let nf = T::of_usize(n as usize);
    T::of(2.0) / nu * (-w * kernel(y, mu, p) - phi * nf / (p - T::one())) + phi
}

/// Dispersion response `D` with `E[D] = φ`.
pub fn deviance_response<T: Scalar>(y: T, n: u32, mu: T, phi: T, p: T, w: T) -> Result<T> {
    check_params(mu, phi, p, w)?;
    check_support(y, n)?;
    Ok(deviance_response_unchecked(y, n, mu, phi, p, w))
}

/// Draws `(y, n)` through the compound Poisson-gamma construction.
pub fn sample_joint<R: Rng + ?Sized>(rng: &mut R, mu: f64, phi: f64, p: f64, w: f64) -> (f64, u32) {
    let lambda = poisson_rate(mu, phi, p, w);
    let n = if lambda > 0.0 {
        PoissonDist::new(lambda).expect("positive rate").sample(rng) as u32
    } else {
        0
    };
    if n == 0 {
        return (0.0, 0);
    }
    let scale = (p - 1.0) * phi * mu.powf(p - 1.0) / w;
    let shape = n as f64 * shape_from_power(p);
    let y = GammaDist::new(shape, scale).expect("valid gamma").sample(rng);
    // a draw can underflow to zero for tiny shapes; keep it in the support
    (y.max(f64::MIN_POSITIVE), n)
}

/// Log-density of `(N, Y)` under a compound Poisson-gamma with Poisson mean
/// `lambda`, per-claim mean `severity_mean` and per-claim shape `shape`.
pub fn cpg_joint_log_density<T: Scalar>(y: T, n: u32, lambda: T, severity_mean: T, shape: T) -> T {
    if n == 0 {
        return -lambda;
    }
    let nf = T::of_usize(n as usize);
    poisson_log_pmf(n, lambda) + gamma_log_pdf(y, nf * severity_mean, nf * shape)
}

/// A compound Poisson-gamma fit expressed in Tweedie coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappedCpg<T> {
    /// `η_N + η_Z`, the Tweedie mean predictor without exposure.
    pub mean_predictor: T,
    /// `−log(2−p) − (p−1) η_N + (2−p) η_Z`.
    pub dispersion_predictor: T,
    /// `d · exp(mean_predictor)`.
    pub mu: T,
    pub phi: T,
    /// `d^{p−1}`.
    pub weight: T,
}

/// Maps Poisson frequency and gamma severity fits (whose designs already hold
/// their level columns) to the equivalent Tweedie mean and dispersion.
pub fn cpg_to_tweedie<T: Scalar>(
    frequency: &GlmFit<T>,
    severity: &GlmFit<T>,
    frequency_design: &DesignMatrix<T>,
    severity_design: &DesignMatrix<T>,
    exposure: &[T],
    p: T,
) -> Result<Vec<MappedCpg<T>>> {
    check_power(p)?;
    if frequency_design.labels() != frequency.labels.as_slice() || severity_design.labels() != severity.labels.as_slice() {
        return Err(Error::Schema("design columns differ from the fitted columns".into()));
    }
    let n = frequency_design.n_rows();
    if severity_design.n_rows() != n || exposure.len() != n {
        return Err(Error::argument("frequency and severity designs must share rows"));
    }
    let eta_n = frequency_design.linear_predictor(&frequency.beta);
    let eta_z = severity_design.linear_predictor(&severity.beta);
    let one = T::one();
    let two = T::of(2.0);
    Ok((0..n)
        .map(|i| {
            let mean_predictor = eta_n[i] + eta_z[i];
            let dispersion_predictor = -(two - p).ln() - (p - one) * eta_n[i] + (two - p) * eta_z[i];
            MappedCpg {
                mean_predictor,
                dispersion_predictor,
                mu: exposure[i] * mean_predictor.exp(),
                phi: dispersion_predictor.exp(),
                weight: exposure[i].powf(p - one),
            }
        })
        .collect())
}

/// Double GLM fit of the Tweedie loss-cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DglmFit<T> {
    pub mean_labels: Vec<String>,
    pub disp_labels: Vec<String>,
    pub beta_mean: Vec<T>,
    pub beta_disp: Vec<T>,
    pub p: T,
    pub loglik: T,
    /// Free mean and dispersion coefficients plus the variance power.
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub dropped: Vec<String>,
}

impl<T: Scalar> DglmFit<T> {
    pub fn mean_coefficient(&self, label: &str) -> Option<T> {
        self.mean_labels.iter().position(|l| l == label).map(|j| self.beta_mean[j])
    }

    pub fn disp_coefficient(&self, label: &str) -> Option<T> {
        self.disp_labels.iter().position(|l| l == label).map(|j| self.beta_disp[j])
    }

    /// Fitted `(μ, φ)` per observation.
    pub fn predict(
        &self,
        design_mean: &DesignMatrix<T>,
        design_disp: &DesignMatrix<T>,
        obs: &[TweedieObservation<T>],
    ) -> Result<(Vec<T>, Vec<T>)> {
        if design_mean.labels() != self.mean_labels.as_slice() || design_disp.labels() != self.disp_labels.as_slice() {
            return Err(Error::Schema("design columns differ from the fitted columns".into()));
        }
        Ok(mean_and_dispersion(design_mean, design_disp, obs, &self.beta_mean, &self.beta_disp))
    }

    /// Joint log-likelihood of `obs` at the fitted parameters.
    pub fn loglik_on(
        &self,
        design_mean: &DesignMatrix<T>,
        design_disp: &DesignMatrix<T>,
        obs: &[TweedieObservation<T>],
    ) -> Result<T> {
        let (mu, phi) = self.predict(design_mean, design_disp, obs)?;
        Ok(obs
            .iter()
            .zip(mu.iter().zip(&phi))
            .map(|(o, (&m, &f))| joint_log_density_unchecked(o.y, o.n, m, f, self.p, o.weight))
            .sum())
    }
}

fn mean_and_dispersion<T: Scalar>(
    design_mean: &DesignMatrix<T>,
    design_disp: &DesignMatrix<T>,
    obs: &[TweedieObservation<T>],
    beta_mean: &[T],
    beta_disp: &[T],
) -> (Vec<T>, Vec<T>) {
    let mu = design_mean
        .linear_predictor(beta_mean)
        .into_iter()
        .zip(obs)
        .map(|(e, o)| o.exposure * e.exp())
        .collect();
    let phi = design_disp.linear_predictor(beta_disp).into_iter().map(|e| e.exp()).collect();
    (mu, phi)
}

fn joint_loglik<T: Scalar>(obs: &[TweedieObservation<T>], mu: &[T], phi: &[T], p: T) -> Option<T> {
    let mut ll = T::zero();
    for (o, (&m, &f)) in obs.iter().zip(mu.iter().zip(phi)) {
        if !(m > T::zero() && m.is_finite() && f > T::zero() && f.is_finite()) {
            return None;
        }
        ll = ll + joint_log_density_unchecked(o.y, o.n, m, f, p, o.weight);
    }
    ll.is_finite().then_some(ll)
}

/// Gradient of the joint log-likelihood in `(β_mean, β_disp)`.
pub fn joint_loglik_gradient<T: Scalar>(
    design_mean: &DesignMatrix<T>,
    design_disp: &DesignMatrix<T>,
    obs: &[TweedieObservation<T>],
    beta_mean: &[T],
    beta_disp: &[T],
    p: T,
) -> (Vec<T>, Vec<T>) {
    let (mu, phi) = mean_and_dispersion(design_mean, design_disp, obs, beta_mean, beta_disp);
    let one = T::one();
    let mut g_mean = vec![T::zero(); design_mean.n_cols()];
    let mut g_disp = vec![T::zero(); design_disp.n_cols()];
    for (i, o) in obs.iter().enumerate() {
        let s_mean = o.weight / phi[i] * mu[i].powf(one - p) * (o.y - mu[i]);
        let s_disp = -o.weight * kernel(o.y, mu[i], p) / phi[i] - T::of_usize(o.n as usize) / (p - one);
        for (g, x) in g_mean.iter_mut().zip(design_mean.row(i)) {
            *g = *g + s_mean * *x;
        }
        for (g, x) in g_disp.iter_mut().zip(design_disp.row(i)) {
            *g = *g + s_disp * *x;
        }
    }
    (g_mean, g_disp)
}

/// Double-GLM estimation at a fixed variance power.
pub fn fit_dglm<T: Scalar>(
    design_mean: &DesignMatrix<T>,
    design_disp: &DesignMatrix<T>,
    obs: &[TweedieObservation<T>],
    p: T,
    config: &IrlsConfig,
) -> Result<DglmFit<T>> {
    check_power(p)?;
    let n = obs.len();
    if design_mean.n_rows() != n || design_disp.n_rows() != n {
        return Err(Error::argument("designs must be row-aligned with the observations"));
    }
    for o in obs {
        check_support(o.y, o.n)?;
    }
    let one = T::one();
    let two = T::of(2.0);
    let bound = T::of(config.eta_bound);

    // warm start: Poisson-weighted log-linear fit of the amounts
    let y: Vec<T> = obs.iter().map(|o| o.y).collect();
    let offset: Vec<T> = obs.iter().map(|o| o.exposure.ln()).collect();
    let weights: Vec<T> = obs.iter().map(|o| o.weight).collect();
    let start = fit_log_link(design_mean, &y, Some(&offset), Some(&weights), one, config)?;
    let dropped_mean = start.dropped.clone();
    let mut beta_mean = start.beta;
    let mu = start.mu;

    let mut phi0 = one;
    for _ in 0..3 {
        let mean_d = obs
            .iter()
            .zip(&mu)
            .map(|(o, &m)| deviance_response_unchecked(o.y, o.n, m, phi0, p, o.weight))
            .sum::<T>()
            / T::of_usize(n);
        if mean_d > T::zero() && mean_d.is_finite() {
            phi0 = mean_d;
        }
    }
    let mut beta_disp = vec![T::zero(); design_disp.n_cols()];
    beta_disp[0] = phi0.ln();
    let dropped_disp = {
        let probe = wls_solve(design_disp, &vec![one; n], &vec![phi0.ln(); n], &[]);
        probe.dropped
    };

    let (mut mu, mut phi) = mean_and_dispersion(design_mean, design_disp, obs, &beta_mean, &beta_disp);
    let mut ll = joint_loglik(obs, &mu, &phi, p).ok_or_else(|| Error::Divergence("initial values overflow".into()))?;
    let tol = T::of(config.tol);

    for iter in 1..=config.max_iter {
        let eta_mean = design_mean.linear_predictor(&beta_mean);
        let eta_disp = design_disp.linear_predictor(&beta_disp);
        let mut wm = Vec::with_capacity(n);
        let mut zm = Vec::with_capacity(n);
        let mut wd = Vec::with_capacity(n);
        let mut zd = Vec::with_capacity(n);
        for (i, o) in obs.iter().enumerate() {
            wm.push(o.weight / phi[i] * mu[i].powf(two - p));
            zm.push(eta_mean[i] + (o.y - mu[i]) / mu[i]);
            let d = deviance_response_unchecked(o.y, o.n, mu[i], phi[i], p, o.weight);
            wd.push(dispersion_weight(mu[i], phi[i], p, o.weight) * T::of(0.5));
            zd.push(eta_disp[i] + (d - phi[i]) / phi[i]);
        }
        let target_mean = wls_solve(design_mean, &wm, &zm, &dropped_mean).x;
        let target_disp = wls_solve(design_disp, &wd, &zd, &dropped_disp).x;
        let mut step_mean: Vec<T> = target_mean.iter().zip(&beta_mean).map(|(t, b)| *t - *b).collect();
        let mut step_disp: Vec<T> = target_disp.iter().zip(&beta_disp).map(|(t, b)| *t - *b).collect();

        let slack = T::of(1e-13) * (ll.abs() + one);
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let bm: Vec<T> = beta_mean.iter().zip(&step_mean).map(|(b, s)| *b + *s).collect();
            let bd: Vec<T> = beta_disp.iter().zip(&step_disp).map(|(b, s)| *b + *s).collect();
            let (m, f) = mean_and_dispersion(design_mean, design_disp, obs, &bm, &bd);
            if let Some(l) = joint_loglik(obs, &m, &f, p) {
                if l >= ll - slack {
                    accepted = Some((bm, bd, m, f, l));
                    break;
                }
            }
            step_mean.iter_mut().for_each(|s| *s = *s * T::of(0.5));
            step_disp.iter_mut().for_each(|s| *s = *s * T::of(0.5));
        }
        let Some((bm, bd, m, f, l)) = accepted else {
            return Ok(finish(design_mean, design_disp, beta_mean, beta_disp, p, ll, iter, &dropped_mean, &dropped_disp));
        };
        let too_far = design_mean
            .linear_predictor(&bm)
            .iter()
            .chain(design_disp.linear_predictor(&bd).iter())
            .any(|e| e.abs() > bound);
        if too_far {
            return Err(Error::Divergence(format!(
                "fitted mean or dispersion overflowed at iteration {iter}"
            )));
        }
        let change = (l - ll).abs();
        let max_step = step_mean
            .iter()
            .zip(&bm)
            .chain(step_disp.iter().zip(&bd))
            .map(|(s, b)| s.abs() / (one + b.abs()))
            .fold(T::zero(), T::max);
        beta_mean = bm;
        beta_disp = bd;
        mu = m;
        phi = f;
        ll = l;
        if change <= tol * (ll.abs() + one) && max_step < T::of(1e-6) {
            return Ok(finish(design_mean, design_disp, beta_mean, beta_disp, p, ll, iter, &dropped_mean, &dropped_disp));
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iter,
        last: beta_mean.iter().chain(&beta_disp).map(|b| b.to_f64_lossy()).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    design_mean: &DesignMatrix<T>,
    design_disp: &DesignMatrix<T>,
    beta_mean: Vec<T>,
    beta_disp: Vec<T>,
    p: T,
    loglik: T,
    iterations: usize,
    dropped_mean: &[usize],
    dropped_disp: &[usize],
) -> DglmFit<T> {
    let free = design_mean.n_cols() - dropped_mean.len() + design_disp.n_cols() - dropped_disp.len();
    let dropped = dropped_mean
        .iter()
        .map(|&j| format!("mean:{}", design_mean.labels()[j]))
        .chain(dropped_disp.iter().map(|&j| format!("dispersion:{}", design_disp.labels()[j])))
        .collect();
    DglmFit {
        mean_labels: design_mean.labels().to_vec(),
        disp_labels: design_disp.labels().to_vec(),
        beta_mean,
        beta_disp,
        p,
        loglik,
        n_params: free + 1,
        converged: true,
        iterations,
        dropped,
    }
}

/// Default profile grid for the variance power: 1.10, 1.15, …, 1.90.
pub fn default_power_grid() -> Vec<f64> {
    (0..=16).map(|k| 1.1 + 0.05 * k as f64).map(|p| (p * 100.0).round() / 100.0).collect()
}

/// How observation weights follow the variance power during profiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Keep each observation's weight as given.
    AsGiven,
    /// `w = d^{p−1}`, recomputed for every candidate power.
    ExposurePower,
}

/// Profiles the variance power over `grid`; ties go to the smaller power.
pub fn select_p<T: Scalar>(
    design_mean: &DesignMatrix<T>,
    design_disp: &DesignMatrix<T>,
    obs: &[TweedieObservation<T>],
    grid: &[T],
    rule: WeightRule,
    config: &IrlsConfig,
) -> Result<(T, DglmFit<T>)> {
    if grid.is_empty() {
        return Err(Error::argument("empty variance-power grid"));
    }
    for &p in grid {
        check_power(p)?;
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    sorted.dedup();
    let fits: Vec<Result<DglmFit<T>>> = sorted
        .par_iter()
        .map(|&p| match rule {
            WeightRule::AsGiven => fit_dglm(design_mean, design_disp, obs, p, config),
            WeightRule::ExposurePower => {
                let reweighted: Vec<TweedieObservation<T>> = obs
                    .iter()
                    .map(|o| TweedieObservation {
                        weight: o.exposure.powf(p - T::one()),
                        ..*o
                    })
                    .collect();
                fit_dglm(design_mean, design_disp, &reweighted, p, config)
            }
        })
        .collect();
    let mut best: Option<DglmFit<T>> = None;
    let mut failures = Vec::new();
    for (p, fit) in sorted.iter().zip(fits) {
        match fit {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.loglik > b.loglik) {
                    best = Some(f);
                }
            }
            Err(e) => failures.push(format!("p = {p}: {e}")),
        }
    }
    best.map(|b| (b.p, b)).ok_or(Error::AllFailed(failures))
}
