//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
//!
//! Runs without the libtest harness so the lines reach the console. A criterion
//! listed in `EXPECTED_FAILURES` is still evaluated and reported; the run fails
//! if any other criterion fails, or if an expected failure starts passing.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use bonmal::bms_search::{
    fit_bms, fit_kappa_n, fit_standard, fit_tweedie_cp, fit_with_experience, BmsGrid, CpgModel, Experience,
    FitOptions, FittedModel, InnerFit, ModelData, Target,
};
use bonmal::design::DesignMatrix;
use bonmal::elasticnet::{fit_penalized, lambda_max, EnetConfig, PenalizedData, PenalizedFamily, PenaltySpec};
use bonmal::evaluate::{apply_off_balance, combine_tables, off_balance_factor, relativity_table};
use bonmal::glm::{fit_gamma, fit_poisson, gamma_loglik, loglik_gradient, poisson_loglik, Likelihood};
use bonmal::irls::IrlsConfig;
use bonmal::portfolio::{compute_scope, lagged_counts, level_trajectory, split_train_test, BmsStructure, ContractKey};
use bonmal::simulator::{simulate_portfolio, Dynamics, SimSpec};
use bonmal::tweedie::{
    deviance_response, joint_log_density, joint_loglik_gradient, sample_joint, shape_from_power, TweedieObservation,
};
use bonmal::DesignMatrix64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, Discrete, Gamma, Poisson};

// pinned tolerances
const RELATIVITY_TOL: f64 = 0.005;
const NORMALIZATION_TOL: f64 = 1e-6;
const DISPERSION_REL_TOL: f64 = 0.02;
const EQUIVALENCE_TOL: f64 = 1e-8;
const GAMMA0_TOL: f64 = 0.01;
const KAPPA_N_TOL: f64 = 0.01;
const GRADIENT_REL_TOL: f64 = 1e-5;
const ENET_COEF_TOL: f64 = 1e-4;
const BALANCE_REL_TOL: f64 = 1e-8;

/// Criteria allowed to fail; each is explained in the decision log.
const EXPECTED_FAILURES: &[&str] = &["8b"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: Vec<(&str, &str, fn() -> Outcome)> = vec![
        ("1", "scope fixture", c1_scope),
        ("2", "relativity arithmetic", c2_relativities),
        ("3", "Tweedie normalization", c3_normalization),
        ("4", "dispersion response mean", c4_dispersion),
        ("5", "CPG equals mapped Tweedie", c5_equivalence),
        ("6", "structural recovery", c6_structure),
        ("7", "Kappa-N recovery", c7_kappa_n),
        ("8", "SL ordering", c8_ordering),
        ("8b", "own-level Tweedie beats mapped levels", c8b_own_level),
        ("9", "gradient checks", c9_gradients),
        ("10", "elastic-net limits", c10_enet),
        ("11", "trajectory fixture", c11_trajectories),
        ("12", "balance identities", c12_balance),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if filter.as_deref().is_some_and(|f| f != id) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let expected_fail = EXPECTED_FAILURES.contains(&id);
        let tag = match (result.pass, expected_fail) {
            (true, false) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
            (true, true) => "PASS (unexpected)",
        };
        println!("criterion {id:>3} {tag:<17} {name}: {} [{:.1?}]", result.detail, t.elapsed());
        if result.pass == expected_fail {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("acceptance: unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}

fn c1_scope() -> Outcome {
    let p = common::table1();
    let scopes = compute_scope(&p, 6).unwrap();
    // defined cells: (key, n, vehicle lags, policy lags); None is an empty cell
    type Cell = (u32, u32, u32, u32, [Option<u32>; 3], [Option<u32>; 3]);
    let cells: [Cell; 8] = [
        (1, 1, 1, 0, [None, None, None], [None, None, None]),
        (1, 1, 2, 2, [Some(0), None, None], [Some(0), None, None]),
        (1, 1, 3, 1, [Some(2), Some(0), None], [Some(4), Some(0), None]),
        (1, 1, 4, 0, [Some(1), Some(2), Some(0)], [Some(1), Some(4), Some(0)]),
        (1, 2, 2, 2, [None, None, None], [Some(0), None, None]),
        (1, 2, 3, 0, [Some(2), None, None], [Some(4), Some(0), None]),
        (2, 1, 1, 0, [None, None, None], [None, None, None]),
        (3, 1, 1, 0, [None, None, None], [None, None, None]),
    ];
    // vehicle lags the sample cannot produce (typesetting artifacts) are skipped
    let skip = [(1, 1, 2, 2), (1, 1, 3, 2), (1, 2, 2, 2)];
    let mut checked = 0;
    let mut bad = Vec::new();
    for (i, v, t, n, vehicle, policy) in cells {
        let key = ContractKey::new(i.to_string(), v.to_string(), t);
        let row = p.position(&key).unwrap();
        let (vl, pl) = lagged_counts(&p, &key, 3).unwrap();
        let h = &scopes[row].history;
        let from_scope: Vec<Option<u32>> = (1..=3).map(|k| h.len().checked_sub(k).map(|j| h[j])).collect();
        if p.contracts()[row].claim_count != n {
            bad.push(format!("{key} n"));
        }
        checked += 1;
        for lag in 0..3 {
            if !skip.contains(&(i, v, t, lag)) {
                checked += 1;
                if vl[lag] != vehicle[lag] {
                    bad.push(format!("{key} vehicle t-{}", lag + 1));
                }
            }
            checked += 2;
            if pl[lag] != policy[lag] || from_scope[lag] != policy[lag] {
                bad.push(format!("{key} policy t-{}", lag + 1));
            }
        }
    }
    let row = p.position(&ContractKey::new("1", "1", 3)).unwrap();
    let s = &scopes[row];
    let summary = (s.n_dotdot, s.kappa_dotdot, s.years_observed) == (4, 1, 2);
    outcome(bad.is_empty() && summary, format!("{checked} cells checked, mismatches {bad:?}"))
}

fn c2_relativities() -> Outcome {
    let poisson = relativity_table(0.094, &BmsStructure::new(3, 95, 106).unwrap()).unwrap();
    let gamma = relativity_table(0.026, &BmsStructure::new(2, 94, 100).unwrap()).unwrap();
    let tweedie = relativity_table(0.112, &BmsStructure::new(3, 95, 104).unwrap()).unwrap();
    let cpg = combine_tables(&poisson, &gamma).unwrap();
    // printed surcharge, discount (as a positive fraction), min and max
    let rows = [
        ([poisson.surcharge_per_claim, poisson.claims_free_discount, poisson.min_relativity, poisson.max_relativity], [0.324, 0.089, 0.626, 1.753]),
        ([gamma.surcharge_per_claim, gamma.claims_free_discount, gamma.min_relativity, gamma.max_relativity], [0.054, 0.026, 0.855, 1.000]),
        ([cpg.surcharge_per_claim, cpg.claims_free_discount, cpg.min_relativity, cpg.max_relativity], [0.395, 0.113, 0.535, 1.753]),
        ([tweedie.surcharge_per_claim, tweedie.claims_free_discount, tweedie.min_relativity, tweedie.max_relativity], [0.401, 0.106, 0.570, 1.568]),
    ];
    let worst = rows
        .iter()
        .flat_map(|(got, want)| got.iter().zip(want).map(|(g, w)| (g - w).abs()))
        .fold(0.0, f64::max);
    outcome(worst <= RELATIVITY_TOL, format!("largest deviation {worst:.4} (tolerance {RELATIVITY_TOL})"))
}

fn mass(mu: f64, phi: f64, p: f64) -> f64 {
    let mut total = joint_log_density(0.0, 0, mu, phi, p, 1.0).unwrap().exp();
    for n in 1..=60u32 {
        let a = (n as f64 * shape_from_power(p)).min(1.0);
        let f = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                return 0.0;
            }
            let u = t / (1.0 - t);
            let y = u.powf(1.0 / a);
            let log_jacobian = (1.0 / a - 1.0) * u.ln() - a.ln() - 2.0 * (1.0 - t).ln();
            (joint_log_density(y, n, mu, phi, p, 1.0).unwrap() + log_jacobian).exp()
        };
        total += quadrature::integrate(f, 0.0, 1.0, 1e-12).integral;
    }
    total
}

fn c3_normalization() -> Outcome {
    let mut worst = 0.0f64;
    for mu in [0.5, 1.0, 2.0] {
        for phi in [0.5, 1.0] {
            for p in [1.2, 1.5, 1.8] {
                worst = worst.max((mass(mu, phi, p) - 1.0).abs());
            }
        }
    }
    outcome(worst < NORMALIZATION_TOL, format!("18 grid points, largest |mass − 1| = {worst:.2e}"))
}

fn c4_dispersion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mu, phi, p) = (1.0, 0.8, 1.5);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| {
            let (y, k) = sample_joint(&mut rng, mu, phi, p, 1.0);
            deviance_response(y, k, mu, phi, p, 1.0).unwrap()
        })
        .sum::<f64>()
        / n as f64;
    let rel = (mean / phi - 1.0).abs();
    outcome(rel < DISPERSION_REL_TOL, format!("mean D = {mean:.4} for φ = {phi}, relative error {rel:.4}"))
}

fn sim(spec: SimSpec) -> (SimSpec, ModelData) {
    let out = simulate_portfolio(&spec).unwrap();
    let data = ModelData::new(&out.portfolio, spec.window_years, Some(spec.first_modelling_year())).unwrap();
    (spec, data)
}

fn glm(m: &FittedModel) -> &bonmal::GlmFit64 {
    match &m.fit {
        InnerFit::Glm(g) => g,
        InnerFit::Dglm(_) => panic!("expected a GLM"),
    }
}

fn c5_equivalence() -> Outcome {
    let (spec, data) = sim(SimSpec {
        n_policies: 1_500,
        base_frequency: 0.10,
        seed: 5,
        ..SimSpec::default()
    });
    let x = spec.covariate_names();
    let opts = FitOptions::default();
    let level = |s| Experience::Level { structure: s };
    let f = fit_with_experience(&data, Target::Frequency, &x, level(BmsStructure::new(3, 95, 106).unwrap()), &opts).unwrap();
    let s = fit_with_experience(&data, Target::Severity, &x, level(BmsStructure::new(2, 94, 100).unwrap()), &opts).unwrap();
    let shape = glm(&s).shape.unwrap();
    let lambda = f.predict_contracts(&data).unwrap();
    let sev = s.predict_contracts(&data).unwrap();
    let cpg = CpgModel::new(f, s).unwrap();
    let mapped = cpg.contract_logliks(&data).unwrap();
    let m = 1_000.min(data.n_contracts());
    let mut worst = 0.0f64;
    for i in 0..m {
        let n = data.counts[i];
        let mut oracle = Poisson::new(lambda[i]).unwrap().ln_pmf(n as u64);
        if n > 0 {
            oracle += Gamma::new(n as f64 * shape, shape / sev[i]).unwrap().ln_pdf(data.losses[i]);
        }
        worst = worst.max((oracle - mapped[i]).abs());
    }
    outcome(worst < EQUIVALENCE_TOL, format!("{m} contracts, largest difference {worst:.2e}"))
}

fn c6_structure() -> Outcome {
    // the generating scale is clamped, so a richer claim rate stays stable
    let (spec, data) = sim(SimSpec {
        base_frequency: 0.10,
        ..SimSpec::default()
    });
    let grid = BmsGrid {
        psi: (1..=5).collect(),
        l_min: (93..=99).collect(),
        l_max: (101..=108).collect(),
    };
    let m = fit_bms(&data, Target::Frequency, &spec.covariate_names(), &grid, &FitOptions::default()).unwrap();
    let s = m.structure().unwrap();
    let g0 = m.gamma0().unwrap();
    let exact = (s.psi, s.l_min, s.l_max) == (3, Some(95), Some(106));
    outcome(
        exact && (g0 - 0.094).abs() <= GAMMA0_TOL,
        format!(
            "{} policies: Ψ = {}, [{}, {}], γ0 = {g0:.4}",
            spec.n_policies,
            s.psi,
            s.l_min.unwrap(),
            s.l_max.unwrap()
        ),
    )
}

fn c7_kappa_n() -> Outcome {
    let (spec, data) = sim(SimSpec {
        freq_dynamics: Dynamics::KappaN {
            gamma0: 0.10,
            gamma1: 0.30,
        },
        ..SimSpec::default()
    });
    let m = fit_kappa_n(&data, Target::Frequency, &spec.covariate_names(), &FitOptions::default()).unwrap();
    let (g0, g1) = (m.gamma0().unwrap(), m.gamma1().unwrap());
    outcome(
        (g0 - 0.10).abs() <= KAPPA_N_TOL && (g1 - 0.30).abs() <= KAPPA_N_TOL,
        format!("{} policies: γ0 = {g0:.4}, γ1 = {g1:.4}, Ψ = {:.3}", spec.n_policies, m.psi().unwrap()),
    )
}

struct OrderingData {
    train: ModelData,
    test: ModelData,
    covariates: Vec<String>,
}

fn ordering_data() -> OrderingData {
    let spec = SimSpec {
        n_policies: 20_000,
        base_frequency: 0.10,
        ..SimSpec::default()
    };
    let out = simulate_portfolio(&spec).unwrap();
    let split = split_train_test(&out.portfolio, 0.75, 7).unwrap();
    let first = Some(spec.first_modelling_year());
    OrderingData {
        train: ModelData::new(&split.train, 6, first).unwrap(),
        test: ModelData::new(&split.test, 6, first).unwrap(),
        covariates: spec.covariate_names(),
    }
}

fn loss_cost_grid() -> BmsGrid {
    BmsGrid {
        psi: (1..=5).collect(),
        l_min: (94..=98).collect(),
        l_max: (102..=108).collect(),
    }
}

fn loss_cost_options(d: &OrderingData) -> FitOptions {
    // the variance power is profiled once, on the Kappa-N model
    let k = fit_kappa_n(&d.train, Target::LossCost, &d.covariates, &FitOptions::default()).unwrap();
    let InnerFit::Dglm(f) = &k.fit else { unreachable!() };
    FitOptions {
        power: Some(f.p),
        ..FitOptions::default()
    }
}

fn c8_ordering() -> Outcome {
    let d = ordering_data();
    let sl = |m: &FittedModel| -m.loglik_on(&d.test).unwrap();
    let x = &d.covariates;
    let o = FitOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for (target, grid, opts) in [
        (Target::Frequency, BmsGrid::default(), o.clone()),
        (Target::LossCost, loss_cost_grid(), loss_cost_options(&d)),
    ] {
        let s = sl(&fit_standard(&d.train, target, x, &opts).unwrap());
        let k = sl(&fit_kappa_n(&d.train, target, x, &opts).unwrap());
        let b = sl(&fit_bms(&d.train, target, x, &grid, &opts).unwrap());
        pass &= b < k && k < s;
        lines.push(format!("{target:?} SL standard {s:.1} > Kappa-N {k:.1} > BMS {b:.1}"));
    }
    outcome(pass, lines.join("; "))
}

fn c8b_own_level() -> Outcome {
    let d = ordering_data();
    let x = &d.covariates;
    let opts = loss_cost_options(&d);
    let own = fit_bms(&d.train, Target::LossCost, x, &loss_cost_grid(), &opts).unwrap();
    let o = FitOptions::default();
    let fs = fit_bms(&d.train, Target::Frequency, x, &BmsGrid::default(), &o).unwrap().structure().unwrap();
    let ss = fit_bms(&d.train, Target::Severity, x, &BmsGrid::default(), &o).unwrap().structure().unwrap();
    let cp = fit_tweedie_cp(&d.train, x, fs, ss, &opts).unwrap();
    outcome(
        own.loglik > cp.loglik,
        format!("training loglik own level {:.1} vs frequency and severity levels {:.1}", own.loglik, cp.loglik),
    )
}

fn fd(f: impl Fn(&[f64]) -> f64, beta: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..beta.len())
        .map(|j| {
            let (mut up, mut down) = (beta.to_vec(), beta.to_vec());
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn c9_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 200;
    let labels = vec!["x1".to_string(), "x2".to_string()];
    let rows: Vec<[f64; 2]> = (0..n).map(|_| [rng.sample(StandardNormal), rng.random_range(0.0..1.0)]).collect();
    let d = DesignMatrix::with_intercept(&labels, &rows).unwrap();
    let exposure: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let counts: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let y: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
    let costs: Vec<f64> = (0..n).map(|_| rng.random_range(200.0..9000.0)).collect();
    let obs: Vec<_> = (0..n)
        .map(|_| {
            let (amount, k) = sample_joint(&mut rng, 1.0, 0.9, 1.6, 1.0);
            TweedieObservation::new(amount, k, 1.0, 1.0).unwrap()
        })
        .collect();
    let mut worst = [0.0f64; 3];
    for _ in 0..20 {
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        let ll = |b: &[f64]| {
            let mu: Vec<f64> = d.linear_predictor(b).iter().zip(&exposure).map(|(e, w)| w * e.exp()).collect();
            poisson_loglik(&counts, &mu)
        };
        let g = loglik_gradient(Likelihood::Poisson, &d, &y, Some(&exposure), &b);
        worst[0] = worst[0].max(rel_err(&g, &fd(ll, &b)));

        let bg: Vec<f64> = b.iter().enumerate().map(|(j, v)| if j == 0 { v + 8.0 } else { *v }).collect();
        let shape = rng.random_range(0.5..3.0);
        let ll = |b: &[f64]| {
            let mu: Vec<f64> = d.linear_predictor(b).iter().map(|e| e.exp()).collect();
            gamma_loglik(&costs, &mu, shape)
        };
        let g = loglik_gradient(Likelihood::Gamma { shape }, &d, &costs, None, &bg);
        worst[1] = worst[1].max(rel_err(&g, &fd(ll, &bg)));

        let bd: Vec<f64> = (0..3).map(|_| rng.random_range(-0.3..0.3)).collect();
        let joint = |bm: &[f64], bd: &[f64]| -> f64 {
            let em = d.linear_predictor(bm);
            let ed = d.linear_predictor(bd);
            obs.iter()
                .enumerate()
                .map(|(i, o)| joint_log_density(o.y, o.n, em[i].exp(), ed[i].exp(), 1.6, o.weight).unwrap())
                .sum()
        };
        let (gm, gd) = joint_loglik_gradient(&d, &d, &obs, &b, &bd, 1.6);
        worst[2] = worst[2].max(rel_err(&gm, &fd(|v| joint(v, &bd), &b)));
        worst[2] = worst[2].max(rel_err(&gd, &fd(|v| joint(&b, v), &bd)));
    }
    outcome(
        worst.iter().all(|w| *w < GRADIENT_REL_TOL),
        format!(
            "20 points; largest relative errors Poisson {:.1e}, gamma {:.1e}, Tweedie {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn c10_enet() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 2_000;
    let k = 4;
    let labels: Vec<String> = (0..k).map(|j| format!("x{j}")).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let design = DesignMatrix::with_intercept(&labels, &rows).unwrap();
    let exposure: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
    let counts: Vec<u32> = rows
        .iter()
        .zip(&exposure)
        .map(|(r, e)| rand_distr::Poisson::new(e * (-1.0 + 0.4 * r[0]).exp()).unwrap().sample(&mut rng) as u32)
        .collect();
    let y: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let costs: Vec<f64> = rows
        .iter()
        .map(|r| {
            let mu: f64 = (8.0 + 0.3 * r[1]).exp();
            rand_distr::Gamma::new(1.5, mu / 1.5).unwrap().sample(&mut rng)
        })
        .collect();
    let cfg = EnetConfig::default();

    let pois = PenalizedData {
        design: &design,
        y: &y,
        exposure: Some(&exposure),
        weights: None,
    };
    let gam = PenalizedData {
        design: &design,
        y: &costs,
        exposure: None,
        weights: None,
    };
    let unpen_p = fit_poisson(&design, &counts, &exposure, &IrlsConfig::default()).unwrap();
    let unpen_g = fit_gamma(&design, &costs, &IrlsConfig::default()).unwrap();
    let mut worst = 0.0f64;
    let mut zeroed = true;
    for (data, family, reference) in [
        (&pois, PenalizedFamily::Poisson, &unpen_p.beta),
        (&gam, PenalizedFamily::Gamma, &unpen_g.beta),
    ] {
        for alpha in [0.0, 0.5, 1.0] {
            let spec = PenaltySpec::new(design.labels(), alpha, 0.0, &[]).unwrap();
            let fit = fit_penalized(data, family, &spec, &cfg).unwrap();
            for (a, b) in fit.beta.iter().zip(reference) {
                worst = worst.max((a - b).abs());
            }
        }
        for alpha in [0.5, 1.0] {
            let spec = PenaltySpec::new(design.labels(), alpha, 0.0, &[]).unwrap();
            let lmax = lambda_max(data, family, &spec).unwrap();
            for scale in [1.0, 3.0] {
                let s = PenaltySpec {
                    lambda: lmax * scale,
                    ..spec.clone()
                };
                let fit = fit_penalized(data, family, &s, &cfg).unwrap();
                zeroed &= fit.beta[1..].iter().all(|b| *b == 0.0);
            }
        }
    }
    outcome(
        worst < ENET_COEF_TOL && zeroed,
        format!("λ = 0 largest coefficient gap {worst:.1e}; λ ≥ λ_max zeroes every penalized coefficient: {zeroed}"),
    )
}

fn c11_trajectories() -> Outcome {
    let histories: [[u32; 12]; 4] = [
        [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
        [2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1],
        [4, 1, 3, 0, 1, 0, 0, 0, 0, 0, 2, 0],
        [0, 2, 0, 0, 0, 0, 0, 1, 0, 3, 1, 4],
    ];
    // hand-computed levels for years 7 to 12
    let scales: [(&str, BmsStructure, [[i64; 6]; 4]); 3] = [
        (
            "frequency",
            BmsStructure::new(3, 95, 106).unwrap(),
            [
                [95, 95, 95, 95, 95, 95],
                [106, 106, 105, 106, 106, 105],
                [105, 104, 103, 98, 98, 101],
                [101, 101, 98, 98, 106, 106],
            ],
        ),
        (
            "severity",
            BmsStructure::new(2, 94, 100).unwrap(),
            [
                [94, 94, 94, 94, 94, 94],
                [100, 100, 99, 100, 100, 99],
                [99, 98, 97, 96, 95, 99],
                [96, 95, 97, 97, 100, 100],
            ],
        ),
        (
            "loss cost",
            BmsStructure::new(3, 95, 104).unwrap(),
            [
                [95, 95, 95, 95, 95, 95],
                [104, 104, 103, 104, 104, 103],
                [103, 102, 101, 98, 98, 101],
                [100, 99, 98, 98, 104, 104],
            ],
        ),
    ];
    let mut bad = Vec::new();
    for (name, s, expected) in &scales {
        for (i, (h, want)) in histories.iter().zip(expected).enumerate() {
            if level_trajectory(h, s, 6) != want.to_vec() {
                bad.push(format!("{name} insured {}", i + 1));
            }
        }
    }
    outcome(bad.is_empty(), format!("4 insureds × 3 scales × 6 years, mismatches {bad:?}"))
}

fn c12_balance() -> Outcome {
    let (spec, data) = sim(SimSpec {
        n_policies: 3_000,
        seed: 12,
        ..SimSpec::default()
    });
    let x = spec.covariate_names();
    let f = fit_with_experience(
        &data,
        Target::Frequency,
        &x,
        Experience::Level {
            structure: BmsStructure::new(3, 95, 106).unwrap(),
        },
        &FitOptions::default(),
    )
    .unwrap();
    let fitted: f64 = f.predict_contracts(&data).unwrap().iter().sum();
    let observed: f64 = data.counts.iter().map(|&n| n as f64).sum();
    let poisson_gap = (fitted / observed - 1.0).abs();

    let g = fit_gamma(&DesignMatrix64::intercept_only(data.n_claims()), &data.claim_costs, &IrlsConfig::default()).unwrap();
    let gamma_fitted = g.beta[0].exp() * data.n_claims() as f64;
    let total: f64 = data.claim_costs.iter().sum();
    let gamma_gap = (gamma_fitted / total - 1.0).abs();

    // a deliberately biased prediction, rebalanced
    let biased: Vec<f64> = f.predict_contracts(&data).unwrap().iter().map(|m| 0.9 * m).collect();
    let obs: Vec<f64> = data.counts.iter().map(|&n| n as f64).collect();
    let factor = off_balance_factor(&biased, &obs).unwrap();
    let corrected: f64 = apply_off_balance(&biased, factor).iter().sum();
    let off_gap = (corrected / observed - 1.0).abs();
    outcome(
        poisson_gap < BALANCE_REL_TOL && gamma_gap < BALANCE_REL_TOL && off_gap < 1e-12,
        format!("relative gaps: Poisson {poisson_gap:.1e}, gamma {gamma_gap:.1e}, off-balance {off_gap:.1e}"),
    )
}
