mod common;

use bonmal::bms_search::{
    fit_bms, fit_kappa_n, fit_with_experience, kappa_n_psi, BmsGrid, Experience, FitOptions, ModelData, Target, KAPPA,
    LEVEL, N_CLAIMS,
};
use bonmal::glm::{fit_poisson, poisson_loglik};
use bonmal::irls::IrlsConfig;
use bonmal::portfolio::{bms_level, BmsStructure};
use bonmal::simulator::{simulate_portfolio, Dynamics, SimSpec};
use bonmal::design::DesignMatrix;

fn covariates() -> Vec<String> {
    SimSpec::default().covariate_names()
}

fn data(spec: &SimSpec) -> ModelData {
    let out = simulate_portfolio(spec).unwrap();
    ModelData::new(&out.portfolio, spec.window_years, Some(spec.first_modelling_year())).unwrap()
}

fn busy(seed: u64) -> SimSpec {
    SimSpec {
        n_policies: 4_000,
        base_frequency: 0.10,
        seed,
        ..SimSpec::default()
    }
}

#[test]
fn unclamped_scale_is_a_constrained_kappa_n() {
    let d = data(&busy(2));
    let x = covariates();
    let opts = FitOptions::default();
    for psi in [1u32, 3] {
        let s = BmsStructure::unclamped(psi);
        let m = fit_with_experience(&d, Target::Frequency, &x, Experience::Level { structure: s }, &opts).unwrap();
        // the same model written with the single column −κ + Ψ n
        let kn = d.design(&x, &Experience::KappaN, false).unwrap();
        let ik = kn.column_index(KAPPA).unwrap();
        let inn = kn.column_index(N_CLAIMS).unwrap();
        let mut labels = kn.labels()[..ik].to_vec();
        labels.push("score".into());
        let mut values = Vec::new();
        for r in kn.rows() {
            values.extend_from_slice(&r[..ik]);
            values.push(-r[ik] + psi as f64 * r[inn]);
        }
        let constrained = DesignMatrix::new(labels, values).unwrap();
        let c = fit_poisson(&constrained, &d.counts, &d.exposure, &IrlsConfig::default()).unwrap();
        assert!((m.loglik - c.loglik).abs() < 1e-6, "Ψ={psi}: {} vs {}", m.loglik, c.loglik);
        assert!((m.gamma0().unwrap() - c.coefficient("score").unwrap()).abs() < 1e-6);

        // and the reported log-likelihood is the Poisson log-pmf at the fitted means
        let eta: Vec<f64> = (0..d.n_contracts())
            .map(|i| {
                let level = bms_level(&d.scopes[i], &s) as f64;
                let row = kn.row(i);
                let g = m.fit.coefficient(LEVEL).unwrap();
                let mut e = m.fit.coefficient("(intercept)").unwrap() + g * level;
                for (j, name) in x.iter().enumerate() {
                    e += m.fit.coefficient(name).unwrap() * row[j + 1];
                }
                e
            })
            .collect();
        let mu: Vec<f64> = eta.iter().zip(&d.exposure).map(|(e, w)| w * e.exp()).collect();
        assert!((poisson_loglik(&d.counts, &mu) - m.loglik).abs() < 1e-6);
    }
}

#[test]
fn profile_covers_the_grid_and_the_winner_dominates() {
    let d = data(&busy(4));
    let x = covariates();
    let grid = BmsGrid {
        psi: vec![2, 3, 4],
        l_min: vec![94, 95, 96],
        l_max: vec![104, 106],
    };
    let m = fit_bms(&d, Target::Frequency, &x, &grid, &FitOptions::default()).unwrap();
    assert_eq!(m.profile.len(), grid.candidates().unwrap().len());
    assert!(m.profile.iter().all(|r| r.loglik <= m.loglik));
    let s = m.structure().unwrap();
    assert!(m.profile.iter().any(|r| (r.psi, Some(r.l_min), Some(r.l_max)) == (s.psi, s.l_min, s.l_max)));
    // three structural parameters on top of the regression
    assert_eq!(m.n_params, x.len() + 2 + 3);
    assert!(m.gamma0().unwrap() > 0.0);

    let wider = BmsGrid {
        psi: vec![1, 2, 3, 4, 5],
        l_min: vec![93, 94, 95, 96],
        l_max: vec![103, 104, 106, 107],
    };
    let w = fit_bms(&d, Target::Frequency, &x, &wider, &FitOptions::default()).unwrap();
    assert!(w.loglik >= m.loglik - 1e-9);
}

#[test]
fn degenerate_scale_warns_and_absorbs_gamma0() {
    let d = data(&busy(6));
    let grid = BmsGrid {
        psi: vec![3],
        l_min: vec![100],
        l_max: vec![100],
    };
    let x = covariates();
    let m = fit_bms(&d, Target::Frequency, &x, &grid, &FitOptions::default()).unwrap();
    assert!(m.warnings.iter().any(|w| w.contains("constant")), "{:?}", m.warnings);
    assert_eq!(m.gamma0().unwrap_or(0.0), 0.0);
    let plain = fit_with_experience(&d, Target::Frequency, &x, Experience::None, &FitOptions::default()).unwrap();
    assert!((plain.loglik - m.loglik).abs() < 1e-6);
}

#[test]
fn empty_feasible_grid_is_rejected() {
    let grid = BmsGrid {
        psi: vec![1],
        l_min: vec![101],
        l_max: vec![105],
    };
    assert!(grid.candidates().is_err());
    assert!(BmsGrid { psi: vec![], ..BmsGrid::default() }.candidates().is_err());
}

#[test]
fn kappa_n_on_history_free_claims_is_null() {
    let spec = SimSpec {
        n_policies: 6_000,
        base_frequency: 0.10,
        freq_dynamics: Dynamics::None,
        seed: 1,
        ..SimSpec::default()
    };
    let d = data(&spec);
    let x = covariates();
    let m = fit_kappa_n(&d, Target::Frequency, &x, &FitOptions::default()).unwrap();
    let design = d.design(&x, &Experience::KappaN, false).unwrap();
    let mu = m.predict_contracts(&d).unwrap();
    let rows: Vec<Vec<f64>> = design.rows().map(|r| r.to_vec()).collect();
    let se = common::standard_errors(&rows, &mu);
    let ik = design.column_index(KAPPA).unwrap();
    let inn = design.column_index(N_CLAIMS).unwrap();
    let (g0, g1) = (m.gamma0().unwrap(), m.gamma1().unwrap());
    eprintln!("gamma0 {g0} ± {}, gamma1 {g1} ± {}", se[ik], se[inn]);
    assert!(g0.abs() <= 2.0 * se[ik]);
    assert!(g1.abs() <= 2.0 * se[inn]);
    // a non-positive gamma0 is reported, never hidden
    assert_eq!(g0 <= 0.0, m.warnings.iter().any(|w| w.contains("gamma0")));
}

#[test]
fn reported_jump_is_the_coefficient_ratio() {
    // stored Kappa-N Poisson coefficients of the published fit
    let (g0, psi) = (0.081, 2.899);
    let g1 = g0 * psi;
    assert!((kappa_n_psi(g0, g1) - psi).abs() < 1e-12);
    let d = data(&busy(8));
    let m = fit_kappa_n(&d, Target::Frequency, &covariates(), &FitOptions::default()).unwrap();
    let kappa = m.fit.coefficient(KAPPA).unwrap();
    let n = m.fit.coefficient(N_CLAIMS).unwrap();
    assert_eq!(m.gamma0().unwrap(), -kappa);
    assert_eq!(m.psi().unwrap(), n / -kappa);
}

#[test]
fn claims_of_a_contract_share_its_level() {
    let d = data(&busy(9));
    let e = Experience::Level {
        structure: BmsStructure::new(3, 95, 106).unwrap(),
    };
    let x = covariates();
    let contracts = d.design(&x, &e, false).unwrap();
    let claims = d.design(&x, &e, true).unwrap();
    let j = contracts.column_index(LEVEL).unwrap();
    assert_eq!(claims.n_rows(), d.n_claims());
    for (k, &row) in d.claim_rows.iter().enumerate() {
        assert_eq!(claims.row(k), contracts.row(row));
        assert_eq!(claims.row(k)[j], bms_level(&d.scopes[row], &BmsStructure::new(3, 95, 106).unwrap()) as f64);
    }
}
