#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bonmal::portfolio::{load_portfolio, Portfolio};

/// The three-policy sample: age and sex (male = 1) as covariates.
pub const TABLE1_CONTRACTS: &str = "\
policy_id,vehicle_id,contract_index,effective_date,exposure,claim_count,calendar_year,age,male
1,1,1,2018-01-15,1,0,2018,42,1
1,1,2,2019-01-15,1,2,2019,43,1
1,1,3,2020-01-15,1,1,2020,44,1
1,1,4,2021-01-15,1,0,2021,45,1
1,2,2,2019-01-15,1,2,2019,40,0
1,2,3,2020-01-15,1,0,2020,41,0
2,1,1,2018-02-05,1,0,2018,24,1
3,1,1,2018-02-08,1,0,2018,34,0
3,2,1,2018-02-08,1,1,2018,30,1
";

pub const TABLE1_CLAIMS: &str = "\
policy_id,vehicle_id,contract_index,claim_ordinal,cost
1,1,2,1,6592
1,1,2,2,11520
1,1,3,1,24151
1,2,2,1,1490
1,2,2,2,24505
3,2,1,1,8150
";

pub fn write_pair(dir: &Path, contracts: &str, claims: &str) -> (PathBuf, PathBuf) {
    let c = dir.join("contracts.csv");
    let k = dir.join("claims.csv");
    std::fs::write(&c, contracts).unwrap();
    std::fs::write(&k, claims).unwrap();
    (c, k)
}

pub fn table1() -> Portfolio {
    let dir = tempfile::tempdir().unwrap();
    let (c, k) = write_pair(dir.path(), TABLE1_CONTRACTS, TABLE1_CLAIMS);
    load_portfolio(c, k).unwrap()
}

/// Symmetric positive-definite inverse by Gauss-Jordan elimination.
pub fn invert(a: &[f64], n: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x * n + c].abs().total_cmp(&m[y * n + c].abs())).unwrap();
        for k in 0..n {
            m.swap(c * n + k, p * n + k);
            inv.swap(c * n + k, p * n + k);
        }
        let d = m[c * n + c];
        for k in 0..n {
            m[c * n + k] /= d;
            inv[c * n + k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r * n + c];
                for k in 0..n {
                    m[r * n + k] -= f * m[c * n + k];
                    inv[r * n + k] -= f * inv[c * n + k];
                }
            }
        }
    }
    inv
}

/// Standard errors of a log-link GLM from the expected information `XᵀWX`.
pub fn standard_errors(rows: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut info = vec![0.0; p * p];
    for (x, w) in rows.iter().zip(weights) {
        for a in 0..p {
            for b in 0..p {
                info[a * p + b] += w * x[a] * x[b];
            }
        }
    }
    let inv = invert(&info, p);
    (0..p).map(|j| inv[j * p + j].sqrt()).collect()
}
