use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const INTERCEPT: &str = "(intercept)";

/// Row-major model matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix<T> {
    n_rows: usize,
    labels: Vec<String>,
    values: Vec<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    /// Validates: first column identically one, every entry finite, no all-zero column.
    pub fn new(labels: Vec<String>, values: Vec<T>) -> Result<Self> {
        let n_cols = labels.len();
        if n_cols == 0 {
            return Err(Error::argument("design matrix needs at least the intercept column"));
        }
        if values.len() % n_cols != 0 {
            return Err(Error::argument(format!(
                "{} values do not fill rows of {} columns",
                values.len(),
                n_cols
            )));
        }
        let n_rows = values.len() / n_cols;
        let mut nonzero = vec![false; n_cols];
        for (r, row) in values.chunks_exact(n_cols).enumerate() {
            if row[0] != T::one() {
                return Err(Error::argument(format!("row {r}: first column must be 1")));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::argument(format!("row {r}, column {}: non-finite entry", labels[j])));
                }
                nonzero[j] |= *v != T::zero();
            }
        }
        if n_rows > 0 {
            if let Some(j) = nonzero.iter().position(|nz| !nz) {
                return Err(Error::argument(format!("column {} is identically zero", labels[j])));
            }
        }
        Ok(Self { n_rows, labels, values })
    }

    /// Builds from covariate rows, prepending the intercept.
    pub fn with_intercept<I, R>(covariate_labels: &[String], rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[T]>,
    {
        let mut labels = Vec::with_capacity(covariate_labels.len() + 1);
        labels.push(INTERCEPT.to_string());
        labels.extend(covariate_labels.iter().cloned());
        let mut values = Vec::new();
        for row in rows {
            let row = row.as_ref();
            if row.len() != covariate_labels.len() {
                return Err(Error::argument(format!(
                    "row has {} covariates, expected {}",
                    row.len(),
                    covariate_labels.len()
                )));
            }
            values.push(T::one());
            values.extend_from_slice(row);
        }
        Self::new(labels, values)
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept_only(n: usize) -> Self {
        Self {
            n_rows: n,
            labels: vec![INTERCEPT.to_string()],
            values: vec![T::one(); n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.values.chunks_exact(self.n_cols())
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// `X β` without offset.
    pub fn linear_predictor(&self, beta: &[T]) -> Vec<T> {
        assert_eq!(beta.len(), self.n_cols());
        self.rows()
            .map(|r| r.iter().zip(beta).fold(T::zero(), |acc, (x, b)| acc + *x * *b))
            .collect()
    }

    /// Appends a column (no validation beyond finiteness and length).
    pub fn push_column(&mut self, label: impl Into<String>, column: &[T]) -> Result<()> {
        if column.len() != self.n_rows {
            return Err(Error::argument("appended column length differs from row count"));
        }
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("appended column has non-finite entries"));
        }
        let p = self.n_cols();
        let mut values = Vec::with_capacity(self.n_rows * (p + 1));
        for (row, v) in self.values.chunks_exact(p).zip(column) {
            values.extend_from_slice(row);
            values.push(*v);
        }
        self.values = values;
        self.labels.push(label.into());
        Ok(())
    }

    /// Keeps the listed columns in the given order; index 0 must come first.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.first() != Some(&0) {
            return Err(Error::argument("column selection must keep the intercept first"));
        }
        let p = self.n_cols();
        if let Some(bad) = cols.iter().find(|&&c| c >= p) {
            return Err(Error::argument(format!("column index {bad} out of range")));
        }
        let values = self
            .rows()
            .flat_map(|r| cols.iter().map(move |&c| r[c]))
            .collect();
        Ok(Self {
            n_rows: self.n_rows,
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
            values,
        })
    }

    /// Keeps the listed rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        Self {
            n_rows: rows.len(),
            labels: self.labels.clone(),
            values,
        }
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}
