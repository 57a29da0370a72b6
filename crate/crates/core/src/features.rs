use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Samples × features matrix fed to selection and clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 || data.ncols() < 1 {
            return Err(Error::InvalidArg(format!(
                "feature matrix needs >= 2 rows and >= 1 column, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArg("feature matrix has non-finite entries".into()));
        }
        Ok(Self { data, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.data.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature names for {} columns",
                names.len(),
                self.data.ncols()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Name of column `j`, falling back to `f<j+1>`.
    pub fn name(&self, j: usize) -> String {
        match &self.names {
            Some(n) => n[j].clone(),
            None => format!("f{}", j + 1),
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.norm_squared()
    }
}
