//! JSON problem files.
//!
//! ```json
//! {"schema": 1,
//!  "fidelity": {"kind": "ls", "y": [1.0, 2.0]},
//!  "A": [[3.0, 1.0], [1.0, 3.0]],
//!  "lambda0": 0.5, "lambda2": 0.0, "constraint": "reals"}
//! ```
//!
//! `A` may also be given as `{"rows": M, "cols": N, "data": [...]}` in row-major order.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::{Fidelity, FidelityKind};
use crate::problem::{Constraint, Problem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixRepr {
    Rows(Vec<Vec<f64>>),
    Flat { rows: usize, cols: usize, data: Vec<f64> },
}

impl MatrixRepr {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixRepr::Rows(rows) => {
                let m = rows.len();
                let n = rows.first().map_or(0, |r| r.len());
                if m == 0 || n == 0 {
                    return Err(Error::Parse("matrix A is empty".into()));
                }
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Parse("rows of A have different lengths".into()));
                }
                Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
            }
            MatrixRepr::Flat { rows, cols, data } => {
                if rows * cols != data.len() || *rows == 0 || *cols == 0 {
                    return Err(Error::Parse(format!(
                        "A declares {rows}x{cols} but holds {} values",
                        data.len()
                    )));
                }
                Ok(DMatrix::from_row_slice(*rows, *cols, data))
            }
        }
    }

    pub fn from_matrix(a: &DMatrix<f64>) -> Self {
        MatrixRepr::Rows(a.row_iter().map(|r| r.iter().cloned().collect()).collect())
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub fidelity: Fidelity,
    #[serde(rename = "A")]
    pub a: MatrixRepr,
    pub lambda0: f64,
    #[serde(default)]
    pub lambda2: f64,
    /// Defaults to `nonneg` for KL and `reals` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
}

impl ProblemFile {
    pub fn from_problem(p: &Problem) -> Self {
        ProblemFile {
            schema: SCHEMA_VERSION,
            fidelity: p.fidelity.clone(),
            a: MatrixRepr::from_matrix(&p.a),
            lambda0: p.lambda0,
            lambda2: p.lambda2,
            constraint: Some(p.constraint),
        }
    }

    pub fn to_problem(&self) -> Result<Problem> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema version {}", self.schema)));
        }
        let constraint = self.constraint.unwrap_or(match self.fidelity.kind {
            FidelityKind::KullbackLeibler => Constraint::Nonneg,
            _ => Constraint::Reals,
        });
        Problem::new(self.a.to_matrix()?, self.fidelity.clone(), self.lambda0, self.lambda2, constraint)
    }
}

pub fn parse_problem(text: &str) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_str(text)?;
    file.to_problem()
}

pub fn problem_to_json(p: &Problem) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ProblemFile::from_problem(p))?)
}

pub fn read_problem(path: &Path) -> Result<Problem> {
    parse_problem(&std::fs::read_to_string(path)?)
}

pub fn write_problem(path: &Path, p: &Problem) -> Result<()> {
    std::fs::write(path, problem_to_json(p)?)?;
    Ok(())
}
