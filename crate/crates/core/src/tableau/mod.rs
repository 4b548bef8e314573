//! Perturbed Butcher tableaux.
//!
//! A perturbed tableau carries two coefficient sets: `(A, b)` multiplies the
//! full-precision operator `F`, and `(Aeps, beps)` multiplies the perturbed
//! operator `F^ε`. Everything else (`c`, `c^ε`, `Ã`, `b̃`, `c̃`) is derived.

mod correct;
mod io;
mod library;

pub use correct::correct;
pub use io::{load, load_file, save};
pub use library::{builtin, builtin_names, resolve_method};

use crate::error::{Error, Result};

pub type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedTableau {
    name: String,
    a: Matrix,
    a_eps: Matrix,
    b: Vec<f64>,
    b_eps: Vec<f64>,
}

impl PerturbedTableau {
    /// Validates dimensions and finiteness.
    pub fn new(
        name: impl Into<String>,
        a: Matrix,
        a_eps: Matrix,
        b: Vec<f64>,
        b_eps: Vec<f64>,
    ) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(Error::InvalidTableau("stage count must be positive".into()));
        }
        let check_square = |m: &Matrix, what: &str| -> Result<()> {
            if m.len() != s || m.iter().any(|row| row.len() != s) {
                return Err(Error::InvalidTableau(format!("{what} must be {s}x{s}")));
            }
            Ok(())
        };
        check_square(&a, "A")?;
        check_square(&a_eps, "Aeps")?;
        if b_eps.len() != s {
            return Err(Error::InvalidTableau(format!("beps must have {s} entries")));
        }
        let finite = a
            .iter()
            .chain(&a_eps)
            .flatten()
            .chain(&b)
            .chain(&b_eps)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidTableau("coefficients must be finite".into()));
        }
        Ok(PerturbedTableau {
            name: name.into(),
            a,
            a_eps,
            b,
            b_eps,
        })
    }

    /// A tableau with no perturbed part.
    pub fn full_precision(name: impl Into<String>, a: Matrix, b: Vec<f64>) -> Result<Self> {
        let s = b.len();
        Self::new(name, a, vec![vec![0.0; s]; s], b, vec![0.0; s])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn a_eps(&self) -> &Matrix {
        &self.a_eps
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_eps(&self) -> &[f64] {
        &self.b_eps
    }

    /// Row sums of `A`.
    pub fn c(&self) -> Vec<f64> {
        row_sums(&self.a)
    }

    /// Row sums of `Aeps`.
    pub fn c_eps(&self) -> Vec<f64> {
        row_sums(&self.a_eps)
    }

    /// `Ã = A + Aeps`.
    pub fn a_tilde(&self) -> Matrix {
        self.a
            .iter()
            .zip(&self.a_eps)
            .map(|(r, re)| r.iter().zip(re).map(|(x, y)| x + y).collect())
            .collect()
    }

    /// `b̃ = b + beps`.
    pub fn b_tilde(&self) -> Vec<f64> {
        self.b.iter().zip(&self.b_eps).map(|(x, y)| x + y).collect()
    }

    /// `c̃ = c + c^ε`.
    pub fn c_tilde(&self) -> Vec<f64> {
        self.c()
            .iter()
            .zip(self.c_eps())
            .map(|(x, y)| x + y)
            .collect()
    }

    pub fn has_perturbation(&self) -> bool {
        self.a_eps
            .iter()
            .flatten()
            .chain(&self.b_eps)
            .any(|&v| v != 0.0)
    }

    pub fn structure(&self) -> StageStructure {
        StageStructure::classify(self)
    }

    /// Consecutive stage groups that must be solved together.
    ///
    /// The groups are the finest partition of `0..s` into contiguous ranges
    /// such that both `A` and `Aeps` are block lower triangular with respect to it.
    pub fn stage_groups(&self) -> Vec<std::ops::Range<usize>> {
        let s = self.stages();
        let mut groups = Vec::new();
        let mut start = 0;
        // largest column coupled into the rows of the open group
        let mut reach = 0;
        for i in 0..s {
            if let Some(j) = (0..s)
                .rev()
                .find(|&j| self.a[i][j] != 0.0 || self.a_eps[i][j] != 0.0)
            {
                reach = reach.max(j);
            }
            if reach <= i {
                groups.push(start..i + 1);
                start = i + 1;
                reach = i + 1;
            }
        }
        groups
    }
}

fn row_sums(m: &Matrix) -> Vec<f64> {
    m.iter().map(|r| r.iter().sum()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Explicit,
    DiagonallyImplicit,
    FullyCoupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageFlags {
    /// Diagonal of `Ã` is nonzero.
    pub implicit: bool,
    /// Diagonal of `Aeps` is nonzero.
    pub low_precision_implicit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageStructure {
    pub kind: StructureKind,
    pub stages: Vec<StageFlags>,
}

impl StageStructure {
    pub fn classify(t: &PerturbedTableau) -> Self {
        let at = t.a_tilde();
        let s = t.stages();
        let lower = (0..s).all(|i| (i + 1..s).all(|j| at[i][j] == 0.0));
        let stages: Vec<StageFlags> = (0..s)
            .map(|i| StageFlags {
                implicit: at[i][i] != 0.0,
                low_precision_implicit: t.a_eps[i][i] != 0.0,
            })
            .collect();
        let kind = if !lower {
            StructureKind::FullyCoupled
        } else if stages.iter().any(|f| f.implicit) {
            StructureKind::DiagonallyImplicit
        } else {
            StructureKind::Explicit
        };
        StageStructure { kind, stages }
    }
}
