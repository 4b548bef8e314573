//! Consistency and perturbation order conditions for perturbed tableaux.
//!
//! The global error of a perturbed method behaves like `O(dt^p) + O(ε dt^m)`.
//! `p` follows from the classical conditions on `(Ã, b̃, c̃)` up to order 4.
//! `m` follows from the cross terms between `F` and `τ` up to order 3, in two
//! flavours: the strict set takes elementwise absolute values wherever a
//! derivative of `τ` appears (needed when `τ` comes from chopping and has no
//! derivatives), and the simplified set allows cancellation.

use std::fmt;

use crate::tableau::{Matrix, PerturbedTableau};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const SYMBOLIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionGroup {
    Consistency,
    PerturbationStrict,
    PerturbationSimplified,
}

impl fmt::Display for ConditionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ConditionGroup::Consistency => "consistency",
            ConditionGroup::PerturbationStrict => "strict",
            ConditionGroup::PerturbationSimplified => "simplified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Strict,
    Simplified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub name: String,
    pub group: ConditionGroup,
    /// `p` for consistency conditions, `m` for perturbation conditions.
    pub order: u32,
    /// Power of ε multiplying the term (0 for consistency conditions).
    pub eps_power: u32,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub p: u32,
    pub m_strict: u32,
    pub m_simplified: u32,
    pub tol: f64,
}

// Small dense helpers; tableaux have a handful of stages.

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    m.iter().map(|r| dot(r, x)).collect()
}

fn hadamard(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

fn abs_v(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.abs()).collect()
}

fn abs_m(m: &Matrix) -> Matrix {
    m.iter().map(|r| abs_v(r)).collect()
}

struct Coefficients {
    at: Matrix,
    ae: Matrix,
    bt: Vec<f64>,
    be: Vec<f64>,
    ct: Vec<f64>,
    ce: Vec<f64>,
}

impl Coefficients {
    fn of(t: &PerturbedTableau) -> Self {
        Coefficients {
            at: t.a_tilde(),
            ae: t.a_eps().clone(),
            bt: t.b_tilde(),
            be: t.b_eps().to_vec(),
            ct: t.c_tilde(),
            ce: t.c_eps(),
        }
    }

    fn abs(&self) -> Self {
        Coefficients {
            at: abs_m(&self.at),
            ae: abs_m(&self.ae),
            bt: abs_v(&self.bt),
            be: abs_v(&self.be),
            ct: abs_v(&self.ct),
            ce: abs_v(&self.ce),
        }
    }
}

/// Residuals `|contraction - target|` of the eight classical conditions through order 4,
/// as `(name, order, residual)`.
pub fn consistency_residuals(t: &PerturbedTableau) -> Vec<(&'static str, u32, f64)> {
    let k = Coefficients::of(t);
    let e = vec![1.0; t.stages()];
    let cc = hadamard(&k.ct, &k.ct);
    let ac = matvec(&k.at, &k.ct);
    let rows: [(&str, u32, f64, f64); 8] = [
        ("bt.e", 1, dot(&k.bt, &e), 1.0),
        ("bt.ct", 2, dot(&k.bt, &k.ct), 0.5),
        ("bt.(ct*ct)", 3, dot(&k.bt, &cc), 1.0 / 3.0),
        ("bt.At.ct", 3, dot(&k.bt, &ac), 1.0 / 6.0),
        ("bt.(ct*ct*ct)", 4, dot(&k.bt, &hadamard(&cc, &k.ct)), 0.25),
        ("bt.(At.ct*ct)", 4, dot(&k.bt, &hadamard(&ac, &k.ct)), 0.125),
        (
            "bt.At.(ct*ct)",
            4,
            dot(&k.bt, &matvec(&k.at, &cc)),
            1.0 / 12.0,
        ),
        (
            "bt.At.At.ct",
            4,
            dot(&k.bt, &matvec(&k.at, &ac)),
            1.0 / 24.0,
        ),
    ];
    rows.iter()
        .map(|&(n, o, v, target)| (n, o, (v - target).abs()))
        .collect()
}

/// A perturbation condition: target order `m`, ε-power, and whether the
/// strict form takes absolute values (it does whenever a derivative of `τ` is involved).
struct PerturbationTerm {
    name: &'static str,
    order: u32,
    eps_power: u32,
    absolute: bool,
    eval: fn(&Coefficients) -> f64,
}

const PERTURBATION_TERMS: [PerturbationTerm; 16] = [
    PerturbationTerm {
        name: "be.e",
        order: 1,
        eps_power: 1,
        absolute: false,
        eval: |k| k.be.iter().sum(),
    },
    PerturbationTerm {
        name: "be.ct",
        order: 2,
        eps_power: 1,
        absolute: true,
        eval: |k| dot(&k.be, &k.ct),
    },
    PerturbationTerm {
        name: "bt.ce",
        order: 2,
        eps_power: 1,
        absolute: false,
        eval: |k| dot(&k.bt, &k.ce),
    },
    PerturbationTerm {
        name: "be.ce",
        order: 2,
        eps_power: 2,
        absolute: true,
        eval: |k| dot(&k.be, &k.ce),
    },
    PerturbationTerm {
        name: "be.At.ct",
        order: 3,
        eps_power: 1,
        absolute: true,
        eval: |k| dot(&k.be, &matvec(&k.at, &k.ct)),
    },
    PerturbationTerm {
        name: "bt.Ae.ct",
        order: 3,
        eps_power: 1,
        absolute: true,
        eval: |k| dot(&k.bt, &matvec(&k.ae, &k.ct)),
    },
    PerturbationTerm {
        name: "bt.At.ce",
        order: 3,
        eps_power: 1,
        absolute: false,
        eval: |k| dot(&k.bt, &matvec(&k.at, &k.ce)),
    },
    PerturbationTerm {
        name: "be.(ct*ct)",
        order: 3,
        eps_power: 1,
        absolute: true,
        eval: |k| dot(&k.be, &hadamard(&k.ct, &k.ct)),
    },
    PerturbationTerm {
        name: "bt.(ct*ce)",
        order: 3,
        eps_power: 1,
        absolute: false,
        eval: |k| dot(&k.bt, &hadamard(&k.ct, &k.ce)),
    },
    PerturbationTerm {
        name: "be.Ae.ct",
        order: 3,
        eps_power: 2,
        absolute: true,
        eval: |k| dot(&k.be, &matvec(&k.ae, &k.ct)),
    },
    PerturbationTerm {
        name: "be.At.ce",
        order: 3,
        eps_power: 2,
        absolute: true,
        eval: |k| dot(&k.be, &matvec(&k.at, &k.ce)),
    },
    PerturbationTerm {
        name: "bt.Ae.ce",
        order: 3,
        eps_power: 2,
        absolute: true,
        eval: |k| dot(&k.bt, &matvec(&k.ae, &k.ce)),
    },
    PerturbationTerm {
        name: "be.(ce*ct)",
        order: 3,
        eps_power: 2,
        absolute: true,
        eval: |k| dot(&k.be, &hadamard(&k.ce, &k.ct)),
    },
    PerturbationTerm {
        name: "bt.(ce*ce)",
        order: 3,
        eps_power: 2,
        absolute: false,
        eval: |k| dot(&k.bt, &hadamard(&k.ce, &k.ce)),
    },
    PerturbationTerm {
        name: "be.Ae.ce",
        order: 3,
        eps_power: 3,
        absolute: true,
        eval: |k| dot(&k.be, &matvec(&k.ae, &k.ce)),
    },
    PerturbationTerm {
        name: "be.(ce*ce)",
        order: 3,
        eps_power: 3,
        absolute: true,
        eval: |k| dot(&k.be, &hadamard(&k.ce, &k.ce)),
    },
];

/// Perturbation residuals as `(name, order m, ε-power, residual)`.
///
/// In strict mode the marked terms are evaluated with every factor replaced by
/// its elementwise absolute value, and the name is written with bars.
pub fn perturbation_residuals(t: &PerturbedTableau, mode: Mode) -> Vec<(String, u32, u32, f64)> {
    let k = Coefficients::of(t);
    let k_abs = k.abs();
    PERTURBATION_TERMS
        .iter()
        .map(|term| {
            let strict = mode == Mode::Strict && term.absolute;
            let value = if strict {
                (term.eval)(&k_abs)
            } else {
                (term.eval)(&k)
            };
            let name = if strict {
                barred(term.name)
            } else {
                term.name.to_string()
            };
            (name, term.order, term.eps_power, value.abs())
        })
        .collect()
}

/// `be.At.ct` -> `|be|.|At|.|ct|`, `be.(ct*ct)` -> `|be|.|ct*ct|`.
fn barred(name: &str) -> String {
    name.split('.')
        .map(
            |f| match f.strip_prefix('(').and_then(|f| f.strip_suffix(')')) {
                Some(inner) => format!("|{inner}|"),
                None => format!("|{f}|"),
            },
        )
        .collect::<Vec<_>>()
        .join(".")
}

/// Largest order `k <= cap` such that every residual of order `<= k` is below `tol`.
fn derived_order(residuals: impl Iterator<Item = (u32, f64)> + Clone, cap: u32, tol: f64) -> u32 {
    (1..=cap)
        .take_while(|&k| {
            residuals
                .clone()
                .filter(|&(o, _)| o == k)
                .all(|(_, r)| r < tol)
        })
        .last()
        .unwrap_or(0)
}

pub fn report(t: &PerturbedTableau, tol: f64) -> ConditionReport {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut entries = Vec::with_capacity(8 + 32);
    for (name, order, residual) in consistency_residuals(t) {
        entries.push(ConditionEntry {
            name: name.to_string(),
            group: ConditionGroup::Consistency,
            order,
            eps_power: 0,
            residual,
        });
    }
    for (mode, group) in [
        (Mode::Strict, ConditionGroup::PerturbationStrict),
        (Mode::Simplified, ConditionGroup::PerturbationSimplified),
    ] {
        for (name, order, eps_power, residual) in perturbation_residuals(t, mode) {
            entries.push(ConditionEntry {
                name,
                group,
                order,
                eps_power,
                residual,
            });
        }
    }
    let order_of = |g: ConditionGroup, cap: u32| {
        let it = entries
            .iter()
            .filter(move |e| e.group == g)
            .map(|e| (e.order, e.residual));
        derived_order(it, cap, tol)
    };
    let p = order_of(ConditionGroup::Consistency, 4);
    let m_strict = order_of(ConditionGroup::PerturbationStrict, 3);
    let m_simplified = order_of(ConditionGroup::PerturbationSimplified, 3);
    ConditionReport {
        entries,
        p,
        m_strict,
        m_simplified,
        tol,
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:<12} {:>5} {:>5} {:>12}",
            "condition", "group", "order", "eps^n", "residual"
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<20} {:<12} {:>5} {:>5} {:>12.4e}",
                e.name, e.group, e.order, e.eps_power, e.residual
            )?;
        }
        writeln!(f, "tolerance      {:e}", self.tol)?;
        writeln!(f, "p              {}", self.p)?;
        writeln!(f, "m (strict)     {}", self.m_strict)?;
        write!(f, "m (simplified) {}", self.m_simplified)
    }
}
