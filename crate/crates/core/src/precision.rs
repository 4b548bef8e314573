//! Low-precision emulation of the right-hand side.
//!
//! The perturbed operator `F^ε` is produced from `F` in one of three ways:
//! rounding the output of `F` to a shorter significand ([`chop`]), loosening
//! the tolerance of the implicit stage solver, or evaluating an independent
//! sibling operator (for example a coarser spatial discretisation).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::problems::{JacobianFn, OdeSystem, RhsFn};

/// Width of the emulated significand, counting the implicit leading bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChopSpec {
    bits: u32,
}

impl ChopSpec {
    /// IEEE binary16: 11 significand bits, `u = 2^-11`.
    pub const HALF: ChopSpec = ChopSpec { bits: 11 };
    /// IEEE binary32: 24 significand bits, `u = 2^-24`.
    pub const SINGLE: ChopSpec = ChopSpec { bits: 24 };
    /// Sign and exponent only, `u = 1/2`.
    pub const ZERO: ChopSpec = ChopSpec { bits: 1 };

    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidArgument(
                "significand width must be at least 1 bit".into(),
            ));
        }
        Ok(ChopSpec { bits })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Unit roundoff `2^-t` for round-to-nearest.
    pub fn unit_roundoff(self) -> f64 {
        (-(self.bits as f64)).exp2()
    }
}

/// Rounds `x` to the nearest value with `spec.bits()` significand bits
/// (ties to even). The exponent range is not restricted.
///
/// Non-finite inputs are returned unchanged. Values in the top binade that
/// round up past `f64::MAX` become infinite, as in IEEE arithmetic.
pub fn chop(x: f64, spec: ChopSpec) -> f64 {
    let t = spec.bits as i32;
    if t >= 53 || x == 0.0 || !x.is_finite() {
        return x;
    }
    // Subnormals are lifted into the normal range so the scale below stays finite.
    if x.abs() < f64::MIN_POSITIVE {
        let lift = 600f64.exp2();
        return chop(x * lift, spec) / lift;
    }
    let exponent = ((x.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    // x * 2^(t-1-e) lies in [2^(t-1), 2^t); both scalings are exact.
    let shift = t - 1 - exponent;
    let scaled = scale_pow2(x, shift);
    scale_pow2(scaled.round_ties_even(), -shift)
}

/// Multiplies by `2^k` in at most two exact steps, so intermediate powers never overflow.
fn scale_pow2(x: f64, k: i32) -> f64 {
    let half = k / 2;
    x * (half as f64).exp2() * ((k - half) as f64).exp2()
}

/// A right-hand side that replaces `F` when evaluating `F^ε`.
#[derive(Clone)]
pub struct SiblingOperator {
    pub dim: usize,
    pub f: RhsFn,
    /// When absent, Newton matrices use the Jacobian of `F` for the sibling terms.
    pub jacobian: Option<JacobianFn>,
}

impl fmt::Debug for SiblingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SiblingOperator")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

/// How `F^ε` is obtained from `F`.
#[derive(Debug, Clone)]
pub enum PrecisionMode {
    /// `F^ε = F`.
    Full,
    /// `F^ε = chop(F)` elementwise.
    Chop(ChopSpec),
    /// `F^ε = F`, but low-precision implicit stages stop Newton at `atol`.
    SolverTolerance { atol: f64 },
    /// `F^ε` is a separately supplied operator.
    Sibling(SiblingOperator),
}

impl PrecisionMode {
    /// Sibling mode using the system's own alternative operator.
    pub fn sibling_of(sys: &OdeSystem) -> Result<Self> {
        match &sys.sibling {
            Some(f) => Ok(PrecisionMode::Sibling(SiblingOperator {
                dim: sys.dim,
                f: f.clone(),
                jacobian: sys.sibling_jacobian.clone(),
            })),
            None => Err(Error::InvalidArgument(format!(
                "problem `{}` has no sibling operator",
                sys.name
            ))),
        }
    }

    /// The nominal perturbation size `ε` (zero where none is defined).
    pub fn epsilon(&self) -> f64 {
        match self {
            PrecisionMode::Full | PrecisionMode::Sibling(_) => 0.0,
            PrecisionMode::Chop(spec) => spec.unit_roundoff(),
            PrecisionMode::SolverTolerance { atol } => *atol,
        }
    }

    /// True when `F^ε` is a discontinuous function of the state.
    pub fn is_chopped(&self) -> bool {
        matches!(self, PrecisionMode::Chop(spec) if spec.bits < 53)
    }

    /// Evaluates `F^ε(u)` given `fu = F(u)`, writing into `out`.
    pub(crate) fn perturb_into(&self, u: &[f64], fu: &[f64], out: &mut [f64]) {
        match self {
            PrecisionMode::Full | PrecisionMode::SolverTolerance { .. } => out.copy_from_slice(fu),
            PrecisionMode::Chop(spec) => {
                for (o, &v) in out.iter_mut().zip(fu) {
                    *o = chop(v, *spec);
                }
            }
            PrecisionMode::Sibling(op) => (op.f)(u, out),
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match self {
            PrecisionMode::Sibling(op) if op.dim != n => Err(Error::DimensionMismatch {
                expected: n,
                found: op.dim,
            }),
            _ => Ok(()),
        }
    }

    /// Label used in CSV output and on the command line.
    pub fn label(&self) -> String {
        match self {
            PrecisionMode::Full => "full".into(),
            PrecisionMode::Chop(s) if *s == ChopSpec::HALF => "half".into(),
            PrecisionMode::Chop(s) if *s == ChopSpec::SINGLE => "single".into(),
            PrecisionMode::Chop(s) if *s == ChopSpec::ZERO => "zero".into(),
            PrecisionMode::Chop(s) => format!("bits:{}", s.bits),
            PrecisionMode::SolverTolerance { atol } => format!("tol:{atol:?}"),
            PrecisionMode::Sibling(_) => "sibling".into(),
        }
    }
}

/// `F^ε(u)` for the given mode.
pub fn apply(f: &dyn Fn(&[f64], &mut [f64]), u: &[f64], mode: &PrecisionMode) -> Result<Vec<f64>> {
    mode.check_dim(u.len())?;
    let mut fu = vec![0.0; u.len()];
    f(u, &mut fu);
    let mut out = vec![0.0; u.len()];
    mode.perturb_into(u, &fu, &mut out);
    Ok(out)
}

/// The normalised perturbation `(F(u) - F^ε(u)) / eps`.
pub fn tau(
    f: &dyn Fn(&[f64], &mut [f64]),
    mode: &PrecisionMode,
    u: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let fe = apply(f, u, mode)?;
    let mut fu = vec![0.0; u.len()];
    f(u, &mut fu);
    Ok(fu.iter().zip(&fe).map(|(a, b)| (a - b) / eps).collect())
}

/// Parsed form of a command-line precision flag. `sibling` is resolved
/// against a problem later because the operator belongs to the problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecisionFlag {
    Full,
    Chop(ChopSpec),
    Tol(f64),
    Sibling,
}

impl PrecisionFlag {
    pub fn resolve(self, sys: &OdeSystem) -> Result<PrecisionMode> {
        Ok(match self {
            PrecisionFlag::Full => PrecisionMode::Full,
            PrecisionFlag::Chop(s) => PrecisionMode::Chop(s),
            PrecisionFlag::Tol(atol) => PrecisionMode::SolverTolerance { atol },
            PrecisionFlag::Sibling => PrecisionMode::sibling_of(sys)?,
        })
    }
}

impl FromStr for PrecisionFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::parse("precision", format!("`{s}`: {m}"));
        match s {
            "full" => return Ok(PrecisionFlag::Full),
            "half" => return Ok(PrecisionFlag::Chop(ChopSpec::HALF)),
            "single" => return Ok(PrecisionFlag::Chop(ChopSpec::SINGLE)),
            "zero" => return Ok(PrecisionFlag::Chop(ChopSpec::ZERO)),
            "sibling" => return Ok(PrecisionFlag::Sibling),
            _ => {}
        }
        if let Some(bits) = s.strip_prefix("bits:") {
            let t: u32 = bits
                .parse()
                .map_err(|_| bad("expected an integer bit count"))?;
            return ChopSpec::new(t)
                .map(PrecisionFlag::Chop)
                .map_err(|e| bad(&e.to_string()));
        }
        if let Some(atol) = s.strip_prefix("tol:") {
            let atol: f64 = atol.parse().map_err(|_| bad("expected a tolerance"))?;
            if !(atol > 0.0 && atol.is_finite()) {
                return Err(bad("tolerance must be positive"));
            }
            return Ok(PrecisionFlag::Tol(atol));
        }
        Err(bad(
            "expected full, half, single, zero, bits:<t>, tol:<atol> or sibling",
        ))
    }
}
