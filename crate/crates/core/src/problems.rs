//! Built-in autonomous test problems `u' = F(u)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Right-hand side `F(u)`, written into the output slice.
pub type RhsFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Jacobian `dF/du`, written into a `dim × dim` matrix.
pub type JacobianFn = Arc<dyn Fn(&[f64], &mut DMatrix<f64>) + Send + Sync>;

/// How the solution at `t_final` is obtained.
#[derive(Debug, Clone)]
pub enum Reference {
    Exact(Vec<f64>),
    /// Classical RK4 with `dt = 2^-exponent`, computed on first use.
    Rk4 {
        exponent: u32,
    },
}

#[derive(Clone)]
pub struct OdeSystem {
    pub name: String,
    pub dim: usize,
    pub f: RhsFn,
    pub jacobian: JacobianFn,
    /// Alternative operator for `F^ε`, same state layout as `f`.
    pub sibling: Option<RhsFn>,
    /// Jacobian of the sibling operator, used in Newton matrices when it is active.
    pub sibling_jacobian: Option<JacobianFn>,
    pub initial: Vec<f64>,
    pub t_final: f64,
    reference: Reference,
    reference_cache: Arc<OnceLock<Vec<f64>>>,
}

impl fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("has_sibling", &self.sibling.is_some())
            .field("t_final", &self.t_final)
            .finish_non_exhaustive()
    }
}

impl OdeSystem {
    pub fn eval(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.f)(u, &mut out);
        out
    }

    pub fn jacobian_at(&self, u: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim, self.dim);
        (self.jacobian)(u, &mut j);
        j
    }

    pub fn eval_sibling(&self, u: &[f64]) -> Option<Vec<f64>> {
        self.sibling.as_ref().map(|g| {
            let mut out = vec![0.0; self.dim];
            g(u, &mut out);
            out
        })
    }

    /// The solution at `t_final`.
    pub fn reference(&self) -> &[f64] {
        self.reference_cache.get_or_init(|| match &self.reference {
            Reference::Exact(v) => v.clone(),
            Reference::Rk4 { exponent } => {
                let n = 1u64 << exponent;
                let dt = self.t_final / n as f64;
                rk4(&self.f, &self.initial, dt, n)
            }
        })
    }

    pub fn reference_kind(&self) -> &Reference {
        &self.reference
    }
}

/// Classical fourth-order explicit Runge-Kutta, `n` steps of size `dt`.
pub fn rk4(f: &RhsFn, u0: &[f64], dt: f64, n: u64) -> Vec<f64> {
    let d = u0.len();
    let mut u = u0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for _ in 0..n {
        f(&u, &mut k1);
        for i in 0..d {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = u[i] + dt * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..d {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u
}

/// Van der Pol oscillator with unit stiffness parameter, `y(0) = (2, 0)`, `T = 1`.
pub fn vdp() -> OdeSystem {
    static REFERENCE: OnceLock<Vec<f64>> = OnceLock::new();
    let f: RhsFn = Arc::new(|y: &[f64], out: &mut [f64]| {
        out[0] = y[1];
        out[1] = y[1] * (1.0 - y[0] * y[0]) - y[0];
    });
    let jacobian: JacobianFn = Arc::new(|y: &[f64], j: &mut DMatrix<f64>| {
        j[(0, 0)] = 0.0;
        j[(0, 1)] = 1.0;
        j[(1, 0)] = -2.0 * y[0] * y[1] - 1.0;
        j[(1, 1)] = 1.0 - y[0] * y[0];
    });
    let mut sys = OdeSystem {
        name: "vdp".into(),
        dim: 2,
        f,
        jacobian,
        sibling: None,
        sibling_jacobian: None,
        initial: vec![2.0, 0.0],
        t_final: 1.0,
        reference: Reference::Rk4 { exponent: 18 },
        reference_cache: Arc::new(OnceLock::new()),
    };
    // The RK4 reference is shared by every vdp instance.
    let r = REFERENCE.get_or_init(|| sys.reference().to_vec());
    sys.reference_cache = Arc::new(OnceLock::from(r.clone()));
    sys
}

/// Dense Fourier second-derivative matrix on `n` equispaced periodic points
/// of `[0, 2π)`, wavenumbers `-n/2..n/2-1` with the Nyquist mode dropped.
pub fn spectral_second_derivative(n: usize) -> DMatrix<f64> {
    // Circulant: entry (j, l) depends on (j - l) mod n.
    let kmax = (n / 2) as i64;
    let symbol: Vec<f64> = (0..n)
        .map(|m| {
            let theta = 2.0 * PI * m as f64 / n as f64;
            let mut s = 0.0;
            for k in 1..kmax {
                let kf = k as f64;
                s -= 2.0 * kf * kf * (kf * theta).cos();
            }
            s / n as f64
        })
        .collect();
    DMatrix::from_fn(n, n, |j, l| symbol[(j + n - l) % n])
}

/// Periodic three-point centred second difference, `h = 2π/n`.
pub fn centered_second_difference(n: usize) -> DMatrix<f64> {
    let h = 2.0 * PI / n as f64;
    let w = 1.0 / (h * h);
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        d[(j, j)] = -2.0 * w;
        d[(j, (j + 1) % n)] += w;
        d[(j, (j + n - 1) % n)] += w;
    }
    d
}

fn matvec_rhs(m: Arc<DMatrix<f64>>) -> RhsFn {
    Arc::new(move |u: &[f64], out: &mut [f64]| {
        let n = u.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..n {
                s += m[(i, j)] * u[j];
            }
            *o = s;
        }
    })
}

/// Periodic heat equation `u_t = u_xx` on `(0, 2π)` with `u(x, 0) = sin x`.
///
/// `F` is the Fourier spectral operator; the sibling is the centred difference.
pub fn diffusion(n: usize) -> Result<OdeSystem> {
    if !n.is_multiple_of(2) || !(8..=512).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "diffusion grid size must be even and in 8..=512, got {n}"
        )));
    }
    let spectral = Arc::new(spectral_second_derivative(n));
    let fd = Arc::new(centered_second_difference(n));
    let grid: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
    let constant = |m: Arc<DMatrix<f64>>| -> JacobianFn {
        Arc::new(move |_: &[f64], j: &mut DMatrix<f64>| j.copy_from(&m))
    };
    Ok(OdeSystem {
        name: format!("diffusion:{n}"),
        dim: n,
        f: matvec_rhs(spectral.clone()),
        jacobian: constant(spectral),
        sibling: Some(matvec_rhs(fd.clone())),
        sibling_jacobian: Some(constant(fd)),
        initial: grid.iter().map(|x| x.sin()).collect(),
        t_final: 1.0,
        reference: Reference::Exact(grid.iter().map(|x| (-1.0f64).exp() * x.sin()).collect()),
        reference_cache: Arc::new(OnceLock::new()),
    })
}

/// Scalar linear test equation `u' = λu`, `u(0) = 1`, `T = 1`.
pub fn dahlquist(lambda: f64) -> Result<OdeSystem> {
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    Ok(OdeSystem {
        name: format!("dahlquist:{lambda}"),
        dim: 1,
        f: Arc::new(move |u: &[f64], out: &mut [f64]| out[0] = lambda * u[0]),
        jacobian: Arc::new(move |_: &[f64], j: &mut DMatrix<f64>| j[(0, 0)] = lambda),
        sibling: None,
        sibling_jacobian: None,
        initial: vec![1.0],
        t_final: 1.0,
        reference: Reference::Exact(vec![lambda.exp()]),
        reference_cache: Arc::new(OnceLock::new()),
    })
}

/// Command-line problem selector: `vdp`, `diffusion:<N>`, `dahlquist:<lambda>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemId {
    Vdp,
    Diffusion(usize),
    Dahlquist(f64),
}

impl ProblemId {
    pub fn build(self) -> Result<OdeSystem> {
        match self {
            ProblemId::Vdp => Ok(vdp()),
            ProblemId::Diffusion(n) => diffusion(n),
            ProblemId::Dahlquist(l) => dahlquist(l),
        }
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "vdp" {
            return Ok(ProblemId::Vdp);
        }
        if let Some(n) = s.strip_prefix("diffusion:") {
            return n
                .parse()
                .map(ProblemId::Diffusion)
                .map_err(|_| Error::parse("problem", format!("`{s}`: bad grid size")));
        }
        if let Some(l) = s.strip_prefix("dahlquist:") {
            return l
                .parse()
                .map(ProblemId::Dahlquist)
                .map_err(|_| Error::parse("problem", format!("`{s}`: bad lambda")));
        }
        Err(Error::parse(
            "problem",
            format!("`{s}`: expected vdp, diffusion:<N> or dahlquist:<lambda>"),
        ))
    }
}
