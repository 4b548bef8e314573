//! Time stepping with a perturbed tableau.
//!
//! Stage values satisfy
//!
//! ```text
//! y_i = u + dt Σ_j A_ij F(y_j) + dt Σ_j Aeps_ij F^ε(y_j)
//! u+  = u + dt Σ_j (b_j F(y_j) + beps_j F^ε(y_j))
//! ```
//!
//! Stages are processed in the groups returned by
//! [`PerturbedTableau::stage_groups`]: explicit stages are evaluated directly,
//! every other group is solved by Newton's method with the analytic Jacobian of
//! the smooth `F` (and of the sibling operator, when one supplies its own),
//! refactored at every iteration.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::precision::{PrecisionMode, SiblingOperator};
use crate::problems::{JacobianFn, OdeSystem};
use crate::tableau::{Matrix, PerturbedTableau};

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub newton_atol: f64,
    pub newton_rtol: f64,
    pub newton_max_iter: usize,
    /// Iterations without halving the residual before a chopped solve is declared stalled.
    pub stall_window: usize,
}

impl IntegrationConfig {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        IntegrationConfig {
            dt,
            n_steps,
            newton_atol: 1e-13,
            newton_rtol: 1e-13,
            newton_max_iter: 100,
            stall_window: 3,
        }
    }

    /// `round(t_final / dt)` steps; `dt` must divide `t_final` to within 1e-12.
    pub fn for_final_time(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let n = (t_final / dt).round();
        if (n * dt - t_final).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} does not divide t_final = {t_final}"
            )));
        }
        Ok(Self::new(dt, n as usize))
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.dt) || !positive(self.newton_atol) || !positive(self.newton_rtol) {
            return Err(Error::InvalidArgument(
                "dt and Newton tolerances must be positive".into(),
            ));
        }
        if self.newton_max_iter == 0 || self.stall_window == 0 {
            return Err(Error::InvalidArgument(
                "newton_max_iter and stall_window must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one group solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSolve {
    pub first_stage: usize,
    pub stages: usize,
    pub iterations: usize,
    /// Max-norm residual of the accepted iterate.
    pub residual: f64,
    pub stalled: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    pub solves: Vec<StageSolve>,
}

impl StepStats {
    pub fn newton_iterations(&self) -> usize {
        self.solves.iter().map(|s| s.iterations).sum()
    }

    pub fn stalls(&self) -> usize {
        self.solves.iter().filter(|s| s.stalled).count()
    }

    pub fn max_residual(&self) -> f64 {
        self.solves.iter().fold(0.0, |m, s| m.max(s.residual))
    }
}

/// Totals over an integration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub stalls: usize,
    pub max_residual: f64,
}

impl RunStats {
    fn absorb(&mut self, s: &StepStats) {
        self.steps += 1;
        self.newton_iterations += s.newton_iterations();
        self.stalls += s.stalls();
        self.max_residual = self.max_residual.max(s.max_residual());
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub stages: Vec<Vec<f64>>,
    pub stats: StepStats,
}

struct Group {
    range: Range<usize>,
    explicit: bool,
    /// Some `Aeps` entry couples stages inside the group.
    low_precision: bool,
}

/// A tableau bound to a system and precision mode.
pub struct Integrator<'a> {
    tableau: &'a PerturbedTableau,
    sys: &'a OdeSystem,
    mode: &'a PrecisionMode,
    cfg: IntegrationConfig,
    a_tilde: Matrix,
    groups: Vec<Group>,
    needs_fe: Vec<bool>,
}

impl<'a> Integrator<'a> {
    pub fn new(
        tableau: &'a PerturbedTableau,
        sys: &'a OdeSystem,
        mode: &'a PrecisionMode,
        cfg: IntegrationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if sys.initial.len() != sys.dim {
            return Err(Error::DimensionMismatch {
                expected: sys.dim,
                found: sys.initial.len(),
            });
        }
        if let PrecisionMode::Sibling(op) = mode {
            if op.dim != sys.dim {
                return Err(Error::DimensionMismatch {
                    expected: sys.dim,
                    found: op.dim,
                });
            }
        }
        let s = tableau.stages();
        let (a, ae) = (tableau.a(), tableau.a_eps());
        let groups = tableau
            .stage_groups()
            .into_iter()
            .map(|range| {
                let inside =
                    |m: &Matrix| range.clone().any(|i| range.clone().any(|j| m[i][j] != 0.0));
                Group {
                    explicit: !inside(a) && !inside(ae),
                    low_precision: inside(ae),
                    range,
                }
            })
            .collect();
        let needs_fe = (0..s)
            .map(|j| tableau.b_eps()[j] != 0.0 || (0..s).any(|i| ae[i][j] != 0.0))
            .collect();
        Ok(Integrator {
            tableau,
            sys,
            mode,
            cfg,
            a_tilde: tableau.a_tilde(),
            groups,
            needs_fe,
        })
    }

    /// Coefficient matrices paired with the Jacobian each one multiplies in the Newton matrix.
    fn newton_terms(&self) -> Vec<(&Matrix, &JacobianFn)> {
        match self.mode {
            PrecisionMode::Sibling(SiblingOperator {
                jacobian: Some(jac),
                ..
            }) => vec![
                (self.tableau.a(), &self.sys.jacobian),
                (self.tableau.a_eps(), jac),
            ],
            _ => vec![(&self.a_tilde, &self.sys.jacobian)],
        }
    }

    pub fn config(&self) -> &IntegrationConfig {
        &self.cfg
    }

    fn eval_f(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sys.dim];
        (self.sys.f)(y, &mut out);
        out
    }

    fn eval_fe(&self, y: &[f64], fy: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.sys.dim];
        self.mode.perturb_into(y, fy, &mut out);
        out
    }

    /// Advances one step from `u`.
    pub fn step(&self, u: &[f64]) -> Result<StepResult> {
        if u.len() != self.sys.dim {
            return Err(Error::DimensionMismatch {
                expected: self.sys.dim,
                found: u.len(),
            });
        }
        let s = self.tableau.stages();
        let dt = self.cfg.dt;
        let (a, ae) = (self.tableau.a(), self.tableau.a_eps());
        let mut ys: Vec<Vec<f64>> = Vec::with_capacity(s);
        let mut fy: Vec<Option<Vec<f64>>> = vec![None; s];
        let mut fe: Vec<Option<Vec<f64>>> = vec![None; s];
        let mut stats = StepStats::default();

        for group in &self.groups {
            // Contribution of already computed stages.
            let known: Vec<Vec<f64>> = group
                .range
                .clone()
                .map(|i| {
                    let mut acc = vec![0.0; u.len()];
                    for j in 0..group.range.start {
                        axpy(&mut acc, a[i][j], fy[j].as_deref());
                        axpy(&mut acc, ae[i][j], fe[j].as_deref());
                    }
                    u.iter().zip(&acc).map(|(x, d)| x + dt * d).collect()
                })
                .collect();

            if group.explicit {
                let i = group.range.start;
                let y = known.into_iter().next().expect("one stage");
                let f = self.eval_f(&y);
                if self.needs_fe[i] {
                    fe[i] = Some(self.eval_fe(&y, &f));
                }
                fy[i] = Some(f);
                ys.push(y);
                continue;
            }

            let guess = ys.last().map_or_else(|| u.to_vec(), Clone::clone);
            let solved = self.solve_group(group, &known, guess, u)?;
            stats.solves.push(solved.stats);
            for (k, i) in group.range.clone().enumerate() {
                ys.push(solved.y[k].clone());
                fy[i] = Some(solved.fy[k].clone());
                if self.needs_fe[i] {
                    fe[i] = Some(match &solved.fe[k] {
                        Some(v) => v.clone(),
                        None => self.eval_fe(&solved.y[k], &solved.fy[k]),
                    });
                }
            }
        }

        let mut incr = vec![0.0; u.len()];
        for j in 0..s {
            axpy(&mut incr, self.tableau.b()[j], fy[j].as_deref());
            axpy(&mut incr, self.tableau.b_eps()[j], fe[j].as_deref());
        }
        let state = u.iter().zip(&incr).map(|(x, d)| x + dt * d).collect();
        Ok(StepResult {
            state,
            stages: ys,
            stats,
        })
    }

    /// Evaluates `F` (and `F^ε` where the group needs it) at every stage of the
    /// group and returns the stage residuals.
    fn residual(&self, group: &Group, known: &[Vec<f64>], y: &[Vec<f64>]) -> Evaluation {
        let dt = self.cfg.dt;
        let (a, ae) = (self.tableau.a(), self.tableau.a_eps());
        let fy: Vec<Vec<f64>> = y.iter().map(|v| self.eval_f(v)).collect();
        let fe: Vec<Option<Vec<f64>>> = group
            .range
            .clone()
            .enumerate()
            .map(|(k, j)| {
                let used = group.range.clone().any(|i| ae[i][j] != 0.0);
                used.then(|| self.eval_fe(&y[k], &fy[k]))
            })
            .collect();
        let mut norm = 0.0f64;
        let mut g = Vec::with_capacity(y.len());
        for (k, i) in group.range.clone().enumerate() {
            let mut acc = vec![0.0; y[k].len()];
            for (l, j) in group.range.clone().enumerate() {
                axpy(&mut acc, a[i][j], Some(&fy[l]));
                axpy(&mut acc, ae[i][j], fe[l].as_deref());
            }
            let r: Vec<f64> = (0..acc.len())
                .map(|c| y[k][c] - known[k][c] - dt * acc[c])
                .collect();
            for v in &r {
                norm = if v.is_nan() {
                    f64::NAN
                } else {
                    norm.max(v.abs())
                };
            }
            g.push(r);
        }
        Evaluation { fy, fe, g, norm }
    }

    fn solve_group(
        &self,
        group: &Group,
        known: &[Vec<f64>],
        guess: Vec<f64>,
        u: &[f64],
    ) -> Result<Solved> {
        let n = group.range.len();
        let d = self.sys.dim;
        let dt = self.cfg.dt;
        let chopped = group.low_precision && self.mode.is_chopped();
        let tol = match self.mode {
            PrecisionMode::SolverTolerance { atol } if group.low_precision => *atol,
            _ => self.cfg.newton_atol + self.cfg.newton_rtol * max_norm(u),
        };

        let mut y: Vec<Vec<f64>> = vec![guess; n];
        let mut eval = self.residual(group, known, &y);
        let mut best = (y.clone(), eval.clone());
        let mut reference = eval.norm;
        let mut since_progress = 0;
        let mut iterations = 0;
        let mut jac = DMatrix::zeros(d, d);

        let finish = |y: Vec<Vec<f64>>, e: Evaluation, iterations: usize, stalled: bool| Solved {
            stats: StageSolve {
                first_stage: group.range.start,
                stages: n,
                iterations,
                residual: e.norm,
                stalled,
            },
            y,
            fy: e.fy,
            fe: e.fe,
        };

        loop {
            if eval.norm <= tol {
                return Ok(finish(y, eval, iterations, false));
            }
            let gave_up = iterations >= self.cfg.newton_max_iter || !eval.norm.is_finite();
            if chopped && (gave_up || since_progress >= self.cfg.stall_window) {
                let (by, be) = best;
                return Ok(finish(by, be, iterations, true));
            }
            if gave_up {
                return Err(Error::NewtonDiverged {
                    stage: group.range.start,
                    iterations,
                    residual: eval.norm,
                });
            }

            // I - dt (A ⊗ J + Aeps ⊗ J^ε), column block j evaluated at y_j.
            let mut m = DMatrix::<f64>::identity(n * d, n * d);
            for (l, j) in group.range.clone().enumerate() {
                for (coeffs, jac_fn) in self.newton_terms() {
                    if group.range.clone().all(|i| coeffs[i][j] == 0.0) {
                        continue;
                    }
                    jac_fn(&y[l], &mut jac);
                    for (k, i) in group.range.clone().enumerate() {
                        let coeff = dt * coeffs[i][j];
                        if coeff == 0.0 {
                            continue;
                        }
                        for r in 0..d {
                            for c in 0..d {
                                m[(k * d + r, l * d + c)] -= coeff * jac[(r, c)];
                            }
                        }
                    }
                }
            }
            let rhs = DVector::from_iterator(n * d, eval.g.iter().flatten().map(|v| -v));
            let delta = m
                .lu()
                .solve(&rhs)
                .ok_or(Error::SingularMatrix(group.range.start))?;
            for (k, yk) in y.iter_mut().enumerate() {
                for (c, v) in yk.iter_mut().enumerate() {
                    *v += delta[k * d + c];
                }
            }
            iterations += 1;
            eval = self.residual(group, known, &y);

            if eval.norm < best.1.norm {
                best = (y.clone(), eval.clone());
            }
            if eval.norm <= 0.5 * reference {
                reference = eval.norm;
                since_progress = 0;
            } else {
                since_progress += 1;
            }
        }
    }

    /// Runs `n_steps` steps from the system's initial state.
    pub fn integrate(&self) -> Result<(Vec<f64>, RunStats)> {
        let mut u = self.sys.initial.clone();
        let mut stats = RunStats::default();
        for _ in 0..self.cfg.n_steps {
            let r = self.step(&u)?;
            stats.absorb(&r.stats);
            u = r.state;
        }
        Ok((u, stats))
    }
}

#[derive(Clone)]
struct Evaluation {
    fy: Vec<Vec<f64>>,
    fe: Vec<Option<Vec<f64>>>,
    g: Vec<Vec<f64>>,
    norm: f64,
}

struct Solved {
    stats: StageSolve,
    y: Vec<Vec<f64>>,
    fy: Vec<Vec<f64>>,
    fe: Vec<Option<Vec<f64>>>,
}

fn axpy(acc: &mut [f64], alpha: f64, x: Option<&[f64]>) {
    if alpha == 0.0 {
        return;
    }
    let x = x.expect("stage derivative evaluated before use");
    for (a, v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One step of `tableau` applied to `sys` from `u`.
pub fn step(
    u: &[f64],
    tableau: &PerturbedTableau,
    sys: &OdeSystem,
    mode: &PrecisionMode,
    cfg: &IntegrationConfig,
) -> Result<(Vec<f64>, StepStats)> {
    let r = Integrator::new(tableau, sys, mode, cfg.clone())?.step(u)?;
    Ok((r.state, r.stats))
}

/// `cfg.n_steps` steps from the system's initial state.
pub fn integrate(
    sys: &OdeSystem,
    tableau: &PerturbedTableau,
    mode: &PrecisionMode,
    cfg: &IntegrationConfig,
) -> Result<(Vec<f64>, RunStats)> {
    Integrator::new(tableau, sys, mode, cfg.clone())?.integrate()
}
