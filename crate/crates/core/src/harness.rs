//! Convergence studies: step-size sweeps, log-log slope fits, and experiment files.

use std::io::Write;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::integrator::{IntegrationConfig, Integrator};
use crate::precision::{PrecisionFlag, PrecisionMode};
use crate::problems::{OdeSystem, ProblemId};
use crate::tableau::{resolve_method, PerturbedTableau};

pub const CSV_HEADER: &str = "method,problem,mode,eps,dt,error,newton_iters,stalls";

/// One `(method, problem, precision, dt)` run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: String,
    pub problem: String,
    pub mode: String,
    pub eps: f64,
    pub dt: f64,
    /// Max-norm error at the final time; infinite when the run failed or blew up.
    pub error: f64,
    pub newton_iters: usize,
    pub stalls: usize,
    pub failure: Option<String>,
}

impl SweepRecord {
    /// Fields in [`CSV_HEADER`] order; floats use the shortest round-trip form.
    pub fn csv_fields(&self) -> [String; 8] {
        [
            self.method.clone(),
            self.problem.clone(),
            self.mode.clone(),
            format!("{:?}", self.eps),
            format!("{:?}", self.dt),
            format!("{:?}", self.error),
            self.newton_iters.to_string(),
            self.stalls.to_string(),
        ]
    }
}

/// `dt = 2^-k` for `k = k_min..=k_max`, largest step first.
pub fn dt_grid(k_min: u32, k_max: u32) -> Vec<f64> {
    (k_min..=k_max).map(|k| (-(k as f64)).exp2()).collect()
}

fn run_one(
    tableau: &PerturbedTableau,
    sys: &OdeSystem,
    mode: &PrecisionMode,
    dt: f64,
) -> SweepRecord {
    let mut rec = SweepRecord {
        method: tableau.name().to_string(),
        problem: sys.name.clone(),
        mode: mode.label(),
        eps: mode.epsilon(),
        dt,
        error: f64::INFINITY,
        newton_iters: 0,
        stalls: 0,
        failure: None,
    };
    let outcome = IntegrationConfig::for_final_time(sys.t_final, dt)
        .and_then(|cfg| Integrator::new(tableau, sys, mode, cfg)?.integrate());
    match outcome {
        Ok((u, stats)) => {
            let err = u.iter().zip(sys.reference()).fold(0.0f64, |m, (a, b)| {
                if (a - b).is_nan() {
                    f64::NAN
                } else {
                    m.max((a - b).abs())
                }
            });
            rec.error = if err.is_finite() { err } else { f64::INFINITY };
            rec.newton_iters = stats.newton_iterations;
            rec.stalls = stats.stalls;
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec
}

/// Integrates to `t_final` once per step size. Points run in parallel; the
/// output follows the order of `dts`.
pub fn sweep(
    tableau: &PerturbedTableau,
    sys: &OdeSystem,
    mode: &PrecisionMode,
    dts: &[f64],
) -> Vec<SweepRecord> {
    dts.par_iter()
        .map(|&dt| run_one(tableau, sys, mode, dt))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtWindow {
    pub min: f64,
    pub max: f64,
}

impl DtWindow {
    /// Step sizes `2^-k_max ..= 2^-k_min`.
    pub fn from_exponents(k_min: u32, k_max: u32) -> Self {
        DtWindow {
            min: (-(k_max as f64)).exp2(),
            max: (-(k_min as f64)).exp2(),
        }
    }

    fn contains(&self, dt: f64) -> bool {
        let slack = 1e-9;
        dt >= self.min * (1.0 - slack) && dt <= self.max * (1.0 + slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub window: DtWindow,
    pub slope: f64,
    /// Root-mean-square residual of the fit in log2 units.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares slope of `log2(error)` against `log2(dt)` over the records in `window`.
pub fn fit_slope(records: &[SweepRecord], window: DtWindow) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| window.contains(r.dt) && r.error > 0.0 && r.error.is_finite())
        .map(|r| (r.dt.log2(), r.error.log2()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "slope window has a single distinct dt".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(SlopeFit {
        window,
        slope,
        residual: (ss / n).sqrt(),
        points: pts.len(),
    })
}

/// Two-term error model `C1 dt^p + C2 ε dt^m` with nonnegative constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModelFit {
    pub c1: f64,
    pub c2: f64,
    /// Root-mean-square of `model / error - 1`.
    pub relative_residual: f64,
}

/// Fits the error model by nonnegative least squares on relative errors.
pub fn fit_error_model(records: &[SweepRecord], p: u32, m: u32, eps: f64) -> Result<ErrorModelFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.error > 0.0 && r.error.is_finite())
        .map(|r| {
            (
                r.dt.powi(p as i32) / r.error,
                eps * r.dt.powi(m as i32) / r.error,
            )
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientPoints(pts.len()));
    }
    let rms = |c1: f64, c2: f64| {
        let s: f64 = pts
            .iter()
            .map(|(x, z)| (c1 * x + c2 * z - 1.0).powi(2))
            .sum();
        (s / pts.len() as f64).sqrt()
    };
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let szz: f64 = pts.iter().map(|p| p.1 * p.1).sum();
    let sxz: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sz: f64 = pts.iter().map(|p| p.1).sum();

    let mut candidates = vec![(sx / sxx, 0.0)];
    if szz > 0.0 {
        candidates.push((0.0, sz / szz));
        let det = sxx * szz - sxz * sxz;
        if det.abs() > 1e-14 * sxx * szz {
            let c1 = (sx * szz - sz * sxz) / det;
            let c2 = (sxx * sz - sxz * sx) / det;
            if c1 >= 0.0 && c2 >= 0.0 {
                candidates.push((c1, c2));
            }
        }
    }
    let (c1, c2) = candidates
        .into_iter()
        .filter(|&(a, b)| a >= 0.0 && b >= 0.0)
        .min_by(|a, b| rms(a.0, a.1).total_cmp(&rms(b.0, b.1)))
        .unwrap_or((0.0, 0.0));
    Ok(ErrorModelFit {
        c1,
        c2,
        relative_residual: rms(c1, c2),
    })
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()
}

fn default_tol() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    /// Inclusive exponent range `[k_min, k_max]`, `dt = 2^-k`.
    pub k_range: [u32; 2],
    pub expected_sigma: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Only require `sigma <= expected_sigma + tol`.
    #[serde(default)]
    pub upper_only: bool,
}

impl WindowSpec {
    pub fn accepts(&self, sigma: f64) -> bool {
        if self.upper_only {
            sigma <= self.expected_sigma + self.tol
        } else {
            (sigma - self.expected_sigma).abs() <= self.tol
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEntry {
    #[serde(default)]
    pub label: Option<String>,
    pub method: String,
    pub problem: String,
    pub precision: String,
    /// Inclusive exponent range `[k_min, k_max]`, `dt = 2^-k`.
    pub dt_exponents: [u32; 2],
    #[serde(default)]
    pub windows: Vec<WindowSpec>,
}

impl ExperimentEntry {
    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{} {} {}", self.method, self.problem, self.precision))
    }
}

pub fn parse_experiment(text: &str) -> Result<Vec<ExperimentEntry>> {
    let entries: Vec<ExperimentEntry> =
        serde_json::from_str(text).map_err(|e| Error::parse("$", e.to_string()))?;
    for (i, e) in entries.iter().enumerate() {
        let [lo, hi] = e.dt_exponents;
        if lo > hi {
            return Err(Error::parse(
                format!("[{i}].dt_exponents"),
                "k_min exceeds k_max",
            ));
        }
        for (w, win) in e.windows.iter().enumerate() {
            let path = format!("[{i}].windows[{w}]");
            let [a, b] = win.k_range;
            if a > b || a < lo || b > hi {
                return Err(Error::parse(
                    format!("{path}.k_range"),
                    "must lie inside dt_exponents",
                ));
            }
            if b - a < 2 {
                return Err(Error::parse(
                    format!("{path}.k_range"),
                    "needs at least 3 points",
                ));
            }
            if win.tol.is_nan() || win.tol <= 0.0 {
                return Err(Error::parse(format!("{path}.tol"), "must be positive"));
            }
        }
        e.method
            .parse::<MethodCheck>()
            .map_err(|err| Error::parse(format!("[{i}].method"), err.to_string()))?;
        e.problem
            .parse::<ProblemId>()
            .map_err(|err| Error::parse(format!("[{i}].problem"), err.to_string()))?;
        e.precision
            .parse::<PrecisionFlag>()
            .map_err(|err| Error::parse(format!("[{i}].precision"), err.to_string()))?;
    }
    Ok(entries)
}

/// Validates a method selector without keeping the tableau.
struct MethodCheck;

impl std::str::FromStr for MethodCheck {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        resolve_method(s).map(|_| MethodCheck)
    }
}

/// Result of checking one slope window.
#[derive(Debug, Clone)]
pub struct WindowCheck {
    pub entry: usize,
    pub label: String,
    pub spec: WindowSpec,
    pub fit: Option<SlopeFit>,
    pub pass: bool,
}

impl WindowCheck {
    pub fn summary(&self) -> String {
        let [a, b] = self.spec.k_range;
        let got = self
            .fit
            .map_or_else(|| "n/a".to_string(), |f| format!("{:.3}", f.slope));
        let expected = if self.spec.upper_only {
            format!("<= {}", self.spec.expected_sigma + self.spec.tol)
        } else {
            format!("{}±{}", self.spec.expected_sigma, self.spec.tol)
        };
        format!(
            "{} {} k={a}..{b} sigma={got} expected {expected}",
            if self.pass { "PASS" } else { "FAIL" },
            self.label,
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<SweepRecord>,
    pub checks: Vec<WindowCheck>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn run_experiment(entries: &[ExperimentEntry]) -> Result<ExperimentOutcome> {
    let mut records = Vec::new();
    let mut checks = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let tableau = resolve_method(&e.method)?;
        let sys = e.problem.parse::<ProblemId>()?.build()?;
        let mode = e.precision.parse::<PrecisionFlag>()?.resolve(&sys)?;
        let recs = sweep(
            &tableau,
            &sys,
            &mode,
            &dt_grid(e.dt_exponents[0], e.dt_exponents[1]),
        );
        for w in &e.windows {
            let fit = fit_slope(&recs, DtWindow::from_exponents(w.k_range[0], w.k_range[1])).ok();
            let pass = fit.is_some_and(|f| w.accepts(f.slope));
            checks.push(WindowCheck {
                entry: i,
                label: e.label(),
                spec: w.clone(),
                fit,
                pass,
            });
        }
        records.extend(recs);
    }
    Ok(ExperimentOutcome { records, checks })
}

const BUNDLED: [(&str, &str); 6] = [
    ("fig1", include_str!("../experiments/fig1.json")),
    ("fig2", include_str!("../experiments/fig2.json")),
    ("fig3", include_str!("../experiments/fig3.json")),
    ("fig4", include_str!("../experiments/fig4.json")),
    ("fig5", include_str!("../experiments/fig5.json")),
    ("fig6", include_str!("../experiments/fig6.json")),
];

/// Experiment files shipped with the crate, by name.
pub fn bundled_experiment(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}
