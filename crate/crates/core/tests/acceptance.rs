//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion, and exits nonzero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mprk::conditions::{report, ConditionGroup, DEFAULT_TOL};
use mprk::harness::{dt_grid, fit_error_model, fit_slope, sweep, DtWindow, SweepRecord};
use mprk::integrator::{integrate, IntegrationConfig, Integrator};
use mprk::precision::{chop, ChopSpec, PrecisionFlag, PrecisionMode};
use mprk::problems::{dahlquist, ProblemId};
use mprk::tableau::{builtin, resolve_method};

/// Collects individual checks for one criterion.
#[derive(Default)]
struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }
}

type Key = (&'static str, &'static str, &'static str);

/// Sweep results per `(method, problem, precision)`, over the default grids.
struct Sweeps {
    runs: HashMap<Key, Vec<SweepRecord>>,
}

const VDP_K: (u32, u32) = (4, 12);
const DIFF_K: (u32, u32) = (4, 10);

const RUNS: [Key; 24] = [
    ("midpoint_full", "vdp", "full"),
    ("midpoint_lp", "vdp", "half"),
    ("midpoint_mp", "vdp", "half"),
    ("midpoint_mp", "vdp", "single"),
    ("midpoint_mp+corr1", "vdp", "half"),
    ("midpoint_mp+corr1", "vdp", "zero"),
    ("sdirk2_full", "vdp", "full"),
    ("sdirk2_mp", "vdp", "half"),
    ("sdirk2_mp+corr1", "vdp", "half"),
    ("sdirk2_mp+corr2", "vdp", "half"),
    ("lobatto2_full", "vdp", "full"),
    ("lobatto2_mp", "vdp", "half"),
    ("lobatto2_mp+corr1", "vdp", "half"),
    ("m4s3pA", "vdp", "full"),
    ("m4s3pA", "vdp", "half"),
    ("m4s3pA", "vdp", "single"),
    ("m4s3pB", "vdp", "full"),
    ("m4s3pB", "vdp", "half"),
    ("m4s3pB", "vdp", "single"),
    ("m4s3pC", "diffusion:32", "sibling"),
    ("m4s3pC", "diffusion:32", "half"),
    ("m4s3pA", "diffusion:32", "half"),
    ("m4s3pC", "diffusion:32", "full"),
    ("m4s3pA", "diffusion:32", "full"),
];

impl Sweeps {
    fn run() -> Self {
        let runs = RUNS
            .par_iter()
            .map(|&key @ (method, problem, precision)| {
                let sys = problem.parse::<ProblemId>().unwrap().build().unwrap();
                let t = resolve_method(method).unwrap();
                let mode = precision
                    .parse::<PrecisionFlag>()
                    .unwrap()
                    .resolve(&sys)
                    .unwrap();
                let (lo, hi) = Self::k_range(key);
                (key, sweep(&t, &sys, &mode, &dt_grid(lo, hi)))
            })
            .collect();
        Sweeps { runs }
    }

    fn get(&self, key: Key) -> &[SweepRecord] {
        &self.runs[&key]
    }

    fn k_range(key: Key) -> (u32, u32) {
        if key.1 == "vdp" {
            VDP_K
        } else {
            DIFF_K
        }
    }

    fn slope(&self, key: Key, lo: u32, hi: u32) -> f64 {
        fit_slope(self.get(key), DtWindow::from_exponents(lo, hi)).map_or(f64::NAN, |f| f.slope)
    }

    fn whole(&self, key: Key) -> f64 {
        let (lo, hi) = Self::k_range(key);
        self.slope(key, lo, hi)
    }

    /// Largest four step sizes.
    fn coarse(&self, key: Key) -> f64 {
        let (lo, _) = Self::k_range(key);
        self.slope(key, lo, lo + 3)
    }

    /// Smallest four step sizes.
    fn fine(&self, key: Key) -> f64 {
        let (_, hi) = Self::k_range(key);
        self.slope(key, hi - 3, hi)
    }

    /// `error(a) / error(b)` at every step size.
    fn ratios(&self, a: Key, b: Key) -> Vec<f64> {
        self.get(a)
            .iter()
            .zip(self.get(b))
            .map(|(x, y)| x.error / y.error)
            .collect()
    }
}

fn slope_check(out: &mut Outcome, label: &str, sigma: f64, expected: f64, tol: f64) {
    out.check(
        (sigma - expected).abs() <= tol,
        format!("{label}: sigma {sigma:.3} (want {expected}±{tol})"),
    );
}

fn within_factor(out: &mut Outcome, label: &str, ratios: &[f64], factor: f64) {
    let worst = ratios.iter().fold(1.0f64, |m, r| m.max(r.max(1.0 / r)));
    out.check(
        worst.is_finite() && worst <= factor,
        format!("{label}: worst error ratio to double precision {worst:.2} (want <= {factor})"),
    );
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::default();
    let cases: [(&str, u32, u32); 10] = [
        ("midpoint_full", 2, 3),
        ("midpoint_lp", 2, 0),
        ("midpoint_mp", 2, 1),
        ("midpoint_mp+corr1", 2, 2),
        ("sdirk2_mp", 3, 1),
        ("sdirk2_mp+corr2", 3, 3),
        ("lobatto2_mp", 2, 1),
        ("lobatto2_mp+corr1", 2, 3),
        ("m4s3pA", 3, 3),
        ("m4s3pB", 3, 2),
    ];
    for (name, p, m) in cases {
        let r = report(&resolve_method(name).unwrap(), DEFAULT_TOL);
        out.check(
            r.p == p && r.m_strict == m,
            format!(
                "{name}: (p, m_strict) = ({}, {}) want ({p}, {m})",
                r.p, r.m_strict
            ),
        );
    }
    let full = report(&builtin("midpoint_full").unwrap(), DEFAULT_TOL);
    let all_zero = full
        .entries
        .iter()
        .filter(|e| e.group != ConditionGroup::Consistency)
        .all(|e| e.residual == 0.0);
    out.check(
        all_zero,
        "midpoint_full: every perturbation residual is exactly zero",
    );
    let c = report(&builtin("m4s3pC").unwrap(), DEFAULT_TOL);
    out.check(
        c.m_simplified == 3 && c.m_strict == 2,
        format!(
            "m4s3pC: m_simplified {} m_strict {} want 3, 2",
            c.m_simplified, c.m_strict
        ),
    );
    out
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let specs = [ChopSpec::ZERO, ChopSpec::HALF, ChopSpec::SINGLE];
    let mut bad = [0usize; 5];
    let mut overflows = 0;
    let mut prev: Option<f64> = None;
    for i in 0..1_000_000 {
        let x = if i % 2 == 0 {
            common::random_double(&mut rng)
        } else {
            rand::Rng::gen_range(&mut rng, -4.0..4.0)
        };
        let spec = specs[i % 3];
        let c = chop(x, spec);
        // Results past f64::MAX are not representable; those must be exactly the infinities.
        if x.abs() >= common::overflow_threshold(spec.bits()) {
            overflows += 1;
            bad[0] += (c != x.signum() * f64::INFINITY) as usize;
        } else {
            bad[0] += (!c.is_finite() || (c - x).abs() > spec.unit_roundoff() * x.abs()) as usize;
        }
        bad[1] += (chop(c, spec).to_bits() != c.to_bits()) as usize;
        bad[2] += (chop(-x, spec) != -c) as usize;
        bad[3] += (c.to_bits() != common::chop_oracle(x, spec.bits()).to_bits()) as usize;
        if let Some(p) = prev {
            let (lo, hi) = if p <= x { (p, x) } else { (x, p) };
            bad[4] += (chop(lo, spec) > chop(hi, spec)) as usize;
            let up = x.next_up();
            if up.is_finite() {
                bad[4] += (chop(x, spec) > chop(up, spec)) as usize;
            }
        }
        prev = Some(x);
    }
    for (n, what) in bad.iter().zip([
        "relative error bound",
        "idempotence",
        "oddness",
        "bit oracle",
        "monotonicity",
    ]) {
        out.check(*n == 0, format!("{what}: {n} violations in 10^6 samples"));
    }
    out.notes.push(format!(
        "{overflows} samples round past f64::MAX to infinity"
    ));
    out.check(
        ChopSpec::HALF.unit_roundoff() == 2f64.powi(-11),
        "half unit roundoff is 2^-11",
    );
    out.check(
        ChopSpec::SINGLE.unit_roundoff() == 2f64.powi(-24),
        "single unit roundoff is 2^-24",
    );
    out
}

fn criterion_3() -> Outcome {
    let mut out = Outcome::default();
    let sys = dahlquist(-1.0).unwrap();
    let mid = builtin("midpoint_full").unwrap();
    for dt in [0.5, 0.1, 1e-2, 1e-3] {
        let integ = Integrator::new(
            &mid,
            &sys,
            &PrecisionMode::Full,
            IntegrationConfig::new(dt, 1),
        )
        .unwrap();
        let mut u = sys.initial.clone();
        let r = (1.0 - dt / 2.0) / (1.0 + dt / 2.0);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let next = integ.step(&u).unwrap().state;
            worst = worst.max((next[0] - r * u[0]).abs());
            u = next;
        }
        out.check(
            worst <= 1e-13,
            format!("midpoint per-step factor at dt={dt}: deviation {worst:e}"),
        );
    }
    let stiff = dahlquist(-1e6).unwrap();
    let (u, _) = integrate(
        &stiff,
        &builtin("lobatto2_full").unwrap(),
        &PrecisionMode::Full,
        &IntegrationConfig::new(1.0, 1),
    )
    .unwrap();
    out.check(
        u[0].abs() < 1e-3,
        format!(
            "Lobatto IIIC amplification at dt*lambda=-1e6: {:e}",
            u[0].abs()
        ),
    );
    out
}

const MID_FULL: Key = ("midpoint_full", "vdp", "full");

fn criterion_4(s: &Sweeps) -> Outcome {
    let mut out = Outcome::default();
    let lp = s.fine(("midpoint_lp", "vdp", "half"));
    out.check(
        lp < 0.3,
        format!("midpoint_lp half fine: sigma {lp:.3} (want < 0.3)"),
    );
    let mp = ("midpoint_mp", "vdp", "half");
    slope_check(&mut out, "midpoint_mp half coarse", s.coarse(mp), 2.0, 0.3);
    slope_check(&mut out, "midpoint_mp half fine", s.fine(mp), 1.0, 0.3);
    slope_check(
        &mut out,
        "midpoint_mp single",
        s.whole(("midpoint_mp", "vdp", "single")),
        2.0,
        0.3,
    );
    slope_check(&mut out, "midpoint_full", s.whole(MID_FULL), 2.0, 0.3);
    out
}

fn criterion_5(s: &Sweeps) -> Outcome {
    let mut out = Outcome::default();
    let half = ("midpoint_mp+corr1", "vdp", "half");
    slope_check(&mut out, "corrected midpoint half", s.whole(half), 2.0, 0.3);
    within_factor(
        &mut out,
        "corrected midpoint half",
        &s.ratios(half, MID_FULL),
        5.0,
    );
    slope_check(
        &mut out,
        "corrected midpoint zero",
        s.whole(("midpoint_mp+corr1", "vdp", "zero")),
        2.0,
        0.4,
    );
    out
}

fn criterion_6(s: &Sweeps) -> Outcome {
    let mut out = Outcome::default();
    slope_check(
        &mut out,
        "sdirk2_mp half fine",
        s.fine(("sdirk2_mp", "vdp", "half")),
        1.0,
        0.3,
    );
    slope_check(
        &mut out,
        "sdirk2_mp+corr1 half fine",
        s.fine(("sdirk2_mp+corr1", "vdp", "half")),
        2.0,
        0.3,
    );
    let c2 = ("sdirk2_mp+corr2", "vdp", "half");
    slope_check(&mut out, "sdirk2_mp+corr2 half", s.whole(c2), 3.0, 0.3);
    within_factor(
        &mut out,
        "sdirk2_mp+corr2 half",
        &s.ratios(c2, ("sdirk2_full", "vdp", "full")),
        5.0,
    );
    out
}

fn criterion_7(s: &Sweeps) -> Outcome {
    let mut out = Outcome::default();
    let corr = ("lobatto2_mp+corr1", "vdp", "half");
    slope_check(&mut out, "lobatto2_mp+corr1 half", s.whole(corr), 2.0, 0.3);
    within_factor(
        &mut out,
        "lobatto2_mp+corr1 half",
        &s.ratios(corr, ("lobatto2_full", "vdp", "full")),
        5.0,
    );
    slope_check(
        &mut out,
        "lobatto2_mp half fine",
        s.fine(("lobatto2_mp", "vdp", "half")),
        1.0,
        0.3,
    );
    out
}

fn criterion_8(s: &Sweeps) -> Outcome {
    let mut out = Outcome::default();
    let a_half = ("m4s3pA", "vdp", "half");
    let b_half = ("m4s3pB", "vdp", "half");
    slope_check(&mut out, "4s3pA half fine", s.fine(a_half), 3.0, 0.4);
    let a_ratio = *s.ratios(a_half, ("m4s3pA", "vdp", "full")).last().unwrap();
    out.check(
        (0.2..=5.0).contains(&a_ratio),
        format!("4s3pA half vs double at finest dt: ratio {a_ratio:.2} (want within factor 5)"),
    );
    slope_check(&mut out, "4s3pB half fine", s.fine(b_half), 2.0, 0.4);
    let b_ratio = *s.ratios(b_half, ("m4s3pB", "vdp", "full")).last().unwrap();
    out.check(
        b_ratio > 5.0,
        format!("4s3pB half vs double at finest dt: ratio {b_ratio:.2} (want > 5, no match)"),
    );
    slope_check(
        &mut out,
        "4s3pA single",
        s.whole(("m4s3pA", "vdp", "single")),
        3.0,
        0.4,
    );
    slope_check(
        &mut out,
        "4s3pB single",
        s.whole(("m4s3pB", "vdp", "single")),
        3.0,
        0.4,
    );
    out
}

fn criterion_9(s: &Sweeps) -> Outcome {
    let mut out = Outcome::default();
    slope_check(
        &mut out,
        "4s3pC sibling",
        s.whole(("m4s3pC", "diffusion:32", "sibling")),
        3.0,
        0.4,
    );
    slope_check(
        &mut out,
        "4s3pC half fine",
        s.fine(("m4s3pC", "diffusion:32", "half")),
        2.0,
        0.4,
    );
    slope_check(
        &mut out,
        "4s3pA half",
        s.whole(("m4s3pA", "diffusion:32", "half")),
        3.0,
        0.4,
    );
    out
}

fn criterion_10(s: &Sweeps) -> Outcome {
    let mut out = Outcome::default();
    for key @ (method, problem, precision) in RUNS.into_iter().filter(|k| k.1 == "vdp") {
        let r = report(&resolve_method(method).unwrap(), DEFAULT_TOL);
        let sys = problem.parse::<ProblemId>().unwrap().build().unwrap();
        let eps = precision
            .parse::<PrecisionFlag>()
            .unwrap()
            .resolve(&sys)
            .unwrap()
            .epsilon();
        match fit_error_model(s.get(key), r.p, r.m_strict, eps) {
            Ok(fit) => out.check(
                fit.relative_residual < 0.5,
                format!(
                    "{method} {precision} (p={}, m={}): C1={:.3e} C2={:.3e} relative residual {:.1}%",
                    r.p,
                    r.m_strict,
                    fit.c1,
                    fit.c2,
                    100.0 * fit.relative_residual
                ),
            ),
            Err(e) => out.check(false, format!("{method} {precision}: {e}")),
        }
    }
    out
}

fn main() -> ExitCode {
    let sweeps = Sweeps::run();
    let results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4(&sweeps)),
        (5, criterion_5(&sweeps)),
        (6, criterion_6(&sweeps)),
        (7, criterion_7(&sweeps)),
        (8, criterion_8(&sweeps)),
        (9, criterion_9(&sweeps)),
        (10, criterion_10(&sweeps)),
    ];
    let verbose = std::env::var_os("ACCEPTANCE_VERBOSE").is_some();
    let mut failed = 0;
    for (n, o) in &results {
        let pass = o.failures.is_empty();
        failed += usize::from(!pass);
        println!("criterion {n:>2}: {}", if pass { "PASS" } else { "FAIL" });
        for f in &o.failures {
            println!("    FAIL {f}");
        }
        if verbose || !pass {
            for note in &o.notes {
                println!("    ok   {note}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
