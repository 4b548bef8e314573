use std::path::Path;

use super::{correct, load_file, PerturbedTableau};
use crate::error::{Error, Result};

const NAMES: [&str; 11] = [
    "midpoint_full",
    "midpoint_lp",
    "midpoint_mp",
    "sdirk2_full",
    "sdirk2_lp",
    "sdirk2_mp",
    "lobatto2_full",
    "lobatto2_mp",
    "m4s3pA",
    "m4s3pB",
    "m4s3pC",
];

pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

/// Diagonal coefficient of the two-stage third-order SDIRK method.
fn sdirk_gamma() -> f64 {
    (3f64.sqrt() + 3.0) / 6.0
}

/// Expands strictly-lower-triangular entries `(i, j, value)` (1-based) into a matrix.
fn sparse(s: usize, entries: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; s]; s];
    for &(i, j, v) in entries {
        m[i - 1][j - 1] = v;
    }
    m
}

fn zeros(s: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; s]; s]
}

/// Looks up a built-in method.
///
/// Naming: `_full` puts every coefficient on `F`, `_lp` moves the implicit
/// work and the weights onto `F^ε`, and `_mp` solves the implicit stages with
/// `F^ε` but keeps every explicit evaluation on `F`.
#[allow(clippy::excessive_precision)] // coefficients kept exactly as published
pub fn builtin(name: &str) -> Result<PerturbedTableau> {
    let g = sdirk_gamma();
    let sdirk = vec![vec![g, 0.0], vec![1.0 - 2.0 * g, g]];
    let lobatto = vec![vec![0.5, -0.5], vec![0.5, 0.5]];
    match name {
        // One-stage form: y = u + dt/2 F(y), u+ = u + dt F(y).
        "midpoint_full" => PerturbedTableau::full_precision(name, vec![vec![0.5]], vec![1.0]),
        "midpoint_lp" => {
            PerturbedTableau::new(name, zeros(1), vec![vec![0.5]], vec![0.0], vec![1.0])
        }
        "midpoint_mp" => {
            PerturbedTableau::new(name, zeros(1), vec![vec![0.5]], vec![1.0], vec![0.0])
        }

        "sdirk2_full" => PerturbedTableau::full_precision(name, sdirk, vec![0.5, 0.5]),
        // The first weight stays on F.
        "sdirk2_lp" => PerturbedTableau::new(name, zeros(2), sdirk, vec![0.5, 0.0], vec![0.0, 0.5]),
        "sdirk2_mp" => PerturbedTableau::new(
            name,
            vec![vec![0.0, 0.0], vec![1.0 - 2.0 * g, 0.0]],
            vec![vec![g, 0.0], vec![0.0, g]],
            vec![0.5, 0.5],
            vec![0.0; 2],
        ),

        "lobatto2_full" => PerturbedTableau::full_precision(name, lobatto, vec![0.5, 0.5]),
        "lobatto2_mp" => {
            PerturbedTableau::new(name, zeros(2), lobatto, vec![0.5, 0.5], vec![0.0; 2])
        }

        "m4s3pA" => PerturbedTableau::new(
            name,
            sparse(
                4,
                &[
                    (2, 1, 0.211324865405187),
                    (3, 1, 0.709495523817170),
                    (3, 2, -0.865314250619423),
                    (4, 1, 0.705123240545107),
                    (4, 2, 0.943370088535775),
                    (4, 3, -0.859818194486069),
                ],
            ),
            sparse(
                4,
                &[
                    (1, 1, 0.788675134594813),
                    (3, 1, 0.051944240459852),
                    (3, 3, 0.788675134594813),
                ],
            ),
            vec![0.0, 0.5, 0.0, 0.5],
            vec![0.0; 4],
        ),

        "m4s3pB" => PerturbedTableau::new(
            name,
            sparse(
                4,
                &[
                    (2, 1, 2.543016042796356),
                    (3, 1, 2.451484396921318),
                    (3, 2, 0.024108961241221),
                    (4, 1, 2.073861819468268),
                    (4, 2, 2.367724727682735),
                    (4, 3, 1.711868223075524),
                ],
            ),
            sparse(
                4,
                &[
                    (1, 1, 0.5),
                    (2, 2, 0.5),
                    (3, 3, 0.5),
                    (4, 4, 0.5),
                    (2, 1, -2.376349376129689),
                    (3, 1, -2.951484396921318),
                    (3, 2, 0.475891038758779),
                    (4, 1, -0.573861819468268),
                    (4, 2, -3.867724727682735),
                    (4, 3, -1.211868223075524),
                ],
            ),
            vec![1.5, -1.5, 0.5, 0.5],
            vec![0.0; 4],
        ),

        "m4s3pC" => PerturbedTableau::new(
            name,
            sparse(
                4,
                &[
                    (2, 1, -0.050470366527530),
                    (3, 1, 0.368613367355336),
                    (3, 2, 0.273504374252976),
                    (4, 1, 1.803794668975043),
                    (4, 2, 0.097485042980759),
                    (4, 3, -1.895660952342050),
                ],
            ),
            sparse(
                4,
                &[
                    (1, 1, 0.511243008730995),
                    (2, 1, -1.999347282862640),
                    (2, 2, 1.957161067302390),
                    (3, 1, 0.443312893511937),
                    (3, 2, -0.573131033672219),
                    (3, 3, 0.128283796414019),
                    (4, 1, -2.0),
                    (4, 2, -0.160330320741428),
                    (4, 3, 0.579597314161362),
                    (4, 4, 1.484688928981990),
                ],
            ),
            vec![
                0.002837446974069,
                0.336264433650450,
                0.806376720267787,
                -0.145478600892306,
            ],
            vec![0.0; 4],
        ),

        _ => Err(Error::NotFound(name.to_string())),
    }
}

/// Resolves a method selector: a built-in name, a built-in name with
/// correction steps (`sdirk2_mp+corr2`), or a path to a tableau file.
pub fn resolve_method(selector: &str) -> Result<PerturbedTableau> {
    if let Some((base, k)) = selector.rsplit_once("+corr") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::parse("method", format!("`{selector}`: bad correction count")))?;
        let base = resolve_method(base)?;
        return correct(&base, k);
    }
    match builtin(selector) {
        Err(Error::NotFound(_)) if Path::new(selector).is_file() => load_file(selector),
        other => other,
    }
}
