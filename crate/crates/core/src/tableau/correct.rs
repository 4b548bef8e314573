use super::{Matrix, PerturbedTableau, StructureKind};
use crate::error::{Error, Result};

/// Appends `k` explicit full-precision re-evaluations to every implicit solve.
///
/// For lower-triangular `Ã` each implicit stage becomes a group of `k + 1`
/// stages: the original solve followed by `k` fixed-point sweeps
/// `y[q] = u + dt (coupling) + dt Ã_ii F(y[q-1])`. Later stages couple to
/// the last iterate of each group, and the weights move there too.
///
/// For a single fully coupled block the whole stage vector is swept jointly,
/// `Y[q] = u e + dt Ã F(Y[q-1])`, and the weights move to the last sweep.
pub fn correct(base: &PerturbedTableau, k: usize) -> Result<PerturbedTableau> {
    if k == 0 {
        return Ok(base.clone());
    }
    let name = format!("{}+corr{k}", base.name());
    match base.structure().kind {
        StructureKind::Explicit | StructureKind::DiagonallyImplicit => {
            correct_diagonal(base, k, name)
        }
        StructureKind::FullyCoupled => {
            let groups = base.stage_groups();
            if groups.len() != 1 {
                return Err(Error::UnsupportedStructure(format!(
                    "`{}` mixes {} stage groups; only lower-triangular or single fully coupled tableaux can be corrected",
                    base.name(),
                    groups.len()
                )));
            }
            correct_coupled(base, k, name)
        }
    }
}

fn correct_diagonal(base: &PerturbedTableau, k: usize, name: String) -> Result<PerturbedTableau> {
    let s = base.stages();
    let at = base.a_tilde();
    let sizes: Vec<usize> = (0..s)
        .map(|i| if at[i][i] != 0.0 { k + 1 } else { 1 })
        .collect();
    let mut start = Vec::with_capacity(s);
    let mut acc = 0;
    for &n in &sizes {
        start.push(acc);
        acc += n;
    }
    let total = acc;
    let last = |i: usize| start[i] + sizes[i] - 1;

    let mut a = vec![vec![0.0; total]; total];
    let mut a_eps = vec![vec![0.0; total]; total];
    let mut b = vec![0.0; total];
    let mut b_eps = vec![0.0; total];
    for i in 0..s {
        let r0 = start[i];
        for j in 0..i {
            a[r0][last(j)] = base.a()[i][j];
            a_eps[r0][last(j)] = base.a_eps()[i][j];
        }
        a[r0][r0] = base.a()[i][i];
        a_eps[r0][r0] = base.a_eps()[i][i];
        for r in r0 + 1..=last(i) {
            for j in 0..i {
                a[r][last(j)] = at[i][j];
            }
            a[r][r - 1] = at[i][i];
        }
        b[last(i)] = base.b()[i];
        b_eps[last(i)] = base.b_eps()[i];
    }
    PerturbedTableau::new(name, a, a_eps, b, b_eps)
}

fn correct_coupled(base: &PerturbedTableau, k: usize, name: String) -> Result<PerturbedTableau> {
    let s = base.stages();
    let total = (k + 1) * s;
    let at = base.a_tilde();
    let mut a: Matrix = vec![vec![0.0; total]; total];
    let mut a_eps: Matrix = vec![vec![0.0; total]; total];
    for i in 0..s {
        for j in 0..s {
            a[i][j] = base.a()[i][j];
            a_eps[i][j] = base.a_eps()[i][j];
        }
    }
    for q in 1..=k {
        for i in 0..s {
            for j in 0..s {
                a[q * s + i][(q - 1) * s + j] = at[i][j];
            }
        }
    }
    let mut b = vec![0.0; total];
    let mut b_eps = vec![0.0; total];
    b[k * s..].copy_from_slice(base.b());
    b_eps[k * s..].copy_from_slice(base.b_eps());
    PerturbedTableau::new(name, a, a_eps, b, b_eps)
}
