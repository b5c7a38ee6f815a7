//! Nonnegativity-constrained least squares.
//!
//! [`nnls`] is a Lawson-Hanson active-set solver working on the normal
//! equations. [`nnls_batch`] solves many right-hand sides against the same
//! design matrix with shared passive-set bookkeeping: columns whose passive
//! sets coincide are solved with a single factorization (the combinatorial
//! grouping of van Benthem and Keenan). Batched columns agree with
//! independent single solves to solver tolerance; the grouping is purely an
//! optimization.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::linalg::{solve_spd, to_dmatrix};
use crate::error::{ChemdimError, Result};

/// KKT tolerance scaled to the problem: 1e-10 times the largest magnitude
/// entry of EᵀE.
fn kkt_tol(ata: &Array2<f64>) -> f64 {
    let scale = ata.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-10 * scale.max(f64::MIN_POSITIVE)
}

/// Solve `min ‖E x − y‖₂²` subject to `x ≥ 0`.
pub fn nnls(e: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let (p, k) = (e.nrows(), e.ncols());
    if k == 0 || p == 0 {
        return Err(ChemdimError::validation("nnls: empty design matrix"));
    }
    if y.len() != p {
        return Err(ChemdimError::validation(format!(
            "nnls: E has {p} rows but y has {} entries",
            y.len()
        )));
    }
    if e.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(ChemdimError::validation("nnls: non-finite input"));
    }

    let ata = e.t().dot(&e);
    let aty = e.t().dot(&y);
    Ok(nnls_gram(&ata, &aty))
}

/// Lawson-Hanson on precomputed normal equations `EᵀE x = Eᵀy`.
pub(crate) fn nnls_gram(ata: &Array2<f64>, aty: &Array1<f64>) -> Array1<f64> {
    let k = ata.nrows();
    let tol = kkt_tol(ata);
    let mut x = Array1::<f64>::zeros(k);
    let mut passive = vec![false; k];
    let max_outer = 10 * k + 10;

    for _ in 0..max_outer {
        // gradient of ½‖Ex−y‖² is A x − b; w is its negation
        let w = aty - &ata.dot(&x);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..k {
            if !passive[j] && w[j] > tol {
                if best.map_or(true, |(_, bw)| w[j] > bw) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((enter, _)) = best else { break };
        passive[enter] = true;

        // inner loop: restore feasibility on the passive set
        let max_inner = 10 * k + 10;
        for _ in 0..max_inner {
            let members: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let z = solve_passive(ata, aty, &members);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (zi, &i) in z.iter().zip(&members) {
                    x[i] = *zi;
                }
                break;
            }
            // step toward z until the first variable hits zero
            let mut alpha = f64::INFINITY;
            for (zi, &i) in z.iter().zip(&members) {
                if *zi <= 0.0 {
                    let denom = x[i] - zi;
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                break;
            }
            for (zi, &i) in z.iter().zip(&members) {
                x[i] += alpha * (zi - x[i]);
            }
            for i in &members {
                if x[*i] <= 0.0 {
                    x[*i] = 0.0;
                    passive[*i] = false;
                }
            }
        }
    }
    x
}

/// Unconstrained least squares restricted to `members`; other coordinates
/// are implicitly zero.
fn solve_passive(ata: &Array2<f64>, aty: &Array1<f64>, members: &[usize]) -> Vec<f64> {
    let m = members.len();
    if m == 0 {
        return Vec::new();
    }
    let mut a = DMatrix::zeros(m, m);
    let mut b = DMatrix::zeros(m, 1);
    for (r, &i) in members.iter().enumerate() {
        b[(r, 0)] = aty[i];
        for (c, &j) in members.iter().enumerate() {
            a[(r, c)] = ata[[i, j]];
        }
    }
    let solved = solve_spd(&a, &b).unwrap_or_else(|_| DMatrix::zeros(m, 1));
    (0..m).map(|r| solved[(r, 0)]).collect()
}

/// Solve `min ‖E X − Y‖_F²` subject to `X ≥ 0`, column by column.
pub fn nnls_batch(e: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (p, k) = (e.nrows(), e.ncols());
    if k == 0 || p == 0 {
        return Err(ChemdimError::validation("nnls_batch: empty design matrix"));
    }
    if y.nrows() != p {
        return Err(ChemdimError::validation(format!(
            "nnls_batch: E has {p} rows but Y has {}",
            y.nrows()
        )));
    }
    if e.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(ChemdimError::validation("nnls_batch: non-finite input"));
    }
    let ata = e.t().dot(&e);
    let atb = e.t().dot(&y);
    Ok(nnls_batch_gram(&ata, &atb))
}

/// Fast combinatorial NNLS on precomputed normal equations.
///
/// `ata` is k-by-k, `atb` is k-by-n; returns the k-by-n nonnegative solution.
pub(crate) fn nnls_batch_gram(ata: &Array2<f64>, atb: &Array2<f64>) -> Array2<f64> {
    let k = ata.nrows();
    let n = atb.ncols();
    let tol = kkt_tol(ata);

    // Unconstrained start: clip negatives, mark clipped columns for work.
    let mut solution = cssls(ata, atb, None, &(0..n).collect::<Vec<_>>());
    let mut passive = Array2::from_elem((k, n), false);
    let mut active_cols: Vec<usize> = Vec::new();
    for j in 0..n {
        let mut feasible = true;
        for i in 0..k {
            if solution[[i, j]] > 0.0 {
                passive[[i, j]] = true;
            } else {
                solution[[i, j]] = 0.0;
                feasible = false;
            }
        }
        if !feasible {
            active_cols.push(j);
        }
    }

    // `feasible_x` always holds the best known feasible iterate per column.
    let mut feasible_x = solution.clone();
    let mut guard = 0usize;
    let guard_max = 30 * (k + 1) * (n + 1);

    while !active_cols.is_empty() {
        guard += 1;
        if guard > guard_max {
            break; // safety net; tests check KKT independently
        }
        let trial = cssls(ata, atb, Some(&passive), &active_cols);
        for (&j, col) in active_cols.iter().zip(trial.columns()) {
            for i in 0..k {
                solution[[i, j]] = col[i];
            }
        }

        // Columns whose passive-set solve went infeasible need step-length
        // damping toward the previous feasible iterate.
        let mut infeasible: Vec<usize> = active_cols
            .iter()
            .copied()
            .filter(|&j| (0..k).any(|i| passive[[i, j]] && solution[[i, j]] < 0.0))
            .collect();
        let mut inner_guard = 0usize;
        while !infeasible.is_empty() {
            inner_guard += 1;
            if inner_guard > 10 * k + 10 {
                break;
            }
            for &j in &infeasible {
                let mut alpha = f64::INFINITY;
                let mut blocker = None;
                for i in 0..k {
                    if passive[[i, j]] && solution[[i, j]] < 0.0 {
                        let d = feasible_x[[i, j]];
                        let denom = d - solution[[i, j]];
                        let step = if denom > 0.0 { d / denom } else { 0.0 };
                        if step < alpha {
                            alpha = step;
                            blocker = Some(i);
                        }
                    }
                }
                if let Some(b) = blocker {
                    for i in 0..k {
                        if passive[[i, j]] {
                            let d = feasible_x[[i, j]];
                            feasible_x[[i, j]] = d + alpha * (solution[[i, j]] - d);
                        }
                    }
                    feasible_x[[b, j]] = 0.0;
                    passive[[b, j]] = false;
                }
            }
            let resolved = cssls(ata, atb, Some(&passive), &infeasible);
            for (&j, col) in infeasible.iter().zip(resolved.columns()) {
                for i in 0..k {
                    solution[[i, j]] = col[i];
                }
            }
            infeasible.retain(|&j| (0..k).any(|i| passive[[i, j]] && solution[[i, j]] < 0.0));
        }

        // Feasible now; zero the non-passive entries and test optimality.
        for &j in &active_cols {
            for i in 0..k {
                if !passive[[i, j]] {
                    solution[[i, j]] = 0.0;
                }
                feasible_x[[i, j]] = solution[[i, j]];
            }
        }
        let mut still_active = Vec::new();
        for &j in &active_cols {
            // negative gradient over the zero set
            let mut best: Option<(usize, f64)> = None;
            for i in 0..k {
                if passive[[i, j]] {
                    continue;
                }
                let mut w = atb[[i, j]];
                for l in 0..k {
                    w -= ata[[i, l]] * solution[[l, j]];
                }
                if w > tol && best.map_or(true, |(_, bw)| w > bw) {
                    best = Some((i, w));
                }
            }
            if let Some((enter, _)) = best {
                passive[[enter, j]] = true;
                still_active.push(j);
            }
        }
        active_cols = still_active;
    }

    for v in solution.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    solution
}

/// Combinatorial subspace least squares: solve the passive-set-restricted
/// normal equations for the selected columns, factorizing once per distinct
/// passive-set pattern.
fn cssls(
    ata: &Array2<f64>,
    atb: &Array2<f64>,
    passive: Option<&Array2<bool>>,
    cols: &[usize],
) -> Array2<f64> {
    let k = ata.nrows();
    let mut out = Array2::zeros((k, cols.len()));
    let Some(passive) = passive else {
        // unconstrained: one factorization for every column
        let a = to_dmatrix(ata.view());
        let mut b = DMatrix::zeros(k, cols.len());
        for (c, &j) in cols.iter().enumerate() {
            for i in 0..k {
                b[(i, c)] = atb[[i, j]];
            }
        }
        if let Ok(sol) = solve_spd(&a, &b) {
            for c in 0..cols.len() {
                for i in 0..k {
                    out[[i, c]] = sol[(i, c)];
                }
            }
        }
        return out;
    };

    // group columns sharing a passive-set pattern (deterministic order)
    let mut groups: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
    for (c, &j) in cols.iter().enumerate() {
        let pattern: Vec<bool> = (0..k).map(|i| passive[[i, j]]).collect();
        groups.entry(pattern).or_default().push(c);
    }
    for (pattern, group) in groups {
        let members: Vec<usize> = (0..k).filter(|&i| pattern[i]).collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len();
        let mut a = DMatrix::zeros(m, m);
        for (r, &i) in members.iter().enumerate() {
            for (c, &j) in members.iter().enumerate() {
                a[(r, c)] = ata[[i, j]];
            }
        }
        let mut b = DMatrix::zeros(m, group.len());
        for (gc, &c) in group.iter().enumerate() {
            let j = cols[c];
            for (r, &i) in members.iter().enumerate() {
                b[(r, gc)] = atb[[i, j]];
            }
        }
        if let Ok(sol) = solve_spd(&a, &b) {
            for (gc, &c) in group.iter().enumerate() {
                for (r, &i) in members.iter().enumerate() {
                    out[[i, c]] = sol[(r, gc)];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    /// Brute-force oracle: enumerate every active-set sign pattern, solve the
    /// unconstrained problem on each support, keep feasible candidates and
    /// return the best. Exact for full-rank designs.
    fn nnls_oracle(e: &Array2<f64>, y: &Array1<f64>) -> (Array1<f64>, f64) {
        let k = e.ncols();
        let mut best_obj = f64::INFINITY;
        let mut best_x = Array1::zeros(k);
        for mask in 0..(1u32 << k) {
            let members: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
            let mut x = Array1::zeros(k);
            if !members.is_empty() {
                let sub =
                    Array2::from_shape_fn((e.nrows(), members.len()), |(r, c)| e[[r, members[c]]]);
                let ata = sub.t().dot(&sub);
                let aty = sub.t().dot(y);
                let a = to_dmatrix(ata.view());
                let mut b = DMatrix::zeros(members.len(), 1);
                for (r, v) in aty.iter().enumerate() {
                    b[(r, 0)] = *v;
                }
                let Some(sol) = a.lu().solve(&b) else { continue };
                if (0..members.len()).any(|r| sol[(r, 0)] < 0.0) {
                    continue;
                }
                for (r, &i) in members.iter().enumerate() {
                    x[i] = sol[(r, 0)];
                }
            }
            let resid = &e.dot(&x) - y;
            let obj: f64 = resid.iter().map(|v| v * v).sum();
            if obj < best_obj {
                best_obj = obj;
                best_x = x;
            }
        }
        (best_x, best_obj)
    }

    fn objective(e: &Array2<f64>, y: &Array1<f64>, x: &Array1<f64>) -> f64 {
        (&e.dot(x) - y).iter().map(|v| v * v).sum()
    }

    #[test]
    fn identity_design_clamps_negative_target() {
        let e = Array2::eye(2);
        let y = array![3.0, -1.0];
        let x = nnls(e.view(), y.view()).unwrap();
        assert_abs_diff_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_columns_recover_positive_coefficients() {
        let e = array![[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]];
        let truth = array![0.7, 1.3];
        let y = e.dot(&truth);
        let x = nnls(e.view(), y.view()).unwrap();
        assert_abs_diff_eq!(x[0], 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(x[1], 1.3, epsilon = 1e-10);
    }

    #[test]
    fn random_problems_match_enumeration_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        for _ in 0..50 {
            let e = Array2::from_shape_fn((6, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
            let y = Array1::from_shape_fn(6, |_| rng.random::<f64>() * 2.0 - 1.0);
            let x = nnls(e.view(), y.view()).unwrap();
            let (ox, oobj) = nnls_oracle(&e, &y);
            let obj = objective(&e, &y, &x);
            assert!((obj - oobj).abs() <= 1e-9 * (1.0 + oobj), "objective gap {obj} vs {oobj}");
            for (a, b) in x.iter().zip(ox.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn kkt_conditions_hold_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(62);
        for _ in 0..50 {
            let p = rng.random_range(3..50);
            let k = rng.random_range(1..10);
            let e = Array2::from_shape_fn((p, k), |_| rng.random::<f64>() * 2.0 - 1.0);
            let y = Array1::from_shape_fn(p, |_| rng.random::<f64>() * 2.0 - 1.0);
            let x = nnls(e.view(), y.view()).unwrap();
            let ata = e.t().dot(&e);
            let tol = kkt_tol(&ata) * 10.0;
            let grad = &ata.dot(&x) - &e.t().dot(&y);
            for j in 0..k {
                assert!(x[j] >= 0.0);
                if x[j] > 0.0 {
                    assert!(grad[j].abs() <= tol, "active gradient {} at {}", grad[j], j);
                } else {
                    assert!(grad[j] >= -tol, "inactive gradient {} at {}", grad[j], j);
                }
            }
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let e = array![[1.0, f64::NAN], [0.0, 1.0]];
        let y = array![1.0, 1.0];
        assert!(nnls(e.view(), y.view()).is_err());
        let e2 = array![[1.0, 0.0], [0.0, 1.0]];
        let y2 = array![1.0, f64::INFINITY];
        assert!(nnls(e2.view(), y2.view()).is_err());
    }

    #[test]
    fn batch_identical_columns_give_identical_solutions() {
        let mut rng = ChaCha12Rng::seed_from_u64(63);
        let e = Array2::from_shape_fn((8, 3), |_| rng.random::<f64>());
        let y_col = Array1::from_shape_fn(8, |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array2::from_shape_fn((8, 4), |(i, _)| y_col[i]);
        let x = nnls_batch(e.view(), y.view()).unwrap();
        for j in 1..4 {
            for i in 0..3 {
                assert_eq!(x[[i, 0]].to_bits(), x[[i, j]].to_bits());
            }
        }
    }

    #[test]
    fn batch_agrees_with_columnwise_single_solves() {
        let mut rng = ChaCha12Rng::seed_from_u64(64);
        for _ in 0..20 {
            // k <= p keeps the optimum unique so solutions compare elementwise
            let p = rng.random_range(4..50);
            let k = rng.random_range(1..10.min(p + 1));
            let n = rng.random_range(1..20);
            let e = Array2::from_shape_fn((p, k), |_| rng.random::<f64>() * 2.0 - 1.0);
            let y = Array2::from_shape_fn((p, n), |_| rng.random::<f64>() * 2.0 - 1.0);
            let x = nnls_batch(e.view(), y.view()).unwrap();
            for j in 0..n {
                let single = nnls(e.view(), y.column(j)).unwrap();
                for i in 0..k {
                    assert!(
                        (x[[i, j]] - single[i]).abs() <= 1e-9 * (1.0 + single[i].abs()),
                        "column {j} row {i}: batch {} vs single {}",
                        x[[i, j]],
                        single[i]
                    );
                }
            }
        }
    }

    #[test]
    fn batch_on_own_columns_is_near_identity() {
        // nonnegative independent columns reproduce themselves
        let e = array![[1.0, 0.2, 0.0], [0.1, 1.0, 0.3], [0.0, 0.2, 1.0], [0.3, 0.0, 0.1]];
        let x = nnls_batch(e.view(), e.view()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let single = nnls(e.view(), e.column(j)).unwrap();
                assert_abs_diff_eq!(x[[i, j]], single[i], epsilon = 1e-9);
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(x[[i, j]], expected, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn batch_handles_duplicate_design_columns() {
        // duplicated columns make EᵀE singular; solver must stay finite and optimal
        let e = array![[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.0, 1.0]];
        let y = array![[2.0], [3.0], [1.0]];
        let x = nnls_batch(e.view(), y.view()).unwrap();
        assert!(x.iter().all(|v| v.is_finite() && *v >= 0.0));
        let resid: f64 = (&e.dot(&x) - &y).iter().map(|v| v * v).sum();
        assert!(resid < 1e-18, "residual {resid}");
    }
}
