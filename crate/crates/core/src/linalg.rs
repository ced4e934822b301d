//! Small dense linear algebra helpers: deterministic orthonormal complements,
//! the constrained-step KKT solve, and a Gaussian solve generic over the
//! autodiff scalars.

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Smallest singular value (0 for an empty matrix).
pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let sv = a.clone().singular_values();
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Full orthogonal factor of the QR decomposition of `a` (n x k, k <= n),
/// split into the range of `a` (first k columns) and its orthogonal
/// complement (remaining n - k columns). Plain Householder without pivoting:
/// deterministic for a deterministic input.
///
/// The caller is responsible for checking that `a` has full column rank;
/// this routine only requires nonzero pivot columns.
pub fn orthonormal_range_and_complement(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let k = a.ncols();
    if k > n {
        return Err(Error::shape(format!("complement of a {n} x {k} matrix with k > n")));
    }
    let mut r = a.clone();
    // Householder vectors stored per column.
    let mut vs: Vec<DVector<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v = DVector::zeros(n - j);
        for i in j..n {
            v[i - j] = r[(i, j)];
        }
        let alpha = -v[0].signum() * v.norm();
        if alpha.abs() == 0.0 {
            return Err(Error::Rank { sigma_min: 0.0, tol: 0.0 });
        }
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm > 0.0 {
            v /= vnorm;
        }
        // Apply H = I - 2 v v^T to the trailing block of r.
        for c in j..k {
            let mut dot = 0.0;
            for i in j..n {
                dot += v[i - j] * r[(i, c)];
            }
            for i in j..n {
                r[(i, c)] -= 2.0 * dot * v[i - j];
            }
        }
        vs.push(v);
    }
    // Accumulate Q = H_0 H_1 ... H_{k-1} applied to the identity.
    let mut q = DMatrix::identity(n, n);
    for j in (0..k).rev() {
        let v = &vs[j];
        for c in 0..n {
            let mut dot = 0.0;
            for i in j..n {
                dot += v[i - j] * q[(i, c)];
            }
            for i in j..n {
                q[(i, c)] -= 2.0 * dot * v[i - j];
            }
        }
    }
    let range = q.columns(0, k).into_owned();
    let complement = q.columns(k, n - k).into_owned();
    Ok((range, complement))
}

/// Outcome of one constrained-acceleration solve.
pub struct KktSolution {
    pub vdot: DVector<f64>,
    pub lambda: DVector<f64>,
    /// True when the KKT matrix was numerically singular and the step was
    /// recovered as the minimum-norm solution of a consistent system.
    pub degenerate: bool,
}

/// Solve the saddle system
///   [ M  -w^T ] [vdot  ]   [ b ]
///   [ w   0   ] [lambda] = [-c ]
/// where `w` is the k x n constraint matrix. Rows of `w` are equilibrated to
/// unit norm internally; the returned multipliers refer to the original rows.
///
/// A singular KKT matrix (smallest singular value below `1e-12` relative to
/// the largest) does not immediately abort: degenerate Lagrangians can still
/// determine a consistent acceleration on the primary constraint set, and in
/// that case the minimum-norm solution is returned with `degenerate` set.
/// Only an inconsistent system is an error.
pub fn solve_kkt(
    m: &DMatrix<f64>,
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<KktSolution> {
    let n = m.nrows();
    let k = w.nrows();
    if m.ncols() != n || (k > 0 && w.ncols() != n) || b.len() != n || c.len() != k {
        return Err(Error::shape("inconsistent KKT block dimensions"));
    }
    // Row scales for the constraint block.
    let mut scales = vec![1.0; k];
    for a in 0..k {
        let norm = w.row(a).norm();
        if norm > 0.0 {
            scales[a] = norm;
        }
    }
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(m);
    for a in 0..k {
        for j in 0..n {
            let ws = w[(a, j)] / scales[a];
            kkt[(n + a, j)] = ws;
            kkt[(j, n + a)] = -ws;
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(b);
    for a in 0..k {
        rhs[n + a] = -c[a] / scales[a];
    }

    let svd = kkt.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let degenerate = sigma_min < 1e-12 * sigma_max.max(1.0);
    // Truncated pseudoinverse solve; for a regular matrix this is the exact
    // solution, for a singular one the minimum-norm least-squares solution.
    let cutoff = 1e-13 * sigma_max.max(1.0);
    let x = svd
        .solve(&rhs, cutoff)
        .map_err(|_| Error::singular_kkt_degenerate())?;
    if degenerate {
        let residual = (&kkt * &x - &rhs).amax();
        let scale = rhs.amax().max(1.0);
        if residual > 1e-9 * scale {
            return Err(Error::singular_kkt_degenerate());
        }
    }
    let vdot = x.rows(0, n).into_owned();
    let mut lambda = DVector::zeros(k);
    for a in 0..k {
        lambda[a] = x[n + a] / scales[a];
    }
    Ok(KktSolution { vdot, lambda, degenerate })
}

/// Gaussian elimination with partial pivoting on the real parts, generic over
/// the autodiff scalars. `a` is row-major `n x n`.
pub fn solve_linear_generic<S: Scalar>(a: &mut [S], b: &mut [S], n: usize) -> Result<()> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    let mut scale = 0.0_f64;
    for x in a.iter() {
        scale = scale.max(x.re().abs());
    }
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].re().abs();
        for row in col + 1..n {
            let cand = a[row * n + col].re().abs();
            if cand > best {
                best = cand;
                pivot = row;
            }
        }
        if best <= 1e-14 * scale.max(1.0) {
            return Err(Error::SingularReducedLegendre);
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let inv = S::constant(1.0) / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            for j in col..n {
                let t = a[col * n + j];
                a[row * n + j] = a[row * n + j] - factor * t;
            }
            let t = b[col];
            b[row] = b[row] - factor * t;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc = acc - a[col * n + j] * b[j];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Dual1;

    #[test]
    fn complement_is_orthonormal_kernel() {
        // Rows of w: dx and the normalized (0, 1, 1) direction.
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let at = w.transpose();
        let (range, comp) = orthonormal_range_and_complement(&at).unwrap();
        assert_eq!(comp.ncols(), 1);
        // w * comp = 0
        let prod = &w * &comp;
        assert!(prod.amax() < 1e-14);
        // columns orthonormal
        assert!(((&comp).transpose() * &comp - DMatrix::identity(1, 1)).amax() < 1e-14);
        assert!((range.transpose() * &comp).amax() < 1e-14);
    }

    #[test]
    fn kkt_regular_solve_matches_unconstrained() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let w = DMatrix::zeros(0, 2);
        let b = DVector::from_vec(vec![4.0, 9.0]);
        let c = DVector::zeros(0);
        let sol = solve_kkt(&m, &w, &b, &c).unwrap();
        assert!(!sol.degenerate);
        assert!((sol.vdot[0] - 2.0).abs() < 1e-14);
        assert!((sol.vdot[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn kkt_constraint_is_enforced_and_multiplier_unscaled() {
        // Minimize onto the constraint vdot_x + vdot_y = -c with M = I.
        let m = DMatrix::identity(2, 2);
        let w = DMatrix::from_row_slice(1, 2, &[10.0, 10.0]); // non-unit row norm
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let c = DVector::from_vec(vec![0.0]);
        let sol = solve_kkt(&m, &w, &b, &c).unwrap();
        assert!((10.0 * sol.vdot[0] + 10.0 * sol.vdot[1]).abs() < 1e-12);
        // vdot = b + w^T lambda with the *original* rows.
        let recon = &sol.vdot - (&b + w.transpose() * &sol.lambda);
        assert!(recon.amax() < 1e-12);
    }

    #[test]
    fn kkt_singular_consistent_returns_min_norm() {
        // M singular with the constraint leaving a null direction, but rhs
        // consistent: x + y free along (1, -1)? Here M = diag(1, 0), no
        // constraint, b = (1, 0): any vdot_y solves row 2, min-norm picks 0.
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let w = DMatrix::zeros(0, 2);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let sol = solve_kkt(&m, &w, &b, &DVector::zeros(0)).unwrap();
        assert!(sol.degenerate);
        assert!((sol.vdot[0] - 1.0).abs() < 1e-12);
        assert!(sol.vdot[1].abs() < 1e-12);
    }

    #[test]
    fn kkt_singular_inconsistent_errors() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let w = DMatrix::zeros(0, 2);
        let b = DVector::from_vec(vec![1.0, 5.0]);
        match solve_kkt(&m, &w, &b, &DVector::zeros(0)) {
            Err(Error::SingularKkt(_)) => {}
            other => panic!("expected SingularKkt, got {:?}", other.map(|s| s.vdot)),
        }
    }

    #[test]
    fn generic_solve_carries_dual_parts() {
        // A(t) x = b with A depending on a parameter seeded in lane 0;
        // x(t) = A(t)^{-1} b, dx/dt = -A^{-1} dA A^{-1} b.
        let t = Dual1::seeded(2.0, 0);
        let one = Dual1::constant(1.0);
        let mut a = vec![t, one, one, t]; // [[t, 1], [1, t]]
        let mut b = vec![Dual1::constant(1.0), Dual1::constant(0.0)];
        solve_linear_generic(&mut a, &mut b, 2).unwrap();
        // x = (t, -1) / (t^2 - 1); at t = 2: (2/3, -1/3)
        assert!((b[0].re - 2.0 / 3.0).abs() < 1e-14);
        assert!((b[1].re + 1.0 / 3.0).abs() < 1e-14);
        // dx0/dt = d/dt t/(t^2-1) = (-t^2 - 1)/(t^2-1)^2 = -5/9
        assert!((b[0].du[0] + 5.0 / 9.0).abs() < 1e-13);
        // dx1/dt = d/dt -1/(t^2-1) = 2t/(t^2-1)^2 = 4/9
        assert!((b[1].du[0] - 4.0 / 9.0).abs() < 1e-13);
    }
}
