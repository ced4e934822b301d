//! Chaplygin-type reduction for weakly degenerate systems: an abelian
//! symmetry group acts by translation on a subset of the coordinates, the
//! constraint distribution is the kernel of a principal connection, and the
//! possibly degenerate Lagrangian L descends to a nondegenerate reduced
//! Lagrangian on the base. The reduced dynamics is Hamiltonian for the
//! canonical form corrected by a gyroscopic two-form built from curvature and
//! momentum, and solutions lift back to full Hamilton-Jacobi sections.

use crate::autodiff::{
    jacobian_covector, partial_v_lagrangian, ArrayMap, ArrayMapDyn, Dual1, Lagrangian, Scalar,
    MAX_LANES,
};
use crate::error::{Error, Result};
use crate::geometry::{ConstraintDistribution, LagrangianField, PontryaginState};
use crate::hj::{legendre_inverse, HjSection};
use crate::integrator::{assemble, solve_step, step_count, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// A trivial principal bundle structure on Q = S x R: `group_idx` are the k
/// coordinates the abelian group translates (one per constraint), the rest
/// form the base R. The constraint distribution is the kernel of the
/// connection ds^a + A^a_al(r) dr^al obtained by normalizing the constraint
/// one-forms on their group block.
#[derive(Clone)]
pub struct ChaplyginBundle {
    delta: ConstraintDistribution,
    group_idx: Vec<usize>,
    base_idx: Vec<usize>,
}

impl ChaplyginBundle {
    pub fn dim(&self) -> usize {
        self.delta.dim()
    }

    /// Group dimension k.
    pub fn group_dim(&self) -> usize {
        self.group_idx.len()
    }

    /// Base dimension n - k.
    pub fn base_dim(&self) -> usize {
        self.base_idx.len()
    }

    pub fn group_indices(&self) -> &[usize] {
        &self.group_idx
    }

    pub fn base_indices(&self) -> &[usize] {
        &self.base_idx
    }

    pub fn distribution(&self) -> &ConstraintDistribution {
        &self.delta
    }

    pub fn embed<S: Scalar>(&self, r: &[S], s: &[S]) -> Vec<S> {
        let mut q = vec![S::constant(0.0); self.dim()];
        for (pos, &i) in self.base_idx.iter().enumerate() {
            q[i] = r[pos];
        }
        for (pos, &i) in self.group_idx.iter().enumerate() {
            q[i] = s[pos];
        }
        q
    }

    pub fn split(&self, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.base_idx.iter().map(|&i| q[i]).collect();
        let s = self.group_idx.iter().map(|&i| q[i]).collect();
        (r, s)
    }

    pub fn base_components<S: Scalar + Copy>(&self, q: &[S]) -> Vec<S> {
        self.base_idx.iter().map(|&i| q[i]).collect()
    }

    /// Connection coefficients A(r) (k x m, row-major) from the constraint
    /// forms at the given full point: solve omega_s A = omega_r.
    fn connection_at<S: Scalar>(&self, q: &[S]) -> Result<Vec<S>> {
        let n = self.dim();
        let k = self.group_dim();
        let m = self.base_dim();
        let w = self.delta.matrix_generic(q);
        let mut a = vec![S::constant(0.0); k * m];
        for (col, &beta) in self.base_idx.iter().enumerate() {
            let mut block = vec![S::constant(0.0); k * k];
            let mut rhs = vec![S::constant(0.0); k];
            for row in 0..k {
                for (j, &g) in self.group_idx.iter().enumerate() {
                    block[row * k + j] = w[row * n + g];
                }
                rhs[row] = w[row * n + beta];
            }
            crate::linalg::solve_linear_generic(&mut block, &mut rhs, k).map_err(|_| {
                Error::NotChaplygin(
                    "constraint forms are singular on the group directions".into(),
                )
            })?;
            for row in 0..k {
                a[row * m + col] = rhs[row];
            }
        }
        Ok(a)
    }

    /// A(r) (k x m, row-major) at a base point.
    pub fn connection_generic<S: Scalar>(&self, r: &[S]) -> Result<Vec<S>> {
        let s = vec![S::constant(0.0); self.group_dim()];
        self.connection_at(&self.embed(r, &s))
    }

    /// A(r) as a matrix.
    pub fn connection(&self, r: &[f64]) -> Result<DMatrix<f64>> {
        let a = self.connection_generic::<f64>(r)?;
        Ok(DMatrix::from_row_slice(self.group_dim(), self.base_dim(), &a))
    }
}

/// Horizontal lift of a base velocity: full velocity with base components
/// vbar and group components sdot = -A(r) vbar.
pub fn horizontal_lift_delta<S: Scalar>(
    bundle: &ChaplyginBundle,
    r: &[S],
    vbar: &[S],
) -> Result<Vec<S>> {
    let k = bundle.group_dim();
    let m = bundle.base_dim();
    let a = bundle.connection_generic(r)?;
    let mut sdot = vec![S::constant(0.0); k];
    for row in 0..k {
        let mut acc = S::constant(0.0);
        for col in 0..m {
            acc = acc + a[row * m + col] * vbar[col];
        }
        sdot[row] = -acc;
    }
    Ok(bundle.embed(vbar, &sdot))
}

/// Validate and build the bundle: the group block of the constraint forms
/// must be invertible and both the connection and the Lagrangian must be
/// invariant under group translations at the sampled points.
pub fn build_bundle(
    delta: &ConstraintDistribution,
    l: &LagrangianField,
    group_idx: &[usize],
    samples: &[Vec<f64>],
) -> Result<ChaplyginBundle> {
    let n = delta.dim();
    let k = delta.count();
    if group_idx.len() != k {
        return Err(Error::NotChaplygin(format!(
            "need one group coordinate per constraint: got {} for k = {k}",
            group_idx.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in group_idx {
        if i >= n || seen[i] {
            return Err(Error::NotChaplygin(format!("invalid group coordinate index {i}")));
        }
        seen[i] = true;
    }
    let base_idx: Vec<usize> = (0..n).filter(|i| !seen[*i]).collect();
    let bundle = ChaplyginBundle {
        delta: delta.clone(),
        group_idx: group_idx.to_vec(),
        base_idx,
    };

    // Fixed, deterministic translation offsets for the invariance checks.
    let offsets = [0.37, -1.23, 0.79, 2.11];
    let probe_v: Vec<f64> = (0..n).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    for q in samples {
        if q.len() != n {
            return Err(Error::shape("bundle validation sample has wrong length"));
        }
        let w = delta.matrix(q);
        let mut block = DMatrix::zeros(k, k);
        for row in 0..k {
            for (j, &g) in bundle.group_idx.iter().enumerate() {
                block[(row, j)] = w[(row, g)];
            }
        }
        let sigma = crate::linalg::min_singular_value(&block);
        if k > 0 && sigma <= 1e-10 {
            return Err(Error::NotChaplygin(format!(
                "group block of the constraint forms is singular (sigma_min = {sigma:.3e})"
            )));
        }

        let a_here = bundle.connection_at(q)?;
        let l_here = l.eval(q, &probe_v);
        for (t, off) in offsets.iter().enumerate() {
            let mut qt = q.clone();
            for (j, &g) in bundle.group_idx.iter().enumerate() {
                qt[g] += off + 0.31 * (j as f64 + 1.0) * (t as f64 + 1.0);
            }
            let a_there = bundle.connection_at(&qt)?;
            for (x, y) in a_here.iter().zip(a_there.iter()) {
                if (x - y).abs() > 1e-10 {
                    return Err(Error::NotChaplygin(
                        "connection coefficients vary along the group directions".into(),
                    ));
                }
            }
            let l_there = l.eval(&qt, &probe_v);
            if (l_here - l_there).abs() > 1e-10 * l_here.abs().max(1.0) {
                return Err(Error::NotChaplygin(
                    "Lagrangian is not invariant under the group translations".into(),
                ));
            }
        }
    }
    Ok(bundle)
}

/// The reduced Lagrangian Lbar(r, vbar) = L(q(r, 0), hl(vbar)).
struct ReducedLagrangian {
    bundle: ChaplyginBundle,
    l: Arc<dyn crate::autodiff::LagrangianDyn>,
}

impl Lagrangian for ReducedLagrangian {
    fn dim(&self) -> usize {
        self.bundle.base_dim()
    }
    fn eval<S: Scalar>(&self, r: &[S], vbar: &[S]) -> S {
        let s = vec![S::constant(0.0); self.bundle.group_dim()];
        let q = self.bundle.embed(r, &s);
        match horizontal_lift_delta(&self.bundle, r, vbar) {
            Ok(v) => S::eval_lagrangian(self.l.as_ref(), &q, &v),
            Err(_) => S::constant(f64::NAN),
        }
    }
}

/// Build Lbar as a standalone Lagrangian field on the base.
pub fn reduced_lagrangian(bundle: &ChaplyginBundle, l: &LagrangianField) -> LagrangianField {
    LagrangianField::new(ReducedLagrangian { bundle: bundle.clone(), l: l.arc() })
}

/// Flattened connection r -> A(r) for curvature differentiation.
struct ConnectionMap {
    bundle: ChaplyginBundle,
}

impl ArrayMap for ConnectionMap {
    fn dim_in(&self) -> usize {
        self.bundle.base_dim()
    }
    fn dim_out(&self) -> usize {
        self.bundle.group_dim() * self.bundle.base_dim()
    }
    fn eval<S: Scalar>(&self, r: &[S], out: &mut [S]) {
        match self.bundle.connection_generic(r) {
            Ok(a) => out.copy_from_slice(&a),
            Err(_) => out.iter_mut().for_each(|x| *x = S::constant(f64::NAN)),
        }
    }
}

/// Curvature B = dA evaluated on two base vectors:
/// B^a(Y, Z) = sum_{al, be} d_be A^a_al (Y^be Z^al - Z^be Y^al).
pub fn curvature(
    bundle: &ChaplyginBundle,
    r: &[f64],
    ybar: &[f64],
    zbar: &[f64],
) -> Result<Vec<f64>> {
    let k = bundle.group_dim();
    let m = bundle.base_dim();
    if ybar.len() != m || zbar.len() != m || r.len() != m {
        return Err(Error::shape("curvature arguments must have the base dimension"));
    }
    let map = ConnectionMap { bundle: bundle.clone() };
    let jac = jacobian_covector(&map, r)?; // (be, a*m + al) = d_be A^a_al
    let mut b = vec![0.0; k];
    for a in 0..k {
        let mut acc = 0.0;
        for al in 0..m {
            for be in 0..m {
                acc += jac[(be, a * m + al)] * (ybar[be] * zbar[al] - zbar[be] * ybar[al]);
            }
        }
        b[a] = acc;
    }
    Ok(b)
}

/// Momentum map of the abelian action: the group components of a full
/// momentum covector.
pub fn momentum_map(bundle: &ChaplyginBundle, p: &[f64]) -> Vec<f64> {
    bundle.group_idx.iter().map(|&i| p[i]).collect()
}

/// Weakly degenerate Chaplygin system: L possibly degenerate, Lbar not.
#[derive(Clone)]
pub struct ReducedSystem {
    bundle: ChaplyginBundle,
    l_full: LagrangianField,
    l_red: LagrangianField,
}

impl ReducedSystem {
    /// Validate weak degeneracy at the sampled base points: the reduced
    /// velocity Hessian must be invertible even if the full one is not.
    pub fn new(
        bundle: ChaplyginBundle,
        l_full: LagrangianField,
        samples_r: &[Vec<f64>],
    ) -> Result<Self> {
        let l_red = reduced_lagrangian(&bundle, &l_full);
        let m = bundle.base_dim();
        for r in samples_r {
            if r.len() != m {
                return Err(Error::shape("base sample has wrong length"));
            }
            let blocks =
                crate::autodiff::lagrangian_blocks(l_red.dyn_ref(), r, &vec![0.0; m])?;
            if crate::linalg::min_singular_value(&blocks.m_vv) <= 1e-10 {
                return Err(Error::SingularReducedLegendre);
            }
        }
        Ok(ReducedSystem { bundle, l_full, l_red })
    }

    pub fn bundle(&self) -> &ChaplyginBundle {
        &self.bundle
    }

    pub fn full_lagrangian(&self) -> &LagrangianField {
        &self.l_full
    }

    pub fn reduced_lagrangian(&self) -> &LagrangianField {
        &self.l_red
    }

    pub fn base_dim(&self) -> usize {
        self.bundle.base_dim()
    }

    /// Reduced Legendre transform pbar = dLbar/dvbar.
    pub fn reduced_momentum(&self, r: &[f64], vbar: &[f64]) -> Vec<f64> {
        partial_v_lagrangian(self.l_red.dyn_ref(), r, vbar)
    }

    /// Inverse reduced Legendre transform at any scalar level.
    pub fn reduced_velocity<S: Scalar>(&self, r: &[S], pbar: &[S]) -> Result<Vec<S>> {
        legendre_inverse(&self.l_red, r, pbar).map_err(|e| match e {
            Error::SingularKkt(_) => Error::SingularReducedLegendre,
            other => other,
        })
    }

    /// Reduced Hamiltonian Hbar(r, pbar) = <pbar, vbar> - Lbar(r, vbar).
    pub fn hamiltonian_generic<S: Scalar>(&self, r: &[S], pbar: &[S]) -> Result<S> {
        let vbar = self.reduced_velocity(r, pbar)?;
        let mut h = -self.l_red.eval(r, &vbar);
        for i in 0..self.base_dim() {
            h = h + pbar[i] * vbar[i];
        }
        Ok(h)
    }

    pub fn hamiltonian(&self, r: &[f64], pbar: &[f64]) -> Result<f64> {
        self.hamiltonian_generic::<f64>(r, pbar)
    }

    /// Horizontal lift of momenta: hl_P = FL o hl_Delta o FLbar^{-1}.
    pub fn horizontal_lift_p<S: Scalar>(
        &self,
        r: &[S],
        s: &[S],
        pbar: &[S],
    ) -> Result<Vec<S>> {
        let vbar = self.reduced_velocity(r, pbar)?;
        let v = horizontal_lift_delta(&self.bundle, r, &vbar)?;
        let q = self.bundle.embed(r, s);
        Ok(partial_v_lagrangian(self.l_full.dyn_ref(), &q, &v))
    }

    /// Horizontal lift into the constraint momentum space K:
    /// (q, hl_Delta(FLbar^{-1} pbar), hl_P(pbar)).
    pub fn horizontal_lift_k(&self, r: &[f64], s: &[f64], pbar: &[f64]) -> Result<PontryaginState> {
        let vbar = self.reduced_velocity(r, pbar)?;
        let v = horizontal_lift_delta(&self.bundle, r, &vbar)?;
        let q = self.bundle.embed(r, s);
        let p = partial_v_lagrangian(self.l_full.dyn_ref(), &q, &v);
        Ok(PontryaginState { q, v, p })
    }

    /// Gyroscopic two-form on basis pairs: Xi_{al be}(r, pbar) =
    /// <J(hl_P(pbar)), B(e_al, e_be)>, antisymmetric m x m.
    pub fn xi_matrix(&self, r: &[f64], pbar: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.bundle.group_dim();
        let m = self.base_dim();
        let s0 = vec![0.0; k];
        let p_full = self.horizontal_lift_p::<f64>(r, &s0, pbar)?;
        let j_mom = momentum_map(&self.bundle, &p_full);
        let map = ConnectionMap { bundle: self.bundle.clone() };
        let jac = jacobian_covector(&map, r)?;
        let mut xi = DMatrix::zeros(m, m);
        for al in 0..m {
            for be in al + 1..m {
                let mut acc = 0.0;
                for a in 0..k {
                    // B^a(e_al, e_be) = d_al A^a_be - d_be A^a_al
                    acc += j_mom[a] * (jac[(al, a * m + be)] - jac[(be, a * m + al)]);
                }
                xi[(al, be)] = acc;
                xi[(be, al)] = -acc;
            }
        }
        Ok(xi)
    }

    /// The gyroscopic two-form on a pair of base vectors.
    pub fn xi_form(&self, r: &[f64], pbar: &[f64], ybar: &[f64], zbar: &[f64]) -> Result<f64> {
        let xi = self.xi_matrix(r, pbar)?;
        let y = DVector::from_column_slice(ybar);
        let z = DVector::from_column_slice(zbar);
        Ok((y.transpose() * xi * z)[(0, 0)])
    }

    /// The almost-symplectic matrix of Omega_nh = Omega_can - Xi in the
    /// (r, pbar) coordinate ordering: entry (I, J) = Omega_nh(e_I, e_J).
    pub fn omega_nh(&self, r: &[f64], pbar: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.base_dim();
        let xi = self.xi_matrix(r, pbar)?;
        let mut omega = DMatrix::zeros(2 * m, 2 * m);
        for al in 0..m {
            for be in 0..m {
                omega[(al, be)] = -xi[(al, be)];
            }
            omega[(al, m + al)] = 1.0;
            omega[(m + al, al)] = -1.0;
        }
        Ok(omega)
    }

    /// Right-hand side of the reduced equations i_X Omega_nh = dHbar.
    fn reduced_rhs(&self, r: &[f64], pbar: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.base_dim();
        if 2 * m > MAX_LANES {
            return Err(Error::shape("base dimension exceeds derivative lanes"));
        }
        let rd: Vec<Dual1> = r.iter().enumerate().map(|(i, &x)| Dual1::seeded(x, i)).collect();
        let pd: Vec<Dual1> =
            pbar.iter().enumerate().map(|(i, &x)| Dual1::seeded(x, m + i)).collect();
        let h = self.hamiltonian_generic::<Dual1>(&rd, &pd)?;
        if !h.re.is_finite() {
            return Err(Error::Domain { index: None });
        }
        let mut dh = DVector::zeros(2 * m);
        for i in 0..2 * m {
            if !h.du[i].is_finite() {
                return Err(Error::Domain { index: Some(i) });
            }
            dh[i] = h.du[i];
        }
        let omega = self.omega_nh(r, pbar)?;
        let lu = omega.transpose().lu();
        let x = lu.solve(&dh).ok_or(Error::SingularAlmostSymplectic)?;
        let rdot = (0..m).map(|i| x[i]).collect();
        let pdot = (m..2 * m).map(|i| x[i]).collect();
        Ok((rdot, pdot))
    }
}

/// A reduced-side trajectory (r(t), pbar(t)) with the reduced velocities and
/// the reduced Hamiltonian along it.
#[derive(Clone, Debug)]
pub struct ReducedTrajectory {
    pub t: Vec<f64>,
    pub r: Vec<Vec<f64>>,
    pub pbar: Vec<Vec<f64>>,
    pub vbar: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
}

impl ReducedTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = match self.energy.first() {
            Some(e) => *e,
            None => return 0.0,
        };
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }
}

/// Integrate the reduced almost-symplectic dynamics with RK4.
pub fn integrate_reduced(
    sys: &ReducedSystem,
    r0: &[f64],
    pbar0: &[f64],
    t_final: f64,
    h: f64,
) -> Result<ReducedTrajectory> {
    let m = sys.base_dim();
    if r0.len() != m || pbar0.len() != m {
        return Err(Error::shape("reduced initial condition has wrong length"));
    }
    let steps = step_count(t_final, h)?;
    let mut r = r0.to_vec();
    let mut pbar = pbar0.to_vec();
    let mut traj = ReducedTrajectory {
        t: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps + 1),
        pbar: Vec::with_capacity(steps + 1),
        vbar: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
    };
    for step in 0..=steps {
        let t = step as f64 * h;
        let vbar = sys.reduced_velocity::<f64>(&r, &pbar)?;
        traj.t.push(t);
        traj.r.push(r.clone());
        traj.pbar.push(pbar.clone());
        traj.energy.push(sys.hamiltonian(&r, &pbar)?);
        traj.vbar.push(vbar);
        if step == steps {
            break;
        }
        let k1 = sys.reduced_rhs(&r, &pbar)?;
        let k2 = sys.reduced_rhs(&shift(&r, &k1.0, 0.5 * h), &shift(&pbar, &k1.1, 0.5 * h))?;
        let k3 = sys.reduced_rhs(&shift(&r, &k2.0, 0.5 * h), &shift(&pbar, &k2.1, 0.5 * h))?;
        let k4 = sys.reduced_rhs(&shift(&r, &k3.0, h), &shift(&pbar, &k3.1, h))?;
        for i in 0..m {
            r[i] += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            pbar[i] += h / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        let norm = r.iter().chain(pbar.iter()).map(|x| x.abs()).fold(0.0, f64::max);
        if !norm.is_finite() || norm > 1e12 {
            return Err(Error::BlowUp { t: t + h, norm });
        }
    }
    Ok(traj)
}

fn shift(x: &[f64], d: &[f64], dt: f64) -> Vec<f64> {
    x.iter().zip(d.iter()).map(|(a, b)| a + dt * b).collect()
}

/// Reconstruct the full trajectory from a reduced one: re-integrate the
/// augmented system (r, pbar, s) with sdot = -A(r) rdot (rdot = dHbar/dpbar
/// by Legendre duality) on the same grid, then assemble full states,
/// multipliers and diagnostics.
pub fn reconstruct(
    sys: &ReducedSystem,
    red: &ReducedTrajectory,
    s0: &[f64],
) -> Result<Trajectory> {
    let m = sys.base_dim();
    let k = sys.bundle.group_dim();
    if s0.len() != k {
        return Err(Error::shape("group initial condition has wrong length"));
    }
    if red.len() < 2 {
        return Err(Error::shape("reduced trajectory needs at least two points"));
    }
    let h = red.t[1] - red.t[0];
    let steps = red.len() - 1;
    let mut r = red.r[0].clone();
    let mut pbar = red.pbar[0].clone();
    let mut s = s0.to_vec();

    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        multipliers: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        constraint_residual: Vec::with_capacity(steps + 1),
    };

    let rhs = |r: &[f64], pbar: &[f64]| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (rdot, pdot) = sys.reduced_rhs(r, pbar)?;
        let a = sys.bundle.connection_generic::<f64>(r)?;
        let mut sdot = vec![0.0; k];
        for row in 0..k {
            let mut acc = 0.0;
            for col in 0..m {
                acc += a[row * m + col] * rdot[col];
            }
            sdot[row] = -acc;
        }
        Ok((rdot, pdot, sdot))
    };

    for step in 0..=steps {
        let t = red.t[0] + step as f64 * h;
        let state = sys.horizontal_lift_k(&r, &s, &pbar)?;
        let asm = assemble(&sys.l_full, &sys.bundle.delta, &state.q, &state.v)?;
        let sol = solve_step(&asm)?;
        let residual = {
            let res = sys.bundle.delta.apply(&state.q, &state.v);
            if res.len() == 0 {
                0.0
            } else {
                res.amax()
            }
        };
        traj.t.push(t);
        traj.energy.push(crate::geometry::generalized_energy(&sys.l_full, &state));
        traj.constraint_residual.push(residual);
        traj.multipliers.push(sol.lambda);
        traj.states.push(state);
        if step == steps {
            break;
        }
        let k1 = rhs(&r, &pbar)?;
        let k2 = rhs(&shift(&r, &k1.0, 0.5 * h), &shift(&pbar, &k1.1, 0.5 * h))?;
        let k3 = rhs(&shift(&r, &k2.0, 0.5 * h), &shift(&pbar, &k2.1, 0.5 * h))?;
        let k4 = rhs(&shift(&r, &k3.0, h), &shift(&pbar, &k3.1, h))?;
        for i in 0..m {
            r[i] += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            pbar[i] += h / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        for j in 0..k {
            s[j] += h / 6.0 * (k1.2[j] + 2.0 * k2.2[j] + 2.0 * k3.2[j] + k4.2[j]);
        }
    }
    Ok(traj)
}

/// Result of checking a candidate reduced Hamilton-Jacobi solution gbar:
/// Hbar o gbar must be a constant and d gbar + gbar^* Xi must vanish.
#[derive(Clone, Debug)]
pub struct ReducedDhjCheck {
    pub hbar_mean: f64,
    pub hbar_dev: f64,
    pub twoform_residual: f64,
}

pub fn reduced_dhj_check(
    sys: &ReducedSystem,
    gamma_bar: &dyn ArrayMapDyn,
    samples_r: &[Vec<f64>],
) -> Result<ReducedDhjCheck> {
    let m = sys.base_dim();
    if gamma_bar.dim_in() != m || gamma_bar.dim_out() != m {
        return Err(Error::shape("reduced one-form dimensions do not match the base"));
    }
    let mut values = Vec::with_capacity(samples_r.len());
    let mut worst = 0.0_f64;
    for r in samples_r {
        let mut gb = vec![0.0; m];
        gamma_bar.eval_f64(r, &mut gb);
        values.push(sys.hamiltonian(r, &gb)?);
        let xi = sys.xi_matrix(r, &gb)?;
        for al in 0..m {
            for be in al + 1..m {
                let mut u = vec![0.0; m];
                let mut w = vec![0.0; m];
                u[al] = 1.0;
                w[be] = 1.0;
                let dg = crate::autodiff::exterior_derivative_2form(gamma_bar, r, &u, &w)?;
                worst = worst.max((dg + xi[(al, be)]).abs());
            }
        }
    }
    let mean = if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    };
    let dev = values.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max);
    Ok(ReducedDhjCheck { hbar_mean: mean, hbar_dev: dev, twoform_residual: worst })
}

struct LiftedX {
    sys: ReducedSystem,
    gamma_bar: Arc<dyn ArrayMapDyn>,
}

impl ArrayMap for LiftedX {
    fn dim_in(&self) -> usize {
        self.sys.bundle.dim()
    }
    fn dim_out(&self) -> usize {
        self.sys.bundle.dim()
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let m = self.sys.base_dim();
        let r = self.sys.bundle.base_components(q);
        let mut gb = vec![S::constant(0.0); m];
        S::eval_array_map(self.gamma_bar.as_ref(), &r, &mut gb);
        let filled = self
            .sys
            .reduced_velocity(&r, &gb)
            .and_then(|vbar| horizontal_lift_delta(&self.sys.bundle, &r, &vbar));
        match filled {
            Ok(v) => out.copy_from_slice(&v),
            Err(_) => out.iter_mut().for_each(|x| *x = S::constant(f64::NAN)),
        }
    }
}

struct LiftedGamma {
    sys: ReducedSystem,
    gamma_bar: Arc<dyn ArrayMapDyn>,
}

impl ArrayMap for LiftedGamma {
    fn dim_in(&self) -> usize {
        self.sys.bundle.dim()
    }
    fn dim_out(&self) -> usize {
        self.sys.bundle.dim()
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let m = self.sys.base_dim();
        let r = self.sys.bundle.base_components(q);
        let mut gb = vec![S::constant(0.0); m];
        S::eval_array_map(self.gamma_bar.as_ref(), &r, &mut gb);
        let filled = self
            .sys
            .reduced_velocity(&r, &gb)
            .and_then(|vbar| horizontal_lift_delta(&self.sys.bundle, &r, &vbar))
            .map(|v| partial_v_lagrangian(self.sys.l_full.dyn_ref(), q, &v));
        match filled {
            Ok(p) => out.copy_from_slice(&p),
            Err(_) => out.iter_mut().for_each(|x| *x = S::constant(f64::NAN)),
        }
    }
}

/// Lift a reduced Hamilton-Jacobi solution to a full Pontryagin-bundle
/// section: Upsilon = hl_K o gamma_bar o pi.
pub fn lift_reduced_solution(
    sys: &ReducedSystem,
    gamma_bar: Arc<dyn ArrayMapDyn>,
) -> Result<HjSection> {
    let m = sys.base_dim();
    if gamma_bar.dim_in() != m || gamma_bar.dim_out() != m {
        return Err(Error::shape("reduced one-form dimensions do not match the base"));
    }
    HjSection::from_arcs(
        Arc::new(LiftedX { sys: sys.clone(), gamma_bar: Arc::clone(&gamma_bar) }),
        Arc::new(LiftedGamma { sys: sys.clone(), gamma_bar }),
    )
}

/// Consistency summary for the almost-symplectic reduction: sampled tangent
/// pairs on the constraint momentum manifold compare the restricted
/// canonical form against the pullback of Omega_nh.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub checked: usize,
    pub filtered: usize,
    pub max_dev: f64,
}

/// For each sampled (r, s, pbar) draw tangent pairs of the constraint
/// momentum manifold P through horizontal curves and compare
/// Omega_can(u1, u2) against Omega_bar(ub1, ub2) - Xi(rb1, rb2). Tangents
/// whose base part leaves the distribution are filtered out, not compared;
/// a contaminated tangent is injected periodically to exercise the filter.
pub fn appendix_consistency(
    sys: &ReducedSystem,
    samples: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
    seed: u64,
) -> Result<ConsistencyReport> {
    let m = sys.base_dim();
    let k = sys.bundle.group_dim();
    let n = sys.bundle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0_usize;
    let mut filtered = 0_usize;
    let mut max_dev = 0.0_f64;

    for (idx, (r, s, pbar)) in samples.iter().enumerate() {
        let draw =
            |rng: &mut ChaCha8Rng| -> (Vec<f64>, Vec<f64>) {
                let dr: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let dp: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (dr, dp)
            };
        let (dr1, dp1) = draw(&mut rng);
        let (dr2, dp2) = draw(&mut rng);
        // Every fourth sample contaminates the first tangent with a vertical
        // component, which must be filtered rather than compared.
        let contaminate = idx % 4 == 3;
        let vertical: Vec<f64> =
            (0..k).map(|_| rng.gen_range(0.5..1.0)).collect();

        let a = sys.bundle.connection(r)?;
        let tangent = |dr: &[f64], dp: &[f64], vert: Option<&[f64]>| -> Result<(Vec<f64>, Vec<f64>)> {
            // Curve t -> (r + t dr, s - t A dr (+ t w), pbar + t dp),
            // differentiated through hl_P with a single dual lane.
            let rd: Vec<Dual1> = r
                .iter()
                .zip(dr.iter())
                .map(|(&x, &d)| {
                    let mut v = Dual1::constant(x);
                    v.du[0] = d;
                    v
                })
                .collect();
            let mut sdot: Vec<f64> = (0..k)
                .map(|row| -(0..m).map(|col| a[(row, col)] * dr[col]).sum::<f64>())
                .collect();
            if let Some(w) = vert {
                for (x, y) in sdot.iter_mut().zip(w.iter()) {
                    *x += y;
                }
            }
            let sd: Vec<Dual1> = s
                .iter()
                .zip(sdot.iter())
                .map(|(&x, &d)| {
                    let mut v = Dual1::constant(x);
                    v.du[0] = d;
                    v
                })
                .collect();
            let pd: Vec<Dual1> = pbar
                .iter()
                .zip(dp.iter())
                .map(|(&x, &d)| {
                    let mut v = Dual1::constant(x);
                    v.du[0] = d;
                    v
                })
                .collect();
            let p_lift = sys.horizontal_lift_p::<Dual1>(&rd, &sd, &pd)?;
            let q_lift = sys.bundle.embed(&rd, &sd);
            let dq: Vec<f64> = q_lift.iter().map(|x| x.du[0]).collect();
            let dpf: Vec<f64> = p_lift.iter().map(|x| x.du[0]).collect();
            Ok((dq, dpf))
        };

        let u1 = tangent(&dr1, &dp1, if contaminate { Some(&vertical) } else { None })?;
        let u2 = tangent(&dr2, &dp2, None)?;

        // Membership filter: the base part must lie in the distribution.
        let q = sys.bundle.embed(r, s);
        let in_h = |dq: &[f64]| -> bool {
            let res = sys.bundle.delta.apply(&q, dq);
            res.len() == 0 || res.amax() <= 1e-9
        };
        if !in_h(&u1.0) || !in_h(&u2.0) {
            filtered += 1;
            continue;
        }

        let omega_can = |a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                acc += a.0[i] * b.1[i] - b.0[i] * a.1[i];
            }
            acc
        };
        let lhs = omega_can(&u1, &u2);
        let mut rhs = 0.0;
        for i in 0..m {
            rhs += dr1[i] * dp2[i] - dr2[i] * dp1[i];
        }
        let xi = sys.xi_matrix(r, pbar)?;
        let d1 = DVector::from_column_slice(&dr1);
        let d2 = DVector::from_column_slice(&dr2);
        rhs -= (d1.transpose() * xi * d2)[(0, 0)];
        max_dev = max_dev.max((lhs - rhs).abs());
        checked += 1;
    }
    Ok(ConsistencyReport { checked, filtered, max_dev })
}
