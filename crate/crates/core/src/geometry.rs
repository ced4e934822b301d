//! Core geometric objects: Lagrangian fields, regular linear velocity
//! constraint distributions, the Dirac differential, Pontryagin-bundle states
//! and the membership residuals of the induced Dirac structure.

use crate::autodiff::{
    partial_q_lagrangian, partial_v_lagrangian, ArrayMap, ArrayMapDyn, Dual1, Lagrangian,
    LagrangianDyn, Scalar, MAX_LANES,
};
use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A Lagrangian L(q, v) on R^n, evaluable at every autodiff level.
#[derive(Clone)]
pub struct LagrangianField {
    inner: Arc<dyn LagrangianDyn>,
    dim: usize,
}

impl LagrangianField {
    pub fn new<T: Lagrangian + Send + Sync + 'static>(f: T) -> Self {
        let dim = f.dim();
        LagrangianField { inner: Arc::new(f), dim }
    }

    pub fn from_arc(inner: Arc<dyn LagrangianDyn>) -> Self {
        let dim = inner.dim();
        LagrangianField { inner, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        S::eval_lagrangian(self.inner.as_ref(), q, v)
    }

    pub fn dyn_ref(&self) -> &dyn LagrangianDyn {
        self.inner.as_ref()
    }

    pub fn arc(&self) -> Arc<dyn LagrangianDyn> {
        Arc::clone(&self.inner)
    }
}

/// A regular distribution on Q given as the joint kernel of k one-forms
/// omega^a = sum_j omega^a_j(q) dq^j. The underlying map returns the k x n
/// coefficient matrix in row-major order.
#[derive(Clone)]
pub struct ConstraintDistribution {
    forms: Arc<dyn ArrayMapDyn>,
    dim: usize,
    count: usize,
}

struct NoForms {
    dim: usize,
}

impl ArrayMap for NoForms {
    fn dim_in(&self) -> usize {
        self.dim
    }
    fn dim_out(&self) -> usize {
        0
    }
    fn eval<S: Scalar>(&self, _x: &[S], _out: &mut [S]) {}
}

impl ConstraintDistribution {
    /// `count` one-forms on R^dim; `forms` must fill a row-major count x dim
    /// coefficient matrix.
    pub fn new<T: ArrayMap + Send + Sync + 'static>(count: usize, forms: T) -> Result<Self> {
        let dim = forms.dim_in();
        if forms.dim_out() != count * dim {
            return Err(Error::shape(format!(
                "{count} forms on R^{dim} need {} components, map provides {}",
                count * dim,
                forms.dim_out()
            )));
        }
        if count > dim {
            return Err(Error::shape(format!("{count} independent forms cannot exist on R^{dim}")));
        }
        Ok(ConstraintDistribution { forms: Arc::new(forms), dim, count })
    }

    /// The unconstrained case Delta_Q = TQ (k = 0).
    pub fn unconstrained(dim: usize) -> Self {
        ConstraintDistribution { forms: Arc::new(NoForms { dim }), dim, count: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of constraint one-forms k.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Coefficient matrix omega(q), k x n.
    pub fn matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let mut out = vec![0.0; self.count * self.dim];
        self.forms.eval_f64(q, &mut out);
        DMatrix::from_row_slice(self.count, self.dim, &out)
    }

    /// Row-major omega(q) at any scalar level.
    pub fn matrix_generic<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let mut out = vec![S::constant(0.0); self.count * self.dim];
        S::eval_array_map(self.forms.as_ref(), q, &mut out);
        out
    }

    /// omega(q) v.
    pub fn apply(&self, q: &[f64], v: &[f64]) -> DVector<f64> {
        &self.matrix(q) * DVector::from_column_slice(v)
    }

    /// Hidden acceleration-level drift c_a = sum_ij (d omega^a_j / d q_i) v^i v^j,
    /// so that the velocity constraint is preserved when omega(q) vdot = -c.
    pub fn drift(&self, q: &[f64], v: &[f64]) -> DVector<f64> {
        let n = self.dim;
        let k = self.count;
        assert!(n <= MAX_LANES, "dimension exceeds derivative lanes");
        let seeds: Vec<Dual1> =
            q.iter().enumerate().map(|(i, &x)| Dual1::seeded(x, i)).collect();
        let mut out = vec![Dual1::constant(0.0); k * n];
        self.forms.eval_d1(&seeds, &mut out);
        let mut c = DVector::zeros(k);
        for a in 0..k {
            let mut acc = 0.0;
            for j in 0..n {
                let entry = &out[a * n + j];
                let mut along_v = 0.0;
                for i in 0..n {
                    along_v += entry.du[i] * v[i];
                }
                acc += along_v * v[j];
            }
            c[a] = acc;
        }
        c
    }

    pub fn forms_dyn(&self) -> &dyn ArrayMapDyn {
        self.forms.as_ref()
    }
}

/// A point of the Pontryagin bundle TQ x T*Q over a common base point.
#[derive(Clone, Debug)]
pub struct PontryaginState {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl PontryaginState {
    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Legendre transform p = dL/dv at (q, v).
pub fn legendre(l: &LagrangianField, q: &[f64], v: &[f64]) -> Vec<f64> {
    partial_v_lagrangian(l.dyn_ref(), q, v)
}

/// Infinity norm of a vector, 0 when empty.
pub fn sup_abs(v: &DVector<f64>) -> f64 {
    if v.len() == 0 {
        0.0
    } else {
        v.amax()
    }
}

/// Sup-norm of the velocity Hessian d2L/dv2 at (q, v).
pub fn lagrangian_blocks_max(l: &LagrangianField, q: &[f64], v: &[f64]) -> Result<f64> {
    let blocks = crate::autodiff::lagrangian_blocks(l.dyn_ref(), q, v)?;
    Ok(if blocks.m_vv.len() == 0 { 0.0 } else { blocks.m_vv.amax() })
}

/// Build the Pontryagin state over (q, v) with p from the Legendre transform,
/// i.e. a point of the constraint momentum space when v lies in the
/// distribution.
pub fn lift_velocity(l: &LagrangianField, q: &[f64], v: &[f64]) -> PontryaginState {
    PontryaginState { q: q.to_vec(), v: v.to_vec(), p: legendre(l, q, v) }
}

/// The Dirac differential of L in local coordinates: base point, fiber
/// momentum dL/dv, the sign-flipped base differential -dL/dq and the
/// velocity slot.
#[derive(Clone, Debug)]
pub struct DiracDifferential {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub minus_dq: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn dirac_differential(l: &LagrangianField, q: &[f64], v: &[f64]) -> DiracDifferential {
    let p = partial_v_lagrangian(l.dyn_ref(), q, v);
    let dq = partial_q_lagrangian(l.dyn_ref(), q, v);
    DiracDifferential {
        q: q.to_vec(),
        p,
        minus_dq: dq.into_iter().map(|x| -x).collect(),
        v: v.to_vec(),
    }
}

/// Generalized energy E(q, v, p) = <p, v> - L(q, v) on the Pontryagin bundle.
pub fn generalized_energy(l: &LagrangianField, s: &PontryaginState) -> f64 {
    let pv: f64 = s.p.iter().zip(s.v.iter()).map(|(p, v)| p * v).sum();
    pv - l.eval(&s.q, &s.v)
}

/// Residuals of membership in the constraint momentum space K: the velocity
/// must lie in the distribution and the momentum on the image of the Legendre
/// transform over it.
pub fn k_residual(
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    s: &PontryaginState,
) -> (DVector<f64>, DVector<f64>) {
    let constraint = delta.apply(&s.q, &s.v);
    let p = legendre(l, &s.q, &s.v);
    let fiber = DVector::from_iterator(s.p.len(), s.p.iter().zip(p.iter()).map(|(a, b)| a - b));
    (constraint, fiber)
}

/// Orthonormal basis of Delta_Q(q) = ker omega(q) as the columns of an
/// n x (n - k) matrix. Deterministic (Householder, no pivoting). Errors with
/// `Rank` when omega(q) is closer than 1e-10 to rank-deficient.
pub fn horizontal_basis(delta: &ConstraintDistribution, q: &[f64]) -> Result<DMatrix<f64>> {
    let n = delta.dim();
    let k = delta.count();
    if k == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let w = delta.matrix(q);
    let sigma_min = linalg::min_singular_value(&w);
    if sigma_min <= 1e-10 {
        return Err(Error::Rank { sigma_min, tol: 1e-10 });
    }
    let (_, complement) = linalg::orthonormal_range_and_complement(&w.transpose())?;
    Ok(complement)
}

/// Orthonormal basis of the annihilator Delta_Q(q)^o = span of the constraint
/// one-forms, as the columns of an n x k matrix.
pub fn annihilator_basis(delta: &ConstraintDistribution, q: &[f64]) -> Result<DMatrix<f64>> {
    let n = delta.dim();
    let k = delta.count();
    if k == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    let w = delta.matrix(q);
    let sigma_min = linalg::min_singular_value(&w);
    if sigma_min <= 1e-10 {
        return Err(Error::Rank { sigma_min, tol: 1e-10 });
    }
    let (range, _) = linalg::orthonormal_range_and_complement(&w.transpose())?;
    Ok(range)
}

/// Residuals of the local membership conditions of the induced Dirac
/// structure at (q, p): for a tangent vector (qdot, pdot) and a covector
/// (alpha_q, alpha_p),
///   qdot in Delta_Q(q),  alpha_p = qdot,  alpha_q + pdot in Delta_Q(q)^o.
/// The last condition is reported as the pairings of alpha_q + pdot with an
/// orthonormal basis of Delta_Q(q).
#[derive(Clone, Debug)]
pub struct DiracMembership {
    pub constraint: DVector<f64>,
    pub fiber: DVector<f64>,
    pub annihilator: DVector<f64>,
}

impl DiracMembership {
    pub fn max_residual(&self) -> f64 {
        let m = |v: &DVector<f64>| if v.len() == 0 { 0.0 } else { v.amax() };
        m(&self.constraint).max(m(&self.fiber)).max(m(&self.annihilator))
    }
}

pub fn induced_dirac_membership(
    delta: &ConstraintDistribution,
    q: &[f64],
    _p: &[f64],
    xdot: (&[f64], &[f64]),
    alpha: (&[f64], &[f64]),
) -> Result<DiracMembership> {
    let n = delta.dim();
    let (qdot, pdot) = xdot;
    let (alpha_q, alpha_p) = alpha;
    if [qdot, pdot, alpha_q, alpha_p].iter().any(|s| s.len() != n) || q.len() != n {
        return Err(Error::shape("membership slots must all have the base dimension"));
    }
    let constraint = delta.apply(q, qdot);
    let fiber =
        DVector::from_iterator(n, alpha_p.iter().zip(qdot.iter()).map(|(a, b)| a - b));
    let h = horizontal_basis(delta, q)?;
    let force = DVector::from_iterator(n, alpha_q.iter().zip(pdot.iter()).map(|(a, b)| a + b));
    let annihilator = h.transpose() * force;
    Ok(DiracMembership { constraint, fiber, annihilator })
}

/// Pontryagin-bundle analogue: same conditions plus the vanishing of the
/// velocity-slot component alpha_v of the covector.
#[derive(Clone, Debug)]
pub struct PontryaginMembership {
    pub constraint: DVector<f64>,
    pub fiber: DVector<f64>,
    pub velocity_slot: DVector<f64>,
    pub annihilator: DVector<f64>,
}

impl PontryaginMembership {
    pub fn max_residual(&self) -> f64 {
        let m = |v: &DVector<f64>| if v.len() == 0 { 0.0 } else { v.amax() };
        m(&self.constraint)
            .max(m(&self.fiber))
            .max(m(&self.velocity_slot))
            .max(m(&self.annihilator))
    }
}

pub fn pontryagin_dirac_membership(
    delta: &ConstraintDistribution,
    s: &PontryaginState,
    xdot: (&[f64], &[f64], &[f64]),
    alpha: (&[f64], &[f64], &[f64]),
) -> Result<PontryaginMembership> {
    let n = delta.dim();
    let (qdot, _vdot, pdot) = xdot;
    let (alpha_q, alpha_v, alpha_p) = alpha;
    if [qdot, pdot, alpha_q, alpha_v, alpha_p].iter().any(|sl| sl.len() != n) {
        return Err(Error::shape("membership slots must all have the base dimension"));
    }
    let base = induced_dirac_membership(delta, &s.q, &s.p, (qdot, pdot), (alpha_q, alpha_p))?;
    Ok(PontryaginMembership {
        constraint: base.constraint,
        fiber: base.fiber,
        velocity_slot: DVector::from_column_slice(alpha_v),
        annihilator: base.annihilator,
    })
}

/// A leaf of the foliation integrating a holonomic distribution, given as an
/// embedding iota: R^{n-k} -> R^n.
#[derive(Clone)]
pub struct HolonomicLeaf {
    map: Arc<dyn ArrayMapDyn>,
    dim: usize,
    ambient: usize,
}

impl HolonomicLeaf {
    pub fn new<T: ArrayMap + Send + Sync + 'static>(map: T) -> Self {
        let dim = map.dim_in();
        let ambient = map.dim_out();
        HolonomicLeaf { map: Arc::new(map), dim, ambient }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient];
        self.map.eval_f64(y, &mut out);
        out
    }

    pub fn embed_generic<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let mut out = vec![S::constant(0.0); self.ambient];
        S::eval_array_map(self.map.as_ref(), y, &mut out);
        out
    }

    /// Tangent map T iota at y: ambient x dim matrix of partials.
    pub fn tangent(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let j = crate::autodiff::jacobian_covector(self.map.as_ref(), y)?;
        Ok(j.transpose())
    }

    /// Max over samples of || omega(iota(y)) T iota(y) ||_inf: zero exactly
    /// when the leaf is tangent to the distribution.
    pub fn tangency_residual(
        &self,
        delta: &ConstraintDistribution,
        samples: &[Vec<f64>],
    ) -> Result<f64> {
        let mut worst = 0.0_f64;
        for y in samples {
            let q = self.embed(y);
            let t = self.tangent(y)?;
            let r = delta.matrix(&q) * t;
            if r.len() > 0 {
                worst = worst.max(r.amax());
            }
        }
        Ok(worst)
    }

    pub fn map_dyn(&self) -> &dyn ArrayMapDyn {
        self.map.as_ref()
    }
}
