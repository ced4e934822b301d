//! Forward-mode automatic differentiation on fixed-lane dual numbers.
//!
//! `Dual1` carries a value and up to [`MAX_LANES`] first derivatives; `Dual2`
//! nests `Dual1` tangents and therefore carries exact second derivatives.
//! The [`Scalar`] trait abstracts over `f64`, `Dual1` and `Dual2` so that a
//! field written once as a generic function is evaluable at every level.
//! Derivatives are exact to round-off; no finite differencing is involved.

use crate::error::{Error, Result};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Maximum number of simultaneous derivative lanes. Chosen so one nested
/// evaluation covers a full (q, v) second-derivative block for every built-in
/// system (2n <= 12).
pub const MAX_LANES: usize = 12;

/// A scalar-valued field on R^m, written once over any [`Scalar`].
pub trait ScalarMap {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> S;
}

/// An R^d-valued field on R^m (one-forms, vector fields, embeddings, ...).
pub trait ArrayMap {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]);
}

/// A Lagrangian-shaped field: two slots of equal dimension.
pub trait Lagrangian {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, q: &[S], v: &[S]) -> S;
}

/// Object-safe view of [`ScalarMap`]; blanket-implemented so any concrete map
/// can be stored behind `Arc<dyn ScalarMapDyn>` and still be evaluated at
/// every scalar level through [`Scalar::eval_scalar_map`].
pub trait ScalarMapDyn: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_f64(&self, x: &[f64]) -> f64;
    fn eval_d1(&self, x: &[Dual1]) -> Dual1;
    fn eval_d2(&self, x: &[Dual2]) -> Dual2;
}

impl<T: ScalarMap + Send + Sync> ScalarMapDyn for T {
    fn dim(&self) -> usize {
        ScalarMap::dim(self)
    }
    fn eval_f64(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn eval_d1(&self, x: &[Dual1]) -> Dual1 {
        self.eval(x)
    }
    fn eval_d2(&self, x: &[Dual2]) -> Dual2 {
        self.eval(x)
    }
}

/// Object-safe view of [`ArrayMap`].
pub trait ArrayMapDyn: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval_f64(&self, x: &[f64], out: &mut [f64]);
    fn eval_d1(&self, x: &[Dual1], out: &mut [Dual1]);
    fn eval_d2(&self, x: &[Dual2], out: &mut [Dual2]);
}

impl<T: ArrayMap + Send + Sync> ArrayMapDyn for T {
    fn dim_in(&self) -> usize {
        ArrayMap::dim_in(self)
    }
    fn dim_out(&self) -> usize {
        ArrayMap::dim_out(self)
    }
    fn eval_f64(&self, x: &[f64], out: &mut [f64]) {
        self.eval(x, out)
    }
    fn eval_d1(&self, x: &[Dual1], out: &mut [Dual1]) {
        self.eval(x, out)
    }
    fn eval_d2(&self, x: &[Dual2], out: &mut [Dual2]) {
        self.eval(x, out)
    }
}

/// Object-safe view of [`Lagrangian`].
pub trait LagrangianDyn: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_f64(&self, q: &[f64], v: &[f64]) -> f64;
    fn eval_d1(&self, q: &[Dual1], v: &[Dual1]) -> Dual1;
    fn eval_d2(&self, q: &[Dual2], v: &[Dual2]) -> Dual2;
}

impl<T: Lagrangian + Send + Sync> LagrangianDyn for T {
    fn dim(&self) -> usize {
        Lagrangian::dim(self)
    }
    fn eval_f64(&self, q: &[f64], v: &[f64]) -> f64 {
        self.eval(q, v)
    }
    fn eval_d1(&self, q: &[Dual1], v: &[Dual1]) -> Dual1 {
        self.eval(q, v)
    }
    fn eval_d2(&self, q: &[Dual2], v: &[Dual2]) -> Dual2 {
        self.eval(q, v)
    }
}

/// Closed set of scalar types the engine computes over.
///
/// `Lift` is the next dual level: differentiating a quantity that is already
/// `Self`-valued evaluates the field at `Self::Lift`. `f64` lifts to `Dual1`,
/// `Dual1` to `Dual2`; `Dual2` is the ceiling and panics if seeded, which no
/// engine path does.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    type Lift: Scalar;

    fn constant(x: f64) -> Self;
    /// Innermost real value.
    fn re(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Multiply by a plain constant.
    fn scale(self, k: f64) -> Self;

    /// Embed into the next dual level with zero tangents.
    fn lift(self) -> Self::Lift;
    /// Embed into the next dual level with a unit seed in `lane`.
    fn lift_seed(self, lane: usize) -> Self::Lift;
    /// Extract the `lane` tangent of a lifted value back at this level.
    fn extract(l: &Self::Lift, lane: usize) -> Self;

    fn eval_scalar_map(f: &dyn ScalarMapDyn, x: &[Self]) -> Self;
    fn eval_array_map(f: &dyn ArrayMapDyn, x: &[Self], out: &mut [Self]);
    fn eval_lagrangian(f: &dyn LagrangianDyn, q: &[Self], v: &[Self]) -> Self;
}

#[derive(Clone, Copy, Debug)]
pub struct Dual<T> {
    pub re: T,
    pub du: [T; MAX_LANES],
}

pub type Dual1 = Dual<f64>;
pub type Dual2 = Dual<Dual1>;

impl<T: Scalar> Dual<T> {
    pub fn constant(x: f64) -> Self {
        Dual { re: T::constant(x), du: [T::constant(0.0); MAX_LANES] }
    }

    /// Value `x` with a unit derivative in `lane`.
    pub fn seeded(x: f64, lane: usize) -> Self {
        let mut d = Self::constant(x);
        d.du[lane] = T::constant(1.0);
        d
    }

    fn map_tangents(self, re: T, f: impl Fn(T) -> T) -> Self {
        let mut du = self.du;
        for t in du.iter_mut() {
            *t = f(*t);
        }
        Dual { re, du }
    }

    fn sin_impl(self) -> Self {
        let c = self.re.cos();
        self.map_tangents(self.re.sin(), |t| t * c)
    }

    fn cos_impl(self) -> Self {
        let s = -self.re.sin();
        self.map_tangents(self.re.cos(), |t| t * s)
    }

    fn sqrt_impl(self) -> Self {
        let r = self.re.sqrt();
        let d = T::constant(0.5) / r;
        self.map_tangents(r, |t| t * d)
    }

    fn powi_impl(self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            _ if n < 0 => Self::constant(1.0) / self.powi_impl(-n),
            _ => {
                let mut acc = self;
                for _ in 1..n {
                    acc = acc * self;
                }
                acc
            }
        }
    }

    fn scale_impl(self, k: f64) -> Self {
        self.map_tangents(self.re.scale(k), |t| t.scale(k))
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut du = self.du;
        for (t, r) in du.iter_mut().zip(rhs.du.iter()) {
            *t = *t + *r;
        }
        Dual { re: self.re + rhs.re, du }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut du = self.du;
        for (t, r) in du.iter_mut().zip(rhs.du.iter()) {
            *t = *t - *r;
        }
        Dual { re: self.re - rhs.re, du }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut du = [T::constant(0.0); MAX_LANES];
        for i in 0..MAX_LANES {
            du[i] = self.re * rhs.du[i] + rhs.re * self.du[i];
        }
        Dual { re: self.re * rhs.re, du }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re;
        let mut du = [T::constant(0.0); MAX_LANES];
        for i in 0..MAX_LANES {
            du[i] = (self.du[i] - q * rhs.du[i]) / rhs.re;
        }
        Dual { re: q, du }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map_tangents(-self.re, |t| -t)
    }
}

impl Scalar for f64 {
    type Lift = Dual1;

    fn constant(x: f64) -> Self {
        x
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }

    fn lift(self) -> Dual1 {
        Dual1::constant(self)
    }
    fn lift_seed(self, lane: usize) -> Dual1 {
        Dual1::seeded(self, lane)
    }
    fn extract(l: &Dual1, lane: usize) -> f64 {
        l.du[lane]
    }

    fn eval_scalar_map(f: &dyn ScalarMapDyn, x: &[Self]) -> Self {
        f.eval_f64(x)
    }
    fn eval_array_map(f: &dyn ArrayMapDyn, x: &[Self], out: &mut [Self]) {
        f.eval_f64(x, out)
    }
    fn eval_lagrangian(f: &dyn LagrangianDyn, q: &[Self], v: &[Self]) -> Self {
        f.eval_f64(q, v)
    }
}

impl Scalar for Dual1 {
    type Lift = Dual2;

    fn constant(x: f64) -> Self {
        Dual::constant(x)
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        self.sin_impl()
    }
    fn cos(self) -> Self {
        self.cos_impl()
    }
    fn sqrt(self) -> Self {
        self.sqrt_impl()
    }
    fn powi(self, n: i32) -> Self {
        self.powi_impl(n)
    }
    fn scale(self, k: f64) -> Self {
        self.scale_impl(k)
    }

    fn lift(self) -> Dual2 {
        Dual2 { re: self, du: [Dual1::constant(0.0); MAX_LANES] }
    }
    fn lift_seed(self, lane: usize) -> Dual2 {
        let mut l = self.lift();
        l.du[lane] = Dual1::constant(1.0);
        l
    }
    fn extract(l: &Dual2, lane: usize) -> Dual1 {
        l.du[lane]
    }

    fn eval_scalar_map(f: &dyn ScalarMapDyn, x: &[Self]) -> Self {
        f.eval_d1(x)
    }
    fn eval_array_map(f: &dyn ArrayMapDyn, x: &[Self], out: &mut [Self]) {
        f.eval_d1(x, out)
    }
    fn eval_lagrangian(f: &dyn LagrangianDyn, q: &[Self], v: &[Self]) -> Self {
        f.eval_d1(q, v)
    }
}

impl Scalar for Dual2 {
    type Lift = Dual2;

    fn constant(x: f64) -> Self {
        Dual::constant(x)
    }
    fn re(&self) -> f64 {
        self.re.re
    }
    fn sin(self) -> Self {
        self.sin_impl()
    }
    fn cos(self) -> Self {
        self.cos_impl()
    }
    fn sqrt(self) -> Self {
        self.sqrt_impl()
    }
    fn powi(self, n: i32) -> Self {
        self.powi_impl(n)
    }
    fn scale(self, k: f64) -> Self {
        self.scale_impl(k)
    }

    fn lift(self) -> Dual2 {
        panic!("second-order duals are the nesting ceiling; restructure to differentiate at most twice")
    }
    fn lift_seed(self, _lane: usize) -> Dual2 {
        panic!("second-order duals are the nesting ceiling; restructure to differentiate at most twice")
    }
    fn extract(_l: &Dual2, _lane: usize) -> Dual2 {
        panic!("second-order duals are the nesting ceiling; restructure to differentiate at most twice")
    }

    fn eval_scalar_map(f: &dyn ScalarMapDyn, x: &[Self]) -> Self {
        f.eval_d2(x)
    }
    fn eval_array_map(f: &dyn ArrayMapDyn, x: &[Self], out: &mut [Self]) {
        f.eval_d2(x, out)
    }
    fn eval_lagrangian(f: &dyn LagrangianDyn, q: &[Self], v: &[Self]) -> Self {
        f.eval_d2(q, v)
    }
}

fn check_lanes(m: usize) -> Result<()> {
    if m > MAX_LANES {
        return Err(Error::shape(format!(
            "dimension {m} exceeds the {MAX_LANES} supported derivative lanes"
        )));
    }
    Ok(())
}

fn seed_point(x: &[f64]) -> Vec<Dual1> {
    x.iter().enumerate().map(|(i, &xi)| Dual1::seeded(xi, i)).collect()
}

/// Gradient of a scalar field at `x`. Exact to round-off.
pub fn grad_scalar(f: &dyn ScalarMapDyn, x: &[f64]) -> Result<Vec<f64>> {
    let m = f.dim();
    if x.len() != m {
        return Err(Error::shape(format!("field on R^{m} evaluated at a point of length {}", x.len())));
    }
    check_lanes(m)?;
    let y = f.eval_d1(&seed_point(x));
    if !y.re.is_finite() {
        return Err(Error::Domain { index: None });
    }
    for (i, d) in y.du[..m].iter().enumerate() {
        if !d.is_finite() {
            return Err(Error::Domain { index: Some(i) });
        }
    }
    Ok(y.du[..m].to_vec())
}

/// Jacobian of a covector/vector field: entry `(i, j)` is the derivative of
/// component `j` along coordinate `i`.
pub fn jacobian_covector(gamma: &dyn ArrayMapDyn, x: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
    let m = gamma.dim_in();
    let d = gamma.dim_out();
    if x.len() != m {
        return Err(Error::shape(format!("field on R^{m} evaluated at a point of length {}", x.len())));
    }
    check_lanes(m)?;
    let mut out = vec![Dual1::constant(0.0); d];
    gamma.eval_d1(&seed_point(x), &mut out);
    let mut j = nalgebra::DMatrix::zeros(m, d);
    for (col, y) in out.iter().enumerate() {
        if !y.re.is_finite() {
            return Err(Error::Domain { index: None });
        }
        for row in 0..m {
            if !y.du[row].is_finite() {
                return Err(Error::Domain { index: Some(row) });
            }
            j[(row, col)] = y.du[row];
        }
    }
    Ok(j)
}

/// Evaluate the exterior derivative of a one-form on a pair of vectors:
/// d(gamma)(u, w) = sum_ij (d_i gamma_j - d_j gamma_i) u^i w^j.
pub fn exterior_derivative_2form(
    gamma: &dyn ArrayMapDyn,
    x: &[f64],
    u: &[f64],
    w: &[f64],
) -> Result<f64> {
    let m = gamma.dim_in();
    if gamma.dim_out() != m {
        return Err(Error::shape(format!(
            "one-form must have as many components ({}) as coordinates ({m})",
            gamma.dim_out()
        )));
    }
    if u.len() != m || w.len() != m {
        return Err(Error::shape(format!(
            "vectors of length {} and {} paired with a form on R^{m}",
            u.len(),
            w.len()
        )));
    }
    let j = jacobian_covector(gamma, x)?;
    let mut acc = 0.0;
    for i in 0..m {
        for k in 0..m {
            acc += (j[(i, k)] - j[(k, i)]) * u[i] * w[k];
        }
    }
    Ok(acc)
}

/// Value, both gradients and the three second-derivative blocks of a
/// Lagrangian at `(q, v)`, from a single nested evaluation.
pub struct LagrangianBlocks {
    pub value: f64,
    pub grad_q: Vec<f64>,
    pub grad_v: Vec<f64>,
    /// Velocity Hessian `M[i][j] = d2L/dv_i dv_j`.
    pub m_vv: nalgebra::DMatrix<f64>,
    /// Mixed block `W[j][i] = d2L/dv_j dq_i`.
    pub w_vq: nalgebra::DMatrix<f64>,
}

pub fn lagrangian_blocks(l: &dyn LagrangianDyn, q: &[f64], v: &[f64]) -> Result<LagrangianBlocks> {
    let n = l.dim();
    if q.len() != n || v.len() != n {
        return Err(Error::shape(format!(
            "Lagrangian on R^{n} evaluated at (q, v) of lengths ({}, {})",
            q.len(),
            v.len()
        )));
    }
    check_lanes(2 * n)?;
    // Lanes 0..n seed q, lanes n..2n seed v: each input carries its lane seed
    // both in the inner layer (re.du) and the outer tangents (du), so
    // y.du[a].du[b] is the exact (a, b) second-derivative entry.
    let seed2 = |x: f64, lane: usize| Dual1::seeded(x, lane).lift_seed(lane);
    let qd: Vec<Dual2> = q.iter().enumerate().map(|(i, &x)| seed2(x, i)).collect();
    let vd: Vec<Dual2> = v.iter().enumerate().map(|(i, &x)| seed2(x, n + i)).collect();
    let y = l.eval_d2(&qd, &vd);
    let value = y.re.re;
    if !value.is_finite() {
        return Err(Error::Domain { index: None });
    }
    let mut grad_q = vec![0.0; n];
    let mut grad_v = vec![0.0; n];
    for i in 0..n {
        grad_q[i] = y.re.du[i];
        grad_v[i] = y.re.du[n + i];
        if !grad_q[i].is_finite() {
            return Err(Error::Domain { index: Some(i) });
        }
        if !grad_v[i].is_finite() {
            return Err(Error::Domain { index: Some(n + i) });
        }
    }
    let mut m_vv = nalgebra::DMatrix::zeros(n, n);
    let mut w_vq = nalgebra::DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            m_vv[(j, i)] = y.du[n + j].du[n + i];
            w_vq[(j, i)] = y.du[n + j].du[i];
            if !m_vv[(j, i)].is_finite() || !w_vq[(j, i)].is_finite() {
                return Err(Error::Domain { index: Some(n + j) });
            }
        }
    }
    Ok(LagrangianBlocks { value, grad_q, grad_v, m_vv, w_vq })
}

/// Fiber derivative dL/dv at any scalar level (the Legendre transform input
/// side). Works for `S = f64` and `S = Dual1`; `S = Dual2` would need a third
/// nesting level and panics.
pub fn partial_v_lagrangian<S: Scalar>(l: &dyn LagrangianDyn, q: &[S], v: &[S]) -> Vec<S> {
    let n = l.dim();
    assert!(n <= MAX_LANES, "dimension exceeds derivative lanes");
    let ql: Vec<S::Lift> = q.iter().map(|x| x.lift()).collect();
    let vl: Vec<S::Lift> = v.iter().enumerate().map(|(i, x)| x.lift_seed(i)).collect();
    let y = S::Lift::eval_lagrangian(l, &ql, &vl);
    (0..n).map(|i| S::extract(&y, i)).collect()
}

/// Same pattern for dL/dq at any scalar level.
pub fn partial_q_lagrangian<S: Scalar>(l: &dyn LagrangianDyn, q: &[S], v: &[S]) -> Vec<S> {
    let n = l.dim();
    assert!(n <= MAX_LANES, "dimension exceeds derivative lanes");
    let ql: Vec<S::Lift> = q.iter().enumerate().map(|(i, x)| x.lift_seed(i)).collect();
    let vl: Vec<S::Lift> = v.iter().map(|x| x.lift()).collect();
    let y = S::Lift::eval_lagrangian(l, &ql, &vl);
    (0..n).map(|i| S::extract(&y, i)).collect()
}
