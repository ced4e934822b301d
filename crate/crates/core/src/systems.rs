//! Built-in parameterized systems with closed-form reference data: the
//! roller racer and bicycle (nonholonomic, translation-invariant), an LC
//! circuit with holonomic charge constraints, a flat-connection toy, and a
//! point-vortex style Lagrangian that is linear in velocity.

use crate::autodiff::{ArrayMap, ArrayMapDyn, Lagrangian, Scalar};
use crate::error::{Error, Result};
use crate::geometry::{ConstraintDistribution, HolonomicLeaf, LagrangianField};
use crate::hj::HjSection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Clone, Copy, Debug)]
pub struct RollerRacerParams {
    pub m1: f64,
    pub i1: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Default for RollerRacerParams {
    fn default() -> Self {
        RollerRacerParams { m1: 1.0, i1: 1.0, d1: 1.0, d2: 1.0 }
    }
}

impl RollerRacerParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("m1", self.m1), ("i1", self.i1), ("d1", self.d1), ("d2", self.d2)] {
            if !(v > 0.0) {
                return Err(Error::config(format!("roller-racer parameter {name} must be > 0")));
            }
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "m1" => self.m1 = value,
            "i1" => self.i1 = value,
            "d1" => self.d1 = value,
            "d2" => self.d2 = value,
            _ => return Err(Error::config(format!("unknown roller-racer parameter `{key}`"))),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LcParams {
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub a0: f64,
    pub a1: f64,
}

impl Default for LcParams {
    fn default() -> Self {
        LcParams { l: 1.0, c1: 1.0, c2: 1.0, c3: 1.0, a0: 0.0, a1: 0.0 }
    }
}

impl LcParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("l", self.l), ("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(v > 0.0) {
                return Err(Error::config(format!("lc-circuit parameter {name} must be > 0")));
            }
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "l" => self.l = value,
            "c1" => self.c1 = value,
            "c2" => self.c2 = value,
            "c3" => self.c3 = value,
            "a0" => self.a0 = value,
            "a1" => self.a1 = value,
            _ => return Err(Error::config(format!("unknown lc-circuit parameter `{key}`"))),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BicycleParams {
    pub m: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub g: f64,
    pub j0: f64,
    /// The steering-inertia kinetic term is quoted with a bare sin(psi)
    /// factor, which changes sign; the corrected reading squares it. The
    /// corrected form is the default so that default trajectories never
    /// cross the induced degeneracy locus; set corrected = 0 for the
    /// verbatim formula.
    pub corrected: bool,
}

impl Default for BicycleParams {
    fn default() -> Self {
        BicycleParams { m: 1.0, a: 1.0, b: 1.0, c: 1.0, g: 1.0, j0: 1.0, corrected: true }
    }
}

impl BicycleParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("a", self.a), ("b", self.b), ("j0", self.j0)] {
            if !(v > 0.0) {
                return Err(Error::config(format!("bicycle parameter {name} must be > 0")));
            }
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "m" => self.m = value,
            "a" => self.a = value,
            "b" => self.b = value,
            "c" => self.c = value,
            "g" => self.g = value,
            "j0" => self.j0 = value,
            "corrected" => self.corrected = value != 0.0,
            _ => return Err(Error::config(format!("unknown bicycle parameter `{key}`"))),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FlatToyParams {
    pub a1: f64,
    pub a2: f64,
}

impl Default for FlatToyParams {
    fn default() -> Self {
        FlatToyParams { a1: 0.4, a2: -0.3 }
    }
}

impl FlatToyParams {
    fn apply(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "a1" => self.a1 = value,
            "a2" => self.a2 = value,
            _ => return Err(Error::config(format!("unknown flat-toy parameter `{key}`"))),
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lagrangians and constraint forms
// ---------------------------------------------------------------------------

struct RollerRacerL(RollerRacerParams);
impl Lagrangian for RollerRacerL {
    fn dim(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, _q: &[S], v: &[S]) -> S {
        (v[0] * v[0] + v[1] * v[1]).scale(0.5 * self.0.m1) + (v[2] * v[2]).scale(0.5 * self.0.i1)
    }
}

/// omega^1 = dx - cos(th) csc(phi) [(d1 cos(phi) + d2) dth + d2 dphi],
/// omega^2 = same with sin(th). Coordinates (x, y, th, phi).
struct RollerRacerForms(RollerRacerParams);
impl ArrayMap for RollerRacerForms {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        8
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let (d1, d2) = (self.0.d1, self.0.d2);
        let th = q[2];
        let phi = q[3];
        let csc = S::constant(1.0) / phi.sin();
        let coef_th = (phi.cos().scale(d1) + S::constant(d2)) * csc;
        let zero = S::constant(0.0);
        out[0] = S::constant(1.0);
        out[1] = zero;
        out[2] = -(th.cos() * coef_th);
        out[3] = -(th.cos() * csc).scale(d2);
        out[4] = zero;
        out[5] = S::constant(1.0);
        out[6] = -(th.sin() * coef_th);
        out[7] = -(th.sin() * csc).scale(d2);
    }
}

struct LcL(LcParams);
impl Lagrangian for LcL {
    fn dim(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, q: &[S], f: &[S]) -> S {
        (f[0] * f[0]).scale(0.5 * self.0.l)
            - (q[1] * q[1]).scale(0.5 / self.0.c1)
            - (q[2] * q[2]).scale(0.5 / self.0.c2)
            - (q[3] * q[3]).scale(0.5 / self.0.c3)
    }
}

/// KCL forms: -f_l + f_c2 = 0 and f_c1 - f_c2 + f_c3 = 0.
struct LcForms;
impl ArrayMap for LcForms {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        8
    }
    fn eval<S: Scalar>(&self, _q: &[S], out: &mut [S]) {
        let vals = [-1.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0];
        for (o, v) in out.iter_mut().zip(vals.iter()) {
            *o = S::constant(*v);
        }
    }
}

/// Holonomic leaf of the LC constraints: (q_l, q_c1) -> full charge vector
/// with q_c2 = q_l - a0 and q_c3 = q_c2 - q_c1 - a1.
struct LcLeafMap(LcParams);
impl ArrayMap for LcLeafMap {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, w: &[S], out: &mut [S]) {
        out[0] = w[0];
        out[1] = w[1];
        out[2] = w[0] - S::constant(self.0.a0);
        out[3] = w[0] - S::constant(self.0.a0) - w[1] - S::constant(self.0.a1);
    }
}

struct BicycleL(BicycleParams);
impl Lagrangian for BicycleL {
    fn dim(&self) -> usize {
        5
    }
    fn eval<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        let p = &self.0;
        let th = q[2];
        let psi = q[4];
        let (vx, vy, vth, vphi, vpsi) = (v[0], v[1], v[2], v[3], v[4]);
        let u1 = th.cos() * vx + th.sin() * vy + (psi.sin() * vth).scale(p.a);
        let u2 = th.sin() * vx - th.cos() * vy + (psi.cos() * vpsi).scale(p.a) - vth.scale(p.c);
        let steer = if p.corrected {
            (psi.sin() * psi.sin() * vpsi * vpsi).scale(p.a * p.a)
        } else {
            (psi.sin() * vpsi * vpsi).scale(p.a * p.a)
        };
        (u1 * u1 + u2 * u2 + steer).scale(0.5 * p.m) + (vphi * vphi).scale(0.5 * p.j0)
            - psi.cos().scale(p.m * p.g * p.a)
    }
}

/// omega^1 encodes thdot = phi (cos(th) xdot + sin(th) ydot); omega^2 is the
/// no-sideslip form sin(th) dx - cos(th) dy. Coordinates (x, y, th, phi, psi).
struct BicycleForms;
impl ArrayMap for BicycleForms {
    fn dim_in(&self) -> usize {
        5
    }
    fn dim_out(&self) -> usize {
        10
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let th = q[2];
        let phi = q[3];
        let zero = S::constant(0.0);
        out[0] = phi * th.cos();
        out[1] = phi * th.sin();
        out[2] = S::constant(-1.0);
        out[3] = zero;
        out[4] = zero;
        out[5] = th.sin();
        out[6] = -th.cos();
        out[7] = zero;
        out[8] = zero;
        out[9] = zero;
    }
}

struct FlatToyL;
impl Lagrangian for FlatToyL {
    fn dim(&self) -> usize {
        3
    }
    fn eval<S: Scalar>(&self, _q: &[S], v: &[S]) -> S {
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).scale(0.5)
    }
}

struct FlatToyForms(FlatToyParams);
impl ArrayMap for FlatToyForms {
    fn dim_in(&self) -> usize {
        3
    }
    fn dim_out(&self) -> usize {
        3
    }
    fn eval<S: Scalar>(&self, _q: &[S], out: &mut [S]) {
        out[0] = S::constant(1.0);
        out[1] = S::constant(self.0.a1);
        out[2] = S::constant(self.0.a2);
    }
}

/// L = (x vy - y vx)/2 - (x^2 + y^2)/2: linear in velocity, identically
/// degenerate velocity Hessian.
struct PointVortexL;
impl Lagrangian for PointVortexL {
    fn dim(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        (q[0] * v[1] - q[1] * v[0]).scale(0.5) - (q[0] * q[0] + q[1] * q[1]).scale(0.5)
    }
}

// ---------------------------------------------------------------------------
// Built-in Hamilton-Jacobi sections
// ---------------------------------------------------------------------------

struct RollerHjX {
    p: RollerRacerParams,
    vr: f64,
    vtheta: f64,
    sigma: f64,
}
impl ArrayMap for RollerHjX {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let th = q[2];
        let phi = q[3];
        let svr = self.sigma * self.vr;
        out[0] = th.cos().scale(svr);
        out[1] = th.sin().scale(svr);
        out[2] = S::constant(self.vtheta);
        let coef = phi.cos().scale(self.p.d1) + S::constant(self.p.d2);
        out[3] = (phi.sin().scale(svr) - coef.scale(self.vtheta)).scale(1.0 / self.p.d2);
    }
}

struct RollerHjGamma {
    p: RollerRacerParams,
    vr: f64,
    vtheta: f64,
    sigma: f64,
}
impl ArrayMap for RollerHjGamma {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let th = q[2];
        let smvr = self.sigma * self.p.m1 * self.vr;
        out[0] = th.cos().scale(smvr);
        out[1] = th.sin().scale(smvr);
        out[2] = S::constant(self.p.i1 * self.vtheta);
        out[3] = S::constant(0.0);
    }
}

struct LcHjX {
    p: LcParams,
    e: f64,
    sigma: f64,
}
impl ArrayMap for LcHjX {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let nu2 = lc_angular_frequency(&self.p).powi(2);
        let rho = lc_charge_ratio(&self.p);
        let arg = S::constant(2.0 * self.e / self.p.l) - (q[0] * q[0]).scale(nu2);
        let x0 = arg.sqrt().scale(self.sigma);
        out[0] = x0;
        out[1] = x0.scale(rho);
        out[2] = x0;
        out[3] = x0.scale(1.0 - rho);
    }
}

struct LcHjGamma {
    p: LcParams,
    e: f64,
    sigma: f64,
}
impl ArrayMap for LcHjGamma {
    fn dim_in(&self) -> usize {
        4
    }
    fn dim_out(&self) -> usize {
        4
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        let nu2 = lc_angular_frequency(&self.p).powi(2);
        let arg = S::constant(2.0 * self.e / self.p.l) - (q[0] * q[0]).scale(nu2);
        out[0] = arg.sqrt().scale(self.sigma * self.p.l);
        out[1] = S::constant(0.0);
        out[2] = S::constant(0.0);
        out[3] = S::constant(0.0);
    }
}

struct VortexHjX;
impl ArrayMap for VortexHjX {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, _q: &[S], out: &mut [S]) {
        out[0] = S::constant(0.0);
        out[1] = S::constant(0.0);
    }
}

struct VortexHjGamma;
impl ArrayMap for VortexHjGamma {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, q: &[S], out: &mut [S]) {
        out[0] = -q[1].scale(0.5);
        out[1] = q[0].scale(0.5);
    }
}

/// Reduced one-form for the roller racer on base coordinates (th, phi):
/// gbar_phi = C csc(phi), gbar_th = C (1 + d1/d2 cos(phi)) csc(phi) + I1 vth.
struct RollerGammaBar {
    c: f64,
    d1_over_d2: f64,
    i1_vtheta: f64,
    sigma: f64,
}
impl ArrayMap for RollerGammaBar {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, r: &[S], out: &mut [S]) {
        let phi = r[1];
        let csc = S::constant(1.0) / phi.sin();
        let sc = self.sigma * self.c;
        out[0] = (S::constant(1.0) + phi.cos().scale(self.d1_over_d2)) * csc.scale(sc)
            + S::constant(self.i1_vtheta);
        out[1] = csc.scale(sc);
    }
}

struct ConstantGammaBar {
    values: Vec<f64>,
}
impl ArrayMap for ConstantGammaBar {
    fn dim_in(&self) -> usize {
        self.values.len()
    }
    fn dim_out(&self) -> usize {
        self.values.len()
    }
    fn eval<S: Scalar>(&self, _r: &[S], out: &mut [S]) {
        for (o, v) in out.iter_mut().zip(self.values.iter()) {
            *o = S::constant(*v);
        }
    }
}

/// Componentwise scaling of another map's output; used to build perturbed
/// candidate solutions that must fail the verification suite.
pub struct ScaledMap {
    inner: Arc<dyn ArrayMapDyn>,
    factors: Vec<f64>,
}

impl ScaledMap {
    pub fn new(inner: Arc<dyn ArrayMapDyn>, factors: Vec<f64>) -> Result<Self> {
        if factors.len() != inner.dim_out() {
            return Err(Error::shape("scaling factors must match the map output size"));
        }
        Ok(ScaledMap { inner, factors })
    }

    pub fn uniform(inner: Arc<dyn ArrayMapDyn>, factor: f64) -> Self {
        let n = inner.dim_out();
        ScaledMap { inner, factors: vec![factor; n] }
    }
}

impl ArrayMap for ScaledMap {
    fn dim_in(&self) -> usize {
        self.inner.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.inner.dim_out()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        S::eval_array_map(self.inner.as_ref(), x, out);
        for (o, f) in out.iter_mut().zip(self.factors.iter()) {
            *o = o.scale(*f);
        }
    }
}

/// Scale the momentum one-form of a section, leaving the vector field alone.
pub fn scale_section_gamma(section: &HjSection, factor: f64) -> HjSection {
    let scaled = Arc::new(ScaledMap::uniform(section.gamma_arc(), factor));
    HjSection::from_arcs(section.x_arc(), scaled).expect("dimensions preserved")
}

/// Scale one component of the vector field of a section.
pub fn scale_section_x_component(section: &HjSection, index: usize, factor: f64) -> HjSection {
    let mut factors = vec![1.0; section.dim()];
    factors[index] = factor;
    let scaled =
        Arc::new(ScaledMap::new(section.x_arc(), factors).expect("dimensions preserved"));
    HjSection::from_arcs(scaled, section.gamma_arc()).expect("dimensions preserved")
}

// ---------------------------------------------------------------------------
// Closed-form reference data
// ---------------------------------------------------------------------------

/// Angular frequency of the LC normal mode:
/// nu = sqrt((c1 + c2 + c3) / (c2 (c1 + c3) l)).
pub fn lc_angular_frequency(p: &LcParams) -> f64 {
    ((p.c1 + p.c2 + p.c3) / (p.c2 * (p.c1 + p.c3) * p.l)).sqrt()
}

/// Charge ratio q_c1 / q_l = c1 / (c1 + c3) on the oscillation locus.
pub fn lc_charge_ratio(p: &LcParams) -> f64 {
    p.c1 / (p.c1 + p.c3)
}

/// Amplitude of q_l at energy E: sqrt(2E / (l nu^2)).
pub fn lc_amplitude(p: &LcParams, e: f64) -> f64 {
    (2.0 * e / (p.l * lc_angular_frequency(p).powi(2))).sqrt()
}

/// q_l(t) = amplitude * sin(nu t + alpha).
pub fn lc_charge_curve(p: &LcParams, e: f64, alpha: f64, t: f64) -> f64 {
    lc_amplitude(p, e) * (lc_angular_frequency(p) * t + alpha).sin()
}

/// Radial speed of the roller racer solution: sqrt((2E - I1 vth^2)/m1).
pub fn roller_vr(p: &RollerRacerParams, e: f64, vtheta: f64) -> Result<f64> {
    let arg = (2.0 * e - p.i1 * vtheta * vtheta) / p.m1;
    if arg < 0.0 {
        return Err(Error::config("roller-racer energy must satisfy 2E >= I1 vtheta^2"));
    }
    Ok(arg.sqrt())
}

/// The printed phi-equation of the roller racer flow:
/// phidot = -vth (1 + d1/d2 cos(phi)) + (vr/d2) sin(phi).
pub fn roller_phidot(p: &RollerRacerParams, e: f64, vtheta: f64, branch: i8, phi: f64) -> Result<f64> {
    let vr = roller_vr(p, e, vtheta)?;
    Ok(-vtheta * (1.0 + p.d1 / p.d2 * phi.cos()) + branch as f64 * vr / p.d2 * phi.sin())
}

/// Angular frequency estimate from zero crossings of a sampled signal:
/// crossing times are interpolated linearly and regressed against their
/// index (consecutive crossings are half periods apart).
pub fn zero_crossing_frequency(t: &[f64], x: &[f64]) -> Option<f64> {
    let mut crossings = Vec::new();
    let mut i = 0;
    while i < x.len() {
        if x[i] == 0.0 {
            crossings.push(t[i]);
            i += 1;
            while i < x.len() && x[i] == 0.0 {
                i += 1;
            }
            continue;
        }
        if i + 1 < x.len() && x[i + 1] != 0.0 && x[i] * x[i + 1] < 0.0 {
            let frac = x[i] / (x[i] - x[i + 1]);
            crossings.push(t[i] + frac * (t[i + 1] - t[i]));
        }
        i += 1;
    }
    if crossings.len() < 2 {
        return None;
    }
    // Least-squares slope of crossing time against index: slope = pi / nu.
    let n = crossings.len() as f64;
    let mean_j = (crossings.len() - 1) as f64 / 2.0;
    let mean_t = crossings.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, tau) in crossings.iter().enumerate() {
        let dj = j as f64 - mean_j;
        num += dj * (tau - mean_t);
        den += dj * dj;
    }
    if den == 0.0 || num <= 0.0 {
        return None;
    }
    Some(std::f64::consts::PI * den / num)
}

// ---------------------------------------------------------------------------
// System registry
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum SystemKind {
    RollerRacer(RollerRacerParams),
    Lc(LcParams),
    Bicycle,
    FlatToy(FlatToyParams),
    PointVortex,
}

#[derive(Clone)]
enum SampleDomain {
    Boxed(Vec<(f64, f64)>),
    /// q_l uniform within 0.9x the turning amplitude, remaining charges on
    /// the leaf locus where the closed-form solution lives.
    LcLocus,
}

/// A fully assembled built-in system: Lagrangian, constraints, optional
/// symmetry-group split, optional holonomic leaf, defaults and samplers.
pub struct SystemDef {
    pub name: String,
    pub lagrangian: LagrangianField,
    pub constraints: ConstraintDistribution,
    pub group_indices: Option<Vec<usize>>,
    pub leaf: Option<HolonomicLeaf>,
    pub q0: Vec<f64>,
    pub v0: Vec<f64>,
    pub default_energy: f64,
    pub default_vtheta: f64,
    /// Horizon for flowing the built-in solution's vector field; chosen so
    /// single-branch square-root formulas stay on their monotone window.
    pub default_hj_horizon: f64,
    kind: SystemKind,
    domain: SampleDomain,
}

pub fn system_names() -> &'static [&'static str] {
    &["roller-racer", "lc-circuit", "bicycle", "flat-toy", "point-vortex"]
}

/// Build a named system with `key=value` parameter overrides applied on top
/// of the defaults.
pub fn make_system(name: &str, overrides: &[(String, f64)]) -> Result<SystemDef> {
    match name {
        "roller-racer" => {
            let mut p = RollerRacerParams::default();
            for (k, v) in overrides {
                p.apply(k, *v)?;
            }
            p.validate()?;
            let e = 1.0;
            let vtheta = 0.5;
            let vr = roller_vr(&p, e, vtheta)?;
            let phi0 = std::f64::consts::FRAC_PI_2;
            let phidot0 = roller_phidot(&p, e, vtheta, 1, phi0)?;
            Ok(SystemDef {
                name: name.to_string(),
                lagrangian: LagrangianField::new(RollerRacerL(p)),
                constraints: ConstraintDistribution::new(2, RollerRacerForms(p))?,
                group_indices: Some(vec![0, 1]),
                leaf: None,
                q0: vec![0.0, 0.0, 0.0, phi0],
                v0: vec![vr, 0.0, vtheta, phidot0],
                default_energy: e,
                default_vtheta: vtheta,
                default_hj_horizon: 10.0,
                kind: SystemKind::RollerRacer(p),
                domain: SampleDomain::Boxed(vec![
                    (-1.0, 1.0),
                    (-1.0, 1.0),
                    (-3.0, 3.0),
                    (0.4, std::f64::consts::PI - 0.4),
                ]),
            })
        }
        "lc-circuit" => {
            let mut p = LcParams::default();
            for (k, v) in overrides {
                p.apply(k, *v)?;
            }
            p.validate()?;
            let rho = lc_charge_ratio(&p);
            Ok(SystemDef {
                name: name.to_string(),
                lagrangian: LagrangianField::new(LcL(p)),
                constraints: ConstraintDistribution::new(2, LcForms)?,
                group_indices: None,
                leaf: Some(HolonomicLeaf::new(LcLeafMap(p))),
                q0: vec![0.0, 0.0, 0.0, 0.0],
                v0: vec![1.0, rho, 1.0, 1.0 - rho],
                default_energy: 0.5 * p.l,
                default_vtheta: 0.0,
                default_hj_horizon: 1.0,
                kind: SystemKind::Lc(p),
                domain: SampleDomain::LcLocus,
            })
        }
        "bicycle" => {
            let mut p = BicycleParams::default();
            for (k, v) in overrides {
                p.apply(k, *v)?;
            }
            p.validate()?;
            let phi0 = 2.0;
            let thdot0 = 0.3;
            Ok(SystemDef {
                name: name.to_string(),
                lagrangian: LagrangianField::new(BicycleL(p)),
                constraints: ConstraintDistribution::new(2, BicycleForms)?,
                group_indices: Some(vec![0, 1]),
                leaf: None,
                q0: vec![0.0, 0.0, 0.0, phi0, std::f64::consts::FRAC_PI_2],
                v0: vec![thdot0 / phi0, 0.0, thdot0, 0.0, 0.0],
                default_energy: 0.0,
                default_vtheta: 0.0,
                default_hj_horizon: 0.0,
                kind: SystemKind::Bicycle,
                domain: SampleDomain::Boxed(vec![
                    (-1.0, 1.0),
                    (-1.0, 1.0),
                    (-3.0, 3.0),
                    (1.0, 3.0),
                    (0.4, std::f64::consts::PI - 0.4),
                ]),
            })
        }
        "flat-toy" => {
            let mut p = FlatToyParams::default();
            for (k, v) in overrides {
                p.apply(k, *v)?;
            }
            let vbar0 = [1.0, 0.5];
            Ok(SystemDef {
                name: name.to_string(),
                lagrangian: LagrangianField::new(FlatToyL),
                constraints: ConstraintDistribution::new(1, FlatToyForms(p))?,
                group_indices: Some(vec![0]),
                leaf: None,
                q0: vec![0.0, 0.0, 0.0],
                v0: vec![-(p.a1 * vbar0[0] + p.a2 * vbar0[1]), vbar0[0], vbar0[1]],
                default_energy: 1.0,
                default_vtheta: 0.0,
                default_hj_horizon: 10.0,
                kind: SystemKind::FlatToy(p),
                domain: SampleDomain::Boxed(vec![(-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)]),
            })
        }
        "point-vortex" => {
            if let Some((k, _)) = overrides.first() {
                return Err(Error::config(format!("unknown point-vortex parameter `{k}`")));
            }
            Ok(SystemDef {
                name: name.to_string(),
                lagrangian: LagrangianField::new(PointVortexL),
                constraints: ConstraintDistribution::unconstrained(2),
                group_indices: None,
                leaf: None,
                q0: vec![1.0, 0.0],
                v0: vec![0.0, 0.0],
                default_energy: 0.5,
                default_vtheta: 0.0,
                default_hj_horizon: 0.0,
                kind: SystemKind::PointVortex,
                domain: SampleDomain::Boxed(vec![(-1.5, 1.5), (-1.5, 1.5)]),
            })
        }
        other => Err(Error::config(format!(
            "unknown system `{other}`; available: {}",
            system_names().join(", ")
        ))),
    }
}

impl SystemDef {
    pub fn dim(&self) -> usize {
        self.lagrangian.dim()
    }

    /// Seeded configuration samples inside the system's valid domain. For
    /// the LC circuit samples stay on the leaf locus at the given energy,
    /// where its closed-form solution is defined.
    pub fn sample_q(&self, count: usize, seed: u64, e: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.domain {
            SampleDomain::Boxed(ranges) => (0..count)
                .map(|_| ranges.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect())
                .collect(),
            SampleDomain::LcLocus => {
                let p = match &self.kind {
                    SystemKind::Lc(p) => *p,
                    _ => unreachable!("LcLocus domain only used by the LC circuit"),
                };
                let amp = 0.9 * lc_amplitude(&p, e);
                let rho = lc_charge_ratio(&p);
                (0..count)
                    .map(|_| {
                        let ql = rng.gen_range(-amp..amp);
                        let qc1 = rho * (ql - p.a0 - p.a1);
                        vec![ql, qc1, ql - p.a0, ql - p.a0 - qc1 - p.a1]
                    })
                    .collect()
            }
        }
    }

    /// Seeded (q, v) samples: q from the domain, v uniform in [-1, 1]^n.
    pub fn sample_qv(&self, count: usize, seed: u64, e: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let qs = self.sample_q(count, seed, e);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        qs.into_iter()
            .map(|q| {
                let v = (0..self.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (q, v)
            })
            .collect()
    }

    /// Base-coordinate samples for reduced-side checks (group columns
    /// dropped from `sample_q`).
    pub fn sample_base(&self, count: usize, seed: u64, e: f64) -> Result<Vec<Vec<f64>>> {
        let group = self
            .group_indices
            .as_ref()
            .ok_or_else(|| Error::config(format!("system `{}` has no symmetry group", self.name)))?;
        Ok(self
            .sample_q(count, seed, e)
            .into_iter()
            .map(|q| {
                q.iter()
                    .enumerate()
                    .filter(|(i, _)| !group.contains(i))
                    .map(|(_, &x)| x)
                    .collect()
            })
            .collect())
    }

    /// The built-in closed-form Hamilton-Jacobi section, where one exists.
    /// `branch` selects the sign of the multi-root ansatz.
    pub fn hj_section(&self, e: f64, vtheta: f64, branch: i8) -> Result<HjSection> {
        let sigma = branch as f64;
        if branch != 1 && branch != -1 {
            return Err(Error::config("branch must be +1 or -1"));
        }
        match &self.kind {
            SystemKind::RollerRacer(p) => {
                let vr = roller_vr(p, e, vtheta)?;
                HjSection::from_arcs(
                    Arc::new(RollerHjX { p: *p, vr, vtheta, sigma }),
                    Arc::new(RollerHjGamma { p: *p, vr, vtheta, sigma }),
                )
            }
            SystemKind::Lc(p) => {
                if p.a0 != 0.0 || p.a1 != 0.0 {
                    return Err(Error::config(
                        "the lc-circuit closed form requires a0 = a1 = 0",
                    ));
                }
                if e <= 0.0 {
                    return Err(Error::config("lc-circuit energy must be > 0"));
                }
                HjSection::from_arcs(
                    Arc::new(LcHjX { p: *p, e, sigma }),
                    Arc::new(LcHjGamma { p: *p, e, sigma }),
                )
            }
            SystemKind::FlatToy(p) => {
                let w = sigma * (2.0 * e / (1.0 + p.a1 * p.a1)).sqrt();
                let gb = Arc::new(ConstantGammaBar {
                    values: vec![w * (1.0 + p.a1 * p.a1), w * p.a1 * p.a2],
                });
                let red = self.reduced_system(7)?;
                crate::chaplygin::lift_reduced_solution(&red, gb)
            }
            SystemKind::PointVortex => {
                HjSection::from_arcs(Arc::new(VortexHjX), Arc::new(VortexHjGamma))
            }
            SystemKind::Bicycle => {
                Err(Error::config("the bicycle has no closed-form solution"))
            }
        }
    }

    /// The built-in reduced one-form solving the reduced equations, where
    /// one exists.
    pub fn reduced_gamma_bar(
        &self,
        e: f64,
        vtheta: f64,
        branch: i8,
    ) -> Result<Arc<dyn ArrayMapDyn>> {
        if branch != 1 && branch != -1 {
            return Err(Error::config("branch must be +1 or -1"));
        }
        match &self.kind {
            SystemKind::RollerRacer(p) => {
                let c = p.d2 * (p.m1 * (2.0 * e - p.i1 * vtheta * vtheta)).sqrt();
                if !c.is_finite() {
                    return Err(Error::config("roller-racer energy must satisfy 2E >= I1 vtheta^2"));
                }
                Ok(Arc::new(RollerGammaBar {
                    c,
                    d1_over_d2: p.d1 / p.d2,
                    i1_vtheta: p.i1 * vtheta,
                    sigma: branch as f64,
                }))
            }
            SystemKind::FlatToy(p) => {
                let w = branch as f64 * (2.0 * e / (1.0 + p.a1 * p.a1)).sqrt();
                Ok(Arc::new(ConstantGammaBar {
                    values: vec![w * (1.0 + p.a1 * p.a1), w * p.a1 * p.a2],
                }))
            }
            _ => Err(Error::config(format!(
                "system `{}` has no built-in reduced solution",
                self.name
            ))),
        }
    }

    /// Assemble the Chaplygin reduction for systems with a symmetry group.
    pub fn reduced_system(&self, seed: u64) -> Result<crate::chaplygin::ReducedSystem> {
        let group = self
            .group_indices
            .clone()
            .ok_or_else(|| Error::config(format!("system `{}` has no symmetry group", self.name)))?;
        let samples = self.sample_q(8, seed, self.default_energy.max(0.5));
        let bundle =
            crate::chaplygin::build_bundle(&self.constraints, &self.lagrangian, &group, &samples)?;
        let base_samples: Vec<Vec<f64>> = samples
            .iter()
            .map(|q| bundle.split(q).0)
            .collect();
        crate::chaplygin::ReducedSystem::new(bundle, self.lagrangian.clone(), &base_samples)
    }
}
