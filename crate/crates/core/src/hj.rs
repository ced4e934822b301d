//! Hamilton-Jacobi theory on the Pontryagin bundle: verify candidate
//! solution sections, flow their base vector fields, and specialize to the
//! holonomic and nondegenerate-nonholonomic corollaries.
//!
//! A candidate solution is a section Upsilon = X (+) gamma of the Pontryagin
//! bundle over Q: a vector field X and a one-form gamma. It solves the
//! Hamilton-Jacobi problem when Upsilon(q) lies in the constraint momentum
//! space K, d(gamma) vanishes on the distribution, and d(E o Upsilon)
//! annihilates the distribution; on a connected base with a completely
//! nonholonomic (bracket-generating) distribution the last condition is
//! equivalent to E o Upsilon being a constant.

use crate::autodiff::{
    exterior_derivative_2form, partial_v_lagrangian, ArrayMap, ArrayMapDyn, Dual1, Scalar,
    MAX_LANES,
};
use crate::error::{Error, Result};
use crate::geometry::{
    generalized_energy, horizontal_basis, k_residual, lagrangian_blocks_max, sup_abs,
    ConstraintDistribution, HolonomicLeaf, LagrangianField, PontryaginState,
};
use crate::integrator::{step_count, Trajectory};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A section of the Pontryagin bundle over Q: q -> (q, X(q), gamma(q)).
#[derive(Clone)]
pub struct HjSection {
    x_field: Arc<dyn ArrayMapDyn>,
    gamma: Arc<dyn ArrayMapDyn>,
    dim: usize,
}

impl HjSection {
    pub fn new<X, G>(x_field: X, gamma: G) -> Result<Self>
    where
        X: ArrayMap + Send + Sync + 'static,
        G: ArrayMap + Send + Sync + 'static,
    {
        Self::from_arcs(Arc::new(x_field), Arc::new(gamma))
    }

    pub fn from_arcs(x_field: Arc<dyn ArrayMapDyn>, gamma: Arc<dyn ArrayMapDyn>) -> Result<Self> {
        let dim = x_field.dim_in();
        for (name, d_in, d_out) in [
            ("vector field", x_field.dim_in(), x_field.dim_out()),
            ("one-form", gamma.dim_in(), gamma.dim_out()),
        ] {
            if d_in != dim || d_out != dim {
                return Err(Error::shape(format!(
                    "section {name} must map R^{dim} to R^{dim}, got R^{d_in} to R^{d_out}"
                )));
            }
        }
        Ok(HjSection { x_field, gamma, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let mut out = vec![S::constant(0.0); self.dim];
        S::eval_array_map(self.x_field.as_ref(), q, &mut out);
        out
    }

    pub fn gamma<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let mut out = vec![S::constant(0.0); self.dim];
        S::eval_array_map(self.gamma.as_ref(), q, &mut out);
        out
    }

    pub fn gamma_dyn(&self) -> &dyn ArrayMapDyn {
        self.gamma.as_ref()
    }

    pub fn gamma_arc(&self) -> Arc<dyn ArrayMapDyn> {
        Arc::clone(&self.gamma)
    }

    pub fn x_dyn(&self) -> &dyn ArrayMapDyn {
        self.x_field.as_ref()
    }

    pub fn x_arc(&self) -> Arc<dyn ArrayMapDyn> {
        Arc::clone(&self.x_field)
    }

    /// The Pontryagin state over q.
    pub fn state(&self, q: &[f64]) -> PontryaginState {
        PontryaginState { q: q.to_vec(), v: self.x(q), p: self.gamma(q) }
    }
}

/// Generalized energy along the section, E o Upsilon (q) = <gamma, X> - L(q, X).
pub fn energy_along_section(section: &HjSection, l: &LagrangianField, q: &[f64]) -> f64 {
    let x = section.x(q);
    let g = section.gamma(q);
    let pv: f64 = g.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    pv - l.eval(q, &x)
}

fn energy_gradient(section: &HjSection, l: &LagrangianField, q: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = section.dim();
    if q.len() != n {
        return Err(Error::shape("point length does not match the section"));
    }
    if n > MAX_LANES {
        return Err(Error::shape(format!("dimension {n} exceeds derivative lanes")));
    }
    let seeds: Vec<Dual1> = q.iter().enumerate().map(|(i, &x)| Dual1::seeded(x, i)).collect();
    let x = section.x(&seeds);
    let g = section.gamma(&seeds);
    let mut e = -l.eval(&seeds, &x);
    for i in 0..n {
        e = e + g[i] * x[i];
    }
    if !e.re.is_finite() {
        return Err(Error::Domain { index: None });
    }
    for (i, d) in e.du[..n].iter().enumerate() {
        if !d.is_finite() {
            return Err(Error::Domain { index: Some(i) });
        }
    }
    Ok((e.re, e.du[..n].to_vec()))
}

/// Max over samples of the membership residual of Upsilon(q) in the
/// constraint momentum space K (velocity in the distribution, momentum from
/// the Legendre transform).
pub fn check_in_k(
    section: &HjSection,
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for q in samples {
        let s = section.state(q);
        let (constraint, fiber) = k_residual(l, delta, &s);
        worst = worst.max(sup_abs(&constraint)).max(sup_abs(&fiber));
    }
    Ok(worst)
}

/// Max over samples, over pairs of horizontal basis vectors, of
/// |d(gamma)(h_i, h_j)|: the closedness of gamma restricted to the
/// distribution.
pub fn check_closedness_on_delta(
    gamma: &dyn ArrayMapDyn,
    delta: &ConstraintDistribution,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for q in samples {
        let h = horizontal_basis(delta, q)?;
        for i in 0..h.ncols() {
            for j in i + 1..h.ncols() {
                let u: Vec<f64> = h.column(i).iter().cloned().collect();
                let w: Vec<f64> = h.column(j).iter().cloned().collect();
                let val = exterior_derivative_2form(gamma, q, &u, &w)?;
                worst = worst.max(val.abs());
            }
        }
    }
    Ok(worst)
}

/// Pairings of d(E o Upsilon) with an orthonormal basis of Delta_Q(q): the
/// Dirac Hamilton-Jacobi residual at q. All components vanish exactly when
/// the differential annihilates the distribution at q.
pub fn dhj_residual(
    section: &HjSection,
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    q: &[f64],
) -> Result<Vec<f64>> {
    let (_, grad) = energy_gradient(section, l, q)?;
    let h = horizontal_basis(delta, q)?;
    let g = DVector::from_column_slice(&grad);
    let paired = h.transpose() * g;
    Ok(paired.iter().cloned().collect())
}

/// Mean of E o Upsilon over the samples and the max deviation from that mean.
pub fn dhj_energy_constancy(
    section: &HjSection,
    l: &LagrangianField,
    samples: &[Vec<f64>],
) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let values: Vec<f64> =
        samples.iter().map(|q| energy_along_section(section, l, q)).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let dev = values.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max);
    (mean, dev)
}

/// Integrate the base flow qdot = X(q) with RK4 and lift each point through
/// the section: states are (q, X(q), gamma(q)), energy is E o Upsilon.
pub fn integrate_hj_flow(
    section: &HjSection,
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    q0: &[f64],
    t_final: f64,
    h: f64,
) -> Result<Trajectory> {
    let n = section.dim();
    if q0.len() != n {
        return Err(Error::shape("initial point length does not match the section"));
    }
    let steps = step_count(t_final, h)?;
    let mut q = q0.to_vec();
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        multipliers: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        constraint_residual: Vec::with_capacity(steps + 1),
    };
    for step in 0..=steps {
        let t = step as f64 * h;
        let state = section.state(&q);
        let residual = {
            let r = delta.apply(&state.q, &state.v);
            if r.len() == 0 {
                0.0
            } else {
                r.amax()
            }
        };
        traj.t.push(t);
        traj.energy.push(generalized_energy(l, &state));
        traj.constraint_residual.push(residual);
        traj.multipliers.push(DVector::zeros(0));
        traj.states.push(state);
        if step == steps {
            break;
        }
        let k1 = section.x(&q);
        let k2 = section.x(&displace(&q, &k1, 0.5 * h));
        let k3 = section.x(&displace(&q, &k2, 0.5 * h));
        let k4 = section.x(&displace(&q, &k3, h));
        for i in 0..n {
            q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let norm = q.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if !norm.is_finite() || norm > 1e12 {
            return Err(Error::BlowUp { t: t + h, norm });
        }
    }
    Ok(traj)
}

fn displace(q: &[f64], d: &[f64], dt: f64) -> Vec<f64> {
    q.iter().zip(d.iter()).map(|(x, k)| x + dt * k).collect()
}

/// Integrate the lifted flow and the direct Lagrange-Dirac dynamics from the
/// lifted initial condition (q0, X(q0)) and return the sup-norm gap of the
/// two state curves over the common grid.
pub fn crosscheck_hj_vs_direct(
    section: &HjSection,
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    q0: &[f64],
    t_final: f64,
    h: f64,
) -> Result<f64> {
    let lifted = integrate_hj_flow(section, l, delta, q0, t_final, h)?;
    let v0 = section.x(q0);
    let direct = crate::integrator::integrate(
        l,
        delta,
        q0,
        &v0,
        t_final,
        h,
        &crate::integrator::IntegrateOptions::default(),
    )?;
    Ok(lifted.sup_distance(&direct))
}

/// The one-form iota_S^* gamma on a leaf: components
/// (iota^* gamma)_a(y) = sum_i gamma_i(iota(y)) d iota^i / d y^a.
struct PulledBackForm {
    gamma: Arc<dyn ArrayMapDyn>,
    leaf: HolonomicLeaf,
}

impl ArrayMap for PulledBackForm {
    fn dim_in(&self) -> usize {
        self.leaf.dim()
    }
    fn dim_out(&self) -> usize {
        self.leaf.dim()
    }
    fn eval<S: Scalar>(&self, y: &[S], out: &mut [S]) {
        let m = self.leaf.dim();
        let n = self.leaf.ambient_dim();
        let q = self.leaf.embed_generic(y);
        let mut g = vec![S::constant(0.0); n];
        S::eval_array_map(self.gamma.as_ref(), &q, &mut g);
        // Tangent of the embedding at scalar level S via one lifted pass.
        let yl: Vec<S::Lift> = y.iter().enumerate().map(|(a, x)| x.lift_seed(a)).collect();
        let ql = self.leaf.embed_generic(&yl);
        for a in 0..m {
            let mut acc = S::constant(0.0);
            for i in 0..n {
                acc = acc + g[i] * S::extract(&ql[i], a);
            }
            out[a] = acc;
        }
    }
}

/// Result of the holonomic specialization on a leaf: deviation of
/// E o Upsilon o iota_S from constancy over the samples, the closedness
/// residual of the pulled-back one-form, and the sup of the leaf-restricted
/// differential d(E o Upsilon o iota_S).
#[derive(Clone, Debug)]
pub struct HolonomicCheck {
    pub energy_mean: f64,
    pub energy_dev: f64,
    pub closedness: f64,
    pub energy_gradient: f64,
}

pub fn holonomic_check(
    section: &HjSection,
    l: &LagrangianField,
    leaf: &HolonomicLeaf,
    samples: &[Vec<f64>],
) -> Result<HolonomicCheck> {
    let m = leaf.dim();
    let n = leaf.ambient_dim();
    let pulled = PulledBackForm { gamma: section.gamma_arc(), leaf: leaf.clone() };
    let mut energies = Vec::with_capacity(samples.len());
    let mut closedness = 0.0_f64;
    let mut gradient = 0.0_f64;
    for y in samples {
        if y.len() != m {
            return Err(Error::shape("leaf sample length does not match the leaf"));
        }
        let q = leaf.embed(y);
        energies.push(energy_along_section(section, l, &q));
        // d(E o Upsilon o iota) in leaf coordinates via one dual pass
        let yd: Vec<Dual1> = y.iter().enumerate().map(|(a, &x)| Dual1::seeded(x, a)).collect();
        let qd = leaf.embed_generic(&yd);
        let mut xv = vec![Dual1::constant(0.0); n];
        let mut gv = vec![Dual1::constant(0.0); n];
        Dual1::eval_array_map(section.x_dyn(), &qd, &mut xv);
        Dual1::eval_array_map(section.gamma_dyn(), &qd, &mut gv);
        let mut e = -l.eval(&qd, &xv);
        for i in 0..n {
            e = e + gv[i] * xv[i];
        }
        for a in 0..m {
            if !e.du[a].is_finite() {
                return Err(Error::Domain { index: Some(a) });
            }
            gradient = gradient.max(e.du[a].abs());
        }
        for a in 0..m {
            for b in a + 1..m {
                let mut u = vec![0.0; m];
                let mut w = vec![0.0; m];
                u[a] = 1.0;
                w[b] = 1.0;
                let val = exterior_derivative_2form(&pulled, y, &u, &w)?;
                closedness = closedness.max(val.abs());
            }
        }
    }
    let mean = if energies.is_empty() {
        0.0
    } else {
        energies.iter().sum::<f64>() / energies.len() as f64
    };
    let dev = energies.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max);
    Ok(HolonomicCheck { energy_mean: mean, energy_dev: dev, closedness, energy_gradient: gradient })
}

/// Invert the Legendre transform at any scalar level: solve dL/dv(q, v) = p
/// for v by Newton iteration with the real-part Hessian as the Jacobian.
pub fn legendre_inverse<S: Scalar>(
    l: &LagrangianField,
    q: &[S],
    p: &[S],
) -> Result<Vec<S>> {
    let n = l.dim();
    let q_re: Vec<f64> = q.iter().map(|x| x.re()).collect();
    let scale = p.iter().map(|x| x.re().abs()).fold(1.0, f64::max);
    let mut v: Vec<S> = vec![S::constant(0.0); n];
    let mut settled = 0_u32;
    for _ in 0..80 {
        let fl = partial_v_lagrangian(l.dyn_ref(), q, &v);
        let r: Vec<S> = fl.iter().zip(p.iter()).map(|(a, b)| *a - *b).collect();
        let r_re = r.iter().map(|x| x.re().abs()).fold(0.0, f64::max);
        if r_re < 1e-13 * scale {
            // Real parts converged; run a few extra sweeps so the dual
            // tangents settle too, then stop.
            settled += 1;
            if settled > 3 {
                return Ok(v);
            }
        }
        let v_re: Vec<f64> = v.iter().map(|x| x.re()).collect();
        let blocks = crate::autodiff::lagrangian_blocks(l.dyn_ref(), &q_re, &v_re)?;
        let m_inv = blocks
            .m_vv
            .clone()
            .try_inverse()
            .ok_or_else(|| {
                Error::SingularKkt(
                    "Legendre transform is not invertible at the sampled point; \
                     the nondegenerate nonholonomic corollary does not apply"
                        .into(),
                )
            })?;
        for i in 0..n {
            let mut corr = S::constant(0.0);
            for j in 0..n {
                corr = corr + r[j].scale(m_inv[(i, j)]);
            }
            v[i] = v[i] - corr;
        }
    }
    Err(Error::SingularKkt(
        "Legendre inversion did not converge at the sampled point".into(),
    ))
}

/// Nondegenerate nonholonomic corollary: for a one-form gamma, check that
/// d(H o gamma) annihilates the distribution, where H(q, p) =
/// <p, FL^{-1}(q, p)> - L(q, FL^{-1}(q, p)). Returns the max pairing
/// magnitude over the samples.
pub fn nonholonomic_hj_check(
    gamma: &dyn ArrayMapDyn,
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    samples: &[Vec<f64>],
) -> Result<f64> {
    let n = l.dim();
    if gamma.dim_in() != n || gamma.dim_out() != n {
        return Err(Error::shape("one-form dimensions do not match the system"));
    }
    let mut worst = 0.0_f64;
    for q in samples {
        let seeds: Vec<Dual1> =
            q.iter().enumerate().map(|(i, &x)| Dual1::seeded(x, i)).collect();
        let mut g = vec![Dual1::constant(0.0); n];
        gamma.eval_d1(&seeds, &mut g);
        let v = legendre_inverse(l, &seeds, &g)?;
        let mut hval = -l.eval(&seeds, &v);
        for i in 0..n {
            hval = hval + g[i] * v[i];
        }
        if !hval.re.is_finite() {
            return Err(Error::Domain { index: None });
        }
        let grad = DVector::from_iterator(n, hval.du[..n].iter().cloned());
        let h = horizontal_basis(delta, q)?;
        let paired = h.transpose() * grad;
        worst = worst.max(sup_abs(&paired));
    }
    Ok(worst)
}

/// True when the velocity Hessian vanishes (sup-norm below 1e-12) at every
/// sampled (q, v): the Lagrangian is numerically linear in velocity, the
/// dynamics is first-order, and the generalized energy equation carries
/// level-set information only.
pub fn linear_velocity_diagnostic(
    l: &LagrangianField,
    samples: &[(Vec<f64>, Vec<f64>)],
) -> Result<bool> {
    for (q, v) in samples {
        if lagrangian_blocks_max(l, q, v)? >= 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Check that the distribution is completely nonholonomic (bracket
/// generating) at each base point: iterated Lie brackets of a smooth local
/// horizontal frame, evaluated by central finite differences, span R^n.
/// Words up to length n are tried; rank is decided by singular values above
/// 1e-6 after column normalization.
pub fn completely_nonholonomic(
    delta: &ConstraintDistribution,
    samples: &[Vec<f64>],
) -> Result<bool> {
    let n = delta.dim();
    let k = delta.count();
    let m = n - k;
    if k == 0 {
        return Ok(true);
    }
    for q0 in samples {
        // Smooth local frame: project a frozen kernel basis through the
        // smooth orthogonal projector onto ker omega(q).
        let h0 = horizontal_basis(delta, q0)?;
        let frame = move |q: &[f64]| -> Result<DMatrix<f64>> {
            let w = delta.matrix(q);
            let gram = &w * w.transpose();
            let gram_inv = gram.try_inverse().ok_or(Error::Rank { sigma_min: 0.0, tol: 1e-10 })?;
            let proj = DMatrix::identity(n, n) - w.transpose() * gram_inv * w;
            Ok(proj * &h0)
        };

        let eval_word = |word: &[usize], q: &[f64]| -> Result<DVector<f64>> {
            fn rec(
                frame: &dyn Fn(&[f64]) -> Result<DMatrix<f64>>,
                word: &[usize],
                q: &[f64],
                eps: f64,
            ) -> Result<DVector<f64>> {
                if word.len() == 1 {
                    return Ok(frame(q)?.column(word[0]).into_owned());
                }
                let head = word[0];
                let rest = &word[1..];
                let y = frame(q)?.column(head).into_owned();
                let z = rec(frame, rest, q, eps)?;
                let shift = |dir: &DVector<f64>, s: f64| -> Vec<f64> {
                    q.iter().zip(dir.iter()).map(|(x, d)| x + s * d).collect()
                };
                // [Y, Z] = DZ.Y - DY.Z by central differences along the
                // frozen direction vectors.
                let z_plus = rec(frame, rest, &shift(&y, eps), eps)?;
                let z_minus = rec(frame, rest, &shift(&y, -eps), eps)?;
                let y_plus = frame(&shift(&z, eps))?.column(head).into_owned();
                let y_minus = frame(&shift(&z, -eps))?.column(head).into_owned();
                Ok((z_plus - z_minus - y_plus + y_minus) / (2.0 * eps))
            }
            rec(&frame, word, q, 1e-4)
        };

        let mut columns: Vec<DVector<f64>> = Vec::new();
        for i in 0..m {
            columns.push(frame(q0)?.column(i).into_owned());
        }
        let mut words: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
        let mut saturated = rank_of(&columns) == n;
        for _len in 2..=n {
            if saturated {
                break;
            }
            let mut next_words = Vec::new();
            for w in &words {
                for i in 0..m {
                    if w.len() == 1 && w[0] == i {
                        continue; // [Y_i, Y_i] = 0
                    }
                    let mut nw = Vec::with_capacity(w.len() + 1);
                    nw.push(i);
                    nw.extend_from_slice(w);
                    let val = eval_word(&nw, q0)?;
                    let norm = val.norm();
                    if norm > 1e-8 {
                        columns.push(val / norm);
                    }
                    next_words.push(nw);
                    if rank_of(&columns) == n {
                        saturated = true;
                        break;
                    }
                }
                if saturated {
                    break;
                }
            }
            words = next_words;
        }
        if !saturated {
            return Ok(false);
        }
    }
    Ok(true)
}

fn rank_of(columns: &[DVector<f64>]) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let n = columns[0].len();
    let mut mat = DMatrix::zeros(n, columns.len());
    for (j, c) in columns.iter().enumerate() {
        let norm = c.norm();
        let scaled = if norm > 0.0 { c / norm } else { c.clone() };
        mat.set_column(j, &scaled);
    }
    let sv = mat.singular_values();
    sv.iter().filter(|s| **s > 1e-6).count()
}

/// Verification summary for a candidate section.
#[derive(Clone, Debug)]
pub struct HjReport {
    pub in_k_residual: f64,
    pub dgamma_residual: f64,
    pub dhj_residual: f64,
    pub energy_mean: f64,
    pub energy_dev: f64,
    pub crosscheck_dev: Option<f64>,
    /// Whether the distribution was found bracket generating on the samples;
    /// energy constancy is only an equivalent criterion when it is.
    pub bracket_generating: Option<bool>,
}

impl std::fmt::Display for HjReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "in_K_residual: {:.6e}", self.in_k_residual)?;
        writeln!(f, "dgamma_residual: {:.6e}", self.dgamma_residual)?;
        writeln!(f, "dhj_residual: {:.6e}", self.dhj_residual)?;
        writeln!(f, "energy_mean: {:.17e}", self.energy_mean)?;
        writeln!(f, "energy_dev: {:.6e}", self.energy_dev)?;
        match self.crosscheck_dev {
            Some(d) => writeln!(f, "crosscheck_dev: {d:.6e}")?,
            None => writeln!(f, "crosscheck_dev: n/a")?,
        }
        if let Some(b) = self.bracket_generating {
            writeln!(f, "bracket_generating: {b}")?;
        }
        Ok(())
    }
}

/// Run every section check over the samples, optionally cross-checking the
/// lifted flow against direct integration from `flow.0` over `[0, flow.1]`
/// with step `flow.2`.
pub fn hj_report(
    section: &HjSection,
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    samples: &[Vec<f64>],
    flow: Option<(&[f64], f64, f64)>,
) -> Result<HjReport> {
    let in_k = check_in_k(section, l, delta, samples)?;
    let dgamma = check_closedness_on_delta(section.gamma_dyn(), delta, samples)?;
    let mut dhj = 0.0_f64;
    for q in samples {
        for r in dhj_residual(section, l, delta, q)? {
            dhj = dhj.max(r.abs());
        }
    }
    let (energy_mean, energy_dev) = dhj_energy_constancy(section, l, samples);
    let crosscheck_dev = match flow {
        Some((q0, t, h)) => Some(crosscheck_hj_vs_direct(section, l, delta, q0, t, h)?),
        None => None,
    };
    let bracket_generating = Some(completely_nonholonomic(delta, samples)?);
    Ok(HjReport {
        in_k_residual: in_k,
        dgamma_residual: dgamma,
        dhj_residual: dhj,
        energy_mean,
        energy_dev,
        crosscheck_dev,
        bracket_generating,
    })
}
