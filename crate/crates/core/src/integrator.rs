//! Lagrange-Dirac dynamics as a semi-explicit index-reduced DAE: per-stage
//! KKT solves inside a classical RK4 sweep, velocity projection back onto the
//! distribution, momenta recomputed through the Legendre transform.

use crate::autodiff::lagrangian_blocks;
use crate::error::{Error, Result};
use crate::geometry::{
    annihilator_basis, generalized_energy, ConstraintDistribution, LagrangianField,
    PontryaginState,
};
use crate::linalg::{self, KktSolution};
use nalgebra::{DMatrix, DVector};

/// The blocks of the constrained acceleration system at one state:
///   M(q, v) vdot = b(q, v) + omega(q)^T lambda,   omega(q) vdot = -c(q, v).
pub struct DaeAssembly {
    /// Velocity Hessian M = d2L/dv2.
    pub mass: DMatrix<f64>,
    /// Configuration force b = dL/dq - W v with W[j][i] = d2L/dv_j dq_i.
    pub force: DVector<f64>,
    /// Constraint coefficient matrix omega(q), k x n.
    pub omega: DMatrix<f64>,
    /// Acceleration-level drift c with omega vdot = -c.
    pub drift: DVector<f64>,
    /// Mixed block W, used to report pdot = M vdot + W v.
    pub w_vq: DMatrix<f64>,
    /// Velocity at assembly, for the pdot report.
    v: DVector<f64>,
}

pub fn assemble(
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    q: &[f64],
    v: &[f64],
) -> Result<DaeAssembly> {
    let blocks = lagrangian_blocks(l.dyn_ref(), q, v)?;
    let n = l.dim();
    let mut force = DVector::zeros(n);
    for j in 0..n {
        let mut acc = blocks.grad_q[j];
        for i in 0..n {
            acc -= blocks.w_vq[(j, i)] * v[i];
        }
        force[j] = acc;
    }
    Ok(DaeAssembly {
        mass: blocks.m_vv,
        force,
        omega: delta.matrix(q),
        drift: delta.drift(q, v),
        w_vq: blocks.w_vq,
        v: DVector::from_column_slice(v),
    })
}

/// Acceleration, multipliers and momentum rate at one state.
pub struct StepSolve {
    pub vdot: DVector<f64>,
    pub lambda: DVector<f64>,
    /// pdot = M vdot + W v.
    pub pdot: DVector<f64>,
    /// True when the KKT matrix was singular and the minimum-norm consistent
    /// solution was taken (weak degeneracy).
    pub degenerate: bool,
}

pub fn solve_step(asm: &DaeAssembly) -> Result<StepSolve> {
    let KktSolution { vdot, lambda, degenerate } =
        linalg::solve_kkt(&asm.mass, &asm.omega, &asm.force, &asm.drift)?;
    let pdot = &asm.mass * &vdot + &asm.w_vq * &asm.v;
    Ok(StepSolve { vdot, lambda, pdot, degenerate })
}

#[derive(Clone, Debug)]
pub struct IntegrateOptions {
    /// Project the velocity back onto Delta_Q(q) after each step (orthogonal
    /// projection along the constraint one-forms). Keeps the constraint
    /// residual at round-off across long horizons.
    pub project_velocity: bool,
    /// Abort with `BlowUp` when any state component exceeds this.
    pub blowup_threshold: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { project_velocity: true, blowup_threshold: 1e12 }
    }
}

/// A simulated trajectory on the Pontryagin bundle. Momenta are recomputed
/// from the Legendre transform at every saved state, so states lie on the
/// constraint momentum space K up to the constraint residual.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<PontryaginState>,
    /// Multipliers of the KKT solve at each state (length k each).
    pub multipliers: Vec<DVector<f64>>,
    /// Generalized energy at each state.
    pub energy: Vec<f64>,
    /// || omega(q) v ||_inf at each state.
    pub constraint_residual: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.q.len())
    }

    /// max_t | E(t) - E(0) |.
    pub fn energy_drift(&self) -> f64 {
        let e0 = match self.energy.first() {
            Some(e) => *e,
            None => return 0.0,
        };
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residual.iter().cloned().fold(0.0, f64::max)
    }

    /// Sup over the grid of the infinity-norm distance between the (q, v, p)
    /// states of two trajectories on a common grid.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        let mut worst = 0.0_f64;
        for (a, b) in self.states.iter().zip(other.states.iter()) {
            for (x, y) in a.q.iter().zip(b.q.iter()) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.v.iter().zip(b.v.iter()) {
                worst = worst.max((x - y).abs());
            }
            for (x, y) in a.p.iter().zip(b.p.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Number of fixed steps covering [0, T]; T must be an integer multiple of h
/// to round-off.
pub fn step_count(t_final: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::config(format!("step size must be positive, got {h}")));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::config(format!("final time must be non-negative, got {t_final}")));
    }
    let steps = (t_final / h).round();
    if (steps * h - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::config(format!("final time {t_final} is not a multiple of step {h}")));
    }
    Ok(steps as usize)
}

/// Integrate the Lagrange-Dirac equations from (q0, v0) over [0, T] with
/// fixed step h. The initial velocity must satisfy the constraints; it is
/// projected first when `project_velocity` is set.
///
/// A velocity Hessian that vanishes identically at the initial state is
/// rejected immediately: the equations are then first-order and outside the
/// scope of this integrator (see `hj::linear_velocity_diagnostic`).
pub fn integrate(
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    q0: &[f64],
    v0: &[f64],
    t_final: f64,
    h: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let n = l.dim();
    if q0.len() != n || v0.len() != n || delta.dim() != n {
        return Err(Error::shape("initial state dimensions do not match the system"));
    }
    let steps = step_count(t_final, h)?;

    let first = assemble(l, delta, q0, v0)?;
    if first.mass.amax() < 1e-12 {
        return Err(Error::singular_kkt_linear_velocity());
    }

    let mut q = q0.to_vec();
    let mut v = v0.to_vec();
    if opts.project_velocity {
        project_velocity(delta, &q, &mut v)?;
    }

    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        multipliers: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        constraint_residual: Vec::with_capacity(steps + 1),
    };

    for step in 0..=steps {
        let t = step as f64 * h;
        let asm = assemble(l, delta, &q, &v)?;
        let sol = solve_step(&asm)?;
        record_state(l, delta, &mut traj, t, &q, &v, sol.lambda.clone());

        if step == steps {
            break;
        }

        // Classical RK4 on y = (q, v); the remaining three stage solves.
        let k1 = (v.clone(), sol.vdot);
        let (q2, v2) = advance(&q, &v, &k1, 0.5 * h);
        let k2 = stage(l, delta, &q2, &v2)?;
        let (q3, v3) = advance(&q, &v, &k2, 0.5 * h);
        let k3 = stage(l, delta, &q3, &v3)?;
        let (q4, v4) = advance(&q, &v, &k3, h);
        let k4 = stage(l, delta, &q4, &v4)?;

        for i in 0..n {
            q[i] += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            v[i] += h / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        if opts.project_velocity {
            project_velocity(delta, &q, &mut v)?;
        }

        let norm = q.iter().chain(v.iter()).map(|x| x.abs()).fold(0.0, f64::max);
        if !norm.is_finite() || norm > opts.blowup_threshold {
            return Err(Error::BlowUp { t: t + h, norm });
        }
    }
    Ok(traj)
}

fn stage(
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    q: &[f64],
    v: &[f64],
) -> Result<(Vec<f64>, DVector<f64>)> {
    let asm = assemble(l, delta, q, v)?;
    let sol = solve_step(&asm)?;
    Ok((v.to_vec(), sol.vdot))
}

fn advance(q: &[f64], v: &[f64], k: &(Vec<f64>, DVector<f64>), dt: f64) -> (Vec<f64>, Vec<f64>) {
    let qn = q.iter().zip(k.0.iter()).map(|(x, d)| x + dt * d).collect();
    let vn = v.iter().zip(k.1.iter()).map(|(x, d)| x + dt * d).collect();
    (qn, vn)
}

fn project_velocity(delta: &ConstraintDistribution, q: &[f64], v: &mut [f64]) -> Result<()> {
    if delta.count() == 0 {
        return Ok(());
    }
    let basis = annihilator_basis(delta, q)?;
    let vv = DVector::from_column_slice(v);
    let coeffs = basis.transpose() * &vv;
    let corrected = vv - basis * coeffs;
    v.copy_from_slice(corrected.as_slice());
    Ok(())
}

fn record_state(
    l: &LagrangianField,
    delta: &ConstraintDistribution,
    traj: &mut Trajectory,
    t: f64,
    q: &[f64],
    v: &[f64],
    lambda: DVector<f64>,
) {
    let state = crate::geometry::lift_velocity(l, q, v);
    let residual = {
        let r = delta.apply(q, v);
        if r.len() == 0 {
            0.0
        } else {
            r.amax()
        }
    };
    traj.energy.push(generalized_energy(l, &state));
    traj.constraint_residual.push(residual);
    traj.t.push(t);
    traj.states.push(state);
    traj.multipliers.push(lambda);
}
