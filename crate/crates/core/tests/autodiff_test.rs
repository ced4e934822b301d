//! Forward-mode differentiation against frozen hand-computed values and
//! central finite differences.

use diracmech::autodiff::{
    exterior_derivative_2form, grad_scalar, jacobian_covector, lagrangian_blocks, Dual1, Dual2,
    Lagrangian, Scalar, ScalarMap, ScalarMapDyn,
};
use diracmech::Error;
use proptest::prelude::*;

struct Bump;

impl ScalarMap for Bump {
    fn dim(&self) -> usize {
        2
    }
    // f(x, y) = sin(x) y^2 + x^3
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        x[0].sin() * x[1] * x[1] + x[0].powi(3)
    }
}

struct MixedL;

impl Lagrangian for MixedL {
    fn dim(&self) -> usize {
        2
    }
    // L = 1/2 (v1^2 + q1 v2^2) + sin(q2) v1 - cos(q1 q2)
    fn eval<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        (v[0] * v[0] + q[0] * v[1] * v[1]).scale(0.5) + q[1].sin() * v[0]
            - (q[0] * q[1]).cos()
    }
}

struct Vortex1Form;

impl diracmech::autodiff::ArrayMap for Vortex1Form {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    // gamma = (-y/2, x/2), so d gamma = dx ^ dy
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        out[0] = -x[1].scale(0.5);
        out[1] = x[0].scale(0.5);
    }
}

struct ExactForm;

impl diracmech::autodiff::ArrayMap for ExactForm {
    fn dim_in(&self) -> usize {
        3
    }
    fn dim_out(&self) -> usize {
        3
    }
    // gamma = d(x^2 y + sin(z) x): closed by construction
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        out[0] = x[0] * x[1].scale(2.0) + x[2].sin();
        out[1] = x[0] * x[0];
        out[2] = x[2].cos() * x[0];
    }
}

struct WideMap;

impl ScalarMap for WideMap {
    fn dim(&self) -> usize {
        13
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        x.iter().fold(S::constant(0.0), |acc, t| acc + *t * *t)
    }
}

#[test]
fn gradient_matches_frozen_values() {
    let x = [0.7, -1.3];
    let f = Bump;
    assert!((f.eval_f64(&x) - 1.4317278914316978).abs() < 5e-15);
    let g = grad_scalar(&f, &x).unwrap();
    assert!((g[0] - 2.7625832965107855).abs() < 5e-15);
    assert!((g[1] - -1.6749659868179967).abs() < 5e-15);
}

#[test]
fn lagrangian_blocks_match_frozen_values() {
    let q = [0.8, -0.4];
    let v = [1.1, 0.6];
    let b = lagrangian_blocks(&MixedL, &q, &v).unwrap();
    assert!((b.value - -0.6285955946219564).abs() < 5e-15);
    assert!((b.grad_q[0] - 0.30582662424644713).abs() < 5e-15);
    assert!((b.grad_q[1] - 0.7615138449102795).abs() < 5e-15);
    assert!((b.grad_v[0] - 0.7105816576913495).abs() < 5e-15);
    assert!((b.grad_v[1] - 0.48).abs() < 5e-15);
    // velocity Hessian [[1, 0], [0, q1]]
    assert!((b.m_vv[(0, 0)] - 1.0).abs() < 5e-15);
    assert!(b.m_vv[(0, 1)].abs() < 5e-15);
    assert!(b.m_vv[(1, 0)].abs() < 5e-15);
    assert!((b.m_vv[(1, 1)] - 0.8).abs() < 5e-15);
    // W[(j, i)] = d2L/dv_j dq_i
    assert!(b.w_vq[(0, 0)].abs() < 5e-15);
    assert!((b.w_vq[(0, 1)] - 0.9210609940028851).abs() < 5e-15);
    assert!((b.w_vq[(1, 0)] - 0.6).abs() < 5e-15);
    assert!(b.w_vq[(1, 1)].abs() < 5e-15);
}

#[test]
fn jacobian_convention_and_exterior_derivative() {
    let j = jacobian_covector(&Vortex1Form, &[0.3, -0.9]).unwrap();
    // entry (i, j) = d gamma_j / d x^i
    assert_eq!(j[(0, 0)], 0.0);
    assert_eq!(j[(0, 1)], 0.5);
    assert_eq!(j[(1, 0)], -0.5);
    assert_eq!(j[(1, 1)], 0.0);
    let d = exterior_derivative_2form(&Vortex1Form, &[0.3, -0.9], &[1.0, 0.0], &[0.0, 1.0])
        .unwrap();
    assert_eq!(d, 1.0);
    // antisymmetry in the argument pair
    let r = exterior_derivative_2form(&Vortex1Form, &[0.3, -0.9], &[0.0, 1.0], &[1.0, 0.0])
        .unwrap();
    assert_eq!(r, -1.0);
}

#[test]
fn constants_carry_zero_tangents() {
    let c = Dual1::constant(3.5);
    assert_eq!(c.re, 3.5);
    assert!(c.du.iter().all(|d| *d == 0.0));
    let c2: Dual2 = 3.5_f64.lift().lift();
    assert_eq!(c2.re.re, 3.5);
    assert!(c2.du.iter().all(|d| d.re == 0.0 && d.du.iter().all(|t| *t == 0.0)));
    assert!(c2.re.du.iter().all(|t| *t == 0.0));
}

#[test]
fn lane_ceiling_is_rejected_with_shape_error() {
    let x = vec![0.1; 13];
    match grad_scalar(&WideMap, &x) {
        Err(Error::Shape(_)) => {}
        other => panic!("expected a shape error, got {other:?}"),
    }
}

#[test]
fn domain_error_carries_through() {
    struct Sqrt;
    impl ScalarMap for Sqrt {
        fn dim(&self) -> usize {
            1
        }
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            x[0].sqrt()
        }
    }
    // derivative of sqrt blows up at 0
    assert!(matches!(grad_scalar(&Sqrt, &[0.0]), Err(Error::Domain { .. })));
    assert!(grad_scalar(&Sqrt, &[4.0]).is_ok());
}

fn central_diff(f: &dyn ScalarMapDyn, x: &[f64], i: usize, h: f64) -> f64 {
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[i] += h;
    lo[i] -= h;
    (f.eval_f64(&hi) - f.eval_f64(&lo)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_agrees_with_finite_differences(
        x in -1.5_f64..1.5, y in -1.5_f64..1.5
    ) {
        let p = [x, y];
        let g = grad_scalar(&Bump, &p).unwrap();
        for i in 0..2 {
            let fd = central_diff(&Bump, &p, i, 1e-6);
            let scale = g[i].abs().max(fd.abs()).max(1.0);
            prop_assert!((g[i] - fd).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn product_and_chain_rules_are_exact(x in -2.0_f64..2.0) {
        let d = Dual1::seeded(x, 0);
        let u = d.sin();
        let w = d * d;
        // tangent of a product is the two cross terms, bit for bit
        let prod = u * w;
        prop_assert_eq!(prod.du[0], u.du[0] * w.re + u.re * w.du[0]);
        // chain rule carries cos(x); the compiler may fuse the sin/cos pair
        // into one sincos call whose results sit an ulp from the standalone
        // functions, so compare up to 2 ulp rather than bitwise
        let c = x.cos();
        prop_assert!((u.du[0] - c).abs() <= 2.0 * f64::EPSILON * c.abs().max(1.0));
        prop_assert!((u.re - x.sin()).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn velocity_hessian_is_symmetric(
        q1 in -1.0_f64..1.0, q2 in -1.0_f64..1.0,
        v1 in -1.0_f64..1.0, v2 in -1.0_f64..1.0
    ) {
        let b = lagrangian_blocks(&MixedL, &[q1, q2], &[v1, v2]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((b.m_vv[(i, j)] - b.m_vv[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_form_has_zero_exterior_derivative(
        x in -1.0_f64..1.0, y in -1.0_f64..1.0, z in -1.0_f64..1.0,
        u1 in -1.0_f64..1.0, u2 in -1.0_f64..1.0, u3 in -1.0_f64..1.0,
        w1 in -1.0_f64..1.0, w2 in -1.0_f64..1.0, w3 in -1.0_f64..1.0
    ) {
        let d = exterior_derivative_2form(
            &ExactForm, &[x, y, z], &[u1, u2, u3], &[w1, w2, w3]
        ).unwrap();
        prop_assert!(d.abs() < 1e-13);
    }
}
