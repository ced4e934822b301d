//! Constraint geometry and induced Dirac structure: kernel bases, membership
//! predicates, the self-duality pairing, and holonomic leaves.

use diracmech::geometry::{
    annihilator_basis, dirac_differential, generalized_energy, horizontal_basis,
    induced_dirac_membership, k_residual, legendre, lift_velocity, pontryagin_dirac_membership,
    PontryaginState,
};
use diracmech::systems::make_system;
use diracmech::Error;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VR: f64 = 1.3228756555322954; // sqrt(7)/2

fn roller() -> diracmech::systems::SystemDef {
    make_system("roller-racer", &[]).unwrap()
}

#[test]
fn roller_momenta_match_hand_values() {
    let sys = roller();
    let q = [0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2];
    let v = [VR, 0.0, 0.5, VR - 0.5];
    // L has no phi-dot dependence, so p = (m1 vx, m1 vy, I1 vtheta, 0)
    let p = legendre(&sys.lagrangian, &q, &v);
    assert!((p[0] - VR).abs() < 1e-15);
    assert!(p[1].abs() < 1e-15);
    assert!((p[2] - 0.5).abs() < 1e-15);
    assert!(p[3].abs() < 1e-15);

    // purely kinetic L: E = p.v - L = L, and the defaults sit at E = 1
    let s = lift_velocity(&sys.lagrangian, &q, &v);
    assert!((generalized_energy(&sys.lagrangian, &s) - 1.0).abs() < 1e-14);

    // on the Legendre graph over the constraint, both K residuals vanish
    let (c, f) = k_residual(&sys.lagrangian, &sys.constraints, &s);
    assert!(c.amax() < 1e-14);
    assert!(f.amax() < 1e-15);
}

#[test]
fn dirac_differential_signs() {
    let sys = roller();
    let q = [0.3, -0.2, 0.9, 1.1];
    let v = [0.4, 0.7, -0.3, 0.2];
    let d = dirac_differential(&sys.lagrangian, &q, &v);
    let p = legendre(&sys.lagrangian, &q, &v);
    for i in 0..4 {
        assert_eq!(d.p[i], p[i]);
    }
    // L is independent of (x, y); the base differential vanishes there
    assert_eq!(d.minus_dq[0], 0.0);
    assert_eq!(d.minus_dq[1], 0.0);
    assert_eq!(d.q, q);
    assert_eq!(d.v, v);
}

#[test]
fn kernel_and_annihilator_bases_are_orthonormal_complements() {
    let sys = roller();
    for q in sys.sample_q(50, 3, 1.0) {
        let w = sys.constraints.matrix(&q);
        let h = horizontal_basis(&sys.constraints, &q).unwrap();
        let a = annihilator_basis(&sys.constraints, &q).unwrap();
        assert_eq!(h.ncols(), 2);
        assert_eq!(a.ncols(), 2);
        // columns of h span ker omega
        assert!((w * &h).amax() < 1e-12);
        // orthonormality of both bases and mutual orthogonality
        assert!(((h.transpose() * &h) - nalgebra::DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!(((a.transpose() * &a) - nalgebra::DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((h.transpose() * &a).amax() < 1e-12);
    }
}

#[test]
fn rank_deficient_forms_are_rejected() {
    struct Parallel;
    impl diracmech::autodiff::ArrayMap for Parallel {
        fn dim_in(&self) -> usize {
            2
        }
        fn dim_out(&self) -> usize {
            4
        }
        fn eval<S: diracmech::autodiff::Scalar>(&self, _x: &[S], out: &mut [S]) {
            out[0] = S::constant(1.0);
            out[1] = S::constant(0.0);
            out[2] = S::constant(2.0);
            out[3] = S::constant(0.0);
        }
    }
    let delta = diracmech::geometry::ConstraintDistribution::new(2, Parallel).unwrap();
    match horizontal_basis(&delta, &[0.0, 0.0]) {
        Err(Error::Rank { sigma_min, tol }) => {
            assert!(sigma_min <= tol);
        }
        other => panic!("expected rank error, got {other:?}"),
    }
}

#[test]
fn lc_leaf_is_tangent_to_the_constraint() {
    let sys = make_system("lc-circuit", &[]).unwrap();
    let leaf = sys.leaf.as_ref().unwrap();
    let samples: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![-0.9 + 0.045 * i as f64, 0.6 - 0.03 * i as f64])
        .collect();
    assert!(leaf.tangency_residual(&sys.constraints, &samples).unwrap() < 1e-12);
    // the embedding solves the two charge-conservation relations
    let q = leaf.embed(&[0.4, -0.2]);
    assert_eq!(q.len(), 4);
    assert!((q[2] - (q[0] - 0.0)).abs() < 1e-15);
    assert!((q[3] - (q[2] - q[1] - 0.0)).abs() < 1e-15);
}

#[test]
fn membership_flags_violations() {
    let sys = roller();
    let q = [0.1, 0.2, 0.4, 1.3];
    let h = horizontal_basis(&sys.constraints, &q).unwrap();
    let qdot: Vec<f64> = (h.column(0) * 0.7 + h.column(1) * -0.3).iter().cloned().collect();
    let pdot = vec![0.3, -0.1, 0.2, 0.0];
    let alpha_q: Vec<f64> = pdot.iter().map(|x| -x).collect();
    let alpha_p = qdot.clone();
    let m = induced_dirac_membership(
        &sys.constraints,
        &q,
        &[0.0; 4],
        (&qdot, &pdot),
        (&alpha_q, &alpha_p),
    )
    .unwrap();
    assert!(m.max_residual() < 1e-12);

    // velocity outside the distribution is caught by the constraint slot
    let bad = induced_dirac_membership(
        &sys.constraints,
        &q,
        &[0.0; 4],
        (&[1.0, 0.0, 0.0, 0.0], &pdot),
        (&alpha_q, &[1.0, 0.0, 0.0, 0.0]),
    )
    .unwrap();
    assert!(bad.constraint.amax() > 1e-2);

    // nonzero velocity-slot covector component violates the Pontryagin form
    let s = PontryaginState { q: q.to_vec(), v: qdot.clone(), p: vec![0.0; 4] };
    let pm = pontryagin_dirac_membership(
        &sys.constraints,
        &s,
        (&qdot, &[0.0; 4], &pdot),
        (&alpha_q, &[0.0, 0.0, 0.5, 0.0], &alpha_p),
    )
    .unwrap();
    assert!((pm.max_residual() - 0.5).abs() < 1e-12);
}

/// Draw a tangent/cotangent pair lying in the induced Dirac structure at q:
/// qdot horizontal, alpha_p = qdot, alpha_q + pdot in the annihilator.
fn dirac_pair(
    delta: &diracmech::geometry::ConstraintDistribution,
    q: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = delta.dim();
    let h = horizontal_basis(delta, q).unwrap();
    let a = annihilator_basis(delta, q).unwrap();
    let mut qdot = DVector::zeros(n);
    for c in 0..h.ncols() {
        qdot += h.column(c) * rng.gen_range(-1.0..1.0);
    }
    let pdot = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let mut eta = DVector::zeros(n);
    for c in 0..a.ncols() {
        eta += a.column(c) * rng.gen_range(-1.0..1.0);
    }
    let alpha_q = &eta - &pdot;
    (
        qdot.iter().cloned().collect(),
        pdot.iter().cloned().collect(),
        alpha_q.iter().cloned().collect(),
        qdot.iter().cloned().collect(),
    )
}

#[test]
fn self_duality_pairing_vanishes() {
    // <alpha1, X2> + <alpha2, X1> = 0 for members of the structure: the
    // defining isotropy property, checked over many random constructed pairs
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ["roller-racer", "lc-circuit", "bicycle"] {
        let sys = make_system(name, &[]).unwrap();
        let mut worst = 0.0_f64;
        for q in sys.sample_q(200, 5, 1.0) {
            let (qd1, pd1, aq1, ap1) = dirac_pair(&sys.constraints, &q, &mut rng);
            let (qd2, pd2, aq2, ap2) = dirac_pair(&sys.constraints, &q, &mut rng);
            let p_ambient = vec![0.0; qd1.len()];
            let m1 = induced_dirac_membership(
                &sys.constraints, &q, &p_ambient,
                (&qd1, &pd1), (&aq1, &ap1),
            )
            .unwrap();
            assert!(m1.max_residual() < 1e-12);
            let pair = |aq: &[f64], ap: &[f64], qd: &[f64], pd: &[f64]| -> f64 {
                aq.iter().zip(qd).map(|(a, b)| a * b).sum::<f64>()
                    + ap.iter().zip(pd).map(|(a, b)| a * b).sum::<f64>()
            };
            let s = pair(&aq1, &ap1, &qd2, &pd2) + pair(&aq2, &ap2, &qd1, &pd1);
            worst = worst.max(s.abs());
        }
        assert!(worst < 1e-12, "{name}: pairing residual {worst:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn legendre_is_gradient_of_l_in_v(
        seed in 0_u64..1000
    ) {
        let sys = roller();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut qc = q.clone();
        qc[3] = 1.0 + qc[3].abs(); // keep csc(phi) well away from the pole
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = legendre(&sys.lagrangian, &qc, &v);
        // central finite differences in each velocity slot
        for i in 0..4 {
            let mut hi = v.clone();
            let mut lo = v.clone();
            hi[i] += 1e-6;
            lo[i] -= 1e-6;
            let fd = (sys.lagrangian.eval(&qc, &hi) - sys.lagrangian.eval(&qc, &lo)) / 2e-6;
            prop_assert!((p[i] - fd).abs() < 1e-8);
        }
    }
}
