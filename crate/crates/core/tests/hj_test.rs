//! Verification of closed-form solutions of the generalized Hamilton-Jacobi
//! conditions, detection of perturbed candidates, flow cross-checks, and the
//! holonomic / nondegenerate-nonholonomic specializations.

use std::sync::Arc;

use diracmech::autodiff::{ArrayMap, Lagrangian, Scalar};
use diracmech::geometry::ConstraintDistribution;
use diracmech::hj;
use diracmech::hj::HjSection;
use diracmech::systems::{
    make_system, scale_section_gamma, scale_section_x_component, ScaledMap,
};
use proptest::prelude::*;

#[test]
fn roller_section_passes_every_check() {
    let sys = make_system("roller-racer", &[]).unwrap();
    let e = sys.default_energy;
    let section = sys.hj_section(e, sys.default_vtheta, 1).unwrap();
    let samples = sys.sample_q(1000, 7, e);

    let in_k = hj::check_in_k(&section, &sys.lagrangian, &sys.constraints, &samples).unwrap();
    assert!(in_k < 1e-10, "in_K residual {in_k:e}");

    let closed =
        hj::check_closedness_on_delta(section.gamma_dyn(), &sys.constraints, &samples).unwrap();
    assert!(closed < 1e-10, "closedness residual {closed:e}");

    let mut dhj = 0.0_f64;
    for q in &samples {
        let r = hj::dhj_residual(&section, &sys.lagrangian, &sys.constraints, q).unwrap();
        dhj = dhj.max(r.iter().fold(0.0, |a, x| a.max(x.abs())));
    }
    assert!(dhj < 1e-10, "differential residual {dhj:e}");

    let (mean, dev) = hj::dhj_energy_constancy(&section, &sys.lagrangian, &samples);
    assert!((mean - e).abs() < 1e-12);
    assert!(dev < 1e-12, "energy deviation {dev:e}");

    // the reverse branch solves the conditions just as well
    let other = sys.hj_section(e, sys.default_vtheta, -1).unwrap();
    let in_k = hj::check_in_k(&other, &sys.lagrangian, &sys.constraints, &samples).unwrap();
    assert!(in_k < 1e-10);
}

fn max_residual(
    section: &HjSection,
    sys: &diracmech::systems::SystemDef,
    samples: &[Vec<f64>],
) -> f64 {
    let mut worst =
        hj::check_in_k(section, &sys.lagrangian, &sys.constraints, samples).unwrap();
    worst = worst.max(
        hj::check_closedness_on_delta(section.gamma_dyn(), &sys.constraints, samples).unwrap(),
    );
    for q in samples {
        let r = hj::dhj_residual(section, &sys.lagrangian, &sys.constraints, q).unwrap();
        worst = worst.max(r.iter().fold(0.0, |a, x| a.max(x.abs())));
    }
    let (_, dev) = hj::dhj_energy_constancy(section, &sys.lagrangian, samples);
    worst.max(dev)
}

#[test]
fn one_percent_perturbations_are_all_detected() {
    let sys = make_system("roller-racer", &[]).unwrap();
    let e = sys.default_energy;
    let clean = sys.hj_section(e, sys.default_vtheta, 1).unwrap();
    let samples = sys.sample_q(200, 11, e);
    assert!(max_residual(&clean, &sys, &samples) < 1e-10);

    // momentum one-form scaled as a whole
    let v1 = scale_section_gamma(&clean, 1.01);
    // one component of the vector field scaled
    let v2 = scale_section_x_component(&clean, 3, 1.01);
    // a single component of the one-form scaled
    let factors = vec![1.0, 1.0, 1.01, 1.0];
    let gamma3 = Arc::new(ScaledMap::new(clean.gamma_arc(), factors).unwrap());
    let v3 = HjSection::from_arcs(clean.x_arc(), gamma3).unwrap();
    // vector field taken at a 1% higher energy level, one-form left alone
    let off_level = sys.hj_section(1.01 * e, sys.default_vtheta, 1).unwrap();
    let v4 = HjSection::from_arcs(off_level.x_arc(), clean.gamma_arc()).unwrap();

    for (name, variant) in
        [("gamma", v1), ("x component", v2), ("gamma component", v3), ("energy level", v4)]
    {
        let worst = max_residual(&variant, &sys, &samples);
        assert!(worst > 1e-4, "perturbed {name} slipped through: residual {worst:e}");
    }
}

#[test]
fn lc_leaf_specialization_passes() {
    let sys = make_system("lc-circuit", &[]).unwrap();
    let e = sys.default_energy;
    let section = sys.hj_section(e, 0.0, 1).unwrap();
    let leaf = sys.leaf.as_ref().unwrap();
    let samples = sys.sample_q(500, 13, e);
    let w_samples: Vec<Vec<f64>> = samples.iter().map(|q| q[..leaf.dim()].to_vec()).collect();

    let hc = hj::holonomic_check(&section, &sys.lagrangian, leaf, &w_samples).unwrap();
    assert!((hc.energy_mean - e).abs() < 1e-12);
    assert!(hc.energy_dev < 1e-10, "energy deviation on the leaf {:e}", hc.energy_dev);
    assert!(hc.closedness < 1e-10, "pulled-back closedness {:e}", hc.closedness);
    assert!(hc.energy_gradient < 1e-10, "leaf energy gradient {:e}", hc.energy_gradient);

    let in_k = hj::check_in_k(&section, &sys.lagrangian, &sys.constraints, &samples).unwrap();
    assert!(in_k < 1e-10);
}

#[test]
fn lifted_flow_tracks_direct_integration() {
    let roller = make_system("roller-racer", &[]).unwrap();
    let section = roller.hj_section(1.0, 0.5, 1).unwrap();
    let dev = hj::crosscheck_hj_vs_direct(
        &section,
        &roller.lagrangian,
        &roller.constraints,
        &roller.q0,
        2.0,
        1e-3,
    )
    .unwrap();
    assert!(dev < 1e-6, "roller flow gap {dev:e}");

    let lc = make_system("lc-circuit", &[]).unwrap();
    let section = lc.hj_section(lc.default_energy, 0.0, 1).unwrap();
    let dev =
        hj::crosscheck_hj_vs_direct(&section, &lc.lagrangian, &lc.constraints, &lc.q0, 1.0, 1e-3)
            .unwrap();
    assert!(dev < 1e-6, "lc flow gap {dev:e}");
}

#[test]
fn perturbed_one_form_breaks_the_flow_crosscheck() {
    let sys = make_system("roller-racer", &[]).unwrap();
    let clean = sys.hj_section(1.0, 0.5, 1).unwrap();
    let bad = scale_section_gamma(&clean, 1.01);
    // the base flow is untouched, but the lifted momentum curve leaves the
    // directly integrated one
    let dev = hj::crosscheck_hj_vs_direct(
        &bad,
        &sys.lagrangian,
        &sys.constraints,
        &sys.q0,
        1.0,
        1e-2,
    )
    .unwrap();
    assert!(dev > 1e-4, "perturbed flow gap only {dev:e}");

    // over a zero-length window the curves share their single point up to
    // the scaled initial momentum
    let zero = hj::crosscheck_hj_vs_direct(
        &bad,
        &sys.lagrangian,
        &sys.constraints,
        &sys.q0,
        0.0,
        1e-2,
    )
    .unwrap();
    assert!(zero < 2e-2);
}

#[test]
fn scaled_current_component_breaks_energy_constancy() {
    let sys = make_system("lc-circuit", &[]).unwrap();
    let e = sys.default_energy;
    let clean = sys.hj_section(e, 0.0, 1).unwrap();
    let samples = sys.sample_q(300, 17, e);

    let (_, dev) = hj::dhj_energy_constancy(&clean, &sys.lagrangian, &samples);
    assert!(dev < 1e-12);

    let bad = scale_section_x_component(&clean, 0, 1.1);
    let (_, dev) = hj::dhj_energy_constancy(&bad, &sys.lagrangian, &samples);
    assert!(dev > 1e-4, "scaled current left energy deviation at only {dev:e}");
}

// Planar test system with a single affine constraint: the Legendre transform
// is the identity, so the nondegenerate corollary applies and every quantity
// has a short closed form.
struct PlanarL;
impl Lagrangian for PlanarL {
    fn dim(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, _q: &[S], v: &[S]) -> S {
        (v[0] * v[0] + v[1] * v[1]).scale(0.5)
    }
}

struct PlanarForm;
impl ArrayMap for PlanarForm {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        out[0] = -x[0];
        out[1] = S::constant(1.0);
    }
}

/// Exact solution: gamma = sqrt(2E / (1 + x0^2)) (1, x0) keeps H o gamma = E.
struct PlanarGamma {
    e: f64,
}
impl ArrayMap for PlanarGamma {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let denom = S::constant(1.0) + x[0] * x[0];
        let w = (S::constant(2.0 * self.e) / denom).sqrt();
        out[0] = w;
        out[1] = w * x[0];
    }
}

/// Deliberately wrong candidate: constant speed w along (1, x0).
struct PlanarWrongGamma {
    w: f64,
}
impl ArrayMap for PlanarWrongGamma {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        out[0] = S::constant(self.w);
        out[1] = x[0].scale(self.w);
    }
}

fn planar_samples(count: usize) -> Vec<Vec<f64>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    (0..count).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()
}

#[test]
fn nondegenerate_corollary_on_the_planar_system() {
    let l = diracmech::geometry::LagrangianField::new(PlanarL);
    let delta = ConstraintDistribution::new(1, PlanarForm).unwrap();
    let samples = planar_samples(100);

    let good = PlanarGamma { e: 0.75 };
    let worst = hj::nonholonomic_hj_check(&good, &l, &delta, &samples).unwrap();
    assert!(worst < 1e-10, "exact solution rejected at {worst:e}");

    // the single horizontal direction never generates the missing one
    assert!(!hj::completely_nonholonomic(&delta, &samples[..8]).unwrap());
}

#[test]
fn corollary_agrees_with_the_section_differential() {
    // For an identity Legendre transform the section (X, gamma) with
    // X = gamma turns E o Upsilon into H o gamma, so the two residuals must
    // coincide pointwise; the wrong candidate makes them both order one.
    let l = diracmech::geometry::LagrangianField::new(PlanarL);
    let delta = ConstraintDistribution::new(1, PlanarForm).unwrap();
    let samples = planar_samples(100);
    let w = 1.25_f64;

    let section = HjSection::new(PlanarWrongGamma { w }, PlanarWrongGamma { w }).unwrap();
    let mut via_section = 0.0_f64;
    let mut hand = 0.0_f64;
    for q in &samples {
        let r = hj::dhj_residual(&section, &l, &delta, q).unwrap();
        assert_eq!(r.len(), 1);
        // d(H o gamma) = w^2 x0 dx0 paired with the unit horizontal vector
        let expected = (w * w * q[0]).abs() / (1.0 + q[0] * q[0]).sqrt();
        assert!((r[0].abs() - expected).abs() < 1e-12);
        via_section = via_section.max(r[0].abs());
        hand = hand.max(expected);
    }
    let via_corollary =
        hj::nonholonomic_hj_check(&PlanarWrongGamma { w }, &l, &delta, &samples).unwrap();
    assert!((via_corollary - via_section).abs() < 1e-12);
    assert!((via_corollary - hand).abs() < 1e-12);
    assert!(via_corollary > 0.1, "wrong candidate must be loudly rejected");
}

#[test]
fn generalized_energy_matches_the_level() {
    let sys = make_system("roller-racer", &[]).unwrap();
    let section = sys.hj_section(1.0, 0.5, 1).unwrap();
    for q in sys.sample_q(1000, 29, 1.0) {
        let e = hj::energy_along_section(&section, &sys.lagrangian, &q);
        assert!((e - 1.0).abs() < 1e-12, "energy off level: {e}");
    }
}

#[test]
fn linear_velocity_diagnostics() {
    for (name, expected) in
        [("point-vortex", true), ("roller-racer", false), ("lc-circuit", false)]
    {
        let sys = make_system(name, &[]).unwrap();
        let qv = sys.sample_qv(50, 31, sys.default_energy.max(0.5));
        let got = hj::linear_velocity_diagnostic(&sys.lagrangian, &qv).unwrap();
        assert_eq!(got, expected, "diagnostic for {name}");
    }
}

#[test]
fn bracket_generation_separates_the_examples() {
    let roller = make_system("roller-racer", &[]).unwrap();
    let samples = roller.sample_q(8, 37, 1.0);
    assert!(hj::completely_nonholonomic(&roller.constraints, &samples).unwrap());

    let lc = make_system("lc-circuit", &[]).unwrap();
    let samples = lc.sample_q(8, 37, lc.default_energy);
    assert!(!hj::completely_nonholonomic(&lc.constraints, &samples).unwrap());
}

// Mix the constraint one-forms by an invertible matrix: the distribution is
// unchanged, so the norm of the projected differential must be too.
struct MixedForms {
    inner: ConstraintDistribution,
    r: [[f64; 2]; 2],
}
impl ArrayMap for MixedForms {
    fn dim_in(&self) -> usize {
        self.inner.dim()
    }
    fn dim_out(&self) -> usize {
        2 * self.inner.dim()
    }
    fn eval<S: Scalar>(&self, x: &[S], out: &mut [S]) {
        let n = self.inner.dim();
        let w = self.inner.matrix_generic(x);
        for j in 0..n {
            out[j] = w[j].scale(self.r[0][0]) + w[n + j].scale(self.r[0][1]);
            out[n + j] = w[j].scale(self.r[1][0]) + w[n + j].scale(self.r[1][1]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projected_differential_norm_is_frame_invariant(
        r00 in -2.0_f64..2.0,
        r01 in -2.0_f64..2.0,
        r10 in -2.0_f64..2.0,
        r11 in -2.0_f64..2.0,
        x in -1.0_f64..1.0,
        y in -1.0_f64..1.0,
        theta in 0.3_f64..1.2,
        phi in 0.6_f64..2.5,
    ) {
        prop_assume!((r00 * r11 - r01 * r10).abs() > 0.3);
        let sys = make_system("roller-racer", &[]).unwrap();
        let clean = sys.hj_section(1.0, 0.5, 1).unwrap();
        // scaling a single component makes the lifted energy genuinely
        // nonconstant, so the residual sits far above roundoff
        let gamma = Arc::new(
            ScaledMap::new(clean.gamma_arc(), vec![1.03, 1.0, 1.0, 1.0]).unwrap(),
        );
        let section = HjSection::from_arcs(clean.x_arc(), gamma).unwrap();
        let q = vec![x, y, theta, phi];

        let mixed = ConstraintDistribution::new(
            2,
            MixedForms { inner: sys.constraints.clone(), r: [[r00, r01], [r10, r11]] },
        ).unwrap();

        let a = hj::dhj_residual(&section, &sys.lagrangian, &sys.constraints, &q).unwrap();
        let b = hj::dhj_residual(&section, &sys.lagrangian, &mixed, &q).unwrap();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(na > 1e-4);
        prop_assert!((na - nb).abs() < 1e-9 * na.max(1.0), "norms {na} vs {nb}");
    }
}

#[test]
fn flow_of_a_stationary_field_is_constant() {
    struct ZeroX;
    impl ArrayMap for ZeroX {
        fn dim_in(&self) -> usize {
            2
        }
        fn dim_out(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, _x: &[S], out: &mut [S]) {
            out[0] = S::constant(0.0);
            out[1] = S::constant(0.0);
        }
    }
    let l = diracmech::geometry::LagrangianField::new(PlanarL);
    let delta = ConstraintDistribution::new(1, PlanarForm).unwrap();
    let section = HjSection::new(ZeroX, PlanarGamma { e: 0.5 }).unwrap();
    let traj = hj::integrate_hj_flow(&section, &l, &delta, &[0.3, 0.1], 1.0, 0.1).unwrap();
    assert_eq!(traj.len(), 11);
    for s in &traj.states {
        assert_eq!(s.q, vec![0.3, 0.1]);
    }
}
