//! Acceptance gate: every shipped claim about the engine, one criterion per
//! line, each at its stated tolerance. The test fails if any line fails.

use std::sync::Arc;
use std::time::Instant;

use diracmech::autodiff::Dual1;
use diracmech::chaplygin::{
    appendix_consistency, integrate_reduced, lift_reduced_solution, reconstruct,
    reduced_dhj_check,
};
use diracmech::geometry::{
    annihilator_basis, generalized_energy, horizontal_basis, induced_dirac_membership,
};
use diracmech::hj::{
    check_closedness_on_delta, check_in_k, crosscheck_hj_vs_direct, dhj_energy_constancy,
    dhj_residual, linear_velocity_diagnostic,
};
use diracmech::integrator::{integrate, IntegrateOptions};
use diracmech::systems::{
    make_system, roller_phidot, scale_section_x_component, zero_crossing_frequency,
    RollerRacerParams, ScaledMap,
};
use diracmech::Error;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Gate { failures: Vec::new() }
    }

    fn report(&mut self, id: &str, ok: bool, detail: String) {
        if ok {
            println!("criterion {id}: PASS ({detail})");
        } else {
            println!("criterion {id}: FAIL ({detail})");
            self.failures.push(format!("{id}: {detail}"));
        }
    }
}

fn opts() -> IntegrateOptions {
    IntegrateOptions::default()
}

fn criterion_1_and_2(gate: &mut Gate) {
    let start = Instant::now();
    let sys = make_system("lc-circuit", &[]).unwrap();
    let traj = integrate(
        &sys.lagrangian,
        &sys.constraints,
        &sys.q0,
        &sys.v0,
        50.0,
        1e-3,
        &opts(),
    )
    .unwrap();
    let ql: Vec<f64> = traj.states.iter().map(|s| s.q[0]).collect();
    let nu = zero_crossing_frequency(&traj.t, &ql).unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    let target = 1.5_f64.sqrt();
    let rel = (nu - target).abs() / target;
    gate.report(
        "1",
        rel < 1e-5 && elapsed.as_secs_f64() < 5.0,
        format!(
            "lc frequency rel err {rel:.3e} (< 1e-5), runtime {:.2}s (< 5s)",
            elapsed.as_secs_f64()
        ),
    );

    let rho = 0.5;
    let worst = traj
        .states
        .iter()
        .map(|s| (s.q[1] - rho * s.q[0]).abs())
        .fold(0.0, f64::max);
    gate.report("2", worst < 1e-6, format!("lc leaf relation residual {worst:.3e} (< 1e-6)"));
}

fn criterion_3(gate: &mut Gate) {
    let sys = make_system("roller-racer", &[]).unwrap();
    let section = sys.hj_section(1.0, 0.5, 1).unwrap();
    let gap = crosscheck_hj_vs_direct(
        &section,
        &sys.lagrangian,
        &sys.constraints,
        &sys.q0,
        10.0,
        1e-3,
    )
    .unwrap_or(f64::NAN);

    // the steering component of the lifted field against the printed flow
    let p = RollerRacerParams::default();
    let mut phi_dev = 0.0_f64;
    for q in sys.sample_q(200, 3, 1.0) {
        let x = section.x(&q);
        let hand = roller_phidot(&p, 1.0, 0.5, 1, q[3]).unwrap();
        phi_dev = phi_dev.max((x[3] - hand).abs());
    }
    gate.report(
        "3",
        gap < 1e-6 && phi_dev < 1e-12,
        format!("hj flow vs dae sup gap {gap:.3e} (< 1e-6), phi equation dev {phi_dev:.3e}"),
    );
}

fn criterion_4(gate: &mut Gate) {
    let sys = make_system("roller-racer", &[]).unwrap();
    let traj = integrate(
        &sys.lagrangian,
        &sys.constraints,
        &sys.q0,
        &sys.v0,
        10.0,
        1e-3,
        &opts(),
    )
    .unwrap();
    let vtheta_dev = traj
        .states
        .iter()
        .map(|s| (s.v[2] - 0.5).abs())
        .fold(0.0, f64::max);
    let drift = traj.energy_drift();

    let drifts: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&h| {
            integrate(&sys.lagrangian, &sys.constraints, &sys.q0, &sys.v0, 2.0, h, &opts())
                .unwrap()
                .energy_drift()
        })
        .collect();
    let order = drifts
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);

    gate.report(
        "4",
        vtheta_dev < 1e-8 && drift < 1e-8 && order >= 3.5,
        format!(
            "v_theta dev {vtheta_dev:.3e} (< 1e-8), energy drift {drift:.3e} (< 1e-8), \
             order {order:.2} (>= 3.5)"
        ),
    );
}

fn residual_sweep(
    section: &diracmech::hj::HjSection,
    sys: &diracmech::systems::SystemDef,
    samples: &[Vec<f64>],
) -> [f64; 4] {
    let in_k = check_in_k(section, &sys.lagrangian, &sys.constraints, samples).unwrap();
    let closed =
        check_closedness_on_delta(section.gamma_dyn(), &sys.constraints, samples).unwrap();
    let mut dhj = 0.0_f64;
    for q in samples {
        let r = dhj_residual(section, &sys.lagrangian, &sys.constraints, q).unwrap();
        dhj = dhj.max(r.iter().fold(0.0, |a, x| a.max(x.abs())));
    }
    let (_, dev) = dhj_energy_constancy(section, &sys.lagrangian, samples);
    [in_k, closed, dhj, dev]
}

fn criterion_5(gate: &mut Gate) {
    let sys = make_system("roller-racer", &[]).unwrap();
    let clean = sys.hj_section(1.0, 0.5, 1).unwrap();
    let samples = sys.sample_q(1000, 5, 1.0);

    let clean_worst =
        residual_sweep(&clean, &sys, &samples).into_iter().fold(0.0, f64::max);

    let v1 = diracmech::systems::scale_section_gamma(&clean, 1.01);
    let v2 = scale_section_x_component(&clean, 3, 1.01);
    let gamma3 =
        Arc::new(ScaledMap::new(clean.gamma_arc(), vec![1.0, 1.0, 1.01, 1.0]).unwrap());
    let v3 = diracmech::hj::HjSection::from_arcs(clean.x_arc(), gamma3).unwrap();
    let off = sys.hj_section(1.01, 0.5, 1).unwrap();
    let v4 = diracmech::hj::HjSection::from_arcs(off.x_arc(), clean.gamma_arc()).unwrap();

    let mut weakest = f64::INFINITY;
    for variant in [&v1, &v2, &v3, &v4] {
        let worst = residual_sweep(variant, &sys, &samples).into_iter().fold(0.0, f64::max);
        weakest = weakest.min(worst);
    }

    gate.report(
        "5",
        clean_worst < 1e-9 && weakest > 1e-4,
        format!(
            "clean residuals {clean_worst:.3e} (< 1e-9), weakest perturbed variant \
             {weakest:.3e} (> 1e-4) over 1000 points"
        ),
    );
}

fn criterion_6(gate: &mut Gate) {
    let sys = make_system("roller-racer", &[]).unwrap();
    let red = sys.reduced_system(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut lemma_dev = 0.0_f64;
    for _ in 0..1000 {
        let r = vec![rng.gen_range(-3.0..3.0), rng.gen_range(0.4..2.7)];
        let s = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let pbar = vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
        let state = red.horizontal_lift_k(&r, &s, &pbar).unwrap();
        let e = generalized_energy(red.full_lagrangian(), &state);
        let hbar = red.hamiltonian(&r, &pbar).unwrap();
        lemma_dev = lemma_dev.max((e - hbar).abs());
    }

    let gb = sys.reduced_gamma_bar(1.0, 0.5, 1).unwrap();
    let samples_r: Vec<Vec<f64>> = (0..300)
        .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(0.4..2.7)])
        .collect();
    let check = reduced_dhj_check(&red, gb.as_ref(), &samples_r).unwrap();
    let reduced_worst = check
        .hbar_dev
        .max(check.twoform_residual)
        .max((check.hbar_mean - 1.0).abs());

    let lifted = lift_reduced_solution(&red, gb).unwrap();
    let closed = sys.hj_section(1.0, 0.5, 1).unwrap();
    let mut lift_dev = 0.0_f64;
    for q in sys.sample_q(200, 7, 1.0) {
        let (xa, xb) = (lifted.x(&q), closed.x(&q));
        let (ga, gb_) = (lifted.gamma(&q), closed.gamma(&q));
        for i in 0..4 {
            lift_dev = lift_dev.max((xa[i] - xb[i]).abs()).max((ga[i] - gb_[i]).abs());
        }
    }

    gate.report(
        "6",
        lemma_dev < 1e-12 && reduced_worst < 1e-10 && lift_dev < 1e-10,
        format!(
            "energy lemma {lemma_dev:.3e} (< 1e-12 at 1000 pts), reduced check \
             {reduced_worst:.3e} (< 1e-10), lift match {lift_dev:.3e} (< 1e-10)"
        ),
    );
}

fn criterion_7(gate: &mut Gate) {
    let sys = make_system("roller-racer", &[]).unwrap();
    let red = sys.reduced_system(3).unwrap();
    let bundle = red.bundle();
    let (r0, s0) = bundle.split(&sys.q0);
    let (vbar0, _) = bundle.split(&sys.v0);
    let pbar0 = red.reduced_momentum(&r0, &vbar0);
    let reduced = integrate_reduced(&red, &r0, &pbar0, 10.0, 1e-3).unwrap();
    let rebuilt = reconstruct(&red, &reduced, &s0).unwrap();
    let direct = integrate(
        &sys.lagrangian,
        &sys.constraints,
        &sys.q0,
        &sys.v0,
        10.0,
        1e-3,
        &opts(),
    )
    .unwrap();
    let gap = rebuilt.sup_distance(&direct);
    gate.report("7", gap < 1e-6, format!("reduce + reconstruct sup gap {gap:.3e} (< 1e-6)"));
}

fn pairing_sweep(sys: &diracmech::systems::SystemDef, seed: u64) -> f64 {
    let delta = &sys.constraints;
    let n = delta.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = sys.sample_q(1000, seed, sys.default_energy.max(0.5));
    let mut worst = 0.0_f64;
    for q in &samples {
        let h = horizontal_basis(delta, q).unwrap();
        let a = if delta.count() > 0 {
            Some(annihilator_basis(delta, q).unwrap())
        } else {
            None
        };
        let mut member = || -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            let mut qdot = vec![0.0; n];
            for c in h.column_iter() {
                let w: f64 = rng.gen_range(-1.0..1.0);
                for i in 0..n {
                    qdot[i] += w * c[i];
                }
            }
            let mut eta = vec![0.0; n];
            if let Some(a) = &a {
                for c in a.column_iter() {
                    let w: f64 = rng.gen_range(-1.0..1.0);
                    for i in 0..n {
                        eta[i] += w * c[i];
                    }
                }
            }
            let pdot: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let alpha_q: Vec<f64> = eta.iter().zip(pdot.iter()).map(|(e, p)| e - p).collect();
            (qdot.clone(), pdot, alpha_q, qdot)
        };
        let (qd1, pd1, aq1, ap1) = member();
        let (qd2, pd2, aq2, ap2) = member();
        // both must be members of the induced structure
        let p_ambient = vec![0.0; n];
        let m1 = induced_dirac_membership(delta, q, &p_ambient, (&qd1, &pd1), (&aq1, &ap1))
            .unwrap();
        assert!(m1.max_residual() < 1e-12);
        // isotropy: the dual pairing of distinct members cancels
        let pair: f64 = aq1.iter().zip(qd2.iter()).map(|(x, y)| x * y).sum::<f64>()
            + ap1.iter().zip(pd2.iter()).map(|(x, y)| x * y).sum::<f64>()
            + aq2.iter().zip(qd1.iter()).map(|(x, y)| x * y).sum::<f64>()
            + ap2.iter().zip(pd1.iter()).map(|(x, y)| x * y).sum::<f64>();
        worst = worst.max(pair.abs());
    }
    worst
}

fn criterion_8(gate: &mut Gate) {
    let mut pairing = 0.0_f64;
    for (i, name) in ["roller-racer", "lc-circuit", "bicycle", "flat-toy", "point-vortex"]
        .iter()
        .enumerate()
    {
        let sys = make_system(name, &[]).unwrap();
        pairing = pairing.max(pairing_sweep(&sys, 100 + i as u64));
    }

    let sys = make_system("roller-racer", &[]).unwrap();
    let red = sys.reduced_system(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let samples: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| {
            (
                vec![rng.gen_range(-3.0..3.0), rng.gen_range(0.4..2.7)],
                vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)],
            )
        })
        .collect();
    let consistency = appendix_consistency(&red, &samples, 109).unwrap();

    // derivatives against central finite differences on every library
    // Lagrangian, in both the configuration and the velocity slots
    let mut ad_fd = 0.0_f64;
    let fd_h = 1e-6;
    for (k, name) in ["roller-racer", "lc-circuit", "bicycle", "flat-toy", "point-vortex"]
        .iter()
        .enumerate()
    {
        let s = make_system(name, &[]).unwrap();
        let n = s.constraints.dim();
        for (q, v) in s.sample_qv(20, 120 + k as u64, s.default_energy.max(0.5)) {
            for i in 0..n {
                let qc: Vec<Dual1> = q.iter().map(|&x| Dual1::constant(x)).collect();
                let vc: Vec<Dual1> = v.iter().map(|&x| Dual1::constant(x)).collect();

                let mut qd = qc.clone();
                qd[i] = Dual1::seeded(q[i], 0);
                let exact_q = s.lagrangian.eval(&qd, &vc).du[0];
                let (mut qp, mut qm) = (q.clone(), q.clone());
                qp[i] += fd_h;
                qm[i] -= fd_h;
                let fd_q =
                    (s.lagrangian.eval(&qp, &v) - s.lagrangian.eval(&qm, &v)) / (2.0 * fd_h);
                ad_fd = ad_fd.max((exact_q - fd_q).abs() / exact_q.abs().max(1.0));

                let mut vd = vc.clone();
                vd[i] = Dual1::seeded(v[i], 0);
                let exact_v = s.lagrangian.eval(&qc, &vd).du[0];
                let (mut vp, mut vm) = (v.clone(), v.clone());
                vp[i] += fd_h;
                vm[i] -= fd_h;
                let fd_v =
                    (s.lagrangian.eval(&q, &vp) - s.lagrangian.eval(&q, &vm)) / (2.0 * fd_h);
                ad_fd = ad_fd.max((exact_v - fd_v).abs() / exact_v.abs().max(1.0));
            }
        }
    }

    gate.report(
        "8",
        pairing < 1e-12 && consistency.max_dev < 1e-10 && ad_fd < 1e-6,
        format!(
            "self-duality pairing {pairing:.3e} (< 1e-12, 1000 pairs x 5 systems), \
             almost-symplectic consistency {:.3e} (< 1e-10, {} compared), \
             derivative vs finite difference {ad_fd:.3e} (< 1e-6)",
            consistency.max_dev, consistency.checked
        ),
    );
}

fn criterion_9(gate: &mut Gate) {
    let vortex = make_system("point-vortex", &[]).unwrap();
    let qv = vortex.sample_qv(50, 111, 0.5);
    let diagnosed = linear_velocity_diagnostic(&vortex.lagrangian, &qv).unwrap();
    let raised = match integrate(
        &vortex.lagrangian,
        &vortex.constraints,
        &vortex.q0,
        &vortex.v0,
        1.0,
        1e-2,
        &opts(),
    ) {
        Err(Error::SingularKkt(msg)) => msg.contains("linear in velocity"),
        _ => false,
    };

    let bicycle = make_system("bicycle", &[]).unwrap();
    let residual = integrate(
        &bicycle.lagrangian,
        &bicycle.constraints,
        &bicycle.q0,
        &bicycle.v0,
        5.0,
        1e-3,
        &opts(),
    )
    .map(|t| t.max_constraint_residual())
    .unwrap_or(f64::NAN);

    gate.report(
        "9",
        diagnosed && raised && residual < 1e-9,
        format!(
            "first-order diagnostic {diagnosed}, documented singular error {raised}, \
             bicycle constraint residual {residual:.3e} (< 1e-9 over T=5)"
        ),
    );
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();
    criterion_1_and_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
