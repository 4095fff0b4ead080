use pegsim::lti::{zoh_second_order, DiscreteLti};
use pegsim::lp::LpProblem;

#[test]
fn zoh_matches_reference_discretization() {
    let t = 1.0 / 125.0;
    let h2 = zoh_second_order(12.0, 0.8, t).unwrap();
    let (a, b, _, _) = h2.to_state_space();
    assert!((a[(0, 0)] - 8.68600473e-01).abs() < 1e-8, "a00={}", a[(0, 0)]);
    assert!((a[(0, 1)] - 4.83058131e-03).abs() < 1e-10);
    assert!((a[(1, 0)] + 2.74613337e+01).abs() < 1e-6);
    assert!((a[(1, 1)] - 2.85852873e-01).abs() < 1e-8);
    assert!((b[(0, 0)] - 0.13139953).abs() < 1e-8);
    assert!((b[(1, 0)] - 27.46133369).abs() < 1e-6);
    let h = h2.impulse_response(6);
    let exp = [0.0, 0.13139953, 0.2467879, 0.23484897, 0.17710928, 0.11499959];
    for i in 0..6 {
        assert!((h[i] - exp[i]).abs() < 1e-7, "i={i} {} vs {}", h[i], exp[i]);
    }
    assert!((h2.dc_gain().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn spectral_radius_basics() {
    let t = 1.0 / 125.0;
    let sys = DiscreteLti::state_space(
        nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, -0.81, 1.0, 0.0]),
        nalgebra::DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        nalgebra::DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        nalgebra::DMatrix::zeros(1, 1),
        t,
    )
    .unwrap();
    let r = sys.spectral_radius().unwrap();
    assert!((r - 0.9).abs() < 1e-12, "rho={r}");
}

#[test]
fn tiny_lp() {
    // min -x1 - x2  s.t. x1 <= 1, x2 <= 2, x1 + x2 <= 2.5, -x1 <= 0, -x2 <= 0
    let mut p = LpProblem::new(2);
    p.set_objective(0, -1.0);
    p.set_objective(1, -1.0);
    let f = p.family("box");
    p.add_le(f, &[0], &[1.0], 1.0);
    p.add_le(f, &[1], &[1.0], 2.0);
    p.add_le(f, &[0, 1], &[1.0, 1.0], 2.5);
    p.add_le(f, &[0], &[-1.0], 0.0);
    p.add_le(f, &[1], &[-1.0], 0.0);
    let s = p.solve(60, 1e-8).unwrap();
    assert!((s.cost + 2.5).abs() < 1e-7, "cost={}", s.cost);
}

#[test]
fn lp_with_equality() {
    // min x1 + x2 s.t. x1 + 2 x2 = 1, x >= 0  -> optimum x=(0, 0.5), cost 0.5
    let mut p = LpProblem::new(2);
    p.set_objective(0, 1.0);
    p.set_objective(1, 1.0);
    let f = p.family("sign");
    p.add_le(f, &[0], &[-1.0], 0.0);
    p.add_le(f, &[1], &[-1.0], 0.0);
    let e = p.family("budget");
    p.add_eq(e, &[0, 1], &[1.0, 2.0], 1.0);
    let s = p.solve(60, 1e-8).unwrap();
    assert!((s.cost - 0.5).abs() < 1e-7, "cost={}", s.cost);
    assert!((s.x[1] - 0.5).abs() < 1e-6);
}

#[test]
fn lp_infeasible_reports_family() {
    let mut p = LpProblem::new(1);
    p.set_objective(0, 1.0);
    let f = p.family("contradiction");
    p.add_le(f, &[0], &[1.0], 0.0);
    p.add_le(f, &[0], &[-1.0], -1.0);
    let err = p.solve(60, 1e-8).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("contradiction"), "msg: {msg}");
}

#[test]
fn synthesis_matches_frozen_prototype() {
    use pegsim::synthesis::*;
    let t = 1.0 / 125.0;
    let spec = SynthesisSpec::default();
    let family: Vec<ContactPlantModel> = [10.0, 50.0, 65.0, 100.0]
        .iter()
        .map(|&k| ContactPlantModel::from_second_order(12.0, 0.8, 1, 4, k, t).unwrap())
        .collect();
    let start = std::time::Instant::now();
    let sc = synthesize(&spec, &family).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = sc
        .certificate
        .iter()
        .map(|e| e.spectral_radius)
        .fold(0.0, f64::max);
    // step response at nominal stiffness
    let plant = build_plant(&family[0]).unwrap();
    let h = closed_loop(&plant, &sc.controller).unwrap();
    let n = (1.0 / t) as usize * 2;
    let err = h.simulate(&vec![1.0; n]);
    let force: Vec<f64> = err.iter().map(|e| 1.0 - e).collect();
    let t632 = rise_time_632(&force, 1.0, t).unwrap();
    eprintln!(
        "cost={:.6} worst_rho={:.6} t632={:.6} elapsed={:.2}s",
        sc.achieved_cost, worst, t632, elapsed
    );
    assert!((sc.achieved_cost - 2.6888).abs() < 0.05, "cost={}", sc.achieved_cost);
    assert!((worst - 0.9678).abs() < 0.01, "worst={worst}");
    assert!((t632 - 0.1904).abs() < 0.005, "t632={t632}");
}

#[test]
fn depth_profile_matches_prototype_values() {
    use pegsim::world::{depth_profile, Geometry};
    let g = Geometry::default();
    let cases = [
        (0.0, 0.0, -4.0374264389),
        (0.0, -14.0, -1.7321),
        (0.0, -12.0, -5.1962),
        (0.0, -10.0, -6.8339),
        (0.0, -8.0, -6.2362),
        (0.0, 4.0, -2.9576),
        (0.0, -16.0, 0.0),
        (100.0, 0.0, 0.0),
    ];
    for (x, y, want) in cases {
        let got = depth_profile(&g, 30.0, x, y);
        assert!((got - want).abs() < 5e-4, "({x},{y}): got {got}, want {want}");
    }
    // coaxial flat peg falls to the hole bottom
    let flat = depth_profile(&g, 0.0, 0.0, -14.9415);
    assert!((flat + 20.0).abs() < 1e-12, "flat={flat}");
}

#[test]
fn world_hooke_contact() {
    use pegsim::world::*;
    let g = Geometry::default();
    let mat = Material::new("abs", 50.0, 0.5, 0.4);
    let t = 1.0 / 125.0;
    // ideal inner loop (pure unit delay) for a crisp check
    let inner = pegsim::lti::DiscreteLti::delay(1, t);
    let far = [60.0, 0.0, -1.0]; // tip pressed 1 mm into the plate, flat
    let mut w = World::new(g, mat, &inner, 0, NoiseSpec::default(), far, 0.0).unwrap();
    let mut f = [0.0; 3];
    for _ in 0..50 {
        f = w.step(far, 0.0).unwrap();
    }
    assert!((f[2] - 50.0).abs() < 1e-9, "fz={}", f[2]);
    assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12);
    assert_eq!(w.state().contact_mode, ContactMode::PointOnPlane);
}
