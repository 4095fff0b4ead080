use pegsim::config::ScenarioConfig;
use pegsim::controllers::{step_hybrid, AxisCommandMode, HybridFrame, HybridStepInput};
use pegsim::runner::resolve_force_law;
use pegsim::world::World;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mat_name = args.get(1).map(String::as_str).unwrap_or("abs");
    let x_mode = args.get(2).map(String::as_str).unwrap_or("force");
    let slope: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(10.0);

    let cfg = ScenarioConfig::default();
    let t = cfg.sample_period();
    let law = resolve_force_law(&cfg).unwrap();
    let inner = cfg.inner_loop.to_lti(t).unwrap();
    let mat = cfg.material_by_name(mat_name).unwrap();
    let start = [0.5, 0.3, -3.8];
    let mut world = World::new(
        cfg.world.geometry.clone(), mat, &inner,
        cfg.inner_loop.sensor_delay_steps, cfg.world.noise, start, 30.0,
    ).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let clamp = cfg.controller.command_clamp_mm;
    let app = cfg.controller.approach_clamp_mm;
    let mut axes = [
        law.axis_state(clamp, app, t),
        law.axis_state(clamp, app, t),
        law.axis_state(clamp, app, t),
    ];
    let x_axis = match x_mode {
        "off" => AxisCommandMode::Off,
        _ => AxisCommandMode::Force(0.0),
    };
    let frame = HybridFrame::cartesian([
        x_axis,
        AxisCommandMode::Off,
        AxisCommandMode::Ramp { final_n: 10.0, slope },
    ]);
    let mut last_cmd = start;
    let mut tis = 0.0;
    let mut max_f: f64 = 0.0;
    for n in 0..1500 {
        let sensed = world.sense(&mut rng);
        tis += t;
        let input = HybridStepInput {
            measured_force: sensed.force,
            tilt_deg: 30.0,
            last_command: last_cmd,
            t_in_state: tis,
        };
        let cmd = step_hybrid(&frame, &input, &mut axes).unwrap();
        let f = world.step(cmd, 30.0).unwrap();
        let fmag = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt();
        max_f = max_f.max(fmag);
        if n % 100 == 0 {
            println!(
                "n={n:4} cmd=({:8.3},{:8.3},{:8.3}) sensedP=({:8.3},{:8.3},{:8.3}) trueF=({:6.2},{:6.2},{:6.2}) measF=({:6.2},{:6.2},{:6.2})",
                cmd[0], cmd[1], cmd[2],
                sensed.position[0], sensed.position[1], sensed.position[2],
                f[0], f[1], f[2],
                sensed.force[0], sensed.force[1], sensed.force[2]
            );
        }
        last_cmd = cmd;
    }
    println!("max |F| over run: {max_f:.2} N");
}
