use pegsim::world::{depth_profile, Geometry};

fn main() {
    let g = Geometry::default();
    let tilt = 30.0;
    // coarse global grid
    let mut best = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..=120 {
        for j in 0..=120 {
            let x = -18.0 + 0.3 * i as f64;
            let y = -18.0 + 0.3 * j as f64;
            let d = depth_profile(&g, tilt, x, y);
            if d < best.2 {
                best = (x, y, d);
            }
        }
    }
    println!("grid argmin: ({:.2},{:.2}) depth {:.4}", best.0, best.1, best.2);
    println!("-- y slice at x=0, extended -y --");
    let mut prev = f64::NAN;
    for i in 0..=60 {
        let y = -16.0 + 0.2 * i as f64;
        let d = depth_profile(&g, tilt, 0.0, y);
        let slope = if prev.is_nan() { 0.0 } else { (d - prev) / 0.2 };
        prev = d;
        println!("y={y:7.2} depth={d:8.4} slope={slope:8.3}");
    }
    println!("-- park point check --");
    for (x, y) in [(1.855, -6.753), (1.694, -6.685), (0.0, -12.0), (0.0, -14.0)] {
        println!("({x:.3},{y:.3}) -> {:.4}", depth_profile(&g, tilt, x, y));
    }
}
