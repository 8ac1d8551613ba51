//! Quick wall-clock probe of desk-scale training throughput.
use isonca_core::*;
use std::time::Instant;

fn main() {
    let mut rgba: Grid<f32> = Grid::zeros(24, 24, 4);
    for r in 4..20 {
        for c in 4..20 {
            let a = 1.0f32;
            rgba.cell_mut(r, c).copy_from_slice(&[
                (r as f32 / 24.0).min(a),
                (c as f32 / 24.0).min(a),
                0.3,
                a,
            ]);
        }
    }
    let target = TargetSpec::from_premultiplied_rgba(&rgba, 0, &[]).unwrap();
    let seed = make_uniform_circle_seed(3, 8.0, 16).unwrap();
    let seed_grid = init_structured_seed(24, 24, &seed, 16).unwrap();
    let mut rng = Stream::new(1);
    let params: RuleParams<f32> = init_params(16, 192, &mut rng);
    let config = TrainConfig::default();
    let mut tr = Trainer::new(config, params, target, PolarConfig::for_size(24), seed_grid).unwrap();
    let t0 = Instant::now();
    let n = 30;
    for _ in 0..n {
        tr.step().unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("{} steps in {:.2}s -> {:.3}s/step ({:.0} steps in 10 min)", n, dt, dt / n as f64, 600.0 / (dt / n as f64));
}
