//! Trains on the two-moons toy set and compares generated points with
//! held-out data.
//!
//! cargo run --release --example two_moons -- [steps]

use acdiff::diffusion::generate_batch;
use acdiff::eval::{sliced_wasserstein, DEFAULT_PROJECTIONS};
use acdiff::run::{train, RunConfig, Split};
use acdiff::Rng;

fn main() -> acdiff::Result<()> {
    let mut cfg =
        RunConfig::parse("dataset = two_moons_2d\nnum_classes = 3\nlr = 0.01\nbatch_size = 32\n")?;
    if let Some(steps) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.steps = steps;
    }
    println!("training {} steps", cfg.steps);
    let (model, losses) = train(&cfg, |step, s| {
        if (step + 1) % 500 == 0 {
            println!(
                "step {:>5}  loss {:.4}  aux {:.5}  mean T {:.1}",
                step + 1,
                s.loss,
                s.aux_loss,
                s.mean_t_cond
            );
        }
    })?;
    let tail = &losses[losses.len().saturating_sub(200)..];
    println!(
        "mean loss over the last {} steps: {:.4}",
        tail.len(),
        tail.iter().sum::<f64>() / tail.len() as f64
    );

    let held = cfg.load_dataset(Split::HeldOut)?;
    let inputs: Vec<_> = held
        .iter()
        .map(|s| (s.prompt.clone(), s.condition.clone()))
        .collect();
    let generated = generate_batch(&model, &inputs, cfg.mode, 1)?;
    let points: Vec<Vec<f64>> = generated.iter().map(|g| g.x_0.clone()).collect();
    let truth: Vec<Vec<f64>> = held.iter().map(|s| s.x_0.clone()).collect();
    let noise: Vec<Vec<f64>> = {
        let mut rng = Rng::new(2);
        (0..truth.len()).map(|_| rng.normals(2)).collect()
    };
    let mut rng = Rng::new(3);
    println!(
        "sliced Wasserstein to held-out: samples {:.4}, standard normal {:.4}",
        sliced_wasserstein(&points, &truth, DEFAULT_PROJECTIONS, &mut rng)?,
        sliced_wasserstein(&noise, &truth, DEFAULT_PROJECTIONS, &mut rng)?
    );
    for class in 0..cfg.num_classes {
        let own: Vec<_> = generated
            .iter()
            .filter(|g| g.record.class_id == class)
            .collect();
        let n = own.len() as f64;
        let mean = |k: usize| own.iter().map(|g| g.x_0[k]).sum::<f64>() / n;
        let steps = own.iter().map(|g| g.record.t_cond as f64).sum::<f64>() / n;
        println!(
            "class {class}: mean ({:+.3}, {:+.3}), mean T {steps:.1}",
            mean(0),
            mean(1)
        );
    }
    Ok(())
}
