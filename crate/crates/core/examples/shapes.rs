//! Trains on the graded shapes set, then writes one generated image per
//! class next to a held-out example of that class.
//!
//! cargo run --release --example shapes -- [config] [out_dir] [steps]

use std::path::PathBuf;

use acdiff::conditioning::ConditionImage;
use acdiff::data::{to_pixels, write_pgm};
use acdiff::diffusion::generate;
use acdiff::run::{train, RunConfig, Split};
use acdiff::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| "configs/shapes.cfg".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "shapes_out".into()));
    let mut cfg = RunConfig::from_file(config.as_ref())?;
    if let Some(steps) = args.next().and_then(|s| s.parse().ok()) {
        cfg.steps = steps;
    }
    println!("training {} steps in {} mode", cfg.steps, cfg.mode);
    let (model, _) = train(&cfg, |step, s| {
        if (step + 1) % 250 == 0 {
            println!(
                "step {:>5}  loss {:.4}  mean T {:.1}",
                step + 1,
                s.loss,
                s.mean_t_cond
            );
        }
    })?;

    std::fs::create_dir_all(&out)?;
    let held = cfg.load_dataset(Split::HeldOut)?;
    let mut rng = Rng::new(cfg.seed);
    println!("class  steps  lambda   r_s");
    for class in 0..cfg.num_classes {
        let s = held
            .iter()
            .find(|s| s.prompt.class_id == class)
            .expect("every class is held out");
        let g = generate(&model, &s.prompt, &s.condition, cfg.mode, &mut rng)?;
        let image = |x: &[f64]| ConditionImage::new(16, 16, to_pixels(x));
        write_pgm(
            &out.join(format!("class{class}_generated.pgm")),
            &image(&g.x_0)?,
        )?;
        write_pgm(
            &out.join(format!("class{class}_held_out.pgm")),
            &image(&s.x_0)?,
        )?;
        write_pgm(
            &out.join(format!("class{class}_condition.pgm")),
            &s.condition,
        )?;
        println!(
            "{class:>5} {:>6} {:>7.3} {:>5.3}",
            g.record.t_cond, g.record.lambda, g.record.r_s
        );
    }
    println!("images written to {}", out.display());
    Ok(())
}
