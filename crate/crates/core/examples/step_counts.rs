//! Complexity ratio and entropy-derived step counts for the graded shapes
//! dataset, before and after training the step head alone.
//!
//! cargo run --release --example step_counts

use acdiff::conditioning::{edge_density, spatial_complexity, step_head_target, steps_from_unit};
use acdiff::data::{generate_toy, ToyDatasetSpec, ToyKind};
use acdiff::model::AcDiffModel;
use acdiff::run::RunConfig;
use acdiff::Rng;

fn main() -> acdiff::Result<()> {
    let cfg =
        RunConfig::parse("dataset = shapes_16x16\nnum_classes = 5\nd_emb = 16\nhidden = 32\n")?;
    let spec = ToyDatasetSpec::graded(ToyKind::Shapes16x16, 5, 40);
    let data = generate_toy(&spec, &mut Rng::new(1))?;
    let (t_min, t_max) = (cfg.model.schedule.t_min, cfg.model.schedule.t_max);

    println!("class   r_s   density  target T");
    for class in 0..5 {
        let members: Vec<_> = data.iter().filter(|s| s.prompt.class_id == class).collect();
        let n = members.len() as f64;
        let (mut rs, mut dens, mut steps) = (0.0, 0.0, 0.0);
        for s in &members {
            let r = spatial_complexity(&s.condition, cfg.model.bins)?;
            let d = edge_density(&s.condition);
            rs += r;
            dens += d;
            steps += steps_from_unit(step_head_target(r, d), r, t_min, t_max) as f64;
        }
        println!(
            "{class:>5} {:>6.3} {:>8.3} {:>8.1}",
            rs / n,
            dens / n,
            steps / n
        );
    }

    let mut model = AcDiffModel::new(cfg.model.clone(), 0)?;
    let batch: Vec<_> = data.iter().map(|s| (&s.prompt, &s.condition)).collect();
    let mut loss = 0.0;
    for _ in 0..400 {
        loss = model
            .conditioner
            .train_step_head(&mut model.store, &batch, 0.5)?;
    }
    println!("\nstep head regression loss after 400 steps: {loss:.5}");
    println!("class  learned T (mean over members)");
    for class in 0..5 {
        let members: Vec<_> = data.iter().filter(|s| s.prompt.class_id == class).collect();
        let mut total = 0;
        for s in &members {
            total += model
                .conditioner
                .cts_decide(&model.store, &s.prompt, &s.condition, t_min, t_max)?
                .t_cond;
        }
        println!("{class:>5}  {:.1}", total as f64 / members.len() as f64);
    }
    Ok(())
}
