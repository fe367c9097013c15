//! Trains one model per sampling mode on the same data and compares
//! sample quality and step counts on held-out conditions. The adaptive
//! checkpoint is also sampled with subsampled fixed rates.
//!
//! cargo run --release --example ablation -- [config] [samples] [seeds]

use acdiff::data::LabeledSample;
use acdiff::diffusion::Mode;
use acdiff::eval::run_benchmark;
use acdiff::model::AcDiffModel;
use acdiff::run::{train, RunConfig, Split};
use acdiff::Rng;

fn report(
    label: &str,
    model: &AcDiffModel,
    held: &[LabeledSample],
    mode: Mode,
    n: usize,
    seeds: u64,
) -> acdiff::Result<()> {
    let mut sw = Vec::new();
    let mut last = None;
    for seed in 0..seeds {
        let (r, _) = run_benchmark(model, held, mode, n, &mut Rng::new(seed))?;
        sw.push(r.sliced_wasserstein);
        last = Some(r);
    }
    let r = last.expect("at least one seed");
    let per_class: Vec<String> = r
        .per_class_steps
        .values()
        .map(|s| format!("{s:.1}"))
        .collect();
    println!(
        "{label:<46} {:>8.4} {:>8.4} {:>8.1}  {}",
        sw.iter().sum::<f64>() / sw.len() as f64,
        sw.iter().copied().fold(f64::INFINITY, f64::min),
        r.avg_steps,
        per_class.join(" ")
    );
    Ok(())
}

fn main() -> acdiff::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| "configs/shapes.cfg".into());
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3).max(1);
    let base = RunConfig::from_file(config.as_ref())?;
    let held = base.load_dataset(Split::HeldOut)?;

    println!(
        "{:<46} {:>8} {:>8} {:>8}  per-class steps",
        "trained / sampled", "SW mean", "SW min", "steps"
    );
    for mode in Mode::ALL {
        let cfg = RunConfig {
            mode,
            ..base.clone()
        };
        let (model, _) = train(&cfg, |_, _| {})?;
        report(&format!("{mode} / {mode}"), &model, &held, mode, n, seeds)?;
        if mode == Mode::Adaptive {
            let fixed = Mode::AdaptiveTFixedBeta;
            report(&format!("{mode} / {fixed}"), &model, &held, fixed, n, seeds)?;
        }
    }
    Ok(())
}
