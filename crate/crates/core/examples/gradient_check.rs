//! Finite-difference check of the denoising loss over every parameter of a
//! toy-width model, including the path from λ through the schedule.
//!
//! cargo run --release --example gradient_check

use acdiff::data::LabeledSample;
use acdiff::diffusion::{training_loss, Mode};
use acdiff::model::AcDiffModel;
use acdiff::numerics::grad_check;
use acdiff::run::{RunConfig, Split};
use acdiff::Rng;

fn main() -> acdiff::Result<()> {
    let cfg = RunConfig::parse(
        "dataset = gauss_mixture_2d\nnum_classes = 3\nsamples_per_class = 4\nt_min = 3\nt_max = 12\n\
         d_emb = 3\nhidden = 4\nhidden_denoiser = 6\nd_time = 4\n",
    )?;
    let data = cfg.load_dataset(Split::Train)?;
    let model = AcDiffModel::new(cfg.model.clone(), 7)?;
    let batch: Vec<&LabeledSample> = data.iter().step_by(4).collect();
    let scalars: usize = model.store.tensors().iter().map(|t| t.numel()).sum();
    println!(
        "{} tensors, {scalars} scalars, batch of {}",
        model.store.len(),
        batch.len()
    );
    for mode in Mode::ALL {
        let err = grad_check(
            |tape, vars| {
                training_loss(tape, vars, &model, &batch, &mut Rng::new(3), mode).map(|l| l.loss)
            },
            model.store.tensors(),
            1e-5,
        )?;
        println!("{mode:<22} max relative error {err:.2e}");
    }
    Ok(())
}
