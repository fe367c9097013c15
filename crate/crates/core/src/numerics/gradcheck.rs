use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Smallest denominator used when forming relative errors, so that two
/// gradients that are both ~0 compare as equal.
const REL_FLOOR: f64 = 1e-5;

/// Largest relative error between tape gradients and central differences.
///
/// `f` builds a scalar loss from the parameter leaves it is handed; it is
/// called once with gradient-tracking leaves and then twice per element
/// with a perturbed copy. Any randomness inside `f` must be re-seeded on
/// every call.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::contract(format!(
            "grad_check eps {eps} outside [1e-7, 1e-3]"
        )));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = f(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let base = tape.scalar(loss);
    if eval(params)?.to_bits() != base.to_bits() {
        return Err(Error::contract("grad_check objective is not deterministic"));
    }
    if tape.requires_grad(loss) {
        tape.backward(loss)?;
    }

    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; params[pi].numel()]);
        for (ei, a) in analytic.iter().enumerate() {
            let orig = params[pi].data()[ei];
            probe[pi].data_mut()[ei] = orig + eps;
            let up = eval(&probe)?;
            probe[pi].data_mut()[ei] = orig - eps;
            let down = eval(&probe)?;
            probe[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
