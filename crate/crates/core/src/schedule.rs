//! Per-sample noise schedules.
//!
//! A base schedule is interpolated between complexity-rescaled extremes
//! `β_min / r_s` and `β_max / r_s`. The hybrid schedule then mixes each base
//! rate `β_t` with its posterior lower bound
//! `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t` using one coefficient `λ` per
//! sample: `β′_t = λ·β_t + (1 − λ)·β̃_t`.
//!
//! Steps are 1-based in the public accessors and 0-based in the stored
//! vectors.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Lower clamp applied to rescaled extremes and to `β′_1`.
pub const BETA_FLOOR: f64 = 1e-6;
/// Upper clamp applied to rescaled extremes.
pub const BETA_CEIL: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Quadratic,
    Sigmoid,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [
        ScheduleKind::Linear,
        ScheduleKind::Quadratic,
        ScheduleKind::Sigmoid,
    ];

    /// Interpolation weight in `[0, 1]` at relative position `s ∈ [0, 1]`.
    fn weight(self, s: f64) -> f64 {
        match self {
            ScheduleKind::Linear => s,
            ScheduleKind::Quadratic => s * s,
            ScheduleKind::Sigmoid => 1.0 / (1.0 + (-(12.0 * s - 6.0)).exp()),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Quadratic => "quadratic",
            ScheduleKind::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "quadratic" => Ok(ScheduleKind::Quadratic),
            "sigmoid" => Ok(ScheduleKind::Sigmoid),
            other => Err(Error::contract(format!("unknown schedule kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseScheduleConfig {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub t_min: usize,
    pub t_max: usize,
}

impl Default for BaseScheduleConfig {
    fn default() -> Self {
        BaseScheduleConfig {
            kind: ScheduleKind::Linear,
            beta_min: 1e-3,
            beta_max: 0.2,
            t_min: 20,
            t_max: 200,
        }
    }
}

impl BaseScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.beta_min && self.beta_min < self.beta_max && self.beta_max < 1.0) {
            return Err(Error::contract(format!(
                "need 0 < beta_min < beta_max < 1, got {} and {}",
                self.beta_min, self.beta_max
            )));
        }
        if !(1 <= self.t_min && self.t_min < self.t_max) {
            return Err(Error::contract(format!(
                "need 1 <= t_min < t_max, got {} and {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }
}

fn clamp_beta(b: f64) -> f64 {
    b.clamp(BETA_FLOOR, BETA_CEIL)
}

/// Base rates for `t_cond` steps between the rescaled, clamped extremes.
pub fn base_schedule(cfg: &BaseScheduleConfig, t_cond: usize, r_s: f64) -> Result<Vec<f64>> {
    if t_cond < 1 {
        return Err(Error::contract("schedule length must be at least 1"));
    }
    if !(r_s > 0.0) || !r_s.is_finite() {
        return Err(Error::contract(format!(
            "complexity ratio must be positive, got {r_s}"
        )));
    }
    let lo = clamp_beta(cfg.beta_min / r_s);
    let hi = clamp_beta(cfg.beta_max / r_s);
    if t_cond == 1 {
        return Ok(vec![hi]);
    }
    let span = hi - lo;
    let last = (t_cond - 1) as f64;
    Ok((0..t_cond)
        .map(|i| {
            let s = i as f64 / last;
            (lo + cfg.kind.weight(s) * span).min(hi)
        })
        .collect())
}

/// Cumulative products `ᾱ_t = Π_{s≤t} (1 − β_s)`, accumulated left to right.
pub fn alpha_bars(betas: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    betas
        .iter()
        .map(|b| {
            acc *= 1.0 - b;
            acc
        })
        .collect()
}

/// Posterior lower bounds `β̃_t`, with `ᾱ_0 = 1` so that `β̃_1 = 0`.
pub fn beta_tilde(betas: &[f64]) -> Result<Vec<f64>> {
    if betas.is_empty() {
        return Err(Error::contract("beta_tilde of empty schedule"));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
        return Err(Error::contract(format!("beta {b} outside (0, 1)")));
    }
    let abar = alpha_bars(betas);
    let mut out = Vec::with_capacity(betas.len());
    out.push(0.0);
    for t in 1..betas.len() {
        // the ratio is at most 1; rounding must not push β̃ past β
        out.push(((1.0 - abar[t - 1]) / (1.0 - abar[t]) * betas[t]).min(betas[t]));
    }
    Ok(out)
}

/// Convex mix, clamped so rounding cannot leave `[tilde, beta]`.
fn mix(lambda: f64, beta: f64, tilde: f64) -> f64 {
    (lambda * beta + (1.0 - lambda) * tilde)
        .max(tilde)
        .min(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridSchedule {
    betas: Vec<f64>,
    beta_tilde: Vec<f64>,
    betas_prime: Vec<f64>,
    alphas_prime: Vec<f64>,
    alpha_bars_prime: Vec<f64>,
    lambda: f64,
    r_s: f64,
}

/// Mixes `betas` with their lower bounds using coefficient `lambda`.
pub fn hybrid_combine(betas: &[f64], lambda: f64) -> Result<HybridSchedule> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::contract(format!("lambda {lambda} outside [0, 1]")));
    }
    let tilde = beta_tilde(betas)?;
    let mut betas_prime: Vec<f64> = betas
        .iter()
        .zip(&tilde)
        .map(|(b, bt)| mix(lambda, *b, *bt))
        .collect();
    betas_prime[0] = betas_prime[0].max(BETA_FLOOR);
    Ok(HybridSchedule::assemble(
        betas.to_vec(),
        tilde,
        betas_prime,
        lambda,
        1.0,
    ))
}

impl HybridSchedule {
    fn assemble(
        betas: Vec<f64>,
        beta_tilde: Vec<f64>,
        betas_prime: Vec<f64>,
        lambda: f64,
        r_s: f64,
    ) -> Self {
        let alphas_prime = betas_prime.iter().map(|b| 1.0 - b).collect();
        let alpha_bars_prime = alpha_bars(&betas_prime);
        HybridSchedule {
            betas,
            beta_tilde,
            betas_prime,
            alphas_prime,
            alpha_bars_prime,
            lambda,
            r_s,
        }
    }

    /// Base schedule for `(t_cond, r_s)` mixed with `lambda`.
    pub fn build(cfg: &BaseScheduleConfig, t_cond: usize, r_s: f64, lambda: f64) -> Result<Self> {
        let betas = base_schedule(cfg, t_cond, r_s)?;
        let mut s = hybrid_combine(&betas, lambda)?;
        s.r_s = r_s;
        Ok(s)
    }

    /// Uses `betas` directly as the rates (`λ = 1`).
    pub fn fixed(betas: Vec<f64>) -> Result<Self> {
        let tilde = beta_tilde(&betas)?;
        let prime = betas.clone();
        Ok(HybridSchedule::assemble(betas, tilde, prime, 1.0, 1.0))
    }

    pub fn with_r_s(mut self, r_s: f64) -> Self {
        self.r_s = r_s;
        self
    }

    pub fn t_cond(&self) -> usize {
        self.betas_prime.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r_s(&self) -> f64 {
        self.r_s
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta_tilde(&self) -> &[f64] {
        &self.beta_tilde
    }

    pub fn betas_prime(&self) -> &[f64] {
        &self.betas_prime
    }

    pub fn alphas_prime(&self) -> &[f64] {
        &self.alphas_prime
    }

    pub fn alpha_bars_prime(&self) -> &[f64] {
        &self.alpha_bars_prime
    }

    /// `β′_t` for 1-based `t`.
    pub fn beta_prime(&self, t: usize) -> f64 {
        self.betas_prime[t - 1]
    }

    pub fn alpha_prime(&self, t: usize) -> f64 {
        self.alphas_prime[t - 1]
    }

    pub fn alpha_bar_prime(&self, t: usize) -> f64 {
        self.alpha_bars_prime[t - 1]
    }

    /// Checks every structural invariant, describing the first failure.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.t_cond();
        if n == 0 {
            return Err("empty schedule".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda {} outside [0,1]", self.lambda));
        }
        let mut product = 1.0;
        for t in 0..n {
            let bp = self.betas_prime[t];
            if !(bp > 0.0 && bp < 1.0) {
                return Err(format!("beta' at t={} is {bp}", t + 1));
            }
            if bp < self.beta_tilde[t] || bp > self.betas[t] {
                return Err(format!(
                    "beta' at t={} = {bp} outside [{}, {}]",
                    t + 1,
                    self.beta_tilde[t],
                    self.betas[t]
                ));
            }
            let ab = self.alpha_bars_prime[t];
            if !(ab > 0.0 && ab <= 1.0) {
                return Err(format!("alpha_bar' at t={} is {ab}", t + 1));
            }
            if t > 0 && ab >= self.alpha_bars_prime[t - 1] {
                return Err(format!("alpha_bar' not decreasing at t={}", t + 1));
            }
            product *= 1.0 - bp;
            if ((ab - product) / product).abs() > 1e-12 {
                return Err(format!("alpha_bar' at t={} differs from product", t + 1));
            }
        }
        Ok(())
    }

    /// Table with header `t,beta,beta_tilde,beta_prime,alpha_bar_prime`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,beta_tilde,beta_prime,alpha_bar_prime\n");
        for i in 0..self.t_cond() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                self.betas[i],
                self.beta_tilde[i],
                self.betas_prime[i],
                self.alpha_bars_prime[i]
            ));
        }
        out
    }
}

/// `count` rates picked at even stride from `betas`, always ending on the
/// last (noisiest) rate.
pub fn subsample_even(betas: &[f64], count: usize) -> Result<Vec<f64>> {
    if count == 0 || betas.is_empty() {
        return Err(Error::contract(
            "subsample needs a nonempty schedule and count",
        ));
    }
    let last = betas.len() - 1;
    if count == 1 {
        return Ok(vec![betas[last]]);
    }
    Ok((0..count)
        .map(|i| {
            // round-half-up of i·last/(count−1) in exact integer arithmetic
            let num = 2 * i * last + (count - 1);
            betas[num / (2 * (count - 1))]
        })
        .collect())
}

/// `β′` as a `[1, T]` row on the tape, differentiable in `lambda` (`[1,1]`).
///
/// Evaluates the same expression as [`hybrid_combine`] so values agree
/// bitwise with the plain schedule.
pub fn hybrid_betas_var(tape: &mut Tape, lambda: Var, betas: &[f64]) -> Result<Var> {
    let tilde = beta_tilde(betas)?;
    let beta_row = tape.constant(Tensor::row(betas.to_vec()))?;
    let tilde_row = tape.constant(Tensor::row(tilde.clone()))?;
    let upper = tape.matmul(lambda, beta_row)?;
    let one_minus = tape.rsub_scalar(1.0, lambda)?;
    let lower = tape.matmul(one_minus, tilde_row)?;
    let mixed = tape.add(upper, lower)?;
    let mixed = tape.clamp_between(mixed, tilde, betas.to_vec())?;
    let head = tape.slice_cols(mixed, 0, 1)?;
    let head = tape.clamp_min(head, BETA_FLOOR)?;
    if betas.len() == 1 {
        return Ok(head);
    }
    let tail = tape.slice_cols(mixed, 1, betas.len())?;
    tape.concat_cols(&[head, tail])
}

/// `ᾱ′_t` (1-based `t`) as a `[1,1]` tape value from a `[1, T]` row of `β′`.
pub fn alpha_bar_var(tape: &mut Tape, betas_prime: Var, t: usize) -> Result<Var> {
    let alphas = tape.rsub_scalar(1.0, betas_prime)?;
    let head = tape.slice_cols(alphas, 0, t)?;
    tape.prod(head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn cfg(kind: ScheduleKind, lo: f64, hi: f64) -> BaseScheduleConfig {
        BaseScheduleConfig {
            kind,
            beta_min: lo,
            beta_max: hi,
            t_min: 1,
            t_max: 10,
        }
    }

    #[test]
    fn linear_three_steps() {
        let b = base_schedule(&cfg(ScheduleKind::Linear, 0.1, 0.3), 3, 1.0).unwrap();
        assert_eq!(b[0], 0.1);
        assert!((b[1] - 0.2).abs() < 1e-15);
        assert_eq!(b[2], 0.3);
    }

    #[test]
    fn single_step_is_upper_extreme() {
        for kind in ScheduleKind::ALL {
            let b = base_schedule(&cfg(kind, 0.1, 0.3), 1, 1.0).unwrap();
            assert_eq!(b, vec![0.3]);
        }
    }

    #[test]
    fn tiny_ratio_clamps_to_ceiling() {
        let b = base_schedule(&cfg(ScheduleKind::Linear, 0.1, 0.3), 5, 0.1).unwrap();
        assert!(b.iter().all(|v| *v == BETA_CEIL), "{b:?}");
    }

    #[test]
    fn base_schedule_contract_errors() {
        let c = cfg(ScheduleKind::Linear, 0.1, 0.3);
        assert!(base_schedule(&c, 0, 1.0).is_err());
        assert!(base_schedule(&c, 3, 0.0).is_err());
        assert!(base_schedule(&c, 3, -1.0).is_err());
    }

    #[test]
    fn kinds_are_monotone_with_endpoints() {
        for kind in ScheduleKind::ALL {
            let b = base_schedule(&cfg(kind, 1e-3, 0.05), 57, 0.8).unwrap();
            assert!(b.windows(2).all(|w| w[0] <= w[1]), "{kind}");
            let (lo, hi) = (1e-3 / 0.8, 0.05 / 0.8);
            let tol = if kind == ScheduleKind::Sigmoid {
                0.0025 * (hi - lo)
            } else {
                0.0
            };
            assert!((b[0] - lo).abs() <= tol, "{kind} start {}", b[0]);
            assert!((b[56] - hi).abs() <= tol, "{kind} end {}", b[56]);
        }
    }

    #[test]
    fn beta_tilde_hand_values() {
        let bt = beta_tilde(&[0.1, 0.2]).unwrap();
        assert_eq!(bt[0], 0.0);
        assert!((bt[1] - 0.1 / 0.28 * 0.2).abs() < 1e-12);
        assert!((bt[1] - 0.071_428_571_428_571_4).abs() < 1e-12);
        assert_eq!(beta_tilde(&[0.4]).unwrap(), vec![0.0]);
        assert!(beta_tilde(&[]).is_err());
    }

    #[test]
    fn beta_tilde_of_constant_rates_rises_below_rate() {
        let b = 0.05;
        let bt = beta_tilde(&[b; 40]).unwrap();
        for t in 1..40 {
            assert!(bt[t] < b);
            if t > 1 {
                assert!(bt[t] > bt[t - 1]);
            }
        }
    }

    #[test]
    fn lambda_endpoints() {
        let betas = [0.1, 0.2];
        let one = hybrid_combine(&betas, 1.0).unwrap();
        assert_eq!(one.betas_prime(), &betas);
        let zero = hybrid_combine(&betas, 0.0).unwrap();
        assert_eq!(zero.betas_prime()[0], BETA_FLOOR);
        assert!((zero.betas_prime()[1] - 0.071_428_571_428_571_4).abs() < 1e-12);
        let half = hybrid_combine(&betas, 0.5).unwrap();
        assert!((half.beta_prime(2) - 0.135_714_285_714_285_7).abs() < 1e-12);
        assert!(hybrid_combine(&betas, 1.5).is_err());
        assert!(hybrid_combine(&betas, -0.1).is_err());
    }

    #[test]
    fn csv_dump_layout() {
        let s = HybridSchedule::build(&cfg(ScheduleKind::Linear, 0.1, 0.3), 1, 1.0, 1.0).unwrap();
        let csv = s.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,beta,beta_tilde,beta_prime,alpha_bar_prime");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("1,0.3,0,0.3,"));
    }

    #[test]
    fn subsample_stride() {
        let betas: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(subsample_even(&betas, 1).unwrap(), vec![9.0]);
        assert_eq!(subsample_even(&betas, 2).unwrap(), vec![0.0, 9.0]);
        assert_eq!(subsample_even(&betas, 4).unwrap(), vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(subsample_even(&betas, 10).unwrap(), betas);
    }

    #[test]
    fn tape_path_matches_plain_schedule_bitwise() {
        let betas = base_schedule(&cfg(ScheduleKind::Quadratic, 1e-3, 0.1), 30, 0.9).unwrap();
        for lambda in [0.0, 0.37, 1.0] {
            let plain = hybrid_combine(&betas, lambda).unwrap();
            let mut tape = Tape::new();
            let l = tape.constant(Tensor::scalar(lambda)).unwrap();
            let bp = hybrid_betas_var(&mut tape, l, &betas).unwrap();
            assert_eq!(tape.value(bp).data(), plain.betas_prime());
            for t in [1, 7, 30] {
                let ab = alpha_bar_var(&mut tape, bp, t).unwrap();
                assert_eq!(tape.scalar(ab), plain.alpha_bar_prime(t));
            }
        }
    }

    #[test]
    fn lambda_derivative_is_gap_between_bounds() {
        let betas = base_schedule(&cfg(ScheduleKind::Linear, 1e-3, 0.2), 12, 1.0).unwrap();
        let tilde = beta_tilde(&betas).unwrap();
        for t in 2..=12 {
            let mut tape = Tape::new();
            let l = tape
                .leaf(Tensor::scalar(0.4).with_requires_grad(true))
                .unwrap();
            let bp = hybrid_betas_var(&mut tape, l, &betas).unwrap();
            let pick = tape.slice_cols(bp, t - 1, t).unwrap();
            let s = tape.sum(pick).unwrap();
            tape.backward(s).unwrap();
            let d = tape.grad(l).unwrap()[0];
            assert!((d - (betas[t - 1] - tilde[t - 1])).abs() < 1e-15);
        }
        let err = grad_check(
            |tape, v| {
                let bp = hybrid_betas_var(tape, v[0], &betas)?;
                let ab = alpha_bar_var(tape, bp, 9)?;
                let s = tape.sum(bp)?;
                tape.add(ab, s)
            },
            &[Tensor::scalar(0.4)],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn mix_stays_within_bounds_when_they_nearly_meet() {
        // late steps of a long schedule have β̃ within an ulp of β
        let c = BaseScheduleConfig {
            kind: ScheduleKind::Linear,
            beta_min: 1e-4,
            beta_max: 0.26027627391955604,
            t_min: 1,
            t_max: 10,
        };
        let s = HybridSchedule::build(&c, 205, 0.5, 0.13245256936281644).unwrap();
        s.check_invariants().unwrap();
        let mut tape = Tape::new();
        let lambda = tape.constant(Tensor::scalar(0.13245256936281644)).unwrap();
        let row = hybrid_betas_var(&mut tape, lambda, s.betas()).unwrap();
        assert_eq!(tape.value(row).data(), s.betas_prime());
    }
}
