//! Prints hybrid schedules for a few complexity ratios and mixing weights.
//!
//! cargo run --example schedule_table -- [steps]

use acdiff::schedule::{BaseScheduleConfig, HybridSchedule, ScheduleKind};

fn main() -> acdiff::Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    for kind in ScheduleKind::ALL {
        let cfg = BaseScheduleConfig {
            kind,
            ..Default::default()
        };
        println!("== {kind} schedule, {steps} steps");
        println!(
            "{:>5} {:>5} {:>10} {:>10} {:>12}",
            "r_s", "λ", "β'_1", "β'_T", "ᾱ'_T"
        );
        for r_s in [0.5, 1.0, 1.5] {
            for lambda in [0.0, 0.5, 1.0] {
                let s = HybridSchedule::build(&cfg, steps, r_s, lambda)?;
                s.check_invariants().expect("schedule invariants");
                println!(
                    "{r_s:>5.2} {lambda:>5.2} {:>10.6} {:>10.6} {:>12.4e}",
                    s.beta_prime(1),
                    s.beta_prime(steps),
                    s.alpha_bar_prime(steps)
                );
            }
        }
    }
    println!("\nfull table for linear, r_s = 1, λ = 0.5:");
    print!(
        "{}",
        HybridSchedule::build(&BaseScheduleConfig::default(), steps, 1.0, 0.5)?.to_csv()
    );
    Ok(())
}
