//! Feeds a hand-written sequence of validation losses through the policy and
//! prints the probabilities, relative losses, strength factors and mapped
//! parameters after every epoch.
//!
//!     cargo run --example policy_schedule

use specpolicy::policy::{map_strategy_parameters, AugmentVariant, LossReport, PolicyState};
use specpolicy::{AugmentConfig, BetaParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Warp is easy, frequency masking hard, time masking in between and flattening out.
    let losses = [
        [0.90, 1.40, 1.10],
        [0.70, 1.30, 0.95],
        [0.62, 1.26, 0.93],
        [0.60, 1.25, 0.93],
        [0.55, 1.10, 0.92],
        [0.55, 1.05, 0.92],
    ];
    let cfg = AugmentConfig::default();
    let mut state = PolicyState::new(AugmentVariant::Policy, BetaParams::POLICY_DEFAULT, 0);
    println!("epoch  strategy     loss   P      rel    lambda  rho0/masks");
    for (k, l) in losses.iter().enumerate() {
        state = state.advance_epoch(&LossReport { epoch: k as u64 + 1, losses: *l })?;
        let p = map_strategy_parameters(&state.lambda, &cfg)?;
        let strength = [format!("{:.3}", p.rho0), p.n_freq_masks.to_string(), p.n_time_masks.to_string()];
        for (i, name) in ["TIME_WARP", "FREQ_MASK", "TIME_MASK"].iter().enumerate() {
            println!(
                "{:>5}  {name:<11} {:.3}  {:.3}  {:.3}  {:.4}  {}",
                state.epoch, l[i], state.probabilities[i], state.relative[i], state.lambda[i], strength[i]
            );
        }
    }
    Ok(())
}
