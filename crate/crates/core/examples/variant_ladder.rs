//! Shows which strategies each augmentation variant switches on for the first
//! few samples of an epoch, given the same policy state.
//!
//!     cargo run --example variant_ladder

use specpolicy::policy::{make_plan, AugmentVariant, LossReport, PolicyState};
use specpolicy::{AugmentConfig, BetaParams, FeatureMatrix, SampleSeed};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = FeatureMatrix::filled(100, 40, 1.0)?;
    let cfg = AugmentConfig::default();
    for variant in AugmentVariant::ALL {
        let state = PolicyState::new(variant, BetaParams::POLICY_DEFAULT, 5)
            .advance_epoch(&LossReport { epoch: 1, losses: [0.4, 1.2, 0.8] })?
            .advance_epoch(&LossReport { epoch: 2, losses: [0.35, 1.15, 0.8] })?;
        print!("{:>2} {:<19}", variant.system_index(), variant.name());
        for i in 0..6 {
            let plan = make_plan(variant, &state, SampleSeed::new(5, state.epoch, i), &m, &cfg)?;
            let tags: Vec<String> = plan
                .stages
                .iter()
                .map(|s| s.active.iter().map(|id| id.short()).collect::<Vec<_>>().join("+"))
                .collect();
            let cell = if tags.is_empty() { "-".to_string() } else { tags.join(" then ") };
            print!(" {cell:<17}");
        }
        println!();
    }
    Ok(())
}
