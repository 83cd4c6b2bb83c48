//! Runs the surrogate closed loop for a few augmentation variants and seeds
//! and prints the final train/validation accuracy gap of each.
//!
//!     cargo run --release --example closed_loop
//!     cargo run --release --example closed_loop -- hard
//!
//! `hard` shrinks the training set and weakens the class tone so the
//! unaugmented model actually over-fits.

use specpolicy::{run_simulation, AugmentVariant, SimConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = match std::env::args().nth(1).as_deref() {
        None => SimConfig::default(),
        Some("hard") => SimConfig { n_train: 64, tone_energy: 0.3, ..SimConfig::default() },
        Some(other) => return Err(format!("unknown regime {other:?}").into()),
    };
    let seeds = [1u64, 2, 3, 4, 5];
    for variant in [AugmentVariant::None, AugmentVariant::SpecAugment, AugmentVariant::Random, AugmentVariant::Policy] {
        let mut gaps = Vec::new();
        for &seed in &seeds {
            let run = run_simulation(&SimConfig { variant, seed, ..base })?;
            let last = run.final_trace().expect("at least one epoch");
            println!(
                "{:<20} seed={seed} train={:.3} val={:.3} gap={:+.3}",
                variant.name(),
                last.train_accuracy,
                last.val_accuracy,
                last.accuracy_gap()
            );
            gaps.push(last.accuracy_gap());
        }
        println!("{:<20} median gap {:+.4}\n", variant.name(), median(gaps));
    }
    Ok(())
}
