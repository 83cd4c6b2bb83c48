//! Realizes a full SpecAugment plan for one synthetic utterance and draws the
//! result as a coarse character map (`.` masked, digits for energy).
//!
//!     cargo run --example augment_sample [seed]

use specpolicy::{apply_plan, realize_draws, AugmentConfig, FeatureMatrix, SampleSeed, StrategySet};

fn render(m: &FeatureMatrix) {
    // Channels top to bottom, every second frame left to right.
    for f in (0..m.nu()).rev() {
        let row: String = (0..m.tau())
            .step_by(2)
            .map(|t| {
                let v = m.get(t, f);
                if v == 0.0 {
                    '.'
                } else {
                    char::from_digit((v.clamp(0.0, 9.0)) as u32, 10).unwrap()
                }
            })
            .collect();
        println!("{f:>3} {row}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let m = FeatureMatrix::from_fn(120, 24, |t, f| {
        let harmonic = (f as f64 - 6.0 - 4.0 * (t as f64 / 19.0).sin()).abs();
        1.0 + 8.0 * (-harmonic * harmonic / 6.0).exp()
    })?;

    let params = AugmentConfig::default().default_params();
    let plan = realize_draws(SampleSeed::new(seed, 0, 0), &m, &params, StrategySet::ALL)?;
    let stage = &plan.stages[0];
    if let Some(w) = &stage.warp {
        println!("warp: center {} moved {} frames {:?} (budget {})", w.center, w.distance, w.direction, w.budget);
    }
    for d in &stage.freq_masks {
        println!("freq mask: channels {}..{}", d.start, d.start + d.width);
    }
    for d in &stage.time_masks {
        println!("time mask: frames {}..{}", d.start, d.start + d.width);
    }

    println!("\ninput");
    render(&m);
    println!("\naugmented");
    render(&apply_plan(&m, &plan)?);
    Ok(())
}
