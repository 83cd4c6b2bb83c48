//! Prints the strength factor `1 - I_r(a, b)` over relative loss `r` and the
//! augmentation parameters it maps to.
//!
//!     cargo run --example ibf_curve [a b]

use specpolicy::policy::map_parameters;
use specpolicy::{reg_inc_beta, AugmentConfig, BetaParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let beta = match args.as_slice() {
        [a, b] => BetaParams::new(*a, *b)?,
        [] => BetaParams::POLICY_DEFAULT,
        _ => return Err("usage: ibf_curve [a b]".into()),
    };
    let cfg = AugmentConfig::default();
    println!("a={} b={}", beta.a, beta.b);
    println!("{:>6} {:>10} {:>8} {:>6} {:>7}", "r", "lambda", "rho0", "masks", "W");
    for k in 0..=20 {
        let r = k as f64 / 20.0;
        let lambda = 1.0 - reg_inc_beta(r, beta)?;
        let p = map_parameters(lambda, &cfg)?;
        let bar = "#".repeat((lambda * 40.0).round() as usize);
        println!(
            "{r:>6.2} {lambda:>10.6} {:>8.3} {:>6} {:>7} {bar}",
            p.rho0,
            p.n_time_masks,
            (p.rho0 * p.warp_base as f64).round()
        );
    }
    Ok(())
}
