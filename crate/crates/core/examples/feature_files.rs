//! Writes a feature file, reads it back, and converts it to and from CSV.
//!
//!     cargo run --example feature_files

use specpolicy::formats::{features_from_csv, features_to_csv, read_feature_file, write_feature_file};
use specpolicy::FeatureMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("utt.spfa");
    let m = FeatureMatrix::from_fn(4, 3, |t, f| t as f64 * 0.5 - f as f64)?;
    write_feature_file(&path, &m)?;

    let bytes = std::fs::read(&path)?;
    println!("{} bytes, header {:02x?}", bytes.len(), &bytes[..16]);
    let back = read_feature_file(&path)?;
    assert_eq!(back, m);

    let csv = features_to_csv(&back);
    print!("{csv}");
    assert_eq!(features_from_csv(&csv)?, m);
    Ok(())
}
