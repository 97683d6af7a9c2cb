//! Generate a biased synthetic dataset and look at what makes it biased.
//!
//! The generator plants two things: a prevalence imbalance (group A is
//! positive far more often than group B) and a shortcut feature that marks
//! group membership. Together they give a plain learner a tempting proxy:
//! feature 1 predicts the label through the group association while carrying
//! no label information inside either group.
//!
//! Run with: `cargo run --example generate_data`

use fairscl::{emit_table_dataset, generate_synthetic, Result, SyntheticConfig};

fn main() -> Result<()> {
    let config = SyntheticConfig::default();
    let data = generate_synthetic(&config, 42)?;

    println!(
        "{} records, {} features, attribute '{}'",
        data.len(),
        config.feature_dim,
        config.attribute
    );

    for category in &config.categories {
        let records: Vec<_> = data
            .records()
            .iter()
            .filter(|r| r.groups["group"] == *category)
            .collect();
        let positives = records.iter().filter(|r| r.label == 1).count();
        let marker_mean: f64 =
            records.iter().map(|r| r.features[1]).sum::<f64>() / records.len() as f64;
        println!(
            "group {category}: n = {}, positives = {} ({:.0}%), mean shortcut feature = {:+.2}",
            records.len(),
            positives,
            100.0 * positives as f64 / records.len() as f64,
            marker_mean
        );
    }

    // The same counts as a 2x2 odds ratio: how strongly group membership
    // alone predicts the label.
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for r in data.records() {
        match (r.groups["group"].as_str(), r.label) {
            ("A", 1) => a += 1.0,
            ("A", 0) => b += 1.0,
            (_, 1) => c += 1.0,
            _ => d += 1.0,
        }
    }
    println!("group-label odds ratio (A vs B): {:.2}", (a * d) / (b * c));

    let out = std::env::temp_dir().join("fairscl_example_dataset.csv");
    emit_table_dataset(&data, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
