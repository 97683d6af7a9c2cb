//! How group-aware pairing differs from plain supervised pairing.
//!
//! Plain supervised contrastive pairing attracts same-label records and
//! repels different-label records, wherever they come from — so a feature
//! that separates the groups can survive, or even help, the objective. The
//! group-aware rule restricts both sides: positives must *cross* the group
//! boundary (same label, different category) and negatives must stay
//! *inside* it (different label, same category). Anything the two groups do
//! not share gets pulled out of the representation.
//!
//! Run with: `cargo run --example group_aware_pairs`

use fairscl::{
    build_pairs, contrastive_loss, EmbeddingBatch, LossForm, PairMode, Result,
};
use ndarray::array;

fn main() -> Result<()> {
    let labels = [1, 1, 0, 0, 1, 0];
    let groups = ["A", "A", "A", "B", "B", "B"];

    for mode in [PairMode::LabelOnly, PairMode::GroupAware] {
        let pairs = build_pairs(&labels, &groups, mode)?;
        println!("{mode:?}:");
        for p in &pairs.pairs {
            println!(
                "  anchor {} (label {}, group {}): positives {:?}, negatives {:?}",
                p.anchor, labels[p.anchor], groups[p.anchor], p.positives, p.negatives
            );
        }
        println!("  dropped anchors: {}", pairs.dropped);
    }

    // The loss over unit embeddings where dimension 1 encodes the group:
    // records 0..3 point one way, 3..6 the other, regardless of label.
    // Group-aware pairing is maximally unhappy with that arrangement.
    let s = 1.0 / 2.0_f64.sqrt();
    let z = EmbeddingBatch::new(array![
        [s, s],
        [s, s],
        [s, s],
        [s, -s],
        [s, -s],
        [s, -s],
    ])?;
    for mode in [PairMode::LabelOnly, PairMode::GroupAware] {
        let pairs = build_pairs(&labels, &groups, mode)?;
        let loss = contrastive_loss(&z, &pairs, 0.5, LossForm::LogRatio)?;
        println!("loss on group-aligned embeddings, {mode:?}: {loss:.4}");
    }
    Ok(())
}
