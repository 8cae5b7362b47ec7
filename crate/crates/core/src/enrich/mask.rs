//! Description masking for the degraded-semantics ablation: replace a
//! fraction of whitespace tokens with the literal `[MASK]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cache::DescriptionRecord;
use super::EnrichError;

/// Replace `floor(ratio * n_tokens)` uniformly chosen token positions (no
/// replacement) with `[MASK]`, then rejoin with single spaces. Token count
/// and ordering are preserved; zero-token text comes back unchanged.
pub fn mask_description(text: &str, ratio: f64, rng: &mut ChaCha8Rng) -> String {
    let mut tokens: Vec<&str> = text.split_whitespace().collect();
    let n = tokens.len();
    let m = (ratio * n as f64).floor() as usize;
    if n == 0 || m == 0 {
        return tokens.join(" ");
    }
    for position in rand::seq::index::sample(rng, n, m) {
        tokens[position] = "[MASK]";
    }
    tokens.join(" ")
}

/// Mask every record's text with one seeded generator consumed in record
/// order; deterministic for a fixed (records, ratio, seed).
pub fn mask_descriptions(
    records: &[DescriptionRecord],
    ratio: f64,
    seed: u64,
) -> Result<Vec<DescriptionRecord>, EnrichError> {
    if !(0.0..=1.0).contains(&ratio) || !ratio.is_finite() {
        return Err(EnrichError::BadMaskRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(records
        .iter()
        .map(|r| {
            let mut masked = r.clone();
            masked.text = mask_description(&r.text, ratio, &mut rng);
            masked
        })
        .collect())
}
