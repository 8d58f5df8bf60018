//! Small shared helpers: rounding, hashing, derived RNG streams.

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Round to two decimal places (percent values are reported this way).
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Fill `{key}` placeholders in a prompt template.
pub fn render(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Derive an independent RNG for one phase of one iteration.
///
/// Keyed by (seed, iteration, phase label) so a resumed run reconstructs
/// exactly the stream an uninterrupted run would have used, without
/// persisting RNG state.
pub fn phase_rng(seed: u64, iteration: u32, phase: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(iteration.to_le_bytes());
    hasher.update(phase.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    <ChaCha8Rng as rand::SeedableRng>::from_seed(key)
}
