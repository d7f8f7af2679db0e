//! Synthetic extractive QA data for robustness under natural distribution
//! shift: seed-question sampling, LLM context generation, question
//! generation with round-trip filtering, real/generated mixing, and SQuAD
//! v1.1 evaluation.

pub mod backend;
pub mod generation;
pub mod metrics;
pub mod mixer;
pub mod pipeline;
pub mod provenance;
pub mod squad;
pub mod synthesis;
pub mod text;

/// Lowercase hex SHA-256, used for file and config digests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
