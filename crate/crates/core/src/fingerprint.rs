//! Config fingerprints: short stable hashes of effective parameters so
//! every report is traceable to its inputs.

use sha2::{Digest, Sha256};

/// Twelve hex characters of the SHA-256 of the value's canonical JSON.
pub fn fingerprint<T: serde::Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("fingerprint input must serialize");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(12);
    for byte in digest.iter().take(6) {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
