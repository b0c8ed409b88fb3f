//! Command implementations behind the `wlrseq` binary. Every command reads
//! JSON (plus CSV for subject-level data) and produces a serializable
//! document; `main.rs` only parses flags and writes the result.

pub mod data;
pub mod design;
pub mod monitor;
pub mod pretty;
pub mod project;
pub mod report;
pub mod simulate;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Where a document came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_cutoff: Option<f64>,
}

impl Provenance {
    pub fn new(command: &str, config: &[u8]) -> Self {
        Self {
            tool: "wlrseq".to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config),
            data_sha256: None,
            data_cutoff: None,
        }
    }

    pub fn with_data(mut self, data_sha256: Option<String>, cutoff: Option<f64>) -> Self {
        self.data_sha256 = data_sha256;
        self.data_cutoff = cutoff;
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Process exit status: 2 when boundaries cannot be constructed, 1 for any
/// other failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<wlrseq::Error>()) {
        Some(wlrseq::Error::NoRoot(_) | wlrseq::Error::FutilityMeetsEfficacy { .. }) => 2,
        _ => 1,
    }
}

/// One-line message with the failing module named in front of the library
/// error.
pub fn describe(err: &anyhow::Error) -> String {
    err.chain()
        .map(|e| match e.downcast_ref::<wlrseq::Error>() {
            Some(core) => format!("{}: {core}", core.module()),
            None => e.to_string(),
        })
        .collect::<Vec<_>>()
        .join(": ")
}

/// `None` for non-finite values so that JSON carries `null`.
pub(crate) fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let e = anyhow::Error::new(wlrseq::Error::NoRoot("x".into())).context("design");
        assert_eq!(exit_code(&e), 2);
        let e = anyhow::Error::new(wlrseq::Error::NoSubjects);
        assert_eq!(exit_code(&e), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 1);
    }

    #[test]
    fn messages_name_the_module() {
        let e = anyhow::Error::new(wlrseq::Error::BadArm(3)).context("reading trial.csv");
        let msg = describe(&e);
        assert!(msg.starts_with("reading trial.csv: survival_data: "), "{msg}");
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
