use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What produced a report: enough to tell whether two reports came from the
/// same configuration and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub version: String,
    /// Input file name to content hash.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport<T> {
    pub command: String,
    pub metrics: T,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the config's JSON form. Field order is fixed by the type and
/// floats serialize in shortest round-trip form, so distinct configs give
/// distinct bytes.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String, serde_json::Error> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

pub fn provenance<C: Serialize>(config: &C, seed: Option<u64>, inputs: BTreeMap<String, String>) -> Result<Provenance, serde_json::Error> {
    Ok(Provenance { config_hash: config_hash(config)?, seed, version: VERSION.into(), inputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use bevtrack::lifting::LiftMethod;
    use bevtrack::pipeline::PipelineConfig;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = PipelineConfig::default();
        let h0 = config_hash(&base).unwrap();
        assert_eq!(h0, config_hash(&base.clone()).unwrap());
        type Edit = Box<dyn Fn(&mut PipelineConfig)>;
        let variants: Vec<Edit> = vec![
            Box::new(|c| c.method = LiftMethod::Perspective),
            Box::new(|c| c.grid.cell_size = 0.2),
            Box::new(|c| c.grid.z_bins = 4),
            Box::new(|c| c.downsample = 2),
            Box::new(|c| c.reference_amplitude = 1.0 + 1e-12),
            Box::new(|c| c.decode.threshold = 0.3),
            Box::new(|c| c.decode.max_k = 3),
            Box::new(|c| c.depth.bins = 8),
            Box::new(|c| c.deformable.points = 4),
            Box::new(|c| c.tracker.gate = 2.0),
            Box::new(|c| c.tracker.use_motion = false),
            Box::new(|c| c.tracker.process_noise[3] = 0.7),
            Box::new(|c| c.seed = 1),
        ];
        for (k, v) in variants.iter().enumerate() {
            let mut c = base.clone();
            v(&mut c);
            assert_ne!(config_hash(&c).unwrap(), h0, "variant {k}");
        }
    }
}
