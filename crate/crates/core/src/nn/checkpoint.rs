//! Versioned JSON checkpoints. Floats are written in shortest round-trip form
//! and parsed back exactly, so save/load is bit-exact.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::network::{Layer, Network, SkipLink};
use crate::error::{Error, Result};

pub const NETWORK_FORMAT: &str = "nrr-network";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format: String,
    pub version: u32,
    pub input_width: usize,
    pub layers: Vec<Layer>,
    pub skips: Vec<SkipLink>,
}

impl Network {
    pub fn to_checkpoint(&self) -> NetworkCheckpoint {
        NetworkCheckpoint {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            input_width: self.input_width(),
            layers: self.layers().to_vec(),
            skips: self.skips().to_vec(),
        }
    }

    pub fn from_checkpoint(c: NetworkCheckpoint) -> Result<Network> {
        if c.format != NETWORK_FORMAT || c.version != NETWORK_VERSION {
            return Err(Error::data(format!(
                "unsupported checkpoint {} v{} (expected {NETWORK_FORMAT} v{NETWORK_VERSION})",
                c.format, c.version
            )));
        }
        Network::from_parts(c.input_width, c.layers, c.skips)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        let c: NetworkCheckpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        Network::from_checkpoint(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn checkpoint_round_trips_bit_exactly(seed in any::<u64>(), scale in -1e6f64..1e6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Network::new(7);
            net.push_dense(9, &mut rng);
            net.push_relu();
            net.push_dropout(0.1).unwrap();
            net.push_dense(9, &mut rng);
            net.add_skip(2, 3).unwrap();
            net.push_dense(1, &mut rng);
            for p in net.param_slices_mut() {
                for v in p.iter_mut() {
                    *v *= scale;
                }
            }
            let json = serde_json::to_string(&net.to_checkpoint()).unwrap();
            let back = Network::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
            prop_assert_eq!(&back, &net);
            let bits = |n: &Network| -> Vec<u64> {
                n.param_slices().iter().flat_map(|s| s.iter().map(|v| v.to_bits())).collect()
            };
            prop_assert_eq!(bits(&back), bits(&net));
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::new(2);
        net.push_dense(1, &mut rng);
        let mut c = net.to_checkpoint();
        c.version = 99;
        assert!(Network::from_checkpoint(c).is_err());
        let x = Matrix::zeros(1, 2);
        assert_eq!(net.predict(&x).unwrap().shape(), (1, 1));
    }
}
