//! The three studied network architectures and their training procedures.

mod arch;
mod log;
mod train;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::Sample;
use crate::nn::{Matrix, Network, NetworkCheckpoint, OptimizerConfig};

pub use arch::{build_autoencoder, build_head, build_mlp, Autoencoder};
pub use log::{EpochLog, TrainLog};
pub use train::{
    dae_loss_and_grads, feature_matrix, target_matrix, train_ae_two_stage, train_dae, train_mlp,
    DaeStep,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    Mlp,
    Ae,
    Dae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Rf, ModelKind::Mlp, ModelKind::Ae, ModelKind::Dae];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Mlp => "mlp",
            ModelKind::Ae => "ae",
            ModelKind::Dae => "dae",
        }
    }

    pub fn is_neural(self) -> bool {
        self != ModelKind::Rf
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown model kind {s:?}")))
    }
}

fn check_common(dropout: f64, batch_size: usize, optimizer: &OptimizerConfig) -> Result<()> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::config(format!("dropout {dropout} outside [0, 1)")));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    optimizer.validate()
}

fn check_widths(what: &str, widths: &[usize]) -> Result<()> {
    if widths.contains(&0) {
        return Err(Error::config(format!("{what} widths must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            hidden: vec![480, 480],
            dropout: 0.20,
            optimizer: OptimizerConfig::adam(0.001, 0.0001),
            batch_size: 64,
            epochs: 100,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        check_widths("mlp hidden", &self.hidden)?;
        check_common(self.dropout, self.batch_size, &self.optimizer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeSpec {
    /// Encoder widths ending at the bottleneck; the decoder mirrors them.
    pub encoder: Vec<usize>,
    pub dropout: f64,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub ae_epochs: usize,
    pub head_hidden: Vec<usize>,
    pub head_epochs: usize,
}

impl Default for AeSpec {
    fn default() -> Self {
        AeSpec {
            encoder: vec![300, 200, 120],
            dropout: 0.10,
            optimizer: OptimizerConfig::adamw(0.0003, 0.01),
            batch_size: 64,
            ae_epochs: 60,
            head_hidden: vec![180, 180],
            head_epochs: 60,
        }
    }
}

impl AeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() {
            return Err(Error::config(
                "ae encoder needs at least the bottleneck width",
            ));
        }
        check_widths("ae encoder", &self.encoder)?;
        check_widths("ae head", &self.head_hidden)?;
        check_common(self.dropout, self.batch_size, &self.optimizer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaeSpec {
    pub encoder: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub dropout: f64,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for DaeSpec {
    fn default() -> Self {
        DaeSpec {
            encoder: vec![300, 200, 120],
            head_hidden: vec![80, 40],
            dropout: 0.10,
            optimizer: OptimizerConfig::adamw(0.0003, 0.01),
            batch_size: 64,
            epochs: 100,
        }
    }
}

impl DaeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() {
            return Err(Error::config(
                "dae encoder needs at least the bottleneck width",
            ));
        }
        check_widths("dae encoder", &self.encoder)?;
        check_widths("dae head", &self.head_hidden)?;
        check_common(self.dropout, self.batch_size, &self.optimizer)
    }
}

/// A trained network model.
///
/// For the autoencoder variants `body` is the full autoencoder and `head`
/// reads the output of layer `tap` (the bottleneck). Prediction runs the body
/// only up to the tap, so the decoder never contributes.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub kind: ModelKind,
    pub body: Network,
    pub head: Option<Network>,
    pub tap: Option<usize>,
}

pub const MODEL_FORMAT: &str = "nrr-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelCheckpoint {
    format: String,
    version: u32,
    kind: ModelKind,
    body: NetworkCheckpoint,
    head: Option<NetworkCheckpoint>,
    tap: Option<usize>,
}

impl NeuralModel {
    pub fn input_width(&self) -> usize {
        self.body.input_width()
    }

    /// Eval-mode predictions, one per row.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let out = match (&self.head, self.tap) {
            (Some(head), Some(tap)) => head.predict(&self.body.predict_prefix(x, tap + 1)?)?,
            _ => self.body.predict(x)?,
        };
        if out.cols() != 1 {
            return Err(Error::shape(format!(
                "model emits {} columns, expected 1",
                out.cols()
            )));
        }
        Ok(out.into_vec())
    }

    pub fn predict_samples(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        self.predict(&feature_matrix(samples))
    }

    /// Decoder output of an autoencoder model.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        if self.tap.is_none() {
            return Err(Error::Usage(format!("{} model has no decoder", self.kind)));
        }
        self.body.predict(x)
    }

    /// Layers of `body` that feed the head.
    pub fn encoder_len(&self) -> Option<usize> {
        self.tap.map(|t| t + 1)
    }

    pub fn to_json(&self) -> Result<String> {
        let c = ModelCheckpoint {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: self.kind,
            body: self.body.to_checkpoint(),
            head: self.head.as_ref().map(Network::to_checkpoint),
            tap: self.tap,
        };
        Ok(serde_json::to_string(&c)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ModelCheckpoint = serde_json::from_str(s)?;
        if c.format != MODEL_FORMAT || c.version != MODEL_VERSION {
            return Err(Error::data(format!(
                "unsupported model checkpoint {} v{}",
                c.format, c.version
            )));
        }
        let body = Network::from_checkpoint(c.body)?;
        let head = c.head.map(Network::from_checkpoint).transpose()?;
        if head.is_some() != c.tap.is_some() {
            return Err(Error::data(
                "model checkpoint has a head without a tap or vice versa",
            ));
        }
        if let (Some(h), Some(t)) = (&head, c.tap) {
            let width = body.widths().get(t).copied();
            if width != Some(h.input_width()) {
                return Err(Error::data("model head does not match the tapped layer"));
            }
        }
        Ok(NeuralModel {
            kind: c.kind,
            body,
            head,
            tap: c.tap,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_recipe() {
        let m = MlpSpec::default();
        assert_eq!(m.hidden, [480, 480]);
        assert_eq!((m.dropout, m.batch_size, m.epochs), (0.20, 64, 100));
        assert_eq!((m.optimizer.lr, m.optimizer.weight_decay), (0.001, 0.0001));
        assert_eq!(m.optimizer.kind, crate::nn::OptimizerKind::Adam);

        let a = AeSpec::default();
        assert_eq!(a.encoder, [300, 200, 120]);
        assert_eq!(a.head_hidden, [180, 180]);
        assert_eq!((a.dropout, a.ae_epochs, a.head_epochs), (0.10, 60, 60));
        assert_eq!((a.optimizer.lr, a.optimizer.weight_decay), (0.0003, 0.01));
        assert_eq!(a.optimizer.kind, crate::nn::OptimizerKind::AdamW);

        let d = DaeSpec::default();
        assert_eq!(d.head_hidden, [80, 40]);
        assert_eq!((d.epochs, d.batch_size), (100, 64));
    }

    #[test]
    fn kind_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut m = MlpSpec::default();
        m.dropout = 1.0;
        assert!(m.validate().is_err());
        let mut a = AeSpec::default();
        a.encoder.clear();
        assert!(a.validate().is_err());
        let d: DaeSpec = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(d.epochs, 3);
        assert_eq!(d.encoder, [300, 200, 120]);
    }
}
