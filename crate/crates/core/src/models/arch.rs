use rand::Rng;

use crate::error::Result;
use crate::nn::Network;

fn push_hidden<R: Rng + ?Sized>(
    net: &mut Network,
    width: usize,
    dropout: f64,
    rng: &mut R,
) -> Result<usize> {
    net.push_dense(width, rng);
    let relu = net.push_relu();
    net.push_dropout(dropout)?;
    Ok(relu)
}

/// Dense/ReLU/dropout blocks followed by a linear scalar output.
pub fn build_mlp<R: Rng + ?Sized>(
    input: usize,
    hidden: &[usize],
    dropout: f64,
    rng: &mut R,
) -> Result<Network> {
    let mut net = Network::new(input);
    for &w in hidden {
        push_hidden(&mut net, w, dropout, rng)?;
    }
    net.push_dense(1, rng);
    Ok(net)
}

/// Regression head reading a `input`-wide representation.
pub fn build_head<R: Rng + ?Sized>(
    input: usize,
    hidden: &[usize],
    dropout: f64,
    rng: &mut R,
) -> Result<Network> {
    build_mlp(input, hidden, dropout, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub net: Network,
    /// Layer whose output is the bottleneck representation.
    pub bottleneck: usize,
}

/// Mirrored autoencoder with a linear reconstruction layer.
///
/// Each encoder activation except the bottleneck is added onto the decoder
/// activation of the same width.
pub fn build_autoencoder<R: Rng + ?Sized>(
    input: usize,
    encoder: &[usize],
    dropout: f64,
    rng: &mut R,
) -> Result<Autoencoder> {
    let mut net = Network::new(input);
    let mut enc_relu = Vec::with_capacity(encoder.len());
    for &w in encoder {
        enc_relu.push(push_hidden(&mut net, w, dropout, rng)?);
    }
    let bottleneck = net.layers().len() - 1;
    let mirror = &encoder[..encoder.len() - 1];
    for (j, &w) in mirror.iter().enumerate().rev() {
        let relu = push_hidden(&mut net, w, dropout, rng)?;
        net.add_skip(enc_relu[j], relu)?;
    }
    net.push_dense(input, rng);
    Ok(Autoencoder { net, bottleneck })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, SkipLink};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn autoencoder_topology() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ae = build_autoencoder(425, &[300, 200, 120], 0.1, &mut rng).unwrap();
        assert_eq!(ae.bottleneck, 8);
        assert_eq!(ae.net.widths()[8], 120);
        let dense: Vec<usize> = ae.net.dense_layers().map(|d| d.output_width()).collect();
        assert_eq!(dense, [300, 200, 120, 200, 300, 425]);
        assert_eq!(
            ae.net.skips(),
            [SkipLink { from: 4, to: 10 }, SkipLink { from: 1, to: 13 }]
        );
        assert!(matches!(ae.net.layers()[15], Layer::Dense(_)));
    }

    #[test]
    fn mlp_topology() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = build_mlp(425, &[480, 480], 0.2, &mut rng).unwrap();
        assert_eq!(net.widths(), [480, 480, 480, 480, 480, 480, 1]);
        assert_eq!(
            net.param_count(),
            425 * 480 + 480 + 480 * 480 + 480 + 480 + 1
        );
    }
}
