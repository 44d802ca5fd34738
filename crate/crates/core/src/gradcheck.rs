//! Central finite-difference check of the network's analytic gradients.

use crate::dataset::{Image, InputShape};
use crate::error::Result;
use crate::losses::{relative_error, FD_STEP};
use crate::matrix::Matrix;
use crate::net::{EmbeddingNet, NetArchitecture};
use crate::rng;

/// Denominator floor for network gradient comparisons.
pub const NET_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetCheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    /// Flat parameter index where the maximum occurred.
    pub worst_index: usize,
}

/// Random images of `shape`, pixel bytes uniform in 0..=255.
pub fn random_images(shape: InputShape, count: usize, seed: u64) -> Vec<Image> {
    let mut r = rng::seeded(seed);
    (0..count)
        .map(|i| {
            let px = (0..shape.len())
                .map(|_| rng::index(&mut r, 256) as u8)
                .collect();
            Image::new(
                shape.width,
                shape.height,
                shape.channels,
                px,
                format!("r{i}"),
                "r",
            )
            .expect("shape is consistent")
        })
        .collect()
}

/// Checks `∂/∂θ Σ upstream ⊙ f(batch)` for a seeded network, batch and
/// upstream matrix against central differences with step `1e-5`.
pub fn network_gradient_check(
    arch: &NetArchitecture,
    shape: InputShape,
    batch_size: usize,
    seed: u64,
) -> Result<NetCheckReport> {
    let mut net = EmbeddingNet::init(arch.clone(), shape, seed)?;
    // non-zero biases so every code path carries signal
    let mut r = rng::seeded(seed ^ 0x5eed);
    for layer in &mut net.parameters_mut().layers {
        for b in &mut layer.bias {
            *b = rng::gaussian(&mut r, 0.1);
        }
    }
    let images = random_images(shape, batch_size, seed.wrapping_add(1));
    let batch: Vec<&Image> = images.iter().collect();
    let d = arch.embedding_dim;
    let upstream = Matrix::from_vec(
        batch_size,
        d,
        (0..batch_size * d)
            .map(|_| rng::gaussian(&mut r, 1.0))
            .collect(),
    )?;

    let (_, cache) = net.forward(&batch)?;
    let analytic = net.backward(&cache, &upstream)?.0.flatten();

    let objective = |n: &EmbeddingNet| -> Result<f64> {
        let out = n.embed(&batch)?;
        Ok(out
            .as_slice()
            .iter()
            .zip(upstream.as_slice())
            .map(|(e, u)| e * u)
            .sum())
    };

    let mut report = NetCheckReport {
        parameters: analytic.len(),
        max_relative_error: 0.0,
        worst_index: 0,
    };
    let mut probe = net.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.parameters_mut().value_mut(i).expect("index in range");
        *probe.parameters_mut().value_mut(i).expect("index in range") = orig + FD_STEP;
        let up = objective(&probe)?;
        *probe.parameters_mut().value_mut(i).expect("index in range") = orig - FD_STEP;
        let down = objective(&probe)?;
        *probe.parameters_mut().value_mut(i).expect("index in range") = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(a, numeric, NET_CHECK_FLOOR);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Small conv+pool+fc network used by the gradient checks: 6×6×3 input, one
/// conv(2, 3×3) stage, fc(5, relu) → fc(3, linear).
pub fn small_architecture() -> (NetArchitecture, InputShape) {
    use crate::net::{Activation, ConvSpec, FcSpec};
    (
        NetArchitecture {
            conv_layers: vec![ConvSpec {
                out_channels: 2,
                kernel: 3,
                activation: Activation::Relu,
            }],
            fc_layers: vec![
                FcSpec {
                    out_dim: 5,
                    activation: Activation::Relu,
                },
                FcSpec {
                    out_dim: 3,
                    activation: Activation::Linear,
                },
            ],
            embedding_dim: 3,
        },
        InputShape {
            channels: 3,
            height: 6,
            width: 6,
        },
    )
}
