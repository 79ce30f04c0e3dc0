//! Perceptual distance over the classifier's own activations.
//!
//! Each selected activation is channel-normalized per spatial position,
//! scaled by 1/sqrt(w*h), and flattened; the blocks concatenate into a
//! single embedding vector phi(x). The distance between two inputs is the
//! L2 norm of the embedding difference, differentiable w.r.t. either input
//! through the tape.

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, Mode, Network, TapedNet};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which activations feed the embedding.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSelect {
    /// Every relu output except the final logits (default).
    AllRelu,
    /// Explicit activation indices (into the forward trace).
    Indices(Vec<usize>),
}

/// How a block is normalized before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Unit L2 across channels at each spatial position; dense layers are
    /// one position holding all channels.
    ChannelPerPosition,
    /// Unit L2 over the whole layer.
    WholeLayer,
}

#[derive(Debug, Clone)]
pub struct PerceptualConfig {
    pub layers: LayerSelect,
    pub norm: NormMode,
}

impl Default for PerceptualConfig {
    fn default() -> Self {
        PerceptualConfig { layers: LayerSelect::AllRelu, norm: NormMode::ChannelPerPosition }
    }
}

/// Geometry of one selected activation block.
#[derive(Debug, Clone, Copy)]
pub struct BlockMeta {
    pub activation_index: usize,
    pub channels: usize,
    pub positions: usize,
    /// 1/sqrt(w*h) layer-size normalization.
    pub scale: f64,
}

/// Stacked normalized activations for one input.
#[derive(Debug, Clone)]
pub struct PerceptualEmbedding {
    pub blocks: Vec<Tensor>,
    pub concatenated: Tensor,
}

/// Resolves which activations are embedded and their geometry.
pub fn block_metas(net: &Network, cfg: &PerceptualConfig) -> Result<Vec<BlockMeta>> {
    let indices = match &cfg.layers {
        LayerSelect::AllRelu => net.relu_activation_indices(),
        LayerSelect::Indices(idx) => idx.clone(),
    };
    if indices.is_empty() {
        return Err(Error::InvalidParam("perceptual embedding selects no layers".into()));
    }
    let shapes = net.output_shapes();
    let mut metas = Vec::with_capacity(indices.len());
    for &i in &indices {
        if i >= net.num_layers() - 1 {
            return Err(Error::InvalidParam(format!(
                "activation index {i} out of range (final logits are excluded)"
            )));
        }
        let shape = &shapes[i];
        let (channels, positions) = match (cfg.norm, shape.as_slice()) {
            (NormMode::WholeLayer, s) => (s.iter().product(), 1),
            (NormMode::ChannelPerPosition, [n]) => (*n, 1),
            (NormMode::ChannelPerPosition, [c, h, w]) => (*c, h * w),
            (_, other) => {
                return Err(Error::ShapeMismatch {
                    op: "perceptual_embed",
                    detail: format!("unsupported activation shape {other:?}"),
                })
            }
        };
        // spatial extent for the 1/sqrt(w*h) factor; dense layers count as 1x1
        let spatial: usize = match shape.as_slice() {
            [_] => 1,
            [_, h, w] => h * w,
            _ => 1,
        };
        metas.push(BlockMeta {
            activation_index: i,
            channels,
            positions,
            scale: 1.0 / (spatial as f64).sqrt(),
        });
    }
    Ok(metas)
}

/// On-tape embedding of an already-computed forward trace.
pub fn embed_trace(tape: &Tape, trace: &ForwardTrace, metas: &[BlockMeta]) -> Result<Var> {
    let mut blocks = Vec::with_capacity(metas.len());
    for meta in metas {
        let act = *trace
            .activations
            .get(meta.activation_index)
            .ok_or_else(|| Error::InvalidParam(format!(
                "activation index {} missing from trace",
                meta.activation_index
            )))?;
        blocks.push(tape.channel_norm(act, meta.channels, meta.positions, meta.scale)?);
    }
    tape.concat(&blocks)
}

/// Embedding of `x` as plain values.
pub fn embed(net: &Network, cfg: &PerceptualConfig, x: &Tensor, mode: Mode) -> Result<PerceptualEmbedding> {
    let metas = block_metas(net, cfg)?;
    let tape = Tape::new();
    let taped = net.on_tape(&tape, false)?;
    let xv = tape.constant(x.clone())?;
    let trace = taped.forward(&tape, xv, mode)?;
    let mut blocks = Vec::with_capacity(metas.len());
    for meta in &metas {
        let act = trace.activations[meta.activation_index];
        let b = tape.channel_norm(act, meta.channels, meta.positions, meta.scale)?;
        blocks.push(tape.value(b));
    }
    let concat = embed_trace(&tape, &trace, &metas)?;
    Ok(PerceptualEmbedding { blocks, concatenated: tape.value(concat) })
}

/// Perceptual distance between two inputs (both embedded in `Main` mode).
pub fn lpips(net: &Network, cfg: &PerceptualConfig, x: &Tensor, x_prime: &Tensor) -> Result<f64> {
    if x.shape() != x_prime.shape() {
        return Err(Error::ShapeMismatch {
            op: "lpips",
            detail: format!("{:?} vs {:?}", x.shape(), x_prime.shape()),
        });
    }
    let a = embed(net, cfg, x, Mode::Main)?;
    let b = embed(net, cfg, x_prime, Mode::Main)?;
    Ok(a.concatenated.sub(&b.concatenated)?.l2_norm())
}

/// On-tape distance between a constant reference embedding and a live one.
pub fn lpips_on_tape(tape: &Tape, phi_ref: Var, phi_live: Var) -> Result<Var> {
    let diff = tape.sub(phi_ref, phi_live)?;
    tape.l2_norm(diff)
}

/// Embeds `x` and re-registers the result as a constant on `tape`.
pub fn embed_as_constant(
    tape: &Tape,
    net: &Network,
    cfg: &PerceptualConfig,
    x: &Tensor,
    mode: Mode,
) -> Result<Var> {
    let emb = embed(net, cfg, x, mode)?;
    tape.constant(emb.concatenated)
}

/// Embedding and distance for a taped input var (used inside attacks).
pub fn embed_var(
    tape: &Tape,
    taped: &TapedNet,
    cfg: &PerceptualConfig,
    x: Var,
    mode: Mode,
) -> Result<Var> {
    let metas = block_metas(taped.network(), cfg)?;
    let trace = taped.forward(tape, x, mode)?;
    embed_trace(tape, &trace, &metas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerSpec;

    fn passthrough_relu_net() -> Network {
        // dense identity -> relu -> dense; relu output is the embedded block
        let spec = vec![
            LayerSpec::Dense { input: 2, output: 2 },
            LayerSpec::Relu,
            LayerSpec::Dense { input: 2, output: 2 },
        ];
        let mut net = Network::init(spec, vec![2], 0).unwrap();
        net.set_param(0, Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        net.set_param(1, Tensor::zeros(vec![2])).unwrap();
        net
    }

    #[test]
    fn unit_norm_on_dense_activation() {
        let net = passthrough_relu_net();
        let cfg = PerceptualConfig::default();
        let x = Tensor::vector(vec![3.0, 4.0]).unwrap();
        let e = embed(&net, &cfg, &x, Mode::Main).unwrap();
        assert_eq!(e.blocks.len(), 1);
        let b = &e.blocks[0];
        assert!((b.data()[0] - 0.6).abs() < 1e-15);
        assert!((b.data()[1] - 0.8).abs() < 1e-15);
        assert_eq!(e.concatenated.data(), b.data());
    }

    #[test]
    fn zero_activation_maps_to_zero_block() {
        let net = passthrough_relu_net();
        let cfg = PerceptualConfig::default();
        let x = Tensor::vector(vec![-1.0, -2.0]).unwrap(); // relu kills everything
        let e = embed(&net, &cfg, &x, Mode::Main).unwrap();
        assert_eq!(e.concatenated.data(), &[0.0, 0.0]);
    }

    #[test]
    fn conv_positions_have_unit_channel_norm() {
        let spec = Network::conv_spec((1, 4, 4), 3, 2);
        let net = Network::init(spec, vec![1, 4, 4], 2).unwrap();
        let cfg = PerceptualConfig::default();
        let x = Tensor::new(vec![1, 4, 4], (0..16).map(|i| 0.1 + i as f64 * 0.05).collect()).unwrap();
        let e = embed(&net, &cfg, &x, Mode::Main).unwrap();
        // block geometry: 3 channels x 16 positions, scale 1/4
        let b = &e.blocks[0];
        assert_eq!(b.numel(), 48);
        // independent scalar loop: per-position channel norm must be 1/scale-scaled
        for p in 0..16 {
            let mut sq = 0.0;
            for c in 0..3 {
                let v = b.data()[c * 16 + p];
                sq += v * v;
            }
            let norm = sq.sqrt();
            // either an all-zero position or unit norm scaled by 1/sqrt(16)
            assert!(norm < 1e-12 || (norm - 0.25).abs() < 1e-12, "norm {norm}");
        }
    }

    #[test]
    fn lpips_identity_is_exactly_zero() {
        let net = passthrough_relu_net();
        let cfg = PerceptualConfig::default();
        let x = Tensor::vector(vec![0.2, 0.9]).unwrap();
        assert_eq!(lpips(&net, &cfg, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn lpips_is_symmetric() {
        let spec = Network::mlp_spec(4, &[5, 3], 2);
        let net = Network::init(spec, vec![4], 9).unwrap();
        let cfg = PerceptualConfig::default();
        let a = Tensor::vector(vec![0.1, 0.5, -0.3, 0.8]).unwrap();
        let b = Tensor::vector(vec![0.9, -0.2, 0.4, 0.0]).unwrap();
        let d1 = lpips(&net, &cfg, &a, &b).unwrap();
        let d2 = lpips(&net, &cfg, &b, &a).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        assert!(d1 >= 0.0);
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let spec = Network::mlp_spec(3, &[4], 2);
        let net = Network::init(spec, vec![3], 4).unwrap();
        let cfg = PerceptualConfig::default();
        use rand::Rng;
        let mut rng = crate::rng::SeedStream::new(17).stream("triples", 0);
        for _ in 0..50 {
            let mut draw = || {
                Tensor::vector((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
            };
            let (a, b, c) = (draw(), draw(), draw());
            let ab = lpips(&net, &cfg, &a, &b).unwrap();
            let bc = lpips(&net, &cfg, &b, &c).unwrap();
            let ac = lpips(&net, &cfg, &a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-10);
        }
    }

    #[test]
    fn whole_layer_norm_matches_channel_norm_on_dense() {
        let net = passthrough_relu_net();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let per_pos = embed(
            &net,
            &PerceptualConfig { norm: NormMode::ChannelPerPosition, ..Default::default() },
            &x,
            Mode::Main,
        )
        .unwrap();
        let whole = embed(
            &net,
            &PerceptualConfig { norm: NormMode::WholeLayer, ..Default::default() },
            &x,
            Mode::Main,
        )
        .unwrap();
        assert_eq!(per_pos.concatenated.data(), whole.concatenated.data());
    }
}
