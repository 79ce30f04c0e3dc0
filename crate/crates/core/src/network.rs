//! Classifier as an ordered layer stack: encoder plus predictor in one
//! sequence, exposing logits and every intermediate activation.
//!
//! The stack is immutable during forward; the only mutable state is the
//! dual running statistics of `dualnorm` layers, updated through an
//! explicit `&mut` method so frozen networks stay `Sync`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LPA3NET1";

/// Which running-statistics branch a forward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Clean/original inputs.
    Main,
    /// Adversarially augmented inputs.
    Aug,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, padding: usize },
    Relu,
    Flatten,
    DualNorm { features: usize },
}

impl LayerSpec {
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |detail: String| Error::BadLayerStack(detail);
        match self {
            LayerSpec::Dense { input: n_in, output } => {
                if input != [*n_in] {
                    return Err(bad(format!("dense expects [{n_in}], got {input:?}")));
                }
                Ok(vec![*output])
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, padding } => {
                if input.len() != 3 || input[0] != *in_channels {
                    return Err(bad(format!(
                        "conv2d expects [{in_channels}, h, w], got {input:?}"
                    )));
                }
                let h = input[1] + 2 * padding;
                let w = input[2] + 2 * padding;
                if *kernel == 0 || *kernel > 5 || h < *kernel || w < *kernel {
                    return Err(bad(format!(
                        "conv2d kernel {kernel} invalid for input {input:?} padding {padding}"
                    )));
                }
                Ok(vec![*out_channels, h - kernel + 1, w - kernel + 1])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::DualNorm { features } => {
                if input != [*features] {
                    return Err(bad(format!("dualnorm expects [{features}], got {input:?}")));
                }
                Ok(input.to_vec())
            }
        }
    }
}

/// Running mean/variance for one dualnorm branch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BranchStats {
    fn fresh(n: usize) -> Self {
        BranchStats { mean: vec![0.0; n], var: vec![1.0; n] }
    }
}

#[derive(Debug, Clone)]
pub struct DualStats {
    pub main: BranchStats,
    pub aug: BranchStats,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
struct Layer {
    spec: LayerSpec,
    params: Vec<Tensor>,
    stats: Option<DualStats>,
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    num_classes: usize,
    input_shape: Vec<usize>,
    /// Output shape of every layer, in order.
    output_shapes: Vec<Vec<usize>>,
}

const DUALNORM_MOMENTUM: f64 = 0.1;
const DUALNORM_EPS: f64 = 1e-5;

impl Network {
    /// Kaiming-uniform initialization, deterministic under `seed`.
    pub fn init(spec: Vec<LayerSpec>, input_shape: Vec<usize>, seed: u64) -> Result<Network> {
        if spec.is_empty() {
            return Err(Error::BadLayerStack("empty layer stack".into()));
        }
        let streams = SeedStream::new(seed);
        let mut rng = streams.stream("init", 0);
        let mut shape = input_shape.clone();
        let mut layers = Vec::with_capacity(spec.len());
        let mut output_shapes = Vec::with_capacity(spec.len());
        for ls in spec {
            shape = ls.output_shape(&shape)?;
            output_shapes.push(shape.clone());
            let (params, stats) = match &ls {
                LayerSpec::Dense { input, output } => {
                    let bound = (6.0 / *input as f64).sqrt();
                    let w: Vec<f64> = (0..input * output)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect();
                    let bb = 1.0 / (*input as f64).sqrt();
                    let b: Vec<f64> = (0..*output).map(|_| rng.random_range(-bb..bb)).collect();
                    (
                        vec![
                            Tensor::new(vec![*output, *input], w)?,
                            Tensor::new(vec![*output], b)?,
                        ],
                        None,
                    )
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                    let fan_in = in_channels * kernel * kernel;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let w: Vec<f64> = (0..out_channels * fan_in)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect();
                    let bb = 1.0 / (fan_in as f64).sqrt();
                    let b: Vec<f64> = (0..*out_channels).map(|_| rng.random_range(-bb..bb)).collect();
                    (
                        vec![
                            Tensor::new(vec![*out_channels, *in_channels, *kernel, *kernel], w)?,
                            Tensor::new(vec![*out_channels], b)?,
                        ],
                        None,
                    )
                }
                LayerSpec::Relu | LayerSpec::Flatten => (vec![], None),
                LayerSpec::DualNorm { features } => (
                    vec![],
                    Some(DualStats {
                        main: BranchStats::fresh(*features),
                        aug: BranchStats::fresh(*features),
                        momentum: DUALNORM_MOMENTUM,
                        eps: DUALNORM_EPS,
                    }),
                ),
            };
            layers.push(Layer { spec: ls, params, stats });
        }
        let num_classes = match shape.as_slice() {
            [c] => *c,
            other => {
                return Err(Error::BadLayerStack(format!(
                    "final layer must emit a class vector, got {other:?}"
                )))
            }
        };
        Ok(Network { layers, num_classes, input_shape, output_shapes })
    }

    /// Default MLP: input -> hidden widths (relu between) -> classes.
    pub fn mlp_spec(input_dim: usize, hidden: &[usize], num_classes: usize) -> Vec<LayerSpec> {
        let mut spec = Vec::new();
        let mut prev = input_dim;
        for &h in hidden {
            spec.push(LayerSpec::Dense { input: prev, output: h });
            spec.push(LayerSpec::Relu);
            prev = h;
        }
        spec.push(LayerSpec::Dense { input: prev, output: num_classes });
        spec
    }

    /// Default small conv net for (c, h, w) images.
    pub fn conv_spec(input: (usize, usize, usize), channels: usize, num_classes: usize) -> Vec<LayerSpec> {
        let (c, h, w) = input;
        vec![
            LayerSpec::Conv2d { in_channels: c, out_channels: channels, kernel: 3, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { input: channels * h * w, output: num_classes },
        ]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    /// Output shape of every layer in order.
    pub fn output_shapes(&self) -> &[Vec<usize>] {
        &self.output_shapes
    }

    /// Indices (into the activations list) of relu outputs.
    pub fn relu_activation_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .take(self.layers.len().saturating_sub(1))
            .enumerate()
            .filter(|(_, l)| matches!(l.spec, LayerSpec::Relu))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_dualnorm(&self) -> bool {
        self.layers.iter().any(|l| l.stats.is_some())
    }

    /// Flat parameter list in layer order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut()).collect()
    }

    /// Replaces one parameter tensor (same flat order as [`Network::params`]).
    pub fn set_param(&mut self, index: usize, value: Tensor) -> Result<()> {
        let mut i = 0;
        for layer in &mut self.layers {
            for p in &mut layer.params {
                if i == index {
                    if p.shape() != value.shape() {
                        return Err(Error::ShapeMismatch {
                            op: "set_param",
                            detail: format!("{:?} vs {:?}", p.shape(), value.shape()),
                        });
                    }
                    *p = value;
                    return Ok(());
                }
                i += 1;
            }
        }
        Err(Error::InvalidParam(format!("parameter index {index} out of range")))
    }

    /// Registers the network on a tape. With `trainable`, parameters become
    /// gradient leaves; otherwise they are constants (frozen network).
    pub fn on_tape<'n>(&'n self, tape: &Tape, trainable: bool) -> Result<TapedNet<'n>> {
        let mut params = Vec::new();
        for layer in &self.layers {
            for p in &layer.params {
                params.push(tape.leaf(p.clone(), trainable)?);
            }
        }
        Ok(TapedNet { net: self, params })
    }

    /// Forward pass without gradient tracking.
    ///
    /// Returns logits plus the post-op output of every non-terminal layer.
    pub fn forward_values(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Vec<Tensor>)> {
        let tape = Tape::new();
        let taped = self.on_tape(&tape, false)?;
        let xv = tape.constant(x.clone())?;
        let trace = taped.forward(&tape, xv, mode)?;
        let logits = tape.value(trace.logits);
        let acts = trace.activations.iter().map(|&a| tape.value(a)).collect();
        Ok((logits, acts))
    }

    /// Softmax class probabilities.
    pub fn predict_proba(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (logits, _) = self.forward_values(x, mode)?;
        Ok(logits.softmax())
    }

    /// Feeds one observation through the stack updating the dualnorm
    /// running statistics of the selected branch. No-op without dualnorm.
    pub fn observe_stats(&mut self, x: &Tensor, mode: Mode) -> Result<()> {
        if !self.has_dualnorm() {
            return Ok(());
        }
        let mut cur = x.clone();
        for li in 0..self.layers.len() {
            let spec = self.layers[li].spec.clone();
            if let LayerSpec::DualNorm { .. } = spec {
                let stats = self.layers[li].stats.as_mut().expect("dualnorm stats");
                let branch = match mode {
                    Mode::Main => &mut stats.main,
                    Mode::Aug => &mut stats.aug,
                };
                let m = stats.momentum;
                for (i, &v) in cur.data().iter().enumerate() {
                    let d = v - branch.mean[i];
                    branch.mean[i] = (1.0 - m) * branch.mean[i] + m * v;
                    branch.var[i] = (1.0 - m) * branch.var[i] + m * d * d;
                }
            }
            cur = self.apply_layer_value(li, &cur, mode)?;
        }
        Ok(())
    }

    fn apply_layer_value(&self, li: usize, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let tape = Tape::new();
        let xv = tape.constant(x.clone())?;
        let layer = &self.layers[li];
        let params: Vec<Var> = layer
            .params
            .iter()
            .map(|p| tape.constant(p.clone()))
            .collect::<Result<_>>()?;
        let out = apply_layer(&tape, layer, &params, xv, mode)?;
        Ok(tape.value(out))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let header = CheckpointHeader {
            version: 1,
            num_classes: self.num_classes,
            input_shape: self.input_shape.clone(),
            layers: self.layer_specs(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        for layer in &self.layers {
            for p in &layer.params {
                for v in p.data() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            if let Some(st) = &layer.stats {
                for block in [&st.main.mean, &st.main.var, &st.aug.mean, &st.aug.var] {
                    for v in block {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        file.write_all(&buf).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        let show = path.display().to_string();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(show.clone(), e))?;
        let bad = |detail: &str| Error::BadFile { path: show.clone(), detail: detail.into() };
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing LPA3NET1 magic"));
        }
        let json_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() < 12 + json_len {
            return Err(bad("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[12..12 + json_len])?;
        let mut net = Network::init(header.layers, header.input_shape, 0)?;
        if net.num_classes != header.num_classes {
            return Err(bad("num_classes does not match layer stack"));
        }
        let mut off = 12 + json_len;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let need = n * 8;
            if bytes.len() < off + need {
                return Err(Error::BadFile { path: show.clone(), detail: "truncated parameters".into() });
            }
            let out = bytes[off..off + need]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += need;
            Ok(out)
        };
        for layer in &mut net.layers {
            for p in &mut layer.params {
                let data = take(p.numel())?;
                *p = Tensor::new(p.shape().to_vec(), data)?;
            }
            if let Some(st) = &mut layer.stats {
                let n = st.main.mean.len();
                st.main.mean = take(n)?;
                st.main.var = take(n)?;
                st.aug.mean = take(n)?;
                st.aug.var = take(n)?;
            }
        }
        if off != bytes.len() {
            return Err(bad("trailing bytes after parameter blocks"));
        }
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    num_classes: usize,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
}

/// A network registered on a tape.
pub struct TapedNet<'n> {
    net: &'n Network,
    params: Vec<Var>,
}

/// Logits plus per-layer activations from one forward pass.
pub struct ForwardTrace {
    pub logits: Var,
    /// Post-op output of layer l, for every layer except the last.
    pub activations: Vec<Var>,
}

impl<'n> TapedNet<'n> {
    pub fn network(&self) -> &'n Network {
        self.net
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.params
    }

    pub fn forward(&self, tape: &Tape, x: Var, mode: Mode) -> Result<ForwardTrace> {
        if tape.shape(x) != self.net.input_shape {
            return Err(Error::ShapeMismatch {
                op: "forward",
                detail: format!("input {:?}, network wants {:?}", tape.shape(x), self.net.input_shape),
            });
        }
        let mut cur = x;
        let mut activations = Vec::new();
        let mut pi = 0;
        for (li, layer) in self.net.layers.iter().enumerate() {
            let params = &self.params[pi..pi + layer.params.len()];
            pi += layer.params.len();
            cur = apply_layer(tape, layer, params, cur, mode)?;
            if li + 1 < self.net.layers.len() {
                activations.push(cur);
            }
        }
        Ok(ForwardTrace { logits: cur, activations })
    }

    /// Softmax probabilities on-tape.
    pub fn proba(&self, tape: &Tape, x: Var, mode: Mode) -> Result<Var> {
        let trace = self.forward(tape, x, mode)?;
        tape.softmax(trace.logits)
    }
}

fn apply_layer(tape: &Tape, layer: &Layer, params: &[Var], x: Var, mode: Mode) -> Result<Var> {
    match &layer.spec {
        LayerSpec::Dense { input, output } => {
            let row = tape.reshape(x, vec![1, *input])?;
            let y = tape.matmul_tb(row, params[0])?; // W stored (out, in)
            let flat = tape.reshape(y, vec![*output])?;
            tape.add(flat, params[1])
        }
        LayerSpec::Conv2d { padding, .. } => tape.conv2d(x, params[0], Some(params[1]), *padding),
        LayerSpec::Relu => tape.relu(x),
        LayerSpec::Flatten => {
            let n = tape.shape(x).iter().product();
            tape.reshape(x, vec![n])
        }
        LayerSpec::DualNorm { features } => {
            let stats = layer.stats.as_ref().expect("dualnorm stats");
            let branch = match mode {
                Mode::Main => &stats.main,
                Mode::Aug => &stats.aug,
            };
            let mean = tape.constant(Tensor::new(vec![*features], branch.mean.clone())?)?;
            let invstd: Vec<f64> = branch.var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
            let invstd = tape.constant(Tensor::new(vec![*features], invstd)?)?;
            let centered = tape.sub(x, mean)?;
            tape.mul(centered, invstd)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dense_net() -> Network {
        let spec = vec![LayerSpec::Dense { input: 2, output: 2 }];
        let mut net = Network::init(spec, vec![2], 0).unwrap();
        net.set_param(0, Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        net.set_param(1, Tensor::new(vec![2], vec![0.0, 0.0]).unwrap())
            .unwrap();
        net
    }

    #[test]
    fn identity_net_passes_input_through() {
        let net = identity_dense_net();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let (logits, _) = net.forward_values(&x, Mode::Main).unwrap();
        assert_eq!(logits.data(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_weight_net_is_uniform() {
        let spec = vec![LayerSpec::Dense { input: 3, output: 4 }];
        let mut net = Network::init(spec, vec![3], 1).unwrap();
        net.set_param(0, Tensor::zeros(vec![4, 3])).unwrap();
        net.set_param(1, Tensor::zeros(vec![4])).unwrap();
        let x = Tensor::vector(vec![0.3, -1.0, 2.0]).unwrap();
        let (logits, _) = net.forward_values(&x, Mode::Main).unwrap();
        assert_eq!(logits.data(), &[0.0; 4]);
        let p = net.predict_proba(&x, Mode::Main).unwrap();
        for &v in p.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_softmax() {
        let spec = vec![LayerSpec::Dense { input: 2, output: 2 }];
        let mut net = Network::init(spec, vec![2], 1).unwrap();
        net.set_param(0, Tensor::new(vec![2, 2], vec![3.0f64.ln(), 0.0, 0.0, 0.0]).unwrap())
            .unwrap();
        net.set_param(1, Tensor::zeros(vec![2])).unwrap();
        let x = Tensor::vector(vec![1.0, 0.0]).unwrap();
        let p = net.predict_proba(&x, Mode::Main).unwrap();
        assert!((p.data()[0] - 0.75).abs() < 1e-12);
        assert!((p.data()[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = Network::mlp_spec(4, &[3], 2);
        let a = Network::init(spec.clone(), vec![4], 7).unwrap();
        let b = Network::init(spec.clone(), vec![4], 7).unwrap();
        let c = Network::init(spec, vec![4], 8).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.data(), pb.data());
        }
        let differs = a
            .params()
            .iter()
            .zip(c.params())
            .any(|(pa, pc)| pa.data() != pc.data());
        assert!(differs);
    }

    #[test]
    fn dense_shapes_follow_contract() {
        let spec = vec![LayerSpec::Dense { input: 2, output: 3 }];
        let net = Network::init(spec, vec![2], 0).unwrap();
        let params = net.params();
        assert_eq!(params[0].shape(), &[3, 2]);
        assert_eq!(params[1].shape(), &[3]);
    }

    #[test]
    fn forward_is_reproducible() {
        let spec = Network::mlp_spec(5, &[4], 3);
        let net = Network::init(spec, vec![5], 0).unwrap();
        let x = Tensor::vector(vec![0.1, -0.2, 0.3, 0.4, -0.5]).unwrap();
        let (l1, _) = net.forward_values(&x, Mode::Main).unwrap();
        let (l2, _) = net.forward_values(&x, Mode::Main).unwrap();
        assert_eq!(l1.data(), l2.data());
    }

    #[test]
    fn modes_agree_without_dualnorm() {
        let spec = Network::mlp_spec(4, &[6, 5], 3);
        let net = Network::init(spec, vec![4], 3).unwrap();
        let x = Tensor::vector(vec![0.5, -0.1, 0.0, 0.9]).unwrap();
        let (lm, am) = net.forward_values(&x, Mode::Main).unwrap();
        let (la, aa) = net.forward_values(&x, Mode::Aug).unwrap();
        assert_eq!(lm.data(), la.data());
        for (m, a) in am.iter().zip(&aa) {
            assert_eq!(m.data(), a.data());
        }
    }

    #[test]
    fn dualnorm_branches_diverge_after_observation() {
        let spec = vec![
            LayerSpec::Dense { input: 2, output: 2 },
            LayerSpec::DualNorm { features: 2 },
            LayerSpec::Relu,
            LayerSpec::Dense { input: 2, output: 2 },
        ];
        let mut net = Network::init(spec, vec![2], 5).unwrap();
        let x = Tensor::vector(vec![2.0, -1.0]).unwrap();
        net.observe_stats(&x, Mode::Main).unwrap();
        let (lm, _) = net.forward_values(&x, Mode::Main).unwrap();
        let (la, _) = net.forward_values(&x, Mode::Aug).unwrap();
        assert_ne!(lm.data(), la.data());
    }

    #[test]
    fn activations_match_layer_dims() {
        let spec = Network::conv_spec((1, 6, 6), 2, 3);
        let net = Network::init(spec, vec![1, 6, 6], 0).unwrap();
        let x = Tensor::zeros(vec![1, 6, 6]);
        let (_, acts) = net.forward_values(&x, Mode::Main).unwrap();
        assert_eq!(acts.len(), net.num_layers() - 1);
        for (a, s) in acts.iter().zip(net.output_shapes()) {
            assert_eq!(a.shape(), s.as_slice());
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.lpa3net");
        let spec = Network::mlp_spec(6, &[4], 3);
        let net = Network::init(spec, vec![6], 11).unwrap();
        net.save(&path).unwrap();
        let loaded = Network::load(&path).unwrap();
        assert_eq!(net.num_classes(), loaded.num_classes());
        for (a, b) in net.params().iter().zip(loaded.params()) {
            assert_eq!(a.data(), b.data());
        }
        let x = Tensor::vector(vec![0.1; 6]).unwrap();
        let (l1, _) = net.forward_values(&x, Mode::Main).unwrap();
        let (l2, _) = loaded.forward_values(&x, Mode::Main).unwrap();
        assert_eq!(l1.data(), l2.data());
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.lpa3net");
        std::fs::write(&path, b"NOTMAGIC____").unwrap();
        assert!(matches!(Network::load(&path), Err(Error::BadFile { .. })));
    }

    #[test]
    fn non_composable_spec_rejected() {
        let spec = vec![
            LayerSpec::Dense { input: 2, output: 3 },
            LayerSpec::Dense { input: 4, output: 2 },
        ];
        assert!(matches!(
            Network::init(spec, vec![2], 0),
            Err(Error::BadLayerStack(_))
        ));
    }
}
