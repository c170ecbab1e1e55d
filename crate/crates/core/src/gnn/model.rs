use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GnnError, Result};
use crate::autodiff::{read_checkpoint, write_checkpoint, Segments, Tape, Tensor, Var};
use crate::graph::Connectome;

/// Tolerance for the per-node attention normalization check.
const ATTENTION_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Sum,
    Mean,
}

impl std::str::FromStr for Readout {
    type Err = GnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Readout::Sum),
            "mean" => Ok(Readout::Mean),
            other => Err(GnnError::InvalidConfig(format!("unknown readout '{other}'"))),
        }
    }
}

/// Nonlinearity applied after neighbourhood aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub classes: usize,
    pub dropout: f64,
    pub negative_slope: f64,
    pub readout: Readout,
    pub activation: Activation,
}

impl GatConfig {
    pub fn new(in_dim: usize, classes: usize) -> Self {
        Self {
            in_dim,
            hidden_dim: 8,
            heads: 2,
            layers: 2,
            classes,
            dropout: 0.1,
            negative_slope: 0.2,
            readout: Readout::Sum,
            activation: Activation::Elu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GnnError::InvalidConfig(m.to_string()));
        if self.in_dim == 0 || self.hidden_dim == 0 || self.heads == 0 || self.layers == 0 {
            return bad("in_dim, hidden_dim, heads and layers must be positive");
        }
        if self.classes < 2 {
            return bad("at least two classes are required");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !self.negative_slope.is_finite() {
            return bad("negative_slope must be finite");
        }
        Ok(())
    }

    /// Input width of layer `l`.
    fn layer_in(&self, l: usize) -> usize {
        if l == 0 {
            self.in_dim
        } else {
            self.heads * self.hidden_dim
        }
    }
}

/// Parameters of one attention layer. Weight matrices are stored
/// input-major (`in × out`) so that the forward pass is `X · W`; the `S`
/// heads occupy consecutive column blocks of width `hidden_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    pub theta_dst: Tensor,
    pub theta_src: Tensor,
    /// `1 × S·F`, head `s` owns columns `s·F..(s+1)·F`.
    pub attn: Tensor,
    pub msg_w_dst: Tensor,
    pub msg_w_src: Tensor,
    pub msg_w_edge: Tensor,
    pub msg_b1: Tensor,
    pub msg_w2: Tensor,
    pub msg_b2: Tensor,
}

const LAYER_TENSORS: [&str; 9] =
    ["theta_dst", "theta_src", "attn", "msg_w_dst", "msg_w_src", "msg_w_edge", "msg_b1", "msg_w2", "msg_b2"];
const TAIL_TENSORS: [&str; 6] = ["readout.w1", "readout.b1", "readout.w2", "readout.b2", "head.w", "head.b"];

impl GatLayerParams {
    fn into_vec(self) -> Vec<Tensor> {
        vec![
            self.theta_dst,
            self.theta_src,
            self.attn,
            self.msg_w_dst,
            self.msg_w_src,
            self.msg_w_edge,
            self.msg_b1,
            self.msg_w2,
            self.msg_b2,
        ]
    }

    fn from_slice(t: &[Tensor]) -> Self {
        Self {
            theta_dst: t[0].clone(),
            theta_src: t[1].clone(),
            attn: t[2].clone(),
            msg_w_dst: t[3].clone(),
            msg_w_src: t[4].clone(),
            msg_w_edge: t[5].clone(),
            msg_b1: t[6].clone(),
            msg_w2: t[7].clone(),
            msg_b2: t[8].clone(),
        }
    }
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub theta_dst: Var,
    pub theta_src: Var,
    pub attn: Var,
    pub msg_w_dst: Var,
    pub msg_w_src: Var,
    pub msg_w_edge: Var,
    pub msg_b1: Var,
    pub msg_w2: Var,
    pub msg_b2: Var,
}

impl LayerVars {
    fn from_slice(v: &[Var]) -> Self {
        Self {
            theta_dst: v[0],
            theta_src: v[1],
            attn: v[2],
            msg_w_dst: v[3],
            msg_w_src: v[4],
            msg_w_edge: v[5],
            msg_b1: v[6],
            msg_w2: v[7],
            msg_b2: v[8],
        }
    }
}

/// Complete directed graph over a connectome's nodes, edges sorted by
/// destination then source.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub nodes: usize,
    pub features: Tensor,
    pub dst: Arc<[usize]>,
    pub src: Arc<[usize]>,
    /// `E × 1` signed edge weights.
    pub edge_weights: Tensor,
    pub segments: Segments,
}

impl GraphInput {
    pub fn from_connectome(c: &Connectome) -> Result<Self> {
        let d = c.dim();
        let x = c.node_features();
        let features = Tensor::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)]);
        let mut dst = Vec::with_capacity(d * d.saturating_sub(1));
        let mut src = Vec::with_capacity(dst.capacity());
        let mut w = Vec::with_capacity(dst.capacity());
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    dst.push(i);
                    src.push(j);
                    w.push(c.weight(i, j));
                }
            }
        }
        if dst.is_empty() {
            return Err(GnnError::DimensionMismatch { what: "node count".into(), got: d, expected: 2 });
        }
        let segments = Segments::new(dst.clone(), d)?;
        let edge_weights = Tensor::matrix(w.len(), 1, w)?;
        Ok(Self { nodes: d, features, dst: dst.into(), src: src.into(), edge_weights, segments })
    }

    pub fn edge_count(&self) -> usize {
        self.dst.len()
    }
}

/// Attention coefficients recorded during a forward pass, before dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSnapshot {
    pub nodes: usize,
    pub heads: usize,
    pub dst: Arc<[usize]>,
    pub src: Arc<[usize]>,
    /// One `E × S` tensor per layer.
    pub layers: Vec<Tensor>,
}

impl AttentionSnapshot {
    /// Dense `d × d` matrix for one layer and head; entry `(i, j)` is the
    /// weight node `i` assigns to neighbour `j`.
    pub fn dense(&self, layer: usize, head: usize) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nodes, self.nodes);
        let t = &self.layers[layer];
        for (e, (&i, &j)) in self.dst.iter().zip(self.src.iter()).enumerate() {
            m[(i, j)] = t.get(e, head);
        }
        m
    }
}

pub struct ForwardOutput {
    /// `1 × C` log class probabilities.
    pub log_probs: Var,
    pub attention: AttentionSnapshot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
    pub attention: AttentionSnapshot,
}

/// Column block-sum matrix `S·F × S`: sums each head's `F` columns.
fn head_sum_matrix(heads: usize, f: usize) -> Tensor {
    Tensor::from_fn(heads * f, heads, |r, c| if r / f == c { 1.0 } else { 0.0 })
}

/// `S × S·F`: broadcasts a per-head value across that head's columns.
fn head_expand_matrix(heads: usize, f: usize) -> Tensor {
    Tensor::from_fn(heads, heads * f, |r, c| if c / f == r { 1.0 } else { 0.0 })
}

/// `S·F × F`: averages the heads.
fn head_mean_matrix(heads: usize, f: usize) -> Tensor {
    Tensor::from_fn(heads * f, f, |r, c| if r % f == c { 1.0 / heads as f64 } else { 0.0 })
}

/// Raw edge scores `E × S`, normalized per destination node.
///
/// Fails if any destination's coefficients do not sum to one.
pub fn attention_scores(
    tape: &mut Tape,
    layer: &LayerVars,
    h: Var,
    graph: &GraphInput,
    heads: usize,
    hidden: usize,
    slope: f64,
) -> Result<Var> {
    let pd = tape.matmul(h, layer.theta_dst)?;
    let ps = tape.matmul(h, layer.theta_src)?;
    let gd = tape.gather_rows(pd, &graph.dst)?;
    let gs = tape.gather_rows(ps, &graph.src)?;
    let z = tape.add(gd, gs)?;
    let act = tape.leaky_relu(z, slope)?;
    let scored = tape.mul_row(act, layer.attn)?;
    let sum = tape.constant(head_sum_matrix(heads, hidden));
    let e = tape.matmul(scored, sum)?;
    let alpha = tape.segment_softmax(e, &graph.segments)?;
    check_normalized(tape.value(alpha)?, graph, heads)?;
    Ok(alpha)
}

fn check_normalized(alpha: &Tensor, graph: &GraphInput, heads: usize) -> Result<()> {
    let mut sums = vec![0.0; graph.nodes * heads];
    for (e, &i) in graph.dst.iter().enumerate() {
        for s in 0..heads {
            sums[i * heads + s] += alpha.get(e, s);
        }
    }
    for (k, &sum) in sums.iter().enumerate() {
        if (sum - 1.0).abs() > ATTENTION_SUM_TOL {
            return Err(GnnError::AttentionNormalization { layer: 0, head: k % heads, node: k / heads, sum });
        }
    }
    Ok(())
}

/// Per-edge messages `E × S·F` from `[h_i; h_j; w_ij]`.
pub fn edge_messages(tape: &mut Tape, layer: &LayerVars, h: Var, graph: &GraphInput) -> Result<Var> {
    let md = tape.matmul(h, layer.msg_w_dst)?;
    let ms = tape.matmul(h, layer.msg_w_src)?;
    let gd = tape.gather_rows(md, &graph.dst)?;
    let gs = tape.gather_rows(ms, &graph.src)?;
    let w = tape.constant(graph.edge_weights.clone());
    let we = tape.matmul(w, layer.msg_w_edge)?;
    let pre = tape.add(gd, gs)?;
    let pre = tape.add(pre, we)?;
    let pre = tape.add_row(pre, layer.msg_b1)?;
    let act = tape.elu(pre)?;
    let out = tape.matmul(act, layer.msg_w2)?;
    Ok(tape.add_row(out, layer.msg_b2)?)
}

/// Attention-weighted aggregation followed by the activation. At the last
/// layer heads are averaged, otherwise their outputs stay concatenated.
#[allow(clippy::too_many_arguments)]
pub fn node_update(
    tape: &mut Tape,
    alpha: Var,
    messages: Var,
    graph: &GraphInput,
    heads: usize,
    hidden: usize,
    last: bool,
    activation: Activation,
) -> Result<Var> {
    let expand = tape.constant(head_expand_matrix(heads, hidden));
    let a = tape.matmul(alpha, expand)?;
    let weighted = tape.mul(a, messages)?;
    let agg = tape.segment_sum(weighted, &graph.segments)?;
    let agg = if last {
        let mean = tape.constant(head_mean_matrix(heads, hidden));
        tape.matmul(agg, mean)?
    } else {
        agg
    };
    Ok(match activation {
        Activation::Elu => tape.elu(agg)?,
        Activation::Identity => agg,
    })
}

/// Residual graph readout: pooled node embeddings plus an MLP of them.
/// `mlp` holds `[w1, b1, w2, b2]`.
pub fn readout(tape: &mut Tape, h: Var, mlp: &[Var; 4], mode: Readout) -> Result<Var> {
    let z = match mode {
        Readout::Sum => tape.sum_rows(h)?,
        Readout::Mean => tape.mean_rows(h)?,
    };
    let t = tape.matmul(z, mlp[0])?;
    let t = tape.add_row(t, mlp[1])?;
    let t = tape.elu(t)?;
    let t = tape.matmul(t, mlp[2])?;
    let t = tape.add_row(t, mlp[3])?;
    Ok(tape.add(t, z)?)
}

/// Trainable model: configuration plus a flat, ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct GatModel {
    pub config: GatConfig,
    params: Vec<Tensor>,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let u = Uniform::new_inclusive(-a, a).expect("finite glorot bound");
    Tensor::from_fn(rows, cols, |_, _| u.sample(rng))
}

impl GatModel {
    pub fn new(config: GatConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, f) = (config.heads, config.hidden_dim);
        let sf = s * f;
        let mut params = Vec::new();
        for l in 0..config.layers {
            let fin = config.layer_in(l);
            let layer = GatLayerParams {
                theta_dst: glorot(fin, sf, fin, f, &mut rng),
                theta_src: glorot(fin, sf, fin, f, &mut rng),
                attn: glorot(1, sf, f, 1, &mut rng),
                msg_w_dst: glorot(fin, sf, 2 * fin + 1, f, &mut rng),
                msg_w_src: glorot(fin, sf, 2 * fin + 1, f, &mut rng),
                msg_w_edge: glorot(1, sf, 2 * fin + 1, f, &mut rng),
                msg_b1: Tensor::zeros(1, sf),
                msg_w2: glorot(sf, sf, f, f, &mut rng),
                msg_b2: Tensor::zeros(1, sf),
            };
            params.extend(layer.into_vec());
        }
        let out = config.hidden_dim;
        params.push(glorot(out, out, out, out, &mut rng));
        params.push(Tensor::zeros(1, out));
        params.push(glorot(out, out, out, out, &mut rng));
        params.push(Tensor::zeros(1, out));
        params.push(glorot(out, config.classes, out, config.classes, &mut rng));
        params.push(Tensor::zeros(1, config.classes));
        Ok(Self { config, params })
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn layer(&self, l: usize) -> GatLayerParams {
        GatLayerParams::from_slice(&self.params[l * LAYER_TENSORS.len()..(l + 1) * LAYER_TENSORS.len()])
    }

    /// Parameter names in storage order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.params.len());
        for l in 0..self.config.layers {
            names.extend(LAYER_TENSORS.iter().map(|n| format!("layer{l}.{n}")));
        }
        names.extend(TAIL_TENSORS.iter().map(|n| n.to_string()));
        names
    }

    /// Registers every parameter on `tape`, as trainable leaves or constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { tape.param(p) } else { tape.constant(p.clone()) })
            .collect()
    }

    fn check_input(&self, graph: &GraphInput) -> Result<()> {
        if graph.features.cols() != self.config.in_dim {
            return Err(GnnError::DimensionMismatch {
                what: "node feature width".into(),
                got: graph.features.cols(),
                expected: self.config.in_dim,
            });
        }
        Ok(())
    }

    /// Forward pass of one graph using parameter handles from [`Self::register`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        graph: &GraphInput,
        train: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        self.check_input(graph)?;
        let cfg = &self.config;
        let mut h = tape.constant(graph.features.clone());
        let mut snapshots = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let lv = LayerVars::from_slice(&vars[l * LAYER_TENSORS.len()..(l + 1) * LAYER_TENSORS.len()]);
            let alpha = attention_scores(tape, &lv, h, graph, cfg.heads, cfg.hidden_dim, cfg.negative_slope)
                .map_err(|e| match e {
                    GnnError::AttentionNormalization { head, node, sum, .. } => {
                        GnnError::AttentionNormalization { layer: l, head, node, sum }
                    }
                    other => other,
                })?;
            snapshots.push(tape.value(alpha)?.clone());
            let alpha = tape.dropout(alpha, cfg.dropout, rng, train)?;
            let msg = edge_messages(tape, &lv, h, graph)?;
            h = node_update(tape, alpha, msg, graph, cfg.heads, cfg.hidden_dim, l + 1 == cfg.layers, cfg.activation)?;
        }
        let base = cfg.layers * LAYER_TENSORS.len();
        let mlp = [vars[base], vars[base + 1], vars[base + 2], vars[base + 3]];
        let g = readout(tape, h, &mlp, cfg.readout)?;
        let logits = tape.matmul(g, vars[base + 4])?;
        let logits = tape.add_row(logits, vars[base + 5])?;
        let log_probs = tape.log_softmax_rows(logits)?;
        let attention = AttentionSnapshot {
            nodes: graph.nodes,
            heads: cfg.heads,
            dst: graph.dst.clone(),
            src: graph.src.clone(),
            layers: snapshots,
        };
        Ok(ForwardOutput { log_probs, attention })
    }

    pub fn predict_graph(&self, graph: &GraphInput) -> Result<Prediction> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, &vars, graph, false, &mut rng)?;
        let probabilities: Vec<f64> = tape.value(out.log_probs)?.values().iter().map(|v| v.exp()).collect();
        let mut class = 0;
        for (q, &p) in probabilities.iter().enumerate() {
            if p > probabilities[class] {
                class = q;
            }
        }
        Ok(Prediction { class, probabilities, attention: out.attention })
    }

    /// Inference on one connectome; ties in the argmax go to the lowest class.
    pub fn predict(&self, c: &Connectome) -> Result<Prediction> {
        self.predict_graph(&GraphInput::from_connectome(c)?)
    }

    fn arch_tensor(&self) -> Tensor {
        let c = &self.config;
        Tensor::row(vec![
            c.in_dim as f64,
            c.hidden_dim as f64,
            c.heads as f64,
            c.layers as f64,
            c.classes as f64,
            match c.readout {
                Readout::Sum => 0.0,
                Readout::Mean => 1.0,
            },
            c.negative_slope,
            c.dropout,
            match c.activation {
                Activation::Elu => 0.0,
                Activation::Identity => 1.0,
            },
        ])
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut named = vec![("meta.arch".to_string(), self.arch_tensor())];
        named.extend(self.param_names().into_iter().zip(self.params.iter().cloned()));
        write_checkpoint(w, &named)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let named = read_checkpoint(r)?;
        let (first, rest) = named.split_first().ok_or_else(|| GnnError::Checkpoint("empty checkpoint".into()))?;
        if first.0 != "meta.arch" || first.1.len() != 9 {
            return Err(GnnError::Checkpoint("missing architecture record".into()));
        }
        let a = first.1.values();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(GnnError::Checkpoint(format!("bad architecture field {v}")))
            }
        };
        let config = GatConfig {
            in_dim: as_count(a[0])?,
            hidden_dim: as_count(a[1])?,
            heads: as_count(a[2])?,
            layers: as_count(a[3])?,
            classes: as_count(a[4])?,
            readout: if a[5] == 0.0 { Readout::Sum } else { Readout::Mean },
            negative_slope: a[6],
            dropout: a[7],
            activation: if a[8] == 0.0 { Activation::Elu } else { Activation::Identity },
        };
        config.validate().map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        // Shapes come from a freshly initialized model of the same architecture.
        let template = GatModel::new(config, 0)?;
        let names = template.param_names();
        if rest.len() != names.len() {
            return Err(GnnError::Checkpoint(format!("expected {} tensors, found {}", names.len(), rest.len())));
        }
        let mut params = Vec::with_capacity(rest.len());
        for ((name, t), (expected, tmpl)) in rest.iter().zip(names.iter().zip(template.params.iter())) {
            if name != expected {
                return Err(GnnError::Checkpoint(format!("expected tensor '{expected}', found '{name}'")));
            }
            if t.rows() != tmpl.rows() || t.cols() != tmpl.cols() {
                return Err(GnnError::Checkpoint(format!("tensor '{name}' has shape {:?}", t.shape())));
            }
            params.push(t.clone().reshape(tmpl.shape().to_vec())?);
        }
        Ok(Self { config: template.config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| GnnError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        Self::read_from(&mut std::io::BufReader::new(f))
    }
}
