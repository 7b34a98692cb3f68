//! Graph convolutional predictor over [`BipartiteGraph`]s.
//!
//! Node features are standardized, embedded by an affine map plus ReLU, then
//! refined by `L` rounds of half-convolutions. Each round first updates the
//! constraint side and then the variable side:
//!
//! ```text
//! m_c = sum_e f_e h_v        s_c = sum_e f_e
//! h_c <- h_c + relu(W_con [m_c; s_c] + b_con)
//! m_v = sum_e f_e h_c        s_v = sum_e f_e
//! h_v <- h_v + relu(W_var [m_v; s_v] + b_var)
//! ```
//!
//! A linear head and the logistic function turn each binary variable's final
//! embedding into an on-probability. Gradients are computed by hand.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`),
//! so a seed fixes initialization and shuffling on every platform.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{BipartiteGraph, CON_FEATURES, VAR_FEATURES};

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GcnnError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Row-major `out x inp` weights plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub inp: usize,
    pub out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            inp,
            out,
            w: vec![0.0; inp * out],
            b: vec![0.0; out],
        }
    }

    pub(crate) fn glorot(inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = (6.0 / (inp + out) as f64).sqrt();
        let mut a = Self::zeros(inp, out);
        for w in &mut a.w {
            *w = rng.gen_range(-s..=s);
        }
        a
    }

    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.w[o * self.inp..(o + 1) * self.inp];
            *yo = self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients into `grad` and, if requested, the
    /// input gradient into `dx`.
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Affine, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[o] += g;
            let gw = &mut grad.w[o * self.inp..(o + 1) * self.inp];
            for (gw, &xi) in gw.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
        if let Some(dx) = dx {
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.w[o * self.inp..(o + 1) * self.inp];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub con: Affine,
    pub var: Affine,
}

/// Per-feature standardization `(x - shift) / scale`, fitted on training data
/// and never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaling {
    /// Continuous-variable statistics followed by binary-variable ones.
    pub var_shift: [f64; 2 * VAR_FEATURES],
    pub var_scale: [f64; 2 * VAR_FEATURES],
    pub con_shift: [f64; CON_FEATURES],
    pub con_scale: [f64; CON_FEATURES],
}

impl Default for InputScaling {
    fn default() -> Self {
        Self {
            var_shift: [0.0; 2 * VAR_FEATURES],
            var_scale: [1.0; 2 * VAR_FEATURES],
            con_shift: [0.0; CON_FEATURES],
            con_scale: [1.0; CON_FEATURES],
        }
    }
}

fn is_binary_node(features: &[f64; VAR_FEATURES]) -> bool {
    features[1] >= 0.5
}

fn mean_std<const K: usize>(rows: impl Iterator<Item = [f64; K]>) -> ([f64; K], [f64; K]) {
    let mut n = 0usize;
    let mut sum = [0.0; K];
    let mut sq = [0.0; K];
    for r in rows {
        n += 1;
        for k in 0..K {
            sum[k] += r[k];
            sq[k] += r[k] * r[k];
        }
    }
    let mut mean = [0.0; K];
    let mut std = [1.0; K];
    if n > 0 {
        for k in 0..K {
            mean[k] = sum[k] / n as f64;
            let var = (sq[k] / n as f64 - mean[k] * mean[k]).max(0.0);
            std[k] = if var.sqrt() > 1e-8 { var.sqrt() } else { 1.0 };
        }
    }
    (mean, std)
}

impl InputScaling {
    pub fn fit<'a>(graphs: impl Iterator<Item = &'a BipartiteGraph> + Clone) -> Self {
        let group = |binary: bool| {
            mean_std(
                graphs
                    .clone()
                    .flat_map(|g| g.var_nodes.iter().map(|v| v.features))
                    .filter(move |f| is_binary_node(f) == binary),
            )
        };
        let (cont_shift, cont_scale) = group(false);
        let (bin_shift, bin_scale) = group(true);
        let mut var_shift = [0.0; 2 * VAR_FEATURES];
        let mut var_scale = [1.0; 2 * VAR_FEATURES];
        var_shift[..VAR_FEATURES].copy_from_slice(&cont_shift);
        var_shift[VAR_FEATURES..].copy_from_slice(&bin_shift);
        var_scale[..VAR_FEATURES].copy_from_slice(&cont_scale);
        var_scale[VAR_FEATURES..].copy_from_slice(&bin_scale);
        let (con_shift, con_scale) = mean_std(graphs.flat_map(|g| g.con_nodes.iter().map(|c| c.features)));
        Self {
            var_shift,
            var_scale,
            con_shift,
            con_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnnParams {
    pub hidden: usize,
    pub layers: usize,
    pub scaling: InputScaling,
    pub var_embed: Affine,
    pub con_embed: Affine,
    pub convs: Vec<ConvLayer>,
    pub head: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            layers: 2,
            learning_rate: 1e-3,
            epochs: 100,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GcnnError> {
        if self.hidden < 1 || self.layers < 1 || self.epochs < 1 {
            return Err(GcnnError::Config("hidden, layers and epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(GcnnError::Config("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub graph: BipartiteGraph,
    /// One 0/1 label per entry of `graph.binary_mask`.
    pub labels: Vec<f64>,
}

impl LabeledGraph {
    pub fn new(graph: BipartiteGraph, labels: Vec<f64>) -> Result<Self, GcnnError> {
        if labels.len() != graph.binary_mask.len() {
            return Err(GcnnError::LengthMismatch(labels.len(), graph.binary_mask.len()));
        }
        Ok(Self { graph, labels })
    }
}

impl GcnnParams {
    pub fn zeros(hidden: usize, layers: usize) -> Self {
        Self {
            hidden,
            layers,
            scaling: InputScaling::default(),
            var_embed: Affine::zeros(VAR_FEATURES, hidden),
            con_embed: Affine::zeros(CON_FEATURES, hidden),
            convs: (0..layers)
                .map(|_| ConvLayer {
                    con: Affine::zeros(hidden + 1, hidden),
                    var: Affine::zeros(hidden + 1, hidden),
                })
                .collect(),
            head: Affine::zeros(hidden, 1),
        }
    }

    /// Glorot-uniform weights, zero biases, identity input scaling.
    pub fn init(cfg: &TrainConfig, seed: u64) -> Self {
        let h = cfg.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            hidden: h,
            layers: cfg.layers,
            scaling: InputScaling::default(),
            var_embed: Affine::glorot(VAR_FEATURES, h, &mut rng),
            con_embed: Affine::glorot(CON_FEATURES, h, &mut rng),
            convs: (0..cfg.layers)
                .map(|_| ConvLayer {
                    con: Affine::glorot(h + 1, h, &mut rng),
                    var: Affine::glorot(h + 1, h, &mut rng),
                })
                .collect(),
            head: Affine::glorot(h, 1, &mut rng),
        }
    }

    fn tensors(&self) -> Vec<&Affine> {
        let mut t = vec![&self.var_embed, &self.con_embed];
        for c in &self.convs {
            t.push(&c.con);
            t.push(&c.var);
        }
        t.push(&self.head);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Affine> {
        let mut t = vec![&mut self.var_embed, &mut self.con_embed];
        for c in &mut self.convs {
            t.push(&mut c.con);
            t.push(&mut c.var);
        }
        t.push(&mut self.head);
        t
    }

    /// Number of trainable scalars.
    pub fn len(&self) -> usize {
        self.tensors().iter().map(|a| a.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable scalars in a fixed order (weights then bias, tensor by tensor).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for a in self.tensors() {
            out.extend_from_slice(&a.w);
            out.extend_from_slice(&a.b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for a in self.tensors_mut() {
            let nw = a.w.len();
            a.w.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = a.b.len();
            a.b.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }

    fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.hidden, self.layers);
        z.scaling = self.scaling.clone();
        z
    }
}

pub fn init_params(cfg: &TrainConfig, seed: u64) -> GcnnParams {
    GcnnParams::init(cfg, seed)
}

struct LayerCache {
    /// `[m; s]` inputs of the constraint-side affine map, per constraint.
    con_in: Vec<f64>,
    con_pre: Vec<f64>,
    var_in: Vec<f64>,
    var_pre: Vec<f64>,
}

struct ForwardCache {
    var_x: Vec<f64>,
    con_x: Vec<f64>,
    var_pre0: Vec<f64>,
    con_pre0: Vec<f64>,
    layers: Vec<LayerCache>,
    var_h: Vec<f64>,
    logits: Vec<f64>,
}

fn relu_into(pre: &[f64], h: &mut [f64]) {
    for (h, &z) in h.iter_mut().zip(pre) {
        *h = z.max(0.0);
    }
}

fn check_dims(params: &GcnnParams, g: &BipartiteGraph) -> Result<(), GcnnError> {
    let h = params.hidden;
    let shapes_ok = params.var_embed.inp == VAR_FEATURES
        && params.var_embed.out == h
        && params.con_embed.inp == CON_FEATURES
        && params.con_embed.out == h
        && params.convs.len() == params.layers
        && params
            .convs
            .iter()
            .all(|c| c.con.inp == h + 1 && c.con.out == h && c.var.inp == h + 1 && c.var.out == h)
        && params.head.inp == h
        && params.head.out == 1;
    if !shapes_ok {
        return Err(GcnnError::Dimension("parameter shapes are inconsistent".into()));
    }
    let nv = g.var_nodes.len();
    let nc = g.con_nodes.len();
    if g.edges.iter().any(|e| e.var >= nv || e.con >= nc) || g.binary_mask.iter().any(|&i| i >= nv) {
        return Err(GcnnError::Dimension("graph indices out of range".into()));
    }
    Ok(())
}

fn forward_cached(params: &GcnnParams, g: &BipartiteGraph) -> Result<ForwardCache, GcnnError> {
    check_dims(params, g)?;
    let h = params.hidden;
    let nv = g.var_nodes.len();
    let nc = g.con_nodes.len();
    let sc = &params.scaling;

    let mut var_x = Vec::with_capacity(nv * VAR_FEATURES);
    for v in &g.var_nodes {
        for k in 0..VAR_FEATURES {
            let s = k + if is_binary_node(&v.features) { VAR_FEATURES } else { 0 };
            var_x.push((v.features[k] - sc.var_shift[s]) / sc.var_scale[s]);
        }
    }
    let mut con_x = Vec::with_capacity(nc * CON_FEATURES);
    for c in &g.con_nodes {
        for k in 0..CON_FEATURES {
            con_x.push((c.features[k] - sc.con_shift[k]) / sc.con_scale[k]);
        }
    }

    let mut var_pre0 = vec![0.0; nv * h];
    let mut var_h = vec![0.0; nv * h];
    for i in 0..nv {
        params.var_embed.apply(&var_x[i * VAR_FEATURES..(i + 1) * VAR_FEATURES], &mut var_pre0[i * h..(i + 1) * h]);
    }
    relu_into(&var_pre0, &mut var_h);
    let mut con_pre0 = vec![0.0; nc * h];
    let mut con_h = vec![0.0; nc * h];
    for i in 0..nc {
        params.con_embed.apply(&con_x[i * CON_FEATURES..(i + 1) * CON_FEATURES], &mut con_pre0[i * h..(i + 1) * h]);
    }
    relu_into(&con_pre0, &mut con_h);

    let w = h + 1;
    let mut layers = Vec::with_capacity(params.layers);
    for conv in &params.convs {
        let mut con_in = vec![0.0; nc * w];
        for e in &g.edges {
            let dst = &mut con_in[e.con * w..(e.con + 1) * w];
            let src = &var_h[e.var * h..(e.var + 1) * h];
            for (d, s) in dst[..h].iter_mut().zip(src) {
                *d += e.feature * s;
            }
            dst[h] += e.feature;
        }
        let mut con_pre = vec![0.0; nc * h];
        for i in 0..nc {
            conv.con.apply(&con_in[i * w..(i + 1) * w], &mut con_pre[i * h..(i + 1) * h]);
        }
        for (hc, &z) in con_h.iter_mut().zip(&con_pre) {
            *hc += z.max(0.0);
        }

        let mut var_in = vec![0.0; nv * w];
        for e in &g.edges {
            let dst = &mut var_in[e.var * w..(e.var + 1) * w];
            let src = &con_h[e.con * h..(e.con + 1) * h];
            for (d, s) in dst[..h].iter_mut().zip(src) {
                *d += e.feature * s;
            }
            dst[h] += e.feature;
        }
        let mut var_pre = vec![0.0; nv * h];
        for i in 0..nv {
            conv.var.apply(&var_in[i * w..(i + 1) * w], &mut var_pre[i * h..(i + 1) * h]);
        }
        for (hv, &z) in var_h.iter_mut().zip(&var_pre) {
            *hv += z.max(0.0);
        }
        layers.push(LayerCache {
            con_in,
            con_pre,
            var_in,
            var_pre,
        });
    }

    let mut logits = vec![0.0; g.binary_mask.len()];
    for (k, &i) in g.binary_mask.iter().enumerate() {
        let mut out = [0.0];
        params.head.apply(&var_h[i * h..(i + 1) * h], &mut out);
        logits[k] = out[0];
    }
    Ok(ForwardCache {
        var_x,
        con_x,
        var_pre0,
        con_pre0,
        layers,
        var_h,
        logits,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// On-probability for each entry of `g.binary_mask`, in mask order.
pub fn forward(params: &GcnnParams, g: &BipartiteGraph) -> Result<Vec<f64>, GcnnError> {
    Ok(forward_cached(params, g)?.logits.into_iter().map(sigmoid).collect())
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> Result<f64, GcnnError> {
    if probs.len() != labels.len() {
        return Err(GcnnError::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

pub fn loss(params: &GcnnParams, lg: &LabeledGraph) -> Result<f64, GcnnError> {
    bce_loss(&forward(params, &lg.graph)?, &lg.labels)
}

fn relu_mask(pre: &[f64], grad: &mut [f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Loss and its gradient with respect to every trainable parameter.
pub fn loss_and_gradient(params: &GcnnParams, lg: &LabeledGraph) -> Result<(f64, GcnnParams), GcnnError> {
    let g = &lg.graph;
    if lg.labels.len() != g.binary_mask.len() {
        return Err(GcnnError::LengthMismatch(lg.labels.len(), g.binary_mask.len()));
    }
    let cache = forward_cached(params, g)?;
    let probs: Vec<f64> = cache.logits.iter().map(|&z| sigmoid(z)).collect();
    let value = bce_loss(&probs, &lg.labels)?;

    let h = params.hidden;
    let w = h + 1;
    let nv = g.var_nodes.len();
    let nc = g.con_nodes.len();
    let mut grad = params.zeros_like();
    if probs.is_empty() {
        return Ok((value, grad));
    }
    let n = probs.len() as f64;

    let mut d_var_h = vec![0.0; nv * h];
    for (k, &i) in g.binary_mask.iter().enumerate() {
        let p = probs[k];
        // Inside the clamp d(loss)/d(logit) = (p - y) / n; outside it is flat.
        let dz = if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
            (p - lg.labels[k]) / n
        } else {
            0.0
        };
        params.head.backward(
            &cache.var_h[i * h..(i + 1) * h],
            &[dz],
            &mut grad.head,
            Some(&mut d_var_h[i * h..(i + 1) * h]),
        );
    }

    let mut d_con_h = vec![0.0; nc * h];
    for (l, conv) in params.convs.iter().enumerate().rev() {
        let lc = &cache.layers[l];
        let gconv = &mut grad.convs[l];

        // Variable-side half: h_v' = h_v + relu(var_pre).
        let mut d_pre = d_var_h.clone();
        relu_mask(&lc.var_pre, &mut d_pre);
        let mut d_var_in = vec![0.0; nv * w];
        for i in 0..nv {
            conv.var.backward(
                &lc.var_in[i * w..(i + 1) * w],
                &d_pre[i * h..(i + 1) * h],
                &mut gconv.var,
                Some(&mut d_var_in[i * w..(i + 1) * w]),
            );
        }
        for e in &g.edges {
            let src = &d_var_in[e.var * w..e.var * w + h];
            let dst = &mut d_con_h[e.con * h..(e.con + 1) * h];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += e.feature * s;
            }
        }

        // Constraint-side half: h_c' = h_c + relu(con_pre).
        let mut d_pre = d_con_h.clone();
        relu_mask(&lc.con_pre, &mut d_pre);
        let mut d_con_in = vec![0.0; nc * w];
        for i in 0..nc {
            conv.con.backward(
                &lc.con_in[i * w..(i + 1) * w],
                &d_pre[i * h..(i + 1) * h],
                &mut gconv.con,
                Some(&mut d_con_in[i * w..(i + 1) * w]),
            );
        }
        for e in &g.edges {
            let src = &d_con_in[e.con * w..e.con * w + h];
            let dst = &mut d_var_h[e.var * h..(e.var + 1) * h];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += e.feature * s;
            }
        }
    }

    relu_mask(&cache.var_pre0, &mut d_var_h);
    for i in 0..nv {
        params.var_embed.backward(
            &cache.var_x[i * VAR_FEATURES..(i + 1) * VAR_FEATURES],
            &d_var_h[i * h..(i + 1) * h],
            &mut grad.var_embed,
            None,
        );
    }
    relu_mask(&cache.con_pre0, &mut d_con_h);
    for i in 0..nc {
        params.con_embed.backward(
            &cache.con_x[i * CON_FEATURES..(i + 1) * CON_FEATURES],
            &d_con_h[i * h..(i + 1) * h],
            &mut grad.con_embed,
            None,
        );
    }
    Ok((value, grad))
}

pub fn gradient(params: &GcnnParams, lg: &LabeledGraph) -> Result<GcnnParams, GcnnError> {
    Ok(loss_and_gradient(params, lg)?.1)
}

/// Gradient of the mean loss over several samples.
pub fn mean_gradient(params: &GcnnParams, samples: &[LabeledGraph]) -> Result<GcnnParams, GcnnError> {
    if samples.is_empty() {
        return Err(GcnnError::EmptyDataset);
    }
    let mut acc = vec![0.0; params.len()];
    for s in samples {
        for (a, g) in acc.iter_mut().zip(gradient(params, s)?.flatten()) {
            *a += g;
        }
    }
    let k = samples.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    let mut out = params.zeros_like();
    out.set_flat(&acc);
    Ok(out)
}

/// Adaptive-moment optimizer state over the flattened parameters.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[k] / c1;
            let vhat = self.v[k] / c2;
            params[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: GcnnParams,
    /// Mean per-sample loss of each epoch, measured before each update.
    pub loss_history: Vec<f64>,
}

/// One Adam step per sample per epoch, in a seeded shuffled order.
pub fn train(dataset: &[LabeledGraph], cfg: &TrainConfig) -> Result<TrainResult, GcnnError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(GcnnError::EmptyDataset);
    }
    let mut params = GcnnParams::init(cfg, cfg.seed);
    params.scaling = InputScaling::fit(dataset.iter().map(|s| &s.graph));
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_5EED);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut sample_loss = vec![0.0; dataset.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            params.set_flat(&flat);
            let (l, g) = loss_and_gradient(&params, &dataset[k])?;
            sample_loss[k] = l;
            adam.step(&mut flat, &g.flatten());
        }
        history.push(sample_loss.iter().sum::<f64>() / dataset.len() as f64);
    }
    params.set_flat(&flat);
    Ok(TrainResult {
        params,
        loss_history: history,
    })
}

pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (e, l) in history.iter().enumerate() {
        writeln!(out, "{},{l:?}", e + 1).unwrap();
    }
    out
}

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    writeln!(out, "tensor {name} {rows} {cols}").unwrap();
    for r in 0..rows {
        let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
}

impl GcnnParams {
    /// Header `gcnn hidden=<H> layers=<L>`, then each named tensor as a
    /// `tensor <name> <rows> <cols>` line followed by its rows.
    pub fn to_text(&self) -> String {
        let mut out = format!("gcnn hidden={} layers={}\n", self.hidden, self.layers);
        let sc = &self.scaling;
        push_tensor(&mut out, "scaling.var_shift", 2, VAR_FEATURES, &sc.var_shift);
        push_tensor(&mut out, "scaling.var_scale", 2, VAR_FEATURES, &sc.var_scale);
        push_tensor(&mut out, "scaling.con_shift", 1, CON_FEATURES, &sc.con_shift);
        push_tensor(&mut out, "scaling.con_scale", 1, CON_FEATURES, &sc.con_scale);
        for (name, a) in self.named_tensors() {
            push_tensor(&mut out, &format!("{name}.w"), a.out, a.inp, &a.w);
            push_tensor(&mut out, &format!("{name}.b"), 1, a.out, &a.b);
        }
        out
    }

    fn named_tensors(&self) -> Vec<(String, &Affine)> {
        let mut t = vec![("var_embed".to_string(), &self.var_embed), ("con_embed".to_string(), &self.con_embed)];
        for (l, c) in self.convs.iter().enumerate() {
            t.push((format!("conv.{l}.con"), &c.con));
            t.push((format!("conv.{l}.var"), &c.var));
        }
        t.push(("head".to_string(), &self.head));
        t
    }

    pub fn from_text(text: &str) -> Result<Self, GcnnError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let perr = |line: usize, msg: &str| GcnnError::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (i, header) = lines.next().ok_or_else(|| perr(0, "empty model file"))?;
        let mut hidden = None;
        let mut layers = None;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("gcnn") {
            return Err(perr(i, "expected `gcnn` header"));
        }
        for p in parts {
            match p.split_once('=') {
                Some(("hidden", v)) => hidden = v.parse().ok(),
                Some(("layers", v)) => layers = v.parse().ok(),
                _ => return Err(perr(i, "unexpected header field")),
            }
        }
        let (hidden, layers) = match (hidden, layers) {
            (Some(h), Some(l)) if h >= 1 && l >= 1 => (h, l),
            _ => return Err(perr(i, "header needs hidden=<H> layers=<L>")),
        };
        let mut params = GcnnParams::zeros(hidden, layers);
        let mut seen = std::collections::HashSet::new();
        while let Some((i, line)) = lines.next() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let (name, rows, cols) = match f.as_slice() {
                ["tensor", name, r, c] => (
                    name.to_string(),
                    r.parse::<usize>().map_err(|_| perr(i, "bad row count"))?,
                    c.parse::<usize>().map_err(|_| perr(i, "bad column count"))?,
                ),
                _ => return Err(perr(i, "expected `tensor <name> <rows> <cols>`")),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (j, row) = lines.next().ok_or_else(|| perr(i, "truncated tensor"))?;
                let vals: Result<Vec<f64>, _> = row.split_whitespace().map(str::parse::<f64>).collect();
                let vals = vals.map_err(|_| perr(j, "bad number"))?;
                if vals.len() != cols {
                    return Err(perr(j, "wrong number of columns"));
                }
                data.extend(vals);
            }
            let target: &mut [f64] = match name.as_str() {
                "scaling.var_shift" => &mut params.scaling.var_shift,
                "scaling.var_scale" => &mut params.scaling.var_scale,
                "scaling.con_shift" => &mut params.scaling.con_shift,
                "scaling.con_scale" => &mut params.scaling.con_scale,
                other => {
                    let (base, part) = other.rsplit_once('.').ok_or_else(|| perr(i, "unknown tensor"))?;
                    let affine = match base {
                        "var_embed" => &mut params.var_embed,
                        "con_embed" => &mut params.con_embed,
                        "head" => &mut params.head,
                        _ => {
                            let l: Option<(usize, &str)> = base
                                .strip_prefix("conv.")
                                .and_then(|r| r.split_once('.'))
                                .and_then(|(l, side)| l.parse().ok().map(|l| (l, side)));
                            match l {
                                Some((l, "con")) if l < layers => &mut params.convs[l].con,
                                Some((l, "var")) if l < layers => &mut params.convs[l].var,
                                _ => return Err(perr(i, "unknown tensor")),
                            }
                        }
                    };
                    match part {
                        "w" => &mut affine.w,
                        "b" => &mut affine.b,
                        _ => return Err(perr(i, "unknown tensor")),
                    }
                }
            };
            if target.len() != data.len() {
                return Err(perr(i, "tensor shape does not match header"));
            }
            target.copy_from_slice(&data);
            seen.insert(name);
        }
        let expected = 4 + 2 * (3 + 2 * layers);
        if seen.len() != expected {
            return Err(perr(0, "model file is missing tensors"));
        }
        Ok(params)
    }
}
