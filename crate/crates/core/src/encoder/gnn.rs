//! Two-stream directional message passing with parallelism fusion.
//!
//! Each round updates a downstream stream `f` from the fused vectors of
//! in-neighbors and an upstream stream `g` from the fused vectors of
//! out-neighbors, then fuses each with the operator's normalized
//! parallelism:
//!
//! ```text
//! f_t  = relu(A_t [f_{t-1} | mean_in  f'_{t-1}] + a_t)
//! g_t  = relu(B_t [g_{t-1} | mean_out g'_{t-1}] + b_t)
//! f'_t = relu(F_t [f_t | p/p_max] + c_t)
//! g'_t = relu(G_t [g_t | p/p_max] + e_t)
//! ```
//!
//! with `f_0 = g_0 = f'_0 = g'_0 = x`. The agnostic embedding is
//! `[f_T | g_T]` and the aware one `[f'_T | g'_T]`. In a DAG `f` only sees
//! strict ancestors and `g` strict descendants, so the agnostic embedding
//! never depends on the operator's own parallelism, whatever `T` is.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureEncoding, INPUT_DIM};
use super::EncoderError;
use crate::bottleneck::BottleneckLabels;
use crate::dag::{LogicalDag, NodeId, ParallelismAssignment};

pub const PARAMETER_VERSION: u32 = 1;
/// Prediction clipping inside the loss.
pub const BCE_EPSILON: f64 = 1e-7;

const PER_LAYER: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub input_dim: usize,
    /// Embedding width, split evenly between the two streams.
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
    pub p_max: u32,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            input_dim: INPUT_DIM,
            hidden: 32,
            layers: 3,
            head_hidden: 16,
            p_max: 100,
        }
    }
}

impl GnnConfig {
    pub fn stream(&self) -> usize {
        self.hidden / 2
    }

    /// Names and shapes of every tensor, in storage order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let half = self.stream();
        let mut out = Vec::new();
        for t in 0..self.layers {
            let width = if t == 0 { self.input_dim } else { half };
            let l = t + 1;
            out.push((format!("layer{l}.down.weight"), vec![half, 2 * width]));
            out.push((format!("layer{l}.down.bias"), vec![half]));
            out.push((format!("layer{l}.up.weight"), vec![half, 2 * width]));
            out.push((format!("layer{l}.up.bias"), vec![half]));
            out.push((format!("layer{l}.fuse_down.weight"), vec![half, half + 1]));
            out.push((format!("layer{l}.fuse_down.bias"), vec![half]));
            out.push((format!("layer{l}.fuse_up.weight"), vec![half, half + 1]));
            out.push((format!("layer{l}.fuse_up.bias"), vec![half]));
        }
        out.push(("head.hidden.weight".into(), vec![self.head_hidden, self.hidden]));
        out.push(("head.hidden.bias".into(), vec![self.head_hidden]));
        out.push(("head.out.weight".into(), vec![1, self.head_hidden]));
        out.push(("head.out.bias".into(), vec![1]));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn mat(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.data).expect("validated shape")
    }

    fn vec(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[..])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnParameters {
    pub version: u32,
    pub config: GnnConfig,
    pub encoding: FeatureEncoding,
    pub tensors: Vec<Tensor>,
}

impl GnnParameters {
    /// He-uniform weights, zero biases.
    pub fn init(config: GnnConfig, encoding: FeatureEncoding, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .shapes()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                let data = if shape.len() == 2 {
                    let bound = (6.0 / shape[1] as f64).sqrt();
                    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
                } else {
                    vec![0.0; len]
                };
                Tensor { name, shape, data }
            })
            .collect();
        GnnParameters {
            version: PARAMETER_VERSION,
            config,
            encoding,
            tensors,
        }
    }

    pub fn zeros(config: GnnConfig, encoding: FeatureEncoding) -> Self {
        let mut p = Self::init(config, encoding, 0);
        p.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|x| *x = 0.0));
        p
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let mismatch = |m: String| Err(EncoderError::DimensionMismatch(m));
        if self.version != PARAMETER_VERSION {
            return mismatch(format!("unsupported parameter version {}", self.version));
        }
        if self.config.input_dim != INPUT_DIM || self.encoding.bounds.len() != INPUT_DIM - super::features::CATEGORICAL_DIM {
            return mismatch(format!("input dimension must be {INPUT_DIM}"));
        }
        if self.config.hidden == 0 || !self.config.hidden.is_multiple_of(2) {
            return mismatch("hidden width must be even and positive".into());
        }
        let shapes = self.config.shapes();
        if shapes.len() != self.tensors.len() {
            return mismatch(format!("expected {} tensors, found {}", shapes.len(), self.tensors.len()));
        }
        for ((name, shape), t) in shapes.iter().zip(&self.tensors) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return mismatch(format!("tensor {} does not match {name} {shape:?}", t.name));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameters serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EncoderError> {
        let p: GnnParameters = serde_json::from_str(text).map_err(|e| EncoderError::Format(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    fn layer(&self, t: usize, k: usize) -> &Tensor {
        &self.tensors[t * PER_LAYER + k]
    }

    fn head(&self, k: usize) -> &Tensor {
        &self.tensors[self.config.layers * PER_LAYER + k]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

/// One graph to place in a batch.
#[derive(Clone, Copy)]
pub struct BatchItem<'a> {
    pub dag: &'a LogicalDag,
    pub assignment: &'a ParallelismAssignment,
    pub labels: Option<&'a BottleneckLabels>,
}

/// Disjoint union of graphs, processed as one block-diagonal graph.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub x: Array2<f64>,
    pub p: Array1<f64>,
    /// `(target, source, weight)` rows of the mean-over-in-neighbors operator.
    in_edges: Vec<(usize, usize, f64)>,
    out_edges: Vec<(usize, usize, f64)>,
    pub targets: Vec<Option<f64>>,
    pub spans: Vec<(usize, usize)>,
    pub ids: Vec<NodeId>,
}

impl GraphBatch {
    pub fn new(encoding: &FeatureEncoding, p_max: u32, items: &[BatchItem<'_>]) -> Self {
        let total: usize = items.iter().map(|i| i.dag.nodes.len()).sum();
        let mut x = Array2::zeros((total, INPUT_DIM));
        let mut p = Array1::zeros(total);
        let mut in_edges = Vec::new();
        let mut out_edges = Vec::new();
        let mut targets = Vec::with_capacity(total);
        let mut spans = Vec::with_capacity(items.len());
        let mut ids = Vec::with_capacity(total);
        let mut base = 0;
        let p_max = f64::from(p_max.max(1));
        for item in items {
            let adj = item.dag.adjacency();
            for (v, node) in item.dag.nodes.iter().enumerate() {
                let row = encoding.encode(node);
                x.row_mut(base + v).assign(&Array1::from(row));
                let pv = item.assignment.get(node.id).unwrap_or(node.parallelism);
                p[base + v] = (f64::from(pv) / p_max).min(1.0);
                targets.push(item.labels.and_then(|l| l.get(node.id).target()));
                ids.push(node.id);
                let ins = &adj.preds[v];
                for &u in ins {
                    in_edges.push((base + v, base + u, 1.0 / ins.len() as f64));
                }
                let outs = &adj.succs[v];
                for &w in outs {
                    out_edges.push((base + v, base + w, 1.0 / outs.len() as f64));
                }
            }
            spans.push((base, base + item.dag.nodes.len()));
            base += item.dag.nodes.len();
        }
        GraphBatch {
            x,
            p,
            in_edges,
            out_edges,
            targets,
            spans,
            ids,
        }
    }

    pub fn labeled_count(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn aggregate(edges: &[(usize, usize, f64)], x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    for &(v, u, w) in edges {
        out.row_mut(v).scaled_add(w, &x.row(u));
    }
    out
}

/// Adjoint of [`aggregate`].
fn aggregate_adjoint(edges: &[(usize, usize, f64)], d: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(d.raw_dim());
    for &(v, u, w) in edges {
        out.row_mut(u).scaled_add(w, &d.row(v));
    }
    out
}

fn dense(input: &Array2<f64>, w: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    input.dot(&w.t()) + b
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn relu_back(grad: &Array2<f64>, z: &Array2<f64>) -> Array2<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(z, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    g
}

fn with_p(h: &Array2<f64>, p: &Array1<f64>) -> Array2<f64> {
    let col = p.view().insert_axis(Axis(1));
    concatenate![Axis(1), h.view(), col]
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct LayerCache {
    uf: Array2<f64>,
    zf: Array2<f64>,
    ug: Array2<f64>,
    zg: Array2<f64>,
    vf: Array2<f64>,
    zfp: Array2<f64>,
    vg: Array2<f64>,
    zgp: Array2<f64>,
}

pub struct ForwardPass {
    layers: Vec<LayerCache>,
    pub agnostic: Array2<f64>,
    pub aware: Array2<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
    pub probs: Array1<f64>,
}

pub fn forward_batch(params: &GnnParameters, batch: &GraphBatch) -> ForwardPass {
    let mut f = batch.x.clone();
    let mut fp = batch.x.clone();
    let mut g = batch.x.clone();
    let mut gp = batch.x.clone();
    let mut layers = Vec::with_capacity(params.config.layers);
    for t in 0..params.config.layers {
        let uf = concatenate![Axis(1), f.view(), aggregate(&batch.in_edges, &fp).view()];
        let zf = dense(&uf, params.layer(t, 0).mat(), params.layer(t, 1).vec());
        f = relu(&zf);
        let ug = concatenate![Axis(1), g.view(), aggregate(&batch.out_edges, &gp).view()];
        let zg = dense(&ug, params.layer(t, 2).mat(), params.layer(t, 3).vec());
        g = relu(&zg);
        let vf = with_p(&f, &batch.p);
        let zfp = dense(&vf, params.layer(t, 4).mat(), params.layer(t, 5).vec());
        fp = relu(&zfp);
        let vg = with_p(&g, &batch.p);
        let zgp = dense(&vg, params.layer(t, 6).mat(), params.layer(t, 7).vec());
        gp = relu(&zgp);
        layers.push(LayerCache {
            uf,
            zf,
            ug,
            zg,
            vf,
            zfp,
            vg,
            zgp,
        });
    }
    let agnostic = concatenate![Axis(1), f.view(), g.view()];
    let aware = concatenate![Axis(1), fp.view(), gp.view()];
    let z1 = dense(&aware, params.head(0).mat(), params.head(1).vec());
    let a1 = relu(&z1);
    let w2 = params.head(2).mat();
    let b2 = params.head(3).data[0];
    let probs = a1.dot(&w2.row(0)).mapv(|s| sigmoid(s + b2));
    ForwardPass {
        layers,
        agnostic,
        aware,
        z1,
        a1,
        probs,
    }
}

/// Signs of every pre-activation, for locating ReLU and clip kinks when
/// comparing against finite differences.
pub fn activation_pattern(params: &GnnParameters, batch: &GraphBatch) -> Vec<bool> {
    let fwd = forward_batch(params, batch);
    let mut out = Vec::new();
    for c in &fwd.layers {
        for z in [&c.zf, &c.zg, &c.zfp, &c.zgp] {
            out.extend(z.iter().map(|&v| v > 0.0));
        }
    }
    out.extend(fwd.z1.iter().map(|&v| v > 0.0));
    out.extend(fwd.probs.iter().map(|&q| q > BCE_EPSILON && q < 1.0 - BCE_EPSILON));
    out
}

/// Two-layer head on one aware embedding.
pub fn predict_bottleneck(h_aware: &[f64], params: &GnnParameters) -> f64 {
    let h = ArrayView1::from(h_aware);
    let z1 = params.head(0).mat().dot(&h) + params.head(1).vec();
    let a1 = z1.mapv(|v| v.max(0.0));
    sigmoid(params.head(2).mat().row(0).dot(&a1) + params.head(3).data[0])
}

/// Mean binary cross-entropy over labeled entries.
pub fn masked_bce(probs: &[f64], targets: &[Option<f64>]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (&q, t) in probs.iter().zip(targets) {
        if let Some(y) = *t {
            let q = q.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            total -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Loss and its gradient with respect to every tensor.
pub fn loss_and_gradients(params: &GnnParameters, batch: &GraphBatch) -> Result<(f64, Vec<Vec<f64>>), EncoderError> {
    let fwd = forward_batch(params, batch);
    let probs = fwd.probs.as_slice().expect("contiguous");
    let loss = masked_bce(probs, &batch.targets).ok_or(EncoderError::NoLabeledOperators)?;
    let m = batch.labeled_count() as f64;
    let n = batch.len();
    let half = params.config.stream();

    // dL/dlogit; zero where the clip is active, matching the clipped loss.
    let dlogit = Array1::from_iter(probs.iter().zip(&batch.targets).map(|(&q, t)| match t {
        Some(y) if q > BCE_EPSILON && q < 1.0 - BCE_EPSILON => (q - y) / m,
        _ => 0.0,
    }));

    let mut grads: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
    let head = params.config.layers * PER_LAYER;
    let put = |grads: &mut Vec<Vec<f64>>, k: usize, a: Array2<f64>| {
        grads[k] = a.iter().copied().collect();
    };

    grads[head + 2] = fwd.a1.t().dot(&dlogit).to_vec();
    grads[head + 3] = vec![dlogit.sum()];
    let w2 = params.head(2).mat();
    let da1 = dlogit.view().insert_axis(Axis(1)).dot(&w2);
    let dz1 = relu_back(&da1, &fwd.z1);
    put(&mut grads, head, dz1.t().dot(&fwd.aware));
    grads[head + 1] = dz1.sum_axis(Axis(0)).to_vec();
    let daware = dz1.dot(&params.head(0).mat());

    let mut dfp = daware.slice(s![.., ..half]).to_owned();
    let mut dgp = daware.slice(s![.., half..]).to_owned();
    let mut df_carry = Array2::<f64>::zeros((n, half));
    let mut dg_carry = Array2::<f64>::zeros((n, half));

    for t in (0..params.config.layers).rev() {
        let c = &fwd.layers[t];
        let k = t * PER_LAYER;

        let dzfp = relu_back(&dfp, &c.zfp);
        put(&mut grads, k + 4, dzfp.t().dot(&c.vf));
        grads[k + 5] = dzfp.sum_axis(Axis(0)).to_vec();
        let dvf = dzfp.dot(&params.layer(t, 4).mat());
        let df = &df_carry + &dvf.slice(s![.., ..half]);

        let dzgp = relu_back(&dgp, &c.zgp);
        put(&mut grads, k + 6, dzgp.t().dot(&c.vg));
        grads[k + 7] = dzgp.sum_axis(Axis(0)).to_vec();
        let dvg = dzgp.dot(&params.layer(t, 6).mat());
        let dg = &dg_carry + &dvg.slice(s![.., ..half]);

        let dzf = relu_back(&df, &c.zf);
        put(&mut grads, k, dzf.t().dot(&c.uf));
        grads[k + 1] = dzf.sum_axis(Axis(0)).to_vec();
        let duf = dzf.dot(&params.layer(t, 0).mat());

        let dzg = relu_back(&dg, &c.zg);
        put(&mut grads, k + 2, dzg.t().dot(&c.ug));
        grads[k + 3] = dzg.sum_axis(Axis(0)).to_vec();
        let dug = dzg.dot(&params.layer(t, 2).mat());

        if t > 0 {
            let w = duf.ncols() / 2;
            df_carry = duf.slice(s![.., ..w]).to_owned();
            dfp = aggregate_adjoint(&batch.in_edges, &duf.slice(s![.., w..]).to_owned());
            dg_carry = dug.slice(s![.., ..w]).to_owned();
            dgp = aggregate_adjoint(&batch.out_edges, &dug.slice(s![.., w..]).to_owned());
        }
    }
    Ok((loss, grads))
}

/// Per-operator embeddings of one deployed DAG.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub ids: Vec<NodeId>,
    pub agnostic: Array2<f64>,
    pub aware: Array2<f64>,
    pub probs: Vec<f64>,
}

impl Embeddings {
    fn row(&self, id: NodeId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    pub fn agnostic(&self, id: NodeId) -> Option<Vec<f64>> {
        self.row(id).map(|r| self.agnostic.row(r).to_vec())
    }

    pub fn aware(&self, id: NodeId) -> Option<Vec<f64>> {
        self.row(id).map(|r| self.aware.row(r).to_vec())
    }

    pub fn prob(&self, id: NodeId) -> Option<f64> {
        self.row(id).map(|r| self.probs[r])
    }
}

pub fn forward(dag: &LogicalDag, assignment: &ParallelismAssignment, params: &GnnParameters) -> Result<Embeddings, EncoderError> {
    params.validate()?;
    dag.check_assignment(assignment, params.config.p_max)?;
    let batch = GraphBatch::new(
        &params.encoding,
        params.config.p_max,
        &[BatchItem {
            dag,
            assignment,
            labels: None,
        }],
    );
    let fwd = forward_batch(params, &batch);
    Ok(Embeddings {
        ids: batch.ids,
        agnostic: fwd.agnostic,
        aware: fwd.aware,
        probs: fwd.probs.to_vec(),
    })
}
