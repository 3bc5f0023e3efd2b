//! Layer forward passes with cached intermediates and analytic backward passes.
//!
//! Conventions: node features are rows, so a layer computes `H W` rather than
//! `W h`. Every layer ends with a bias and an [`Activation`]; hidden layers use
//! ReLU and the output layer is the identity (softmax lives in the loss head).

use serde::{Deserialize, Serialize};

use super::{dot, DenseMatrix, GraphContext};
use crate::{Error, Result};

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, m: &mut DenseMatrix) {
        if self == Activation::Relu {
            m.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// Masks an upstream gradient by the derivative at the cached output.
    fn backprop(self, output: &DenseMatrix, grad: &DenseMatrix) -> DenseMatrix {
        match self {
            Activation::Identity => grad.clone(),
            Activation::Relu => {
                let mut g = grad.clone();
                for (gv, &o) in g.data_mut().iter_mut().zip(output.data()) {
                    if o <= 0.0 {
                        *gv = 0.0;
                    }
                }
                g
            }
        }
    }
}

fn bias_row(width: usize) -> DenseMatrix {
    DenseMatrix::zeros(1, width)
}

fn check_input(h: &DenseMatrix, rows: usize, cols: usize, layer: &str) -> Result<()> {
    if h.rows() != rows || h.cols() != cols {
        return Err(Error::Shape(format!(
            "{layer} expects a {rows}x{cols} input, got {:?}",
            h.shape()
        )));
    }
    Ok(())
}

/// Graph convolution: `act(Â H W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
    pub activation: Activation,
}

/// Multi-head graph attention.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    /// Concatenate head outputs (hidden layers) or average them (output layer).
    pub concat: bool,
    pub bias: DenseMatrix,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    pub weight: DenseMatrix,
    /// Scores the receiving node `i` in `e_ij`.
    pub att_self: DenseMatrix,
    /// Scores the sending node `j` in `e_ij`.
    pub att_neigh: DenseMatrix,
}

/// GraphSAGE with mean aggregation: `act(H W_self + mean_N(H) W_neigh + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SageLayer {
    pub weight_self: DenseMatrix,
    pub weight_neigh: DenseMatrix,
    pub bias: DenseMatrix,
    pub activation: Activation,
}

/// Fully connected layer that ignores the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DenseMatrix,
    pub bias: DenseMatrix,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Gcn(GcnLayer),
    Gat(GatLayer),
    Sage(SageLayer),
    Dense(DenseLayer),
}

/// Intermediates saved by a forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: DenseMatrix,
    output: DenseMatrix,
    extra: CacheExtra,
}

#[derive(Debug, Clone)]
enum CacheExtra {
    None,
    Sage { aggregated: DenseMatrix },
    Gat { heads: Vec<HeadCache> },
}

#[derive(Debug, Clone)]
struct HeadCache {
    projected: DenseMatrix,
    /// Per attention list entry: raw score before LeakyReLU and coefficient.
    raw: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
}

impl GcnLayer {
    pub fn new(weight: DenseMatrix, activation: Activation) -> Self {
        let bias = bias_row(weight.cols());
        GcnLayer {
            weight,
            bias,
            activation,
        }
    }
}

impl SageLayer {
    pub fn new(weight_self: DenseMatrix, weight_neigh: DenseMatrix, activation: Activation) -> Self {
        let bias = bias_row(weight_self.cols());
        SageLayer {
            weight_self,
            weight_neigh,
            bias,
            activation,
        }
    }
}

impl DenseLayer {
    pub fn new(weight: DenseMatrix, activation: Activation) -> Self {
        let bias = bias_row(weight.cols());
        DenseLayer {
            weight,
            bias,
            activation,
        }
    }
}

impl GatLayer {
    pub fn new(heads: Vec<GatHead>, concat: bool, activation: Activation) -> Self {
        let width = heads.first().map_or(0, |h| h.weight.cols());
        let out = if concat { width * heads.len() } else { width };
        GatLayer {
            heads,
            concat,
            bias: bias_row(out),
            activation,
        }
    }

    fn head_width(&self) -> usize {
        self.heads[0].weight.cols()
    }

    fn head_forward(
        head: &GatHead,
        h: &DenseMatrix,
        lists: &[Vec<usize>],
    ) -> Result<(DenseMatrix, HeadCache)> {
        let z = h.matmul(&head.weight)?;
        let f = z.cols();
        let s_self: Vec<f64> = (0..z.rows()).map(|i| dot(z.row(i), head.att_self.data())).collect();
        let s_neigh: Vec<f64> =
            (0..z.rows()).map(|i| dot(z.row(i), head.att_neigh.data())).collect();
        let mut out = DenseMatrix::zeros(z.rows(), f);
        let mut raw_all = Vec::with_capacity(lists.len());
        let mut alpha_all = Vec::with_capacity(lists.len());
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::Shape(format!(
                    "node {i} has no incident edges and no self-loop"
                )));
            }
            let raw: Vec<f64> = list.iter().map(|&j| s_self[i] + s_neigh[j]).collect();
            let e: Vec<f64> = raw.iter().map(|&r| leaky(r)).collect();
            let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = e.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let alpha: Vec<f64> = exps.iter().map(|v| v / total).collect();
            let row = out.row_mut(i);
            for (&j, &a) in list.iter().zip(&alpha) {
                for (o, &zj) in row.iter_mut().zip(z.row(j)) {
                    *o += a * zj;
                }
            }
            raw_all.push(raw);
            alpha_all.push(alpha);
        }
        Ok((
            out,
            HeadCache {
                projected: z,
                raw: raw_all,
                alpha: alpha_all,
            },
        ))
    }
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_slope(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        match self {
            Layer::Gcn(l) => l.weight.rows(),
            Layer::Gat(l) => l.heads[0].weight.rows(),
            Layer::Sage(l) => l.weight_self.rows(),
            Layer::Dense(l) => l.weight.rows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Layer::Gcn(l) => l.weight.cols(),
            Layer::Gat(l) => l.bias.cols(),
            Layer::Sage(l) => l.weight_self.cols(),
            Layer::Dense(l) => l.weight.cols(),
        }
    }

    /// Parameter matrices in a fixed order; gradients use the same order.
    pub fn params(&self) -> Vec<&DenseMatrix> {
        match self {
            Layer::Gcn(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Sage(l) => vec![&l.weight_self, &l.weight_neigh, &l.bias],
            Layer::Gat(l) => {
                let mut p = Vec::with_capacity(3 * l.heads.len() + 1);
                for h in &l.heads {
                    p.extend([&h.weight, &h.att_self, &h.att_neigh]);
                }
                p.push(&l.bias);
                p
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        match self {
            Layer::Gcn(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Sage(l) => vec![&mut l.weight_self, &mut l.weight_neigh, &mut l.bias],
            Layer::Gat(l) => {
                let mut p = Vec::with_capacity(3 * l.heads.len() + 1);
                for h in &mut l.heads {
                    p.push(&mut h.weight);
                    p.push(&mut h.att_self);
                    p.push(&mut h.att_neigh);
                }
                p.push(&mut l.bias);
                p
            }
        }
    }

    pub fn forward(&self, h: &DenseMatrix, ctx: &GraphContext) -> Result<LayerCache> {
        check_input(h, ctx.node_count(), self.input_dim(), self.kind())?;
        let (mut out, extra) = match self {
            Layer::Gcn(l) => {
                let mut p = ctx.gcn_operator().matmul(&h.matmul(&l.weight)?)?;
                p.add_row_vector(l.bias.data())?;
                (p, CacheExtra::None)
            }
            Layer::Dense(l) => {
                let mut p = h.matmul(&l.weight)?;
                p.add_row_vector(l.bias.data())?;
                (p, CacheExtra::None)
            }
            Layer::Sage(l) => {
                let aggregated = ctx.mean_operator().matmul(h)?;
                let mut p = h.matmul(&l.weight_self)?;
                p.add_assign(&aggregated.matmul(&l.weight_neigh)?)?;
                p.add_row_vector(l.bias.data())?;
                (p, CacheExtra::Sage { aggregated })
            }
            Layer::Gat(l) => {
                let f = l.head_width();
                let n = h.rows();
                let mut p = DenseMatrix::zeros(n, l.bias.cols());
                let mut caches = Vec::with_capacity(l.heads.len());
                let share = 1.0 / l.heads.len() as f64;
                for (k, head) in l.heads.iter().enumerate() {
                    let (o, cache) = GatLayer::head_forward(head, h, ctx.attention_lists())?;
                    for i in 0..n {
                        let dst = p.row_mut(i);
                        if l.concat {
                            dst[k * f..(k + 1) * f].copy_from_slice(o.row(i));
                        } else {
                            for (d, &v) in dst.iter_mut().zip(o.row(i)) {
                                *d += share * v;
                            }
                        }
                    }
                    caches.push(cache);
                }
                p.add_row_vector(l.bias.data())?;
                (p, CacheExtra::Gat { heads: caches })
            }
        };
        self.activation().apply(&mut out);
        Ok(LayerCache {
            input: h.clone(),
            output: out,
            extra,
        })
    }

    /// Returns the gradient with respect to the layer input and the parameter
    /// gradients in [`Layer::params`] order.
    pub fn backward(
        &self,
        cache: &LayerCache,
        grad_out: &DenseMatrix,
        ctx: &GraphContext,
    ) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
        let g = self.activation().backprop(&cache.output, grad_out);
        let grad_bias = DenseMatrix::from_vec(1, g.cols(), g.column_sums())?;
        let h = &cache.input;
        match (self, &cache.extra) {
            (Layer::Gcn(l), _) => {
                let propagated = ctx.gcn_operator().t_matmul(&g)?;
                let grad_w = h.t_matmul(&propagated)?;
                let grad_in = propagated.matmul_t(&l.weight)?;
                Ok((grad_in, vec![grad_w, grad_bias]))
            }
            (Layer::Dense(l), _) => {
                let grad_w = h.t_matmul(&g)?;
                let grad_in = g.matmul_t(&l.weight)?;
                Ok((grad_in, vec![grad_w, grad_bias]))
            }
            (Layer::Sage(l), CacheExtra::Sage { aggregated }) => {
                let grad_self = h.t_matmul(&g)?;
                let grad_neigh = aggregated.t_matmul(&g)?;
                let mut grad_in = g.matmul_t(&l.weight_self)?;
                let through = ctx.mean_operator().t_matmul(&g.matmul_t(&l.weight_neigh)?)?;
                grad_in.add_assign(&through)?;
                Ok((grad_in, vec![grad_self, grad_neigh, grad_bias]))
            }
            (Layer::Gat(l), CacheExtra::Gat { heads }) => {
                let f = l.head_width();
                let n = h.rows();
                let share = 1.0 / l.heads.len() as f64;
                let mut grad_in = DenseMatrix::zeros(n, h.cols());
                let mut grads = Vec::with_capacity(3 * l.heads.len() + 1);
                for (k, (head, hc)) in l.heads.iter().zip(heads).enumerate() {
                    let mut d_out = DenseMatrix::zeros(n, f);
                    for i in 0..n {
                        let src = g.row(i);
                        let dst = d_out.row_mut(i);
                        if l.concat {
                            dst.copy_from_slice(&src[k * f..(k + 1) * f]);
                        } else {
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = share * s;
                            }
                        }
                    }
                    let (gz, ga_self, ga_neigh) = gat_head_backward(head, hc, &d_out, ctx)?;
                    grads.push(h.t_matmul(&gz)?);
                    grads.push(ga_self);
                    grads.push(ga_neigh);
                    grad_in.add_assign(&gz.matmul_t(&head.weight)?)?;
                }
                grads.push(grad_bias);
                Ok((grad_in, grads))
            }
            _ => Err(Error::Shape("layer cache does not match layer type".into())),
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Gcn(l) => l.activation,
            Layer::Gat(l) => l.activation,
            Layer::Sage(l) => l.activation,
            Layer::Dense(l) => l.activation,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Layer::Gcn(_) => "gcn layer",
            Layer::Gat(_) => "gat layer",
            Layer::Sage(_) => "sage layer",
            Layer::Dense(_) => "dense layer",
        }
    }
}

impl LayerCache {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    pub fn into_output(self) -> DenseMatrix {
        self.output
    }

    /// Attention coefficients of head `k`, aligned with the context's
    /// attention lists. `None` for non-attention layers.
    pub fn attention(&self, k: usize) -> Option<&[Vec<f64>]> {
        match &self.extra {
            CacheExtra::Gat { heads } => heads.get(k).map(|h| h.alpha.as_slice()),
            _ => None,
        }
    }
}

fn gat_head_backward(
    head: &GatHead,
    cache: &HeadCache,
    d_out: &DenseMatrix,
    ctx: &GraphContext,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    let z = &cache.projected;
    let f = z.cols();
    let a_self = head.att_self.data();
    let a_neigh = head.att_neigh.data();
    let mut gz = DenseMatrix::zeros(z.rows(), f);
    let mut ga_self = vec![0.0; f];
    let mut ga_neigh = vec![0.0; f];
    for (i, list) in ctx.attention_lists().iter().enumerate() {
        let alpha = &cache.alpha[i];
        let raw = &cache.raw[i];
        let di = d_out.row(i);
        let d_alpha: Vec<f64> = list.iter().map(|&j| dot(di, z.row(j))).collect();
        let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        let mut ds_i = 0.0;
        for (idx, &j) in list.iter().enumerate() {
            let a = alpha[idx];
            for (g, &d) in gz.row_mut(j).iter_mut().zip(di) {
                *g += a * d;
            }
            let ds = a * (d_alpha[idx] - weighted) * leaky_slope(raw[idx]);
            if ds == 0.0 {
                continue;
            }
            ds_i += ds;
            let zj = z.row(j);
            for (g, &zv) in ga_neigh.iter_mut().zip(zj) {
                *g += ds * zv;
            }
            for (g, &av) in gz.row_mut(j).iter_mut().zip(a_neigh) {
                *g += ds * av;
            }
        }
        let zi = z.row(i);
        for (g, &zv) in ga_self.iter_mut().zip(zi) {
            *g += ds_i * zv;
        }
        for (g, &av) in gz.row_mut(i).iter_mut().zip(a_self) {
            *g += ds_i * av;
        }
    }
    Ok((
        gz,
        DenseMatrix::from_vec(1, f, ga_self)?,
        DenseMatrix::from_vec(1, f, ga_neigh)?,
    ))
}

/// `act(Â H W)` for a bias-free graph convolution.
pub fn gcn_forward(
    h: &DenseMatrix,
    a_norm: &DenseMatrix,
    weight: &DenseMatrix,
    activation: Activation,
) -> Result<DenseMatrix> {
    if a_norm.rows() != a_norm.cols() || a_norm.cols() != h.rows() {
        return Err(Error::Shape(format!(
            "propagation {:?} with features {:?}",
            a_norm.shape(),
            h.shape()
        )));
    }
    let mut out = a_norm.matmul(&h.matmul(weight)?)?;
    activation.apply(&mut out);
    Ok(out)
}

/// Bias-free multi-head attention over explicit neighbourhoods. `lists[i]`
/// must contain every node `i` attends to, its own index included when a
/// self-loop is wanted. Returns the output and per-head coefficients.
pub fn gat_forward(
    h: &DenseMatrix,
    lists: &[Vec<usize>],
    heads: &[GatHead],
    concat: bool,
    activation: Activation,
) -> Result<(DenseMatrix, Vec<Vec<Vec<f64>>>)> {
    if heads.is_empty() {
        return Err(Error::Config("attention needs at least one head".into()));
    }
    if lists.len() != h.rows() {
        return Err(Error::Shape(format!(
            "{} neighbourhoods for {} nodes",
            lists.len(),
            h.rows()
        )));
    }
    let f = heads[0].weight.cols();
    let mut out = DenseMatrix::zeros(h.rows(), if concat { f * heads.len() } else { f });
    let mut coefficients = Vec::with_capacity(heads.len());
    for (k, head) in heads.iter().enumerate() {
        let (o, cache) = GatLayer::head_forward(head, h, lists)?;
        for i in 0..h.rows() {
            let dst = out.row_mut(i);
            if concat {
                dst[k * f..(k + 1) * f].copy_from_slice(o.row(i));
            } else {
                for (d, &v) in dst.iter_mut().zip(o.row(i)) {
                    *d += v / heads.len() as f64;
                }
            }
        }
        coefficients.push(cache.alpha);
    }
    activation.apply(&mut out);
    Ok((out, coefficients))
}

/// `ReLU(H W_self + mean_N(H) W_neigh)`; isolated nodes aggregate to zero.
pub fn sage_forward(
    h: &DenseMatrix,
    neighbors: &[Vec<usize>],
    weight_self: &DenseMatrix,
    weight_neigh: &DenseMatrix,
) -> Result<DenseMatrix> {
    let layer = Layer::Sage(SageLayer::new(
        weight_self.clone(),
        weight_neigh.clone(),
        Activation::Relu,
    ));
    let ctx = GraphContext::new(neighbors)?;
    Ok(layer.forward(h, &ctx)?.into_output())
}
