//! Small dense-network stack with hand-written reverse-mode gradients.
//!
//! Networks are generic over the float type: training runs in `f32`,
//! gradient checks in `f64`.

mod actor;
mod checkpoint;
mod critic;

pub use actor::{Actor, ActorCache, ActorKind, ActorOutput, AemoActor, InvFfActor};
pub use checkpoint::{ArchitectureManifest, Checkpoint, LayerSpec, CHECKPOINT_VERSION};
pub use critic::{Critic, CriticCache};

use std::fmt::Debug;
use std::sync::Arc;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::env::{input_scales, FeatureTensor, N_EFF, N_FAIR};
use crate::error::{Error, Result};
use crate::layout::WarehouseLayout;
use crate::stochastic::RandomStream;

pub const LEAKY_ALPHA: f64 = 0.01;
/// Width of the per-category node embeddings.
pub const EMBED: usize = 16;
pub const HIDDEN: usize = 64;

pub trait Real: Float + std::iter::Sum + std::ops::AddAssign + Send + Sync + Debug + Default + 'static {
    fn from_f64(x: f64) -> Self;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Identity,
}

impl Activation {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu if x < T::zero() => x * T::from_f64(LEAKY_ALPHA),
            _ => x,
        }
    }

    fn derivative<T: Real>(self, pre: T) -> T {
        match self {
            Activation::LeakyRelu if pre < T::zero() => T::from_f64(LEAKY_ALPHA),
            _ => T::one(),
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // Independent accumulators let the compiler vectorise the reduction.
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = acc.iter().copied().sum::<T>();
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Fully connected layer; `w` is `n_out × n_in`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Dense<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn init(n_in: usize, n_out: usize, activation: Activation, rs: &mut RandomStream) -> Self {
        let r = (6.0 / (n_in + n_out) as f64).sqrt();
        Dense {
            n_in,
            n_out,
            w: (0..n_in * n_out)
                .map(|_| T::from_f64((2.0 * rs.uniform() - 1.0) * r))
                .collect(),
            b: vec![T::zero(); n_out],
            activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Dense {
            w: vec![T::zero(); self.w.len()],
            b: vec![T::zero(); self.b.len()],
            ..*self
        }
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        let c = |xs: &[T]| xs.iter().map(|x| U::from_f64(x.to_f64().unwrap())).collect();
        Dense {
            n_in: self.n_in,
            n_out: self.n_out,
            w: c(&self.w),
            b: c(&self.b),
            activation: self.activation,
        }
    }

    fn check(&self) -> bool {
        self.w.len() == self.n_in * self.n_out && self.b.len() == self.n_out
    }

    /// Forward over `n` rows; returns pre-activations and outputs.
    pub fn forward(&self, x: &[T], n: usize) -> (Vec<T>, Vec<T>) {
        debug_assert_eq!(x.len(), n * self.n_in);
        let mut pre = vec![T::zero(); n * self.n_out];
        for r in 0..n {
            let xr = &x[r * self.n_in..(r + 1) * self.n_in];
            let pr = &mut pre[r * self.n_out..(r + 1) * self.n_out];
            for (o, p) in pr.iter_mut().enumerate() {
                *p = self.b[o] + dot(&self.w[o * self.n_in..(o + 1) * self.n_in], xr);
            }
        }
        let out = pre.iter().map(|&p| self.activation.apply(p)).collect();
        (pre, out)
    }

    /// Accumulates parameter gradients into `grad`; returns the input
    /// gradient when `need_dx`.
    pub fn backward(&self, x: &[T], pre: &[T], dout: &[T], n: usize, grad: &mut Dense<T>, need_dx: bool) -> Vec<T> {
        let mut dx = if need_dx {
            vec![T::zero(); n * self.n_in]
        } else {
            Vec::new()
        };
        for r in 0..n {
            let xr = &x[r * self.n_in..(r + 1) * self.n_in];
            for o in 0..self.n_out {
                let d = dout[r * self.n_out + o] * self.activation.derivative(pre[r * self.n_out + o]);
                if d == T::zero() {
                    continue;
                }
                grad.b[o] += d;
                axpy(&mut grad.w[o * self.n_in..(o + 1) * self.n_in], d, xr);
                if need_dx {
                    axpy(
                        &mut dx[r * self.n_in..(r + 1) * self.n_in],
                        d,
                        &self.w[o * self.n_in..(o + 1) * self.n_in],
                    );
                }
            }
        }
        dx
    }
}

/// Stack of dense layers applied row-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Inputs and pre-activations of every layer, kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache<T> {
    inputs: Vec<Vec<T>>,
    pres: Vec<Vec<T>>,
    n: usize,
}

impl<T: Real> Mlp<T> {
    /// Hidden layers use leaky ReLU; the last uses `last`.
    pub fn init(widths: &[usize], last: Activation, rs: &mut RandomStream) -> Self {
        let k = widths.len() - 1;
        Mlp {
            layers: (0..k)
                .map(|i| {
                    let act = if i + 1 == k { last } else { Activation::LeakyRelu };
                    Dense::init(widths[i], widths[i + 1], act, rs)
                })
                .collect(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn forward(&self, x: &[T], n: usize) -> (Vec<T>, MlpCache<T>) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pres: Vec::with_capacity(self.layers.len()),
            n,
        };
        let mut h = x.to_vec();
        for l in &self.layers {
            let (pre, out) = l.forward(&h, n);
            cache.inputs.push(std::mem::replace(&mut h, out));
            cache.pres.push(pre);
        }
        (h, cache)
    }

    pub fn backward(&self, cache: &MlpCache<T>, dout: &[T], grad: &mut Mlp<T>, need_dx: bool) -> Vec<T> {
        let mut d = dout.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            d = l.backward(
                &cache.inputs[i],
                &cache.pres[i],
                &d,
                cache.n,
                &mut grad.layers[i],
                need_dx || i > 0,
            );
        }
        d
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(Dense::cast).collect(),
        }
    }

    fn specs(&self, name: &str) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerSpec {
                name: format!("{name}.{i}"),
                n_in: l.n_in,
                n_out: l.n_out,
                activation: l.activation,
            })
            .collect()
    }
}

/// Uniform access to the dense layers of a model, for optimisers,
/// serialisation checks and finite differences.
pub trait Params<T: Real>: Clone {
    fn layers(&self) -> Vec<&Dense<T>>;
    fn layers_mut(&mut self) -> Vec<&mut Dense<T>>;

    fn n_params(&self) -> usize {
        self.layers().iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for l in z.layers_mut() {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|x| *x = T::zero());
        }
        z
    }

    /// Flattened parameters, layer by layer, weights then bias.
    fn flat(&self) -> Vec<T> {
        self.layers()
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    fn set_flat(&mut self, xs: &[T]) {
        let mut it = xs.iter();
        for l in self.layers_mut() {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|x| *x = *it.next().unwrap());
        }
    }

    fn param_mut(&mut self, mut index: usize) -> &mut T {
        for l in self.layers_mut() {
            let n = l.w.len();
            if index < n {
                return &mut l.w[index];
            }
            index -= n;
            if index < l.b.len() {
                return &mut l.b[index];
            }
            index -= l.b.len();
        }
        panic!("parameter index out of range")
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers_mut().into_iter().zip(other.layers()) {
            a.w.iter_mut().zip(&b.w).for_each(|(x, y)| *x += *y);
            a.b.iter_mut().zip(&b.b).for_each(|(x, y)| *x += *y);
        }
    }

    fn scale(&mut self, s: T) {
        for l in self.layers_mut() {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|x| *x = *x * s);
        }
    }

    fn sq_norm(&self) -> T {
        self.layers()
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b))
            .map(|&x| x * x)
            .sum()
    }

    fn all_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.check() && l.w.iter().chain(&l.b).all(|x| x.is_finite()))
    }
}

/// Node-to-aisle grouping used by the aisle embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct AisleIndex {
    pub aisle_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl AisleIndex {
    pub fn new(aisle_of: Vec<usize>) -> Self {
        let n_aisles = aisle_of.iter().map(|&a| a + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); n_aisles];
        for (v, &a) in aisle_of.iter().enumerate() {
            members[a].push(v);
        }
        AisleIndex { aisle_of, members }
    }

    pub fn from_layout(layout: &WarehouseLayout) -> Self {
        AisleIndex::new(layout.nodes().map(|v| layout.aisle_of(v)).collect())
    }
}

/// Scaled network input for one decision point.
#[derive(Clone, Debug)]
pub struct NetInput<T> {
    pub n: usize,
    /// `[efficiency, fairness]`, row-major per node.
    pub x: [Vec<T>; 2],
    pub aisles: Arc<AisleIndex>,
}

impl<T: Real> NetInput<T> {
    /// Applies the fixed per-feature input scales from the feature manifest.
    pub fn new(f: &FeatureTensor, aisles: Arc<AisleIndex>) -> Result<Self> {
        let n = f.n_nodes;
        if f.eff.len() != n * N_EFF || f.fair.len() != n * N_FAIR {
            return Err(Error::config(format!(
                "feature width must be {} per node, got {}",
                N_EFF + N_FAIR,
                (f.eff.len() + f.fair.len()) / n.max(1)
            )));
        }
        if aisles.aisle_of.len() != n {
            return Err(Error::config("aisle index does not match node count"));
        }
        let s = input_scales();
        let scale = |xs: &[f64], width: usize, off: usize| -> Vec<T> {
            xs.iter()
                .enumerate()
                .map(|(i, &x)| T::from_f64(x * s[off + i % width]))
                .collect()
        };
        Ok(NetInput {
            n,
            x: [scale(&f.eff, N_EFF, 0), scale(&f.fair, N_FAIR, N_EFF)],
            aisles,
        })
    }

    /// Both categories side by side per node (35 columns).
    pub fn concatenated(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * (N_EFF + N_FAIR));
        for v in 0..self.n {
            out.extend_from_slice(&self.x[0][v * N_EFF..(v + 1) * N_EFF]);
            out.extend_from_slice(&self.x[1][v * N_FAIR..(v + 1) * N_FAIR]);
        }
        out
    }
}

/// Softmax restricted to `mask`; invalid entries get probability 0.
pub fn masked_softmax<T: Real>(logits: &[T], mask: &[bool]) -> Vec<T> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(T::neg_infinity(), T::max);
    let mut p: Vec<T> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { T::zero() })
        .collect();
    let z: T = p.iter().copied().sum();
    p.iter_mut().for_each(|x| *x = *x / z);
    p
}

/// `log p(i)` under the masked softmax, computed from logits so it stays
/// finite when the probability underflows.
pub fn masked_log_prob<T: Real>(logits: &[T], mask: &[bool], i: usize) -> T {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(T::neg_infinity(), T::max);
    let z: T = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| (l - max).exp())
        .sum();
    logits[i] - max - z.ln()
}

/// Entropy of a (masked) distribution; zero-probability entries add nothing.
pub fn entropy<T: Real>(probs: &[T]) -> T {
    probs.iter().filter(|&&p| p > T::zero()).map(|&p| -p * p.ln()).sum()
}

/// Gradient with respect to the logits of
/// `coef_logp · log p(action) + coef_entropy · H(p)` under a masked softmax.
/// Masked nodes (probability zero) receive zero gradient.
pub fn logit_grad<T: Real>(probs: &[T], action: usize, coef_logp: T, coef_entropy: T) -> Vec<T> {
    let h = entropy(probs);
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p == T::zero() {
                return T::zero();
            }
            let hit = if i == action { T::one() } else { T::zero() };
            coef_logp * (hit - p) - coef_entropy * p * (p.ln() + h)
        })
        .collect()
}

/// Side-by-side concatenation of two row-major matrices.
fn hstack<T: Real>(a: &[T], wa: usize, b: &[T], wb: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * (wa + wb));
    for r in 0..n {
        out.extend_from_slice(&a[r * wa..(r + 1) * wa]);
        out.extend_from_slice(&b[r * wb..(r + 1) * wb]);
    }
    out
}

fn hsplit<T: Real>(x: &[T], wa: usize, wb: usize, n: usize) -> (Vec<T>, Vec<T>) {
    let mut a = Vec::with_capacity(n * wa);
    let mut b = Vec::with_capacity(n * wb);
    for r in 0..n {
        let row = &x[r * (wa + wb)..(r + 1) * (wa + wb)];
        a.extend_from_slice(&row[..wa]);
        b.extend_from_slice(&row[wa..]);
    }
    (a, b)
}

/// Adam with global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: f64,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64, max_grad_norm: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Descends along `grad`; returns the pre-clip gradient norm.
    pub fn step<P: Params<T>>(&mut self, params: &mut P, grad: &P) -> Result<f64> {
        let g = grad.flat();
        let norm = g.iter().map(|&x| x * x).sum::<T>().sqrt().to_f64().unwrap();
        if !norm.is_finite() {
            return Err(Error::Training(format!("non-finite gradient norm {norm}")));
        }
        let clip = if norm > self.max_grad_norm {
            self.max_grad_norm / norm
        } else {
            1.0
        };
        if self.m.len() != g.len() {
            self.m = vec![T::zero(); g.len()];
            self.v = vec![T::zero(); g.len()];
            self.t = 0;
        }
        self.t += 1;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = T::from_f64(self.lr * c2.sqrt() / c1);
        let eps = T::from_f64(self.eps * c2.sqrt());
        let clip = T::from_f64(clip);
        let mut p = params.flat();
        for i in 0..p.len() {
            let gi = g[i] * clip;
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * gi;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * gi * gi;
            p[i] = p[i] - step * self.m[i] / (self.v[i].sqrt() + eps);
        }
        params.set_flat(&p);
        Ok(norm)
    }
}
