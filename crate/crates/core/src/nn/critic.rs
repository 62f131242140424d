use serde::{Deserialize, Serialize};

use super::{hsplit, hstack, Activation, Dense, Mlp, MlpCache, NetInput, Params, Real, EMBED, HIDDEN};
use crate::env::{N_EFF, N_FAIR};
use crate::stochastic::RandomStream;

/// Invariant feed-forward critic: per-node category encoders, a shared
/// layer, sum pooling over nodes and a linear head with one value per
/// objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Critic<T> {
    /// width → 64 → 64 → 16 per category.
    pub encoder: [Mlp<T>; 2],
    /// 32 → 16.
    pub shared: Mlp<T>,
    /// 16 → 2 (efficiency, fairness).
    pub head: Mlp<T>,
}

pub struct CriticCache<T> {
    enc: [MlpCache<T>; 2],
    shared: MlpCache<T>,
    head: MlpCache<T>,
    n: usize,
}

impl<T: Real> Critic<T> {
    pub fn init(rs: &mut RandomStream) -> Self {
        let enc = |w: usize, rs: &mut RandomStream| Mlp::init(&[w, HIDDEN, HIDDEN, EMBED], Activation::LeakyRelu, rs);
        Critic {
            encoder: [enc(N_EFF, rs), enc(N_FAIR, rs)],
            shared: Mlp::init(&[2 * EMBED, EMBED], Activation::LeakyRelu, rs),
            head: Mlp::init(&[EMBED, 2], Activation::Identity, rs),
        }
    }

    fn pooled_cached(&self, inp: &NetInput<T>) -> (Vec<T>, [MlpCache<T>; 2], MlpCache<T>) {
        let n = inp.n;
        let (h0, c0) = self.encoder[0].forward(&inp.x[0], n);
        let (h1, c1) = self.encoder[1].forward(&inp.x[1], n);
        let (u, cs) = self.shared.forward(&hstack(&h0, EMBED, &h1, EMBED, n), n);
        let mut pooled = vec![T::zero(); EMBED];
        for row in u.chunks_exact(EMBED) {
            pooled.iter_mut().zip(row).for_each(|(p, &x)| *p += x);
        }
        (pooled, [c0, c1], cs)
    }

    /// Sum-pooled node representation fed to the value head.
    pub fn pooled(&self, inp: &NetInput<T>) -> Vec<T> {
        self.pooled_cached(inp).0
    }

    pub fn forward_cached(&self, inp: &NetInput<T>) -> ([T; 2], CriticCache<T>) {
        let (pooled, enc, shared) = self.pooled_cached(inp);
        let (v, head) = self.head.forward(&pooled, 1);
        (
            [v[0], v[1]],
            CriticCache {
                enc,
                shared,
                head,
                n: inp.n,
            },
        )
    }

    pub fn forward(&self, inp: &NetInput<T>) -> [T; 2] {
        self.forward_cached(inp).0
    }

    pub fn backward(&self, cache: &CriticCache<T>, dv: [T; 2], grad: &mut Self) {
        let n = cache.n;
        let dpooled = self.head.backward(&cache.head, &dv, &mut grad.head, true);
        let du: Vec<T> = (0..n).flat_map(|_| dpooled.iter().copied()).collect();
        let dh = self.shared.backward(&cache.shared, &du, &mut grad.shared, true);
        let (dh0, dh1) = hsplit(&dh, EMBED, EMBED, n);
        self.encoder[0].backward(&cache.enc[0], &dh0, &mut grad.encoder[0], false);
        self.encoder[1].backward(&cache.enc[1], &dh1, &mut grad.encoder[1], false);
    }

    pub fn cast<U: Real>(&self) -> Critic<U> {
        Critic {
            encoder: [self.encoder[0].cast(), self.encoder[1].cast()],
            shared: self.shared.cast(),
            head: self.head.cast(),
        }
    }

    pub(crate) fn layer_specs(&self) -> Vec<super::LayerSpec> {
        let mut s = self.encoder[0].specs("critic.encoder.efficiency");
        s.extend(self.encoder[1].specs("critic.encoder.fairness"));
        s.extend(self.shared.specs("critic.shared"));
        s.extend(self.head.specs("critic.head"));
        s
    }
}

impl<T: Real> Params<T> for Critic<T> {
    fn layers(&self) -> Vec<&Dense<T>> {
        self.encoder
            .iter()
            .chain([&self.shared, &self.head])
            .flat_map(|m| &m.layers)
            .collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense<T>> {
        self.encoder
            .iter_mut()
            .chain([&mut self.shared, &mut self.head])
            .flat_map(|m| m.layers.iter_mut())
            .collect()
    }
}
