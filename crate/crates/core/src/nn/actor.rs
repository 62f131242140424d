use serde::{Deserialize, Serialize};

use super::{hsplit, hstack, masked_softmax, Activation, Dense, Mlp, MlpCache, NetInput, Params, Real, EMBED, HIDDEN};
use crate::env::{N_EFF, N_FAIR};
use crate::error::{Error, Result};
use crate::stochastic::RandomStream;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActorKind {
    /// Aisle-embedding actor with separate feature categories.
    Aemo,
    /// Per-node feed-forward actor without aggregation.
    InvFf,
}

impl std::str::FromStr for ActorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aemo" => Ok(ActorKind::Aemo),
            "inv-ff" => Ok(ActorKind::InvFf),
            _ => Err(Error::config(format!("unknown actor '{s}' (expected aemo or inv-ff)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActorOutput<T> {
    pub logits: Vec<T>,
    /// Masked softmax: zero on invalid nodes, sums to one over valid ones.
    pub probs: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AemoActor<T> {
    /// Node encoders per category: width → 64 → 64 → 16.
    pub encoder: [Mlp<T>; 2],
    /// Per-category embedding of `[node, aisle mean]`: 32 → 64 → 16.
    pub embed: [Mlp<T>; 2],
    /// Combined head: 32 → 16 → 1.
    pub head: Mlp<T>,
}

pub struct AemoCache<T> {
    enc: [MlpCache<T>; 2],
    emb: [MlpCache<T>; 2],
    head: MlpCache<T>,
}

impl<T: Real> AemoActor<T> {
    pub fn init(rs: &mut RandomStream) -> Self {
        let enc = |w: usize, rs: &mut RandomStream| Mlp::init(&[w, HIDDEN, HIDDEN, EMBED], Activation::LeakyRelu, rs);
        let emb = |rs: &mut RandomStream| Mlp::init(&[2 * EMBED, HIDDEN, EMBED], Activation::LeakyRelu, rs);
        AemoActor {
            encoder: [enc(N_EFF, rs), enc(N_FAIR, rs)],
            embed: [emb(rs), emb(rs)],
            head: Mlp::init(&[2 * EMBED, EMBED, 1], Activation::Identity, rs),
        }
    }

    /// Node and aisle-mean encodings side by side, `n × 32`.
    fn with_aisle_mean(h: &[T], inp: &NetInput<T>) -> Vec<T> {
        let n = inp.n;
        let mut means = vec![T::zero(); inp.aisles.members.len() * EMBED];
        for (a, nodes) in inp.aisles.members.iter().enumerate() {
            let m = &mut means[a * EMBED..(a + 1) * EMBED];
            for &v in nodes {
                for (mj, &hj) in m.iter_mut().zip(&h[v * EMBED..(v + 1) * EMBED]) {
                    *mj += hj;
                }
            }
            let inv = T::one() / T::from_f64(nodes.len().max(1) as f64);
            m.iter_mut().for_each(|x| *x = *x * inv);
        }
        let mut out = Vec::with_capacity(n * 2 * EMBED);
        for v in 0..n {
            let a = inp.aisles.aisle_of[v];
            out.extend_from_slice(&h[v * EMBED..(v + 1) * EMBED]);
            out.extend_from_slice(&means[a * EMBED..(a + 1) * EMBED]);
        }
        out
    }

    pub fn logits(&self, inp: &NetInput<T>) -> (Vec<T>, AemoCache<T>) {
        let n = inp.n;
        let mut enc = Vec::with_capacity(2);
        let mut emb = Vec::with_capacity(2);
        let mut z = Vec::with_capacity(2);
        for c in 0..2 {
            let (h, ce) = self.encoder[c].forward(&inp.x[c], n);
            let (zc, cm) = self.embed[c].forward(&Self::with_aisle_mean(&h, inp), n);
            enc.push(ce);
            emb.push(cm);
            z.push(zc);
        }
        let (logits, head) = self.head.forward(&hstack(&z[0], EMBED, &z[1], EMBED, n), n);
        let [e0, e1]: [MlpCache<T>; 2] = enc.try_into().ok().unwrap();
        let [m0, m1]: [MlpCache<T>; 2] = emb.try_into().ok().unwrap();
        (
            logits,
            AemoCache {
                enc: [e0, e1],
                emb: [m0, m1],
                head,
            },
        )
    }

    pub fn backward(&self, inp: &NetInput<T>, cache: &AemoCache<T>, dlogits: &[T], grad: &mut Self) {
        let n = inp.n;
        let dz = self.head.backward(&cache.head, dlogits, &mut grad.head, true);
        let (dz0, dz1) = hsplit(&dz, EMBED, EMBED, n);
        for (c, dzc) in [dz0, dz1].into_iter().enumerate() {
            let din = self.embed[c].backward(&cache.emb[c], &dzc, &mut grad.embed[c], true);
            let (mut dh, dmean) = hsplit(&din, EMBED, EMBED, n);
            for nodes in &inp.aisles.members {
                let inv = T::one() / T::from_f64(nodes.len().max(1) as f64);
                let mut s = [T::zero(); EMBED];
                for &v in nodes {
                    for (sj, &dj) in s.iter_mut().zip(&dmean[v * EMBED..(v + 1) * EMBED]) {
                        *sj += dj;
                    }
                }
                for &u in nodes {
                    for (dj, &sj) in dh[u * EMBED..(u + 1) * EMBED].iter_mut().zip(&s) {
                        *dj += sj * inv;
                    }
                }
            }
            self.encoder[c].backward(&cache.enc[c], &dh, &mut grad.encoder[c], false);
        }
    }
}

impl<T: Real> Params<T> for AemoActor<T> {
    fn layers(&self) -> Vec<&Dense<T>> {
        self.encoder
            .iter()
            .chain(&self.embed)
            .chain(std::iter::once(&self.head))
            .flat_map(|m| &m.layers)
            .collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense<T>> {
        self.encoder
            .iter_mut()
            .chain(self.embed.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .flat_map(|m| m.layers.iter_mut())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvFfActor<T> {
    /// 35 → 64 → 64 → 16 → 1, applied to every node independently.
    pub mlp: Mlp<T>,
}

impl<T: Real> InvFfActor<T> {
    pub fn init(rs: &mut RandomStream) -> Self {
        InvFfActor {
            mlp: Mlp::init(&[N_EFF + N_FAIR, HIDDEN, HIDDEN, EMBED, 1], Activation::Identity, rs),
        }
    }
}

impl<T: Real> Params<T> for InvFfActor<T> {
    fn layers(&self) -> Vec<&Dense<T>> {
        self.mlp.layers.iter().collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense<T>> {
        self.mlp.layers.iter_mut().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Actor<T> {
    Aemo(AemoActor<T>),
    InvFf(InvFfActor<T>),
}

pub enum ActorCache<T> {
    Aemo(AemoCache<T>),
    InvFf(MlpCache<T>),
}

impl<T: Real> Actor<T> {
    pub fn init(kind: ActorKind, rs: &mut RandomStream) -> Self {
        match kind {
            ActorKind::Aemo => Actor::Aemo(AemoActor::init(rs)),
            ActorKind::InvFf => Actor::InvFf(InvFfActor::init(rs)),
        }
    }

    pub fn kind(&self) -> ActorKind {
        match self {
            Actor::Aemo(_) => ActorKind::Aemo,
            Actor::InvFf(_) => ActorKind::InvFf,
        }
    }

    pub fn forward_cached(&self, inp: &NetInput<T>, mask: &[bool]) -> Result<(ActorOutput<T>, ActorCache<T>)> {
        if mask.len() != inp.n || !mask.iter().any(|&m| m) {
            return Err(Error::Training("actor needs a non-empty mask over all nodes".into()));
        }
        let (logits, cache) = match self {
            Actor::Aemo(a) => {
                let (l, c) = a.logits(inp);
                (l, ActorCache::Aemo(c))
            }
            Actor::InvFf(a) => {
                let (l, c) = a.mlp.forward(&inp.concatenated(), inp.n);
                (l, ActorCache::InvFf(c))
            }
        };
        let probs = masked_softmax(&logits, mask);
        Ok((ActorOutput { logits, probs }, cache))
    }

    pub fn forward(&self, inp: &NetInput<T>, mask: &[bool]) -> Result<ActorOutput<T>> {
        Ok(self.forward_cached(inp, mask)?.0)
    }

    /// Accumulates `∂loss/∂θ` into `grad` given `∂loss/∂logits`.
    pub fn backward(&self, inp: &NetInput<T>, cache: &ActorCache<T>, dlogits: &[T], grad: &mut Self) {
        match (self, cache, grad) {
            (Actor::Aemo(a), ActorCache::Aemo(c), Actor::Aemo(g)) => a.backward(inp, c, dlogits, g),
            (Actor::InvFf(a), ActorCache::InvFf(c), Actor::InvFf(g)) => {
                a.mlp.backward(c, dlogits, &mut g.mlp, false);
            }
            _ => panic!("actor, cache and gradient kinds differ"),
        }
    }

    pub fn cast<U: Real>(&self) -> Actor<U> {
        match self {
            Actor::Aemo(a) => Actor::Aemo(AemoActor {
                encoder: [a.encoder[0].cast(), a.encoder[1].cast()],
                embed: [a.embed[0].cast(), a.embed[1].cast()],
                head: a.head.cast(),
            }),
            Actor::InvFf(a) => Actor::InvFf(InvFfActor { mlp: a.mlp.cast() }),
        }
    }

    pub(crate) fn layer_specs(&self) -> Vec<super::LayerSpec> {
        match self {
            Actor::Aemo(a) => {
                let mut s = a.encoder[0].specs("actor.encoder.efficiency");
                s.extend(a.encoder[1].specs("actor.encoder.fairness"));
                s.extend(a.embed[0].specs("actor.embed.efficiency"));
                s.extend(a.embed[1].specs("actor.embed.fairness"));
                s.extend(a.head.specs("actor.head"));
                s
            }
            Actor::InvFf(a) => a.mlp.specs("actor.node"),
        }
    }
}

impl<T: Real> Params<T> for Actor<T> {
    fn layers(&self) -> Vec<&Dense<T>> {
        match self {
            Actor::Aemo(a) => a.layers(),
            Actor::InvFf(a) => a.layers(),
        }
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense<T>> {
        match self {
            Actor::Aemo(a) => a.layers_mut(),
            Actor::InvFf(a) => a.layers_mut(),
        }
    }
}
