use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Actor, ActorKind, Critic, Params, Real};
use crate::env::feature_manifest_hash;
use crate::error::{Error, Result};
use crate::stochastic::RandomStream;

pub const CHECKPOINT_VERSION: u32 = 1;

const HEAD_NOTE: &str = "actor head: the two 16-wide category embeddings are concatenated (32) \
and then passed through a 16-unit leaky-ReLU layer and a single linear output; the alternative \
reading applies the 16-unit layer per category before concatenation";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureManifest {
    pub actor_kind: ActorKind,
    pub layers: Vec<LayerSpec>,
    pub actor_params: usize,
    pub critic_params: usize,
    pub notes: String,
}

impl ArchitectureManifest {
    pub fn describe<T: Real>(actor: &Actor<T>, critic: &Critic<T>) -> Self {
        let mut layers = actor.layer_specs();
        layers.extend(critic.layer_specs());
        ArchitectureManifest {
            actor_kind: actor.kind(),
            layers,
            actor_params: actor.n_params(),
            critic_params: critic.n_params(),
            notes: HEAD_NOTE.into(),
        }
    }

    /// Manifest of a freshly built network of the given actor kind.
    pub fn canonical(kind: ActorKind) -> Self {
        let mut rs = RandomStream::new(0);
        let actor = Actor::<f64>::init(kind, &mut rs);
        let critic = Critic::<f64>::init(&mut rs);
        Self::describe(&actor, &critic)
    }
}

/// Self-describing policy file. Parameters are stored as 64-bit values so
/// 32-bit training parameters survive the JSON round trip exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub architecture: ArchitectureManifest,
    pub feature_manifest_hash: String,
    /// Preference weights the policy was trained for.
    pub weights: [f64; 2],
    pub efficiency_only: bool,
    pub reward_scales: [f64; 2],
    pub env_steps: u64,
    pub actor: Actor<f64>,
    pub critic: Critic<f64>,
}

impl Checkpoint {
    pub fn new<T: Real>(actor: &Actor<T>, critic: &Critic<T>, weights: [f64; 2]) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            architecture: ArchitectureManifest::describe(actor, critic),
            feature_manifest_hash: feature_manifest_hash(),
            weights,
            efficiency_only: false,
            reward_scales: [1.0, 1.0],
            env_steps: 0,
            actor: actor.cast(),
            critic: critic.cast(),
        }
    }

    pub fn actor<T: Real>(&self) -> Actor<T> {
        self.actor.cast()
    }

    pub fn critic<T: Real>(&self) -> Critic<T> {
        self.critic.cast()
    }

    /// Checks version, feature manifest and that the stored parameters match
    /// both the recorded and the canonical architecture.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {}", self.version));
        }
        if self.feature_manifest_hash != feature_manifest_hash() {
            return Err("feature manifest hash differs from this build".into());
        }
        let found = ArchitectureManifest::describe(&self.actor, &self.critic);
        if found != self.architecture {
            return Err("parameter arrays do not match the recorded architecture".into());
        }
        if found != ArchitectureManifest::canonical(self.architecture.actor_kind) {
            return Err("architecture differs from the network built by this version".into());
        }
        if !self.actor.all_finite() || !self.critic.all_finite() {
            return Err("non-finite or mis-shaped parameters".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let err = |e: std::io::Error| Error::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(err)?;
        }
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let err = |message: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        ck.validate().map_err(err)?;
        Ok(ck)
    }
}
