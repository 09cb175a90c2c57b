//! Agent checkpoints as pretty-printed JSON. Parameter and moment arrays are
//! stored as base64 of little-endian `f64` bytes next to their declared
//! element count, so a file round-trips bit-exactly.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::ddpg::{DdpgAgent, Hyperparams, OuNoiseProcess};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Architecture, MlpNetwork};
use crate::rewards::RewardKind;
use crate::trainer::AgentRole;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedArray {
    pub count: usize,
    pub data: String,
}

impl EncodedArray {
    pub fn encode(values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        EncodedArray {
            count: values.len(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self, what: &str) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Incompatible(format!("{what}: invalid base64: {e}")))?;
        if bytes.len() != self.count * 8 {
            return Err(Error::Incompatible(format!(
                "{what}: declared {} values but data holds {} bytes",
                self.count,
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedAdam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub first_moment: EncodedArray,
    pub second_moment: EncodedArray,
}

impl EncodedAdam {
    fn encode(s: &AdamState) -> Self {
        EncodedAdam {
            learning_rate: s.learning_rate,
            beta1: s.beta1,
            beta2: s.beta2,
            epsilon: s.epsilon,
            step_count: s.step_count,
            first_moment: EncodedArray::encode(&s.first_moment),
            second_moment: EncodedArray::encode(&s.second_moment),
        }
    }

    fn decode(&self, what: &str, expected: usize) -> Result<AdamState> {
        let first = self.first_moment.decode(what)?;
        let second = self.second_moment.decode(what)?;
        if first.len() != expected || second.len() != expected {
            return Err(Error::Incompatible(format!(
                "{what}: moments hold {}/{} values, architecture needs {expected}",
                first.len(),
                second.len()
            )));
        }
        Ok(AdamState {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            step_count: self.step_count,
            first_moment: first,
            second_moment: second,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub episodes_completed: usize,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub dataset_hash: String,
    pub reward: Option<RewardKind>,
    /// Feature points per goal the agent was trained with.
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub role: AgentRole,
    pub actor_architecture: Architecture,
    pub critic_architecture: Architecture,
    pub actor: EncodedArray,
    pub critic: EncodedArray,
    pub actor_target: EncodedArray,
    pub critic_target: EncodedArray,
    pub actor_optimizer: EncodedAdam,
    pub critic_optimizer: EncodedAdam,
    pub metadata: TrainingMetadata,
}

fn network(arch: &Architecture, data: &EncodedArray, what: &str) -> Result<MlpNetwork> {
    let values = data.decode(what)?;
    let expected = arch.parameter_count();
    if values.len() != expected {
        return Err(Error::Incompatible(format!(
            "{what}: {} parameters stored, architecture {:?} needs {expected}",
            values.len(),
            arch.layer_sizes
        )));
    }
    MlpNetwork::from_parameters(arch, &values)
}

impl Checkpoint {
    pub fn from_agent(agent: &DdpgAgent, role: AgentRole, metadata: TrainingMetadata) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            role,
            actor_architecture: agent.actor.architecture(),
            critic_architecture: agent.critic.architecture(),
            actor: EncodedArray::encode(&agent.actor.export_parameters()),
            critic: EncodedArray::encode(&agent.critic.export_parameters()),
            actor_target: EncodedArray::encode(&agent.actor_target.export_parameters()),
            critic_target: EncodedArray::encode(&agent.critic_target.export_parameters()),
            actor_optimizer: EncodedAdam::encode(&agent.actor_opt),
            critic_optimizer: EncodedAdam::encode(&agent.critic_opt),
            metadata,
        }
    }

    /// Rebuilds the full learner. Exploration noise starts fresh from `noise_seed`.
    pub fn to_agent(&self, noise_seed: u64) -> Result<DdpgAgent> {
        self.check_version()?;
        let actor = network(&self.actor_architecture, &self.actor, "actor")?;
        let critic = network(&self.critic_architecture, &self.critic, "critic")?;
        let actor_target = network(&self.actor_architecture, &self.actor_target, "actor target")?;
        let critic_target = network(&self.critic_architecture, &self.critic_target, "critic target")?;
        let hp = &self.metadata.hyperparams;
        let noise = OuNoiseProcess::new(actor.output_size(), hp.ou_theta, hp.ou_sigma, hp.ou_dt, noise_seed);
        let mut agent = DdpgAgent::from_networks(actor, critic, hp, noise)?;
        agent.actor_target = actor_target;
        agent.critic_target = critic_target;
        agent.actor_opt = self
            .actor_optimizer
            .decode("actor optimizer", agent.actor.parameter_count())?;
        agent.critic_opt = self
            .critic_optimizer
            .decode("critic optimizer", agent.critic.parameter_count())?;
        Ok(agent)
    }

    /// Just the actor, for evaluation.
    pub fn actor(&self) -> Result<MlpNetwork> {
        self.check_version()?;
        network(&self.actor_architecture, &self.actor, "actor")
    }

    fn check_version(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint format {}, this build reads {CHECKPOINT_VERSION}",
                self.format_version
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    /// Parses and fully validates, including every array length.
    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Incompatible(format!("malformed checkpoint: {e}")))?;
        ckpt.to_agent(0)?;
        Ok(ckpt)
    }

    /// Writes to a sibling temporary file and renames it over `path`, so an
    /// interrupted save never leaves a truncated checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, self.to_json()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> DdpgAgent {
        let hp = Hyperparams {
            hidden_layers: 2,
            hidden_size: 8,
            ..Hyperparams::default()
        };
        DdpgAgent::new(5, 2, &hp, 4).unwrap()
    }

    fn meta(agent: &DdpgAgent) -> TrainingMetadata {
        TrainingMetadata {
            episodes_completed: 3,
            seed: 4,
            hyperparams: Hyperparams {
                hidden_layers: agent.actor.layer_sizes().len() - 2,
                hidden_size: 8,
                ..Hyperparams::default()
            },
            dataset_hash: "abc".into(),
            reward: Some(RewardKind::Max),
            m: 4,
        }
    }

    #[test]
    fn array_round_trip_is_bit_exact() {
        let v = vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.25];
        let back = EncodedArray::encode(&v).decode("x").unwrap();
        assert_eq!(
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let a = agent();
        let c = Checkpoint::from_agent(&a, AgentRole::Orientation, meta(&a));
        let text = c.to_json();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
        let restored = back.to_agent(0).unwrap();
        assert_eq!(restored.actor, a.actor);
        assert_eq!(restored.critic_opt, a.critic_opt);
        let s = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(restored.actor.forward(&s).unwrap(), a.actor.forward(&s).unwrap());
    }

    #[test]
    fn tampering_is_rejected() {
        let a = agent();
        let c = Checkpoint::from_agent(&a, AgentRole::Position, meta(&a));
        let mut bad = c.clone();
        bad.actor.count += 1;
        assert!(matches!(Checkpoint::from_json(&bad.to_json()), Err(Error::Incompatible(_))));
        let mut bad = c.clone();
        bad.actor_architecture.layer_sizes[1] = 9;
        assert!(matches!(Checkpoint::from_json(&bad.to_json()), Err(Error::Incompatible(_))));
        let mut bad = c.clone();
        bad.format_version = 99;
        assert!(matches!(Checkpoint::from_json(&bad.to_json()), Err(Error::Incompatible(_))));
        assert!(matches!(Checkpoint::from_json("{"), Err(Error::Incompatible(_))));
    }
}
