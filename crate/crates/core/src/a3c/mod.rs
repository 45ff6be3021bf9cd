//! Multi-actor single-critic network and the A3C loss terms.
//!
//! One convolutional trunk feeds a scalar critic head and one softmax actor
//! head per agent. All heads share the trunk.

mod checkpoint;
mod loss;
mod obs;
mod policy;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::autodiff::Var;
use crate::error::{config, contract, Result};
use crate::tensor::{Scalar, Tensor};

pub use checkpoint::{load_params, read_tensors, save_params, write_tensors, CHECKPOINT_MAGIC};
pub use loss::{
    actor_factors, actor_loss, advantage_target, critic_loss, discounted_return, entropy,
    entropy_sum, rollout_loss, total_loss, AdvantageMode, LossBreakdown, LossCoefficients,
    Trajectory, Transition, LOG_FLOOR,
};
pub use obs::{frame_to_input, ObservationStack};
pub use policy::{greedy_actions, sample_actions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    fn output_size(&self, input: usize) -> Option<usize> {
        (self.kernel > 0 && self.stride > 0 && input >= self.kernel)
            .then(|| (input - self.kernel) / self.stride + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkArch {
    /// Stacked frames.
    pub input_channels: usize,
    /// Side of the square input image.
    pub input_size: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub hidden: usize,
    pub n_agents: usize,
    pub n_actions: usize,
}

impl NetworkArch {
    /// 4x84x84 input, conv 16x8x8/4, conv 32x4x4/2, dense 256.
    pub fn standard(n_agents: usize) -> Self {
        Self {
            input_channels: 4,
            input_size: 84,
            conv1: ConvSpec {
                filters: 16,
                kernel: 8,
                stride: 4,
            },
            conv2: ConvSpec {
                filters: 32,
                kernel: 4,
                stride: 2,
            },
            hidden: 256,
            n_agents,
            n_actions: crate::env::N_ACTIONS,
        }
    }

    /// Same topology on an 8x8 input with 2 filters per convolution, small
    /// enough for exhaustive finite-difference checks.
    pub fn reduced(n_agents: usize) -> Self {
        Self {
            input_channels: 4,
            input_size: 8,
            conv1: ConvSpec {
                filters: 2,
                kernel: 4,
                stride: 2,
            },
            conv2: ConvSpec {
                filters: 2,
                kernel: 2,
                stride: 1,
            },
            hidden: 8,
            n_agents,
            n_actions: crate::env::N_ACTIONS,
        }
    }

    fn conv_sizes(&self) -> Option<(usize, usize)> {
        let a = self.conv1.output_size(self.input_size)?;
        let b = self.conv2.output_size(a)?;
        Some((a, b))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.input_channels,
            self.input_size,
            self.conv1.filters,
            self.conv2.filters,
            self.hidden,
            self.n_agents,
            self.n_actions,
        ];
        if positive.contains(&0) {
            return Err(config(format!("architecture has a zero dimension: {self:?}")));
        }
        if self.conv_sizes().is_none() {
            return Err(config(format!(
                "convolutions do not fit a {0}x{0} input",
                self.input_size
            )));
        }
        Ok(())
    }

    pub fn flat_features(&self) -> usize {
        let (_, b) = self.conv_sizes().unwrap_or((0, 0));
        self.conv2.filters * b * b
    }

    /// `(name, shape)` of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (c1, c2) = (self.conv1, self.conv2);
        let mut out = vec![
            (
                "conv1.w".to_string(),
                vec![c1.filters, self.input_channels, c1.kernel, c1.kernel],
            ),
            ("conv1.b".to_string(), vec![c1.filters]),
            (
                "conv2.w".to_string(),
                vec![c2.filters, c1.filters, c2.kernel, c2.kernel],
            ),
            ("conv2.b".to_string(), vec![c2.filters]),
            ("fc.w".to_string(), vec![self.hidden, self.flat_features()]),
            ("fc.b".to_string(), vec![self.hidden]),
            ("critic.w".to_string(), vec![1, self.hidden]),
            ("critic.b".to_string(), vec![1]),
        ];
        for i in 0..self.n_agents {
            out.push((format!("actor{i}.w"), vec![self.n_actions, self.hidden]));
            out.push((format!("actor{i}.b"), vec![self.n_actions]));
        }
        out
    }

    /// Index of the first parameter tensor of actor head `i`.
    pub fn actor_param_index(&self, i: usize) -> usize {
        8 + 2 * i
    }

    /// Indices of the critic head's tensors.
    pub fn critic_param_indices(&self) -> [usize; 2] {
        [6, 7]
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.input_channels, self.input_size, self.input_size]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f32> {
    pub arch: NetworkArch,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> NetworkParams<T> {
    /// Uniform initialisation in `±1/sqrt(fan_in)`, fan-in of the layer a
    /// tensor belongs to.
    pub fn init(arch: &NetworkArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = arch.param_shapes();
        let mut tensors = Vec::with_capacity(shapes.len());
        for pair in shapes.chunks(2) {
            let w_shape = &pair[0].1;
            let fan_in: usize = w_shape[1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            for (_, shape) in pair {
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                    .collect();
                tensors.push(Tensor::new(shape.clone(), data)?);
            }
        }
        Ok(Self {
            arch: arch.clone(),
            tensors,
        })
    }

    pub fn from_tensors(arch: &NetworkArch, tensors: Vec<Tensor<T>>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(contract(format!(
                "architecture has {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(contract(format!(
                    "{name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            arch: arch.clone(),
            tensors,
        })
    }

    /// Sets every actor and critic weight and bias to zero.
    pub fn zero_heads(&mut self) {
        for t in &mut self.tensors[6..] {
            t.data_mut().fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            arch: self.arch.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Tape handles of one forward pass: a `[n_actions]` distribution per agent
/// and the scalar state value.
#[derive(Clone, Debug)]
pub struct HeadVars {
    pub policies: Vec<Var>,
    pub value: Var,
}

/// Records a forward pass on `tape`, whose parameters must follow
/// `arch.param_shapes()`.
pub fn forward_on_tape<T: Scalar>(
    tape: &mut Tape<'_, T>,
    arch: &NetworkArch,
    obs: Var,
) -> Result<HeadVars> {
    if tape.value(obs).shape() != arch.input_shape() {
        return Err(contract(format!(
            "observation shape {:?}, network expects {:?}",
            tape.value(obs).shape(),
            arch.input_shape()
        )));
    }
    let p = |tape: &mut Tape<'_, T>, i| tape.param(i);
    let (w1, b1) = (p(tape, 0)?, p(tape, 1)?);
    let h = tape.conv2d(obs, w1, Some(b1), arch.conv1.stride)?;
    let h = tape.relu(h);
    let (w2, b2) = (p(tape, 2)?, p(tape, 3)?);
    let h = tape.conv2d(h, w2, Some(b2), arch.conv2.stride)?;
    let h = tape.relu(h);
    let (w3, b3) = (p(tape, 4)?, p(tape, 5)?);
    let h = tape.dense(h, w3, Some(b3))?;
    let h = tape.relu(h);
    let (wc, bc) = (p(tape, 6)?, p(tape, 7)?);
    let v = tape.dense(h, wc, Some(bc))?;
    let value = tape.pick(v, 0)?;
    let mut policies = Vec::with_capacity(arch.n_agents);
    for i in 0..arch.n_agents {
        let k = arch.actor_param_index(i);
        let (wa, ba) = (p(tape, k)?, p(tape, k + 1)?);
        let logits = tape.dense(h, wa, Some(ba))?;
        policies.push(tape.softmax(logits)?);
    }
    Ok(HeadVars { policies, value })
}

/// Policies and value for one observation of shape `[C, H, W]`.
pub fn forward<T: Scalar>(
    params: &NetworkParams<T>,
    obs: &Tensor<T>,
) -> Result<(Vec<Vec<T>>, T)> {
    if params.tensors.len() != params.arch.param_shapes().len() {
        return Err(contract("parameter list does not match the architecture"));
    }
    let mut tape = Tape::new(&params.tensors);
    let x = tape.constant(obs.clone());
    let heads = forward_on_tape(&mut tape, &params.arch, x)?;
    let policies = heads
        .policies
        .iter()
        .map(|&p| tape.value(p).data().to_vec())
        .collect();
    Ok((policies, tape.value(heads.value).item()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_obs(arch: &NetworkArch, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = arch.input_shape();
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen::<f32>()).collect()).unwrap()
    }

    #[test]
    fn standard_shapes() {
        let arch = NetworkArch::standard(2);
        assert_eq!(arch.conv_sizes(), Some((20, 9)));
        assert_eq!(arch.flat_features(), 2592);
        let shapes = arch.param_shapes();
        assert_eq!(shapes.len(), 12);
        assert_eq!(shapes[0].1, vec![16, 4, 8, 8]);
        assert_eq!(shapes[2].1, vec![32, 16, 4, 4]);
        assert_eq!(shapes[4].1, vec![256, 2592]);
        assert_eq!(shapes[10].1, vec![5, 256]);
    }

    #[test]
    fn zero_heads_give_uniform_policies() {
        let arch = NetworkArch::standard(2);
        let mut params = NetworkParams::<f32>::init(&arch, 1).unwrap();
        params.zero_heads();
        let (pi, v) = forward(&params, &random_obs(&arch, 2)).unwrap();
        for p in &pi {
            for &x in p {
                assert!((x - 0.2).abs() < 1e-7);
            }
        }
        assert_eq!(v, 0.0);
    }

    #[test]
    fn three_agent_config_emits_three_policies() {
        let arch = NetworkArch::standard(3);
        let params = NetworkParams::<f32>::init(&arch, 1).unwrap();
        let (pi, v) = forward(&params, &random_obs(&arch, 3)).unwrap();
        assert_eq!(pi.len(), 3);
        for p in &pi {
            assert_eq!(p.len(), 5);
            assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        assert!(v.is_finite());
    }

    #[test]
    fn forward_is_pure() {
        let arch = NetworkArch::standard(2);
        let params = NetworkParams::<f32>::init(&arch, 9).unwrap();
        let obs = random_obs(&arch, 4);
        let a = forward(&params, &obs).unwrap();
        let b = forward(&params, &obs).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn wrong_observation_shape_is_rejected() {
        let arch = NetworkArch::standard(2);
        let params = NetworkParams::<f32>::init(&arch, 1).unwrap();
        let obs = Tensor::<f32>::zeros(&[4, 80, 84]);
        assert!(matches!(forward(&params, &obs), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = NetworkArch::reduced(2);
        let a = NetworkParams::<f32>::init(&arch, 5).unwrap();
        assert_eq!(a, NetworkParams::<f32>::init(&arch, 5).unwrap());
        assert_ne!(a, NetworkParams::<f32>::init(&arch, 6).unwrap());
        let bound = 1.0 / 64f32.sqrt();
        assert!(a.tensors[0].data().iter().all(|x| x.abs() <= bound));
    }
}
