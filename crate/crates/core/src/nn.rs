//! Feed-forward networks with analytic backpropagation.
//!
//! Every hidden layer uses a rectifier; the output layer applies either
//! `tanh` (actors) or the identity (critics). Weight matrices are stored
//! row-major as `outputs x inputs`, so layer `k` maps `sizes[k]` to
//! `sizes[k + 1]`. Batched passes go through `matrixmultiply::dgemm`;
//! single-sample passes use plain dot products.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Tanh,
    Identity,
}

impl fmt::Display for OutputActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputActivation::Tanh => "tanh",
            OutputActivation::Identity => "identity",
        })
    }
}

impl FromStr for OutputActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(OutputActivation::Tanh),
            "identity" => Ok(OutputActivation::Identity),
            other => Err(Error::Config(format!("unknown output activation `{other}`"))),
        }
    }
}

/// Shape descriptor sufficient to rebuild a network from flat parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub output_activation: OutputActivation,
}

impl Architecture {
    pub fn parameter_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least 2 layer sizes, got {}",
                self.layer_sizes.len()
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive: {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }
}

/// One affine layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Row-major `outputs x inputs`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }
}

/// Gradient of one layer, shape-matched to [`Dense`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Per-layer parameter gradients mirroring an [`MlpNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<DenseGradient>,
}

impl GradientSet {
    pub fn zeros_for(net: &MlpNetwork) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| DenseGradient {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`MlpNetwork::export_parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|&g| g == 0.0))
    }

    pub fn matches(&self, net: &MlpNetwork) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }
}

/// Post-activation values of every layer for a batch, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct BatchActivations {
    rows: usize,
    /// `values[0]` is the input; `values[k + 1]` is the output of layer `k`.
    values: Vec<Vec<f64>>,
}

impl BatchActivations {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Row-major `rows x output_size`.
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("activations always hold the input")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
    output_activation: OutputActivation,
}

impl MlpNetwork {
    /// Fan-in scaled uniform initialization: every weight and bias of a layer
    /// with `n` inputs is drawn from `U(-1/sqrt(n), 1/sqrt(n))`.
    pub fn new(layer_sizes: &[usize], output_activation: OutputActivation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output_activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Like [`MlpNetwork::new`], but the output layer is drawn from
    /// `[-output_bound, output_bound]` so initial outputs start near zero.
    pub fn with_output_bound(
        layer_sizes: &[usize],
        output_activation: OutputActivation,
        output_bound: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::new(layer_sizes, output_activation, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9));
        let last = net.layers.last_mut().expect("validated architecture has a layer");
        for w in last.weights.iter_mut().chain(last.biases.iter_mut()) {
            *w = rng.random_range(-output_bound..output_bound);
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], output_activation: OutputActivation) -> Result<Self> {
        let arch = Architecture {
            layer_sizes: layer_sizes.to_vec(),
            output_activation,
        };
        arch.validate()?;
        Ok(MlpNetwork {
            layers: layer_sizes
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
            layer_sizes: arch.layer_sizes,
            output_activation,
        })
    }

    pub fn from_parameters(arch: &Architecture, params: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(&arch.layer_sizes, arch.output_activation)?;
        net.import_parameters(params)?;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            layer_sizes: self.layer_sizes.clone(),
            output_activation: self.output_activation,
        }
    }

    pub fn same_architecture(&self, other: &MlpNetwork) -> bool {
        self.layer_sizes == other.layer_sizes && self.output_activation == other.output_activation
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Layer by layer: weights (row-major) then biases.
    pub fn export_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn import_parameters(&mut self, params: &[f64]) -> Result<()> {
        ensure_len("parameter import", self.parameter_count(), params.len())?;
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// FNV-1a over the raw bits of every parameter.
    pub fn parameter_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.biases) {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        ensure_len("network input", self.input_size(), input.len())?;
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = layer.biases.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                *yo += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            }
            if k < last {
                relu_in_place(&mut y);
            } else {
                self.apply_output(&mut y);
            }
            x = y;
        }
        Ok(x)
    }

    /// Gradients of `output . output_gradient` with respect to all parameters
    /// and the input.
    pub fn backward(&self, input: &[f64], output_gradient: &[f64]) -> Result<(GradientSet, Vec<f64>)> {
        let acts = self.forward_batch(input, 1)?;
        self.backward_batch(&acts, output_gradient)
    }

    /// `inputs` is row-major `rows x input_size`.
    pub fn forward_batch(&self, inputs: &[f64], rows: usize) -> Result<BatchActivations> {
        ensure_len("batch input", rows * self.input_size(), inputs.len())?;
        if rows == 0 {
            return Err(Error::Usage("empty batch".into()));
        }
        let last = self.layers.len() - 1;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(inputs.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let x = values.last().expect("non-empty");
            let mut y = Vec::with_capacity(rows * layer.outputs);
            for _ in 0..rows {
                y.extend_from_slice(&layer.biases);
            }
            // y += x * W^T
            gemm(
                rows,
                layer.inputs,
                layer.outputs,
                x,
                (layer.inputs as isize, 1),
                &layer.weights,
                (1, layer.inputs as isize),
                1.0,
                &mut y,
            );
            if k < last {
                relu_in_place(&mut y);
            } else {
                self.apply_output(&mut y);
            }
            values.push(y);
        }
        Ok(BatchActivations { rows, values })
    }

    /// Parameter gradients summed over the batch, plus per-row input gradients.
    pub fn backward_batch(
        &self,
        acts: &BatchActivations,
        output_gradients: &[f64],
    ) -> Result<(GradientSet, Vec<f64>)> {
        let mut grads = GradientSet::zeros_for(self);
        let input_grad = self.backprop(acts, output_gradients, Some(&mut grads))?;
        Ok((grads, input_grad))
    }

    /// Input gradients only; skips the weight-gradient products.
    pub fn input_gradient_batch(&self, acts: &BatchActivations, output_gradients: &[f64]) -> Result<Vec<f64>> {
        self.backprop(acts, output_gradients, None)
    }

    fn backprop(
        &self,
        acts: &BatchActivations,
        output_gradients: &[f64],
        mut grads: Option<&mut GradientSet>,
    ) -> Result<Vec<f64>> {
        let rows = acts.rows;
        ensure_len("activation trace", self.layers.len() + 1, acts.values.len())?;
        ensure_len("output gradient", rows * self.output_size(), output_gradients.len())?;

        let mut delta = output_gradients.to_vec();
        if self.output_activation == OutputActivation::Tanh {
            for (d, y) in delta.iter_mut().zip(acts.output()) {
                *d *= 1.0 - y * y;
            }
        }
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &acts.values[k];
            if let Some(g) = grads.as_deref_mut() {
                let lg = &mut g.layers[k];
                // dW = delta^T * x
                gemm(
                    layer.outputs,
                    rows,
                    layer.inputs,
                    &delta,
                    (1, layer.outputs as isize),
                    x,
                    (layer.inputs as isize, 1),
                    0.0,
                    &mut lg.weights,
                );
                for row in delta.chunks_exact(layer.outputs) {
                    for (b, d) in lg.biases.iter_mut().zip(row) {
                        *b += d;
                    }
                }
            }
            // dX = delta * W
            let mut dx = vec![0.0; rows * layer.inputs];
            gemm(
                rows,
                layer.outputs,
                layer.inputs,
                &delta,
                (layer.outputs as isize, 1),
                &layer.weights,
                (layer.inputs as isize, 1),
                0.0,
                &mut dx,
            );
            if k > 0 {
                for (d, a) in dx.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// `self <- tau * source + (1 - tau) * self`, element-wise.
    pub fn polyak_update(&mut self, source: &MlpNetwork, tau: f64) -> Result<()> {
        if !self.same_architecture(source) {
            return Err(Error::dim(
                "polyak update architecture",
                self.parameter_count(),
                source.parameter_count(),
            ));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
        }
        let keep = 1.0 - tau;
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            for (tw, sw) in t.weights.iter_mut().zip(&s.weights) {
                *tw = tau * sw + keep * *tw;
            }
            for (tb, sb) in t.biases.iter_mut().zip(&s.biases) {
                *tb = tau * sb + keep * *tb;
            }
        }
        Ok(())
    }

    fn apply_output(&self, y: &mut [f64]) {
        if self.output_activation == OutputActivation::Tanh {
            for v in y {
                *v = v.tanh();
            }
        }
    }
}

fn relu_in_place(y: &mut [f64]) {
    for v in y {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `c (m x n, row-major) <- a * b + beta * c` with `a` of shape `m x k` and `b`
/// of shape `k x n`, both described by `(row_stride, col_stride)`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() == m * n);
    // SAFETY: the asserted lengths cover every index reachable through the
    // given strides, which always describe dense matrices with unit or
    // full-row strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Adam optimizer state for one network, moments stored flat in
/// [`MlpNetwork::export_parameters`] order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(net: &MlpNetwork, learning_rate: f64) -> Self {
        let n = net.parameter_count();
        AdamState {
            learning_rate,
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            epsilon: Self::EPSILON,
            step_count: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        }
    }

    /// One bias-corrected Adam update of `net` using `grads`.
    pub fn step(&mut self, net: &mut MlpNetwork, grads: &GradientSet) -> Result<()> {
        let n = net.parameter_count();
        ensure_len("adam moments", n, self.first_moment.len())?;
        ensure_len("adam moments", n, self.second_moment.len())?;
        if !grads.matches(net) {
            return Err(Error::dim("adam gradient shape", n, grads.flatten().len()));
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);

        let mut offset = 0;
        for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
            for (params, grad) in [
                (&mut layer.weights, &g.weights),
                (&mut layer.biases, &g.biases),
            ] {
                let m = &mut self.first_moment[offset..offset + params.len()];
                let v = &mut self.second_moment[offset..offset + params.len()];
                for i in 0..params.len() {
                    let gi = grad[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * gi;
                    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                    params[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                }
                offset += params.len();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, b: f64) -> MlpNetwork {
        let mut net = MlpNetwork::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        net.import_parameters(&[w, b]).unwrap();
        net
    }

    #[test]
    fn rejects_bad_layer_sizes() {
        assert!(matches!(
            MlpNetwork::new(&[], OutputActivation::Tanh, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            MlpNetwork::new(&[4], OutputActivation::Tanh, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            MlpNetwork::new(&[4, 0, 2], OutputActivation::Tanh, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn paper_sized_actor_is_bounded() {
        let net = MlpNetwork::new(&[30, 256, 256, 256, 3], OutputActivation::Tanh, 7).unwrap();
        assert_eq!(net.layers().len(), 4);
        let input: Vec<f64> = (0..30).map(|i| (i as f64 - 15.0) * 3.0).collect();
        let y = net.forward(&input).unwrap();
        assert_eq!(y.len(), 3);
        assert!(y.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = MlpNetwork::new(&[5, 8, 3], OutputActivation::Tanh, 3).unwrap();
        let b = MlpNetwork::new(&[5, 8, 3], OutputActivation::Tanh, 3).unwrap();
        assert_eq!(a.export_parameters(), b.export_parameters());
        let c = MlpNetwork::new(&[5, 8, 3], OutputActivation::Tanh, 4).unwrap();
        assert_ne!(a.export_parameters(), c.export_parameters());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = MlpNetwork::new(&[16, 64, 2], OutputActivation::Identity, 11).unwrap();
        for l in net.layers() {
            let bound = 1.0 / (l.inputs() as f64).sqrt();
            assert!(l.weights().iter().chain(l.biases()).all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNetwork::zeros(&[4, 6, 3], OutputActivation::Tanh).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn affine_evaluation() {
        assert_eq!(single(2.0, 1.0).forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn forward_checks_length() {
        let net = single(1.0, 0.0);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Dimension { .. })));
        assert!(matches!(
            net.backward(&[1.0], &[1.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn backward_linear_chain_rule() {
        let (g, dx) = single(2.0, 1.0).backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(dx, vec![2.0]);
        assert_eq!(g.layers[0].weights, vec![3.0]);
        assert_eq!(g.layers[0].biases, vec![1.0]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = MlpNetwork::new(&[3, 5, 2], OutputActivation::Tanh, 9).unwrap();
        let (g, dx) = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = MlpNetwork::new(&[3, 7, 7, 2], OutputActivation::Tanh, 5).unwrap();
        let rows = [[0.1, -0.4, 0.9], [1.5, 0.0, -2.0], [0.3, 0.3, 0.3]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let acts = net.forward_batch(&flat, 3).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let y = net.forward(row).unwrap();
            for (a, b) in y.iter().zip(&acts.output()[r * 2..r * 2 + 2]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn batch_gradient_is_sum_of_single_gradients() {
        let net = MlpNetwork::new(&[2, 5, 3], OutputActivation::Identity, 2).unwrap();
        let xs = [[0.5, -1.0], [2.0, 0.25]];
        let gs = [[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]];
        let acts = net
            .forward_batch(&xs.iter().flatten().copied().collect::<Vec<_>>(), 2)
            .unwrap();
        let (batch, _) = net
            .backward_batch(&acts, &gs.iter().flatten().copied().collect::<Vec<_>>())
            .unwrap();
        let (g0, _) = net.backward(&xs[0], &gs[0]).unwrap();
        let (g1, _) = net.backward(&xs[1], &gs[1]).unwrap();
        for ((b, a), c) in batch.flatten().iter().zip(g0.flatten()).zip(g1.flatten()) {
            assert!((b - (a + c)).abs() < 1e-12);
        }
    }

    #[test]
    fn input_gradient_only_path_agrees() {
        let net = MlpNetwork::new(&[4, 9, 1], OutputActivation::Identity, 8).unwrap();
        let x = [0.2, -0.3, 0.7, 1.1];
        let acts = net.forward_batch(&x, 1).unwrap();
        let (_, full) = net.backward_batch(&acts, &[1.0]).unwrap();
        assert_eq!(net.input_gradient_batch(&acts, &[1.0]).unwrap(), full);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut net = MlpNetwork::new(&[2, 3, 1], OutputActivation::Identity, 1).unwrap();
        let before = net.export_parameters();
        let mut opt = AdamState::new(&net, 1e-3);
        let zeros = GradientSet::zeros_for(&net);
        opt.step(&mut net, &zeros).unwrap();
        assert_eq!(net.export_parameters(), before);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        // m1 = 0.05, v1 = 0.00025; corrected: m = 0.5, v = 0.25; delta = -lr * 0.5 / (0.5 + eps).
        let mut net = single(1.0, 0.0);
        let mut opt = AdamState::new(&net, 0.001);
        let grads = GradientSet {
            layers: vec![DenseGradient {
                weights: vec![0.5],
                biases: vec![0.0],
            }],
        };
        opt.step(&mut net, &grads).unwrap();
        let expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
        assert!((net.export_parameters()[0] - expected).abs() < 1e-15);
        assert!((net.export_parameters()[0] - 0.999).abs() < 1e-10);
    }

    #[test]
    fn adam_is_deterministic_and_counts_steps() {
        let net = MlpNetwork::new(&[3, 4, 2], OutputActivation::Tanh, 6).unwrap();
        let (g, _) = net.backward(&[0.1, 0.2, 0.3], &[1.0, -1.0]).unwrap();
        let (mut n1, mut n2) = (net.clone(), net.clone());
        let (mut o1, mut o2) = (AdamState::new(&net, 1e-3), AdamState::new(&net, 1e-3));
        for _ in 0..3 {
            o1.step(&mut n1, &g).unwrap();
            o2.step(&mut n2, &g).unwrap();
        }
        assert_eq!(n1, n2);
        assert_eq!(o1, o2);
        assert_eq!(o1.step_count, 3);
        assert!(o1.second_moment.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut a = MlpNetwork::new(&[3, 4, 2], OutputActivation::Tanh, 6).unwrap();
        let b = MlpNetwork::new(&[3, 5, 2], OutputActivation::Tanh, 6).unwrap();
        let mut opt = AdamState::new(&a, 1e-3);
        assert!(matches!(
            opt.step(&mut a, &GradientSet::zeros_for(&b)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn polyak_extremes_and_midpoint() {
        let src = MlpNetwork::new(&[2, 3, 1], OutputActivation::Identity, 1).unwrap();
        let orig = MlpNetwork::new(&[2, 3, 1], OutputActivation::Identity, 2).unwrap();

        let mut t = orig.clone();
        t.polyak_update(&src, 1.0).unwrap();
        assert_eq!(t, src);

        let mut t = orig.clone();
        t.polyak_update(&src, 0.0).unwrap();
        assert_eq!(t, orig);

        let mut zero = MlpNetwork::zeros(&[2, 3, 1], OutputActivation::Identity).unwrap();
        let mut twos = zero.clone();
        twos.import_parameters(&vec![2.0; twos.parameter_count()]).unwrap();
        zero.polyak_update(&twos, 0.5).unwrap();
        assert!(zero.export_parameters().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn polyak_rejects_architecture_mismatch() {
        let mut a = MlpNetwork::zeros(&[2, 3, 1], OutputActivation::Identity).unwrap();
        let b = MlpNetwork::zeros(&[2, 4, 1], OutputActivation::Identity).unwrap();
        assert!(matches!(a.polyak_update(&b, 0.5), Err(Error::Dimension { .. })));
    }

    #[test]
    fn parameter_round_trip() {
        let net = MlpNetwork::new(&[3, 4, 2], OutputActivation::Tanh, 13).unwrap();
        let rebuilt = MlpNetwork::from_parameters(&net.architecture(), &net.export_parameters()).unwrap();
        assert_eq!(rebuilt, net);
        assert_eq!(net.architecture().parameter_count(), net.parameter_count());
        let mut other = net.clone();
        assert!(matches!(
            other.import_parameters(&[0.0; 3]),
            Err(Error::Dimension { .. })
        ));
    }
}
