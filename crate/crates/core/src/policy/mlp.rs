use crate::mdp::ActionId;
use crate::rng::RngStream;

use super::{check_action, log_softmax_grad, softmax, Policy, PolicyError};

/// Fully connected network, rectifier on hidden layers, linear output.
///
/// The flat parameter layout is fixed: for each layer in order, the weight
/// matrix row-major as `[out][in]`, then the `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Layer inputs recorded by a forward pass, needed for backpropagation.
#[derive(Clone, Debug)]
pub struct Forward {
    inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, PolicyError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(PolicyError::InvalidDims(dims.to_vec()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; Self::param_count(dims)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(dims: &[usize], rng: &mut RngStream) -> Result<Self, PolicyError> {
        let mut net = Self::zeros(dims)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.uniform_range(-limit, limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self, PolicyError> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(PolicyError::ParamLength {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward, PolicyError> {
        if x.len() != self.input_dim() {
            return Err(PolicyError::StateDim {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let layers = self.dims.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut current = x.to_vec();
        let mut offset = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let mut next: Vec<f64> = weights
                .chunks(n_in)
                .zip(biases)
                .map(|(row, b)| b + row.iter().zip(&current).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            if l + 1 < layers {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            inputs.push(current);
            current = next;
            offset += n_in * n_out + n_out;
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite);
        }
        Ok(Forward {
            inputs,
            output: current,
        })
    }

    /// Adds `scale * d(output . grad_output)/d(params)` into `out`.
    pub fn backward(&self, fwd: &Forward, grad_output: &[f64], scale: f64, out: &mut [f64]) {
        let mut delta: Vec<f64> = grad_output.iter().map(|g| g * scale).collect();
        let mut offset = self.params.len();
        for l in (0..self.dims.len() - 1).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            offset -= n_in * n_out + n_out;
            let input = &fwd.inputs[l];
            {
                let (gw, gb) = out[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, v) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
            }
            if l > 0 {
                let weights = &self.params[offset..offset + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                // input to layer l is relu of the previous pre-activation
                for (p, v) in prev.iter_mut().zip(input) {
                    if *v <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Softmax policy on top of an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpPolicy {
    net: Mlp,
}

impl MlpPolicy {
    pub fn new(net: Mlp) -> Self {
        Self { net }
    }

    /// Glorot-initialized policy.
    pub fn glorot(dims: &[usize], rng: &mut RngStream) -> Result<Self, PolicyError> {
        Ok(Self::new(Mlp::glorot(dims, rng)?))
    }

    /// `[d, d, d, actions]`: both hidden layers as wide as the input.
    pub fn square_dims(state_dim: usize, action_count: usize) -> Vec<usize> {
        vec![state_dim, state_dim, state_dim, action_count]
    }

    /// `[d, 100, 50, assets]`, the layout used for return-matrix portfolios.
    pub fn portfolio_dims(state_dim: usize, assets: usize) -> Vec<usize> {
        vec![state_dim, 100, 50, assets]
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn dims(&self) -> &[usize] {
        self.net.dims()
    }

    pub fn logits(&self, state: &[f64]) -> Result<Vec<f64>, PolicyError> {
        Ok(self.net.forward(state)?.output)
    }
}

impl Policy for MlpPolicy {
    fn action_count(&self) -> usize {
        self.net.output_dim()
    }

    fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn params(&self) -> &[f64] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    fn action_probs(&self, state: &[f64]) -> Result<Vec<f64>, PolicyError> {
        softmax(&self.net.forward(state)?.output)
    }

    fn accumulate_log_prob_grad(
        &self,
        state: &[f64],
        action: ActionId,
        scale: f64,
        out: &mut [f64],
    ) -> Result<(), PolicyError> {
        check_action(action, self.action_count())?;
        let fwd = self.net.forward(state)?;
        let probs = softmax(&fwd.output)?;
        self.net
            .backward(&fwd, &log_softmax_grad(&probs, action), scale, out);
        Ok(())
    }
}

/// Scalar-output network used as a critic.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueNet {
    net: Mlp,
}

impl ValueNet {
    pub fn new(net: Mlp) -> Result<Self, PolicyError> {
        if net.output_dim() != 1 {
            return Err(PolicyError::InvalidDims(net.dims().to_vec()));
        }
        Ok(Self { net })
    }

    pub fn glorot(dims: &[usize], rng: &mut RngStream) -> Result<Self, PolicyError> {
        Self::new(Mlp::glorot(dims, rng)?)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn value(&self, state: &[f64]) -> Result<f64, PolicyError> {
        Ok(self.net.forward(state)?.output[0])
    }

    /// Adds `scale * grad value(state)` into `out`.
    pub fn accumulate_grad(&self, state: &[f64], scale: f64, out: &mut [f64]) -> Result<(), PolicyError> {
        let fwd = self.net.forward(state)?;
        self.net.backward(&fwd, &[1.0], scale, out);
        Ok(())
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_policy(dims: &[usize], seed: u64) -> MlpPolicy {
        let mut rng = RngStream::new(seed, 0);
        let mut p = MlpPolicy::glorot(dims, &mut rng).unwrap();
        // nonzero biases so the probes are not all at the origin
        for v in p.params_mut() {
            *v += rng.uniform_range(-0.3, 0.3);
        }
        p
    }

    #[test]
    fn param_count_matches_layout() {
        assert_eq!(Mlp::param_count(&[3, 3, 3, 2]), 12 + 12 + 8);
        assert_eq!(Mlp::zeros(&[3, 2]).unwrap().params().len(), 8);
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 0, 2]).is_err());
    }

    #[test]
    fn zero_weights_give_uniform() {
        let p = MlpPolicy::new(Mlp::zeros(&[4, 4, 4, 3]).unwrap());
        let probs = p.action_probs(&[0.1, -2.0, 3.0, 0.5]).unwrap();
        for x in probs {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn score_identity_small_mlp() {
        let p = random_policy(&[3, 5, 4, 3], 11);
        let s = [0.4, -0.2, 1.3];
        let probs = p.action_probs(&s).unwrap();
        let mut total = vec![0.0; p.num_params()];
        for (a, &pa) in probs.iter().enumerate() {
            p.accumulate_log_prob_grad(&s, ActionId(a), pa, &mut total).unwrap();
        }
        assert!(total.iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn log_prob_grad_matches_finite_differences() {
        let h = 1e-4;
        for seed in 0..10 {
            let p = random_policy(&[4, 4, 4, 2], seed);
            let mut rng = RngStream::new(seed, 1);
            let s: Vec<f64> = (0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let a = ActionId(rng.index(2));
            let g = p.log_prob_grad(&s, a).unwrap();
            for i in 0..p.num_params() {
                let mut plus = p.clone();
                plus.params_mut()[i] += h;
                let mut minus = p.clone();
                minus.params_mut()[i] -= h;
                let fd = (plus.log_prob(&s, a).unwrap() - minus.log_prob(&s, a).unwrap()) / (2.0 * h);
                let denom = g[i].abs().max(fd.abs()).max(1e-8);
                assert!((g[i] - fd).abs() / denom < 1e-5, "seed {seed} coord {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn value_net_gradient() {
        let mut rng = RngStream::new(3, 0);
        let v = ValueNet::glorot(&[2, 3, 1], &mut rng).unwrap();
        let s = [0.7, -0.1];
        let mut g = vec![0.0; v.params().len()];
        v.accumulate_grad(&s, 1.0, &mut g).unwrap();
        let h = 1e-6;
        for i in 0..g.len() {
            let mut plus = v.clone();
            plus.params_mut()[i] += h;
            let mut minus = v.clone();
            minus.params_mut()[i] -= h;
            let fd = (plus.value(&s).unwrap() - minus.value(&s).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-7);
        }
        assert!(ValueNet::new(Mlp::zeros(&[2, 2]).unwrap()).is_err());
    }

    #[test]
    fn wrong_state_dim() {
        let p = MlpPolicy::new(Mlp::zeros(&[2, 2]).unwrap());
        assert_eq!(
            p.action_probs(&[1.0]),
            Err(PolicyError::StateDim { expected: 2, got: 1 })
        );
    }
}
