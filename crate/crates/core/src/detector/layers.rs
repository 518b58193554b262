//! Forward and backward passes for the layer zoo used by the built-in CMs:
//! strided valid 1-D convolution, ReLU, non-overlapping max pooling, global
//! average pooling and a dense layer.
//!
//! Buffers are flat `f64` vectors in channel-major order: element `(c, t)`
//! of a `[channels][len]` buffer lives at index `c * len + t`.

/// Shape of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel
    }

    /// Output length of a valid convolution over `in_len` samples.
    pub fn out_len(&self, in_len: usize) -> usize {
        assert!(in_len >= self.kernel, "input shorter than kernel");
        (in_len - self.kernel) / self.stride + 1
    }
}

/// y[o][t] = bias[o] + sum_{i,j} w[o][i][j] * x[i][t * stride + j]
pub fn conv1d_forward(spec: &ConvSpec, input: &[f64], in_len: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = spec.out_len(in_len);
    let mut out = vec![0.0; spec.out_channels * out_len];
    for o in 0..spec.out_channels {
        for t in 0..out_len {
            let base = t * spec.stride;
            let mut acc = b[o];
            for i in 0..spec.in_channels {
                let w_off = (o * spec.in_channels + i) * spec.kernel;
                let x_off = i * in_len + base;
                for j in 0..spec.kernel {
                    acc += w[w_off + j] * input[x_off + j];
                }
            }
            out[o * out_len + t] = acc;
        }
    }
    out
}

/// Gradient of a conv layer w.r.t. its input.
pub fn conv1d_backward_input(
    spec: &ConvSpec,
    grad_out: &[f64],
    in_len: usize,
    w: &[f64],
) -> Vec<f64> {
    let out_len = spec.out_len(in_len);
    let mut grad_in = vec![0.0; spec.in_channels * in_len];
    for o in 0..spec.out_channels {
        for t in 0..out_len {
            let g = grad_out[o * out_len + t];
            if g == 0.0 {
                continue;
            }
            let base = t * spec.stride;
            for i in 0..spec.in_channels {
                let w_off = (o * spec.in_channels + i) * spec.kernel;
                let x_off = i * in_len + base;
                for j in 0..spec.kernel {
                    grad_in[x_off + j] += w[w_off + j] * g;
                }
            }
        }
    }
    grad_in
}

/// Gradients of a conv layer w.r.t. weights and bias.
pub fn conv1d_backward_params(
    spec: &ConvSpec,
    grad_out: &[f64],
    input: &[f64],
    in_len: usize,
) -> (Vec<f64>, Vec<f64>) {
    let out_len = spec.out_len(in_len);
    let mut grad_w = vec![0.0; spec.weight_len()];
    let mut grad_b = vec![0.0; spec.out_channels];
    for o in 0..spec.out_channels {
        for t in 0..out_len {
            let g = grad_out[o * out_len + t];
            grad_b[o] += g;
            if g == 0.0 {
                continue;
            }
            let base = t * spec.stride;
            for i in 0..spec.in_channels {
                let w_off = (o * spec.in_channels + i) * spec.kernel;
                let x_off = i * in_len + base;
                for j in 0..spec.kernel {
                    grad_w[w_off + j] += input[x_off + j] * g;
                }
            }
        }
    }
    (grad_w, grad_b)
}

pub fn relu_forward(input: &[f64]) -> Vec<f64> {
    input.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

/// ReLU backward; the subgradient at exactly 0 is 0.
pub fn relu_backward(grad_out: &[f64], pre_activation: &[f64]) -> Vec<f64> {
    grad_out
        .iter()
        .zip(pre_activation)
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Non-overlapping max pooling (stride = window) per channel. Returns the
/// pooled buffer and, per output element, the flat input index of the first
/// maximal element, which is where the backward pass routes the gradient.
pub fn maxpool_forward(
    input: &[f64],
    channels: usize,
    in_len: usize,
    window: usize,
) -> (Vec<f64>, Vec<usize>) {
    let out_len = in_len / window;
    let mut out = vec![0.0; channels * out_len];
    let mut argmax = vec![0usize; channels * out_len];
    for c in 0..channels {
        for t in 0..out_len {
            let start = c * in_len + t * window;
            let mut best = input[start];
            let mut best_idx = start;
            for j in 1..window {
                let v = input[start + j];
                // Strict comparison keeps the first maximal element on ties.
                if v > best {
                    best = v;
                    best_idx = start + j;
                }
            }
            out[c * out_len + t] = best;
            argmax[c * out_len + t] = best_idx;
        }
    }
    (out, argmax)
}

pub fn maxpool_backward(grad_out: &[f64], argmax: &[usize], in_total: usize) -> Vec<f64> {
    let mut grad_in = vec![0.0; in_total];
    for (&g, &idx) in grad_out.iter().zip(argmax) {
        grad_in[idx] += g;
    }
    grad_in
}

/// Mean over time per channel.
pub fn global_avg_pool_forward(input: &[f64], channels: usize, in_len: usize) -> Vec<f64> {
    (0..channels)
        .map(|c| input[c * in_len..(c + 1) * in_len].iter().sum::<f64>() / in_len as f64)
        .collect()
}

pub fn global_avg_pool_backward(grad_out: &[f64], channels: usize, in_len: usize) -> Vec<f64> {
    let mut grad_in = vec![0.0; channels * in_len];
    for c in 0..channels {
        let g = grad_out[c] / in_len as f64;
        for t in 0..in_len {
            grad_in[c * in_len + t] = g;
        }
    }
    grad_in
}

/// y[o] = b[o] + sum_i w[o][i] * x[i], weight layout `[out][in]`.
pub fn linear_forward(input: &[f64], w: &[f64], b: &[f64], out_features: usize) -> Vec<f64> {
    let in_features = input.len();
    (0..out_features)
        .map(|o| {
            b[o] + w[o * in_features..(o + 1) * in_features]
                .iter()
                .zip(input)
                .map(|(wi, xi)| wi * xi)
                .sum::<f64>()
        })
        .collect()
}

pub fn linear_backward_input(grad_out: &[f64], w: &[f64], in_features: usize) -> Vec<f64> {
    let mut grad_in = vec![0.0; in_features];
    for (o, &g) in grad_out.iter().enumerate() {
        for i in 0..in_features {
            grad_in[i] += w[o * in_features + i] * g;
        }
    }
    grad_in
}

pub fn linear_backward_params(grad_out: &[f64], input: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let in_features = input.len();
    let mut grad_w = vec![0.0; grad_out.len() * in_features];
    for (o, &g) in grad_out.iter().enumerate() {
        for (i, &x) in input.iter().enumerate() {
            grad_w[o * in_features + i] = g * x;
        }
    }
    (grad_w, grad_out.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Central finite differences of a scalar function of one buffer entry.
    fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], idx: usize) -> f64 {
        let h = 1e-6;
        let mut xp = x.to_vec();
        xp[idx] += h;
        let mut xm = x.to_vec();
        xm[idx] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ConvSpec {
            in_channels: 2,
            out_channels: 3,
            kernel: 4,
            stride: 2,
        };
        let in_len = 13;
        let x = rand_vec(&mut rng, spec.in_channels * in_len);
        let w = rand_vec(&mut rng, spec.weight_len());
        let b = rand_vec(&mut rng, spec.out_channels);
        let probe = rand_vec(&mut rng, spec.out_channels * spec.out_len(in_len));

        // Scalar objective: dot(conv(x), probe).
        let loss_x = |xv: &[f64]| {
            conv1d_forward(&spec, xv, in_len, &w, &b)
                .iter()
                .zip(&probe)
                .map(|(y, p)| y * p)
                .sum::<f64>()
        };
        let grad_in = conv1d_backward_input(&spec, &probe, in_len, &w);
        for idx in [0, 5, 12, 19, x.len() - 1] {
            let fd = finite_diff(loss_x, &x, idx);
            assert!((grad_in[idx] - fd).abs() < 1e-6, "input idx {idx}");
        }

        let loss_w = |wv: &[f64]| {
            conv1d_forward(&spec, &x, in_len, wv, &b)
                .iter()
                .zip(&probe)
                .map(|(y, p)| y * p)
                .sum::<f64>()
        };
        let (grad_w, grad_b) = conv1d_backward_params(&spec, &probe, &x, in_len);
        for idx in [0, 7, grad_w.len() - 1] {
            let fd = finite_diff(loss_w, &w, idx);
            assert!((grad_w[idx] - fd).abs() < 1e-6, "weight idx {idx}");
        }
        let loss_b = |bv: &[f64]| {
            conv1d_forward(&spec, &x, in_len, &w, bv)
                .iter()
                .zip(&probe)
                .map(|(y, p)| y * p)
                .sum::<f64>()
        };
        for idx in 0..spec.out_channels {
            let fd = finite_diff(loss_b, &b, idx);
            assert!((grad_b[idx] - fd).abs() < 1e-6, "bias idx {idx}");
        }
    }

    #[test]
    fn maxpool_routes_to_first_maximal_element() {
        let input = vec![1.0, 3.0, 3.0, 0.0, -1.0, -1.0, -2.0, -5.0];
        let (out, argmax) = maxpool_forward(&input, 1, 8, 4);
        assert_eq!(out, vec![3.0, -1.0]);
        assert_eq!(argmax, vec![1, 4]);
        let grad_in = maxpool_backward(&[2.0, 5.0], &argmax, 8);
        assert_eq!(grad_in, vec![0.0, 2.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_truncates_the_remainder() {
        let input = vec![1.0, 2.0, 3.0, 4.0, 9.0];
        let (out, _) = maxpool_forward(&input, 1, 5, 2);
        assert_eq!(out, vec![2.0, 4.0]); // the trailing 9 is dropped
    }

    #[test]
    fn relu_zero_has_zero_subgradient() {
        let pre = vec![-1.0, 0.0, 2.0];
        let grad = relu_backward(&[1.0, 1.0, 1.0], &pre);
        assert_eq!(grad, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn gap_and_linear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_vec(&mut rng, 6);
        let gap = global_avg_pool_forward(&x, 2, 3);
        assert!((gap[0] - (x[0] + x[1] + x[2]) / 3.0).abs() < 1e-15);
        let back = global_avg_pool_backward(&[3.0, -6.0], 2, 3);
        assert_eq!(back, vec![1.0, 1.0, 1.0, -2.0, -2.0, -2.0]);

        let w = rand_vec(&mut rng, 2 * 4);
        let b = rand_vec(&mut rng, 2);
        let input = rand_vec(&mut rng, 4);
        let probe = vec![1.5, -0.5];
        let loss = |xv: &[f64]| {
            linear_forward(xv, &w, &b, 2)
                .iter()
                .zip(&probe)
                .map(|(y, p)| y * p)
                .sum::<f64>()
        };
        let grad_in = linear_backward_input(&probe, &w, 4);
        for idx in 0..4 {
            let fd = finite_diff(loss, &input, idx);
            assert!((grad_in[idx] - fd).abs() < 1e-7);
        }
    }
}
