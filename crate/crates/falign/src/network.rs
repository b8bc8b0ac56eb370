//! Feedforward multi-layer perceptron: architecture, weight
//! initialization, forward pass with retained per-layer state, softmax
//! output, cross-entropy loss and accuracy.
//!
//! There are deliberately no bias terms anywhere: the pre-activation is
//! `h = W f` and nothing else. With tanh hidden units this makes the
//! all-zero weight configuration produce exactly-zero hidden activations
//! and an exactly-uniform softmax output, which downstream property tests
//! rely on.
//!
//! Layer indexing is zero-based throughout: `weights[l]` maps layer `l`
//! activations (sizes `n_l`) to layer `l+1` pre-activations. For the
//! standard `[784, 700, 1000, 10]` architecture, `weights[0]` is the
//! "input layer", `weights[1]` the "hidden layer" and `weights[2]` the
//! "output layer" in the terminology used by the experiment drivers.

use crate::error::{Error, Result};
use crate::numerics::{sample_normal, Matrix, Rng};
use crate::rules::{FeedbackKind, FeedbackSet};

/// Hidden-layer activation. Only tanh is supported; its zero at the
/// origin and saturation at large pre-activations are load-bearing for
/// the properties this crate reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Tanh,
}

/// Layer sizes `[n_0, n_1, ..., n_L]`: `n_0` is the input dimension and
/// `n_L` the number of output classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    layer_sizes: Vec<usize>,
    hidden: HiddenActivation,
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Architecture> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "architecture needs at least input and output sizes, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "architecture sizes must be positive, got {:?}",
                layer_sizes
            )));
        }
        Ok(Architecture {
            layer_sizes,
            hidden: HiddenActivation::Tanh,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Number of weight layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Shape of `weights[l]`.
    pub fn weight_shape(&self, l: usize) -> (usize, usize) {
        (self.layer_sizes[l + 1], self.layer_sizes[l])
    }
}

/// Weight initialization mode.
#[derive(Clone, Copy)]
pub enum WeightInit<'a> {
    /// `scale * N(0, 1)` per entry.
    NormalScaled,
    /// `|N(0, 1)| * scale * sign(feedback entry)`. Layers without a
    /// feedback partner (the first layer; feedback matrices only exist
    /// for layers 1..L) fall back to [`WeightInit::NormalScaled`],
    /// consuming the same draws so the first layer is identical across
    /// modes for a fixed stream.
    SignMatched(&'a FeedbackSet),
    /// `feedback entry * scale`, same first-layer fallback as above.
    EqualToFeedback(&'a FeedbackSet),
}

/// The network: an architecture plus one weight matrix per layer, shape
/// `n_{l+1} x n_l`. No biases exist (see module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    weights: Vec<Matrix>,
}

impl Network {
    pub fn new(arch: Architecture, weights: Vec<Matrix>) -> Result<Network> {
        if weights.len() != arch.num_layers() {
            return Err(Error::Dimension {
                op: "Network::new",
                msg: format!(
                    "expected {} weight matrices, got {}",
                    arch.num_layers(),
                    weights.len()
                ),
            });
        }
        for (l, w) in weights.iter().enumerate() {
            if w.shape() != arch.weight_shape(l) {
                return Err(Error::Dimension {
                    op: "Network::new",
                    msg: format!(
                        "layer {} weights are {:?}, architecture wants {:?}",
                        l,
                        w.shape(),
                        arch.weight_shape(l)
                    ),
                });
            }
        }
        Ok(Network { arch, weights })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub(crate) fn replace_weights(&mut self, weights: Vec<Matrix>) {
        debug_assert_eq!(weights.len(), self.weights.len());
        self.weights = weights;
    }
}

/// Draws initial weights. `scale == 0` gives exactly-zero weights in
/// every mode (the draws are still consumed, keeping streams aligned).
pub fn init_weights(
    arch: &Architecture,
    rng: &mut Rng,
    scale: f64,
    mode: WeightInit<'_>,
) -> Result<Network> {
    if !(scale >= 0.0) {
        return Err(Error::Config(format!(
            "weight scale must be >= 0, got {scale}"
        )));
    }
    if let WeightInit::SignMatched(fb) | WeightInit::EqualToFeedback(fb) = mode {
        if fb.kind() != FeedbackKind::Fa {
            return Err(Error::Config(
                "sign-matched / equal-to-feedback initialization needs FA feedback matrices"
                    .into(),
            ));
        }
        if fb.matrices().len() != arch.num_layers() - 1 {
            return Err(Error::Dimension {
                op: "init_weights",
                msg: format!(
                    "feedback set has {} matrices, architecture wants {}",
                    fb.matrices().len(),
                    arch.num_layers() - 1
                ),
            });
        }
    }
    let mut weights = Vec::with_capacity(arch.num_layers());
    for l in 0..arch.num_layers() {
        let (rows, cols) = arch.weight_shape(l);
        let draws = sample_normal(rng, rows, cols);
        let w = match mode {
            WeightInit::NormalScaled => draws.scale(scale),
            WeightInit::SignMatched(_) | WeightInit::EqualToFeedback(_) if l == 0 => {
                draws.scale(scale)
            }
            WeightInit::SignMatched(fb) => {
                let r = &fb.matrices()[l - 1];
                if r.shape() != (rows, cols) {
                    return Err(Error::Shape {
                        op: "init_weights",
                        lhs_rows: rows,
                        lhs_cols: cols,
                        rhs_rows: r.shape().0,
                        rhs_cols: r.shape().1,
                    });
                }
                Matrix::from_fn(rows, cols, |i, j| {
                    draws.get(i, j).abs() * scale * r.get(i, j).signum()
                })
            }
            WeightInit::EqualToFeedback(fb) => {
                let r = &fb.matrices()[l - 1];
                if r.shape() != (rows, cols) {
                    return Err(Error::Shape {
                        op: "init_weights",
                        lhs_rows: rows,
                        lhs_cols: cols,
                        rhs_rows: r.shape().0,
                        rhs_cols: r.shape().1,
                    });
                }
                r.scale(scale)
            }
        };
        weights.push(w);
    }
    Network::new(arch.clone(), weights)
}

/// Everything the forward pass computed, retained for the backward rules:
/// the input batch, per-layer pre-activations `h` and activations `f`.
/// The last activation matrix is the softmax output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) input: Matrix,
    pub(crate) pre: Vec<Matrix>,
    pub(crate) act: Vec<Matrix>,
}

impl ForwardTrace {
    /// Softmax output, `n_L x batch`.
    pub fn output(&self) -> &Matrix {
        self.act.last().unwrap()
    }

    pub fn preactivations(&self) -> &[Matrix] {
        &self.pre
    }

    pub fn activations(&self) -> &[Matrix] {
        &self.act
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn batch_size(&self) -> usize {
        self.input.cols()
    }
}

/// Runs the batch (column per example, `n_0 x B`) through the network:
/// `h = W f_prev`, tanh on hidden layers, columnwise softmax at the top.
pub fn forward(net: &Network, batch: &Matrix) -> Result<ForwardTrace> {
    if batch.rows() != net.arch.input_dim() {
        return Err(Error::Dimension {
            op: "forward",
            msg: format!(
                "batch has {} rows, network input dimension is {}",
                batch.rows(),
                net.arch.input_dim()
            ),
        });
    }
    let layers = net.arch.num_layers();
    let mut pre = Vec::with_capacity(layers);
    let mut act = Vec::with_capacity(layers);
    for l in 0..layers {
        let below = if l == 0 { batch } else { &act[l - 1] };
        let h = net.weights[l].matmul(below)?;
        let f = if l + 1 == layers {
            softmax_columns(&h)
        } else {
            h.map(f64::tanh)
        };
        pre.push(h);
        act.push(f);
    }
    Ok(ForwardTrace {
        input: batch.clone(),
        pre,
        act,
    })
}

/// Columnwise softmax with per-column max subtraction, so logits of any
/// magnitude representable in f64 stay in range.
pub fn softmax_columns(logits: &Matrix) -> Matrix {
    let (rows, cols) = logits.shape();
    let mut out = Matrix::zeros(rows, cols);
    for c in 0..cols {
        let mut max = f64::NEG_INFINITY;
        for r in 0..rows {
            max = max.max(logits.get(r, c));
        }
        let mut sum = 0.0;
        for r in 0..rows {
            let e = (logits.get(r, c) - max).exp();
            out.as_mut_slice()[r * cols + c] = e;
            sum += e;
        }
        for r in 0..rows {
            out.as_mut_slice()[r * cols + c] /= sum;
        }
    }
    out
}

/// Mean over the batch of `-ln p(true class)`.
///
/// `onehot` must be the same shape as `probs` with exactly one 1 per
/// column. A true-class probability that underflowed to zero (or went
/// negative through caller error) is a domain error, not a silent `inf`.
pub fn cross_entropy(probs: &Matrix, onehot: &Matrix) -> Result<f64> {
    if probs.shape() != onehot.shape() {
        return Err(Error::Shape {
            op: "cross_entropy",
            lhs_rows: probs.rows(),
            lhs_cols: probs.cols(),
            rhs_rows: onehot.rows(),
            rhs_cols: onehot.cols(),
        });
    }
    let (rows, cols) = probs.shape();
    let mut total = 0.0;
    for c in 0..cols {
        for r in 0..rows {
            if onehot.get(r, c) != 0.0 {
                let p = probs.get(r, c);
                if p <= 0.0 {
                    return Err(Error::Domain {
                        op: "cross_entropy",
                        msg: format!("true-class probability {p} at column {c}"),
                    });
                }
                total -= p.ln();
            }
        }
    }
    Ok(total / cols as f64)
}

/// Fraction of columns whose argmax equals the label. Ties break toward
/// the lowest class index.
pub fn accuracy(probs: &Matrix, labels: &[u8]) -> f64 {
    assert_eq!(
        probs.cols(),
        labels.len(),
        "one label per batch column required"
    );
    let (rows, cols) = probs.shape();
    let mut correct = 0usize;
    for c in 0..cols {
        let mut best = 0usize;
        let mut best_p = probs.get(0, c);
        for r in 1..rows {
            let p = probs.get(r, c);
            if p > best_p {
                best_p = p;
                best = r;
            }
        }
        if best == labels[c] as usize {
            correct += 1;
        }
    }
    correct as f64 / cols as f64
}

/// Max absolute softmax-Jacobian entry at the fixed probe logits
/// `[1, 2, 3] * logit_scale`. The Jacobian of the softmax is
/// `J_ij = p_i (delta_ij - p_j)`; its entries collapse toward zero as the
/// scale grows, which is what starves weight updates in the large-weight
/// regime.
pub fn softmax_jacobian_peak(logit_scale: f64) -> f64 {
    assert!(logit_scale >= 0.0);
    let probe = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
    let p = softmax_columns(&probe.scale(logit_scale));
    let mut peak = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            peak = peak.max((p.get(i, 0) * (delta - p.get(j, 0))).abs());
        }
    }
    peak
}

/// One-hot matrix (`num_classes x labels.len()`) from class labels.
pub fn one_hot(labels: &[u8], num_classes: usize) -> Matrix {
    assert!(!labels.is_empty());
    let mut m = Matrix::zeros(num_classes, labels.len());
    for (c, &lab) in labels.iter().enumerate() {
        assert!((lab as usize) < num_classes, "label {lab} out of range");
        m.as_mut_slice()[lab as usize * labels.len() + c] = 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sample_rademacher;
    use crate::rules::FeedbackDistribution;
    use rand::RngCore;

    fn arch(sizes: &[usize]) -> Architecture {
        Architecture::new(sizes.to_vec()).unwrap()
    }

    /// Independent oracle: scalar-loop forward pass.
    fn scalar_forward(net: &Network, batch: &Matrix) -> Matrix {
        let sizes = net.arch().layer_sizes();
        let layers = net.arch().num_layers();
        let cols = batch.cols();
        let mut f: Vec<Vec<f64>> = (0..cols)
            .map(|c| (0..sizes[0]).map(|r| batch.get(r, c)).collect())
            .collect();
        for l in 0..layers {
            let w = &net.weights()[l];
            let mut next = vec![vec![0.0; sizes[l + 1]]; cols];
            for (c, fc) in f.iter().enumerate() {
                for i in 0..sizes[l + 1] {
                    let mut h = 0.0;
                    for (j, fj) in fc.iter().enumerate() {
                        h += w.get(i, j) * fj;
                    }
                    next[c][i] = h;
                }
                if l + 1 < layers {
                    for v in next[c].iter_mut() {
                        *v = v.tanh();
                    }
                } else {
                    let max = next[c].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in next[c].iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in next[c].iter_mut() {
                        *v /= sum;
                    }
                }
            }
            f = next;
        }
        Matrix::from_fn(sizes[layers], cols, |r, c| f[c][r])
    }

    #[test]
    fn zero_weights_give_uniform_output_for_any_input() {
        let a = arch(&[6, 5, 4]);
        let mut rng = Rng::from_seed(1);
        let net = init_weights(&a, &mut rng, 0.0, WeightInit::NormalScaled).unwrap();
        for seed in 0..4 {
            let mut drng = Rng::from_seed(seed);
            let batch = sample_normal(&mut drng, 6, 3);
            let trace = forward(&net, &batch).unwrap();
            assert!(trace.act[0].is_all_zero(), "tanh(0) must be exactly 0");
            for v in trace.output().as_slice() {
                assert_eq!(*v, 1.0 / 4.0);
            }
        }
    }

    #[test]
    fn symmetric_logits_split_evenly() {
        let a = arch(&[1, 1, 2]);
        let net = Network::new(
            a,
            vec![
                Matrix::from_rows(&[&[1.0]]),
                Matrix::from_rows(&[&[1.0], &[-1.0]]),
            ],
        )
        .unwrap();
        let trace = forward(&net, &Matrix::from_rows(&[&[0.0]])).unwrap();
        assert_eq!(trace.output().get(0, 0), 0.5);
        assert_eq!(trace.output().get(1, 0), 0.5);
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let a = arch(&[4, 3, 2]);
        let mut rng = Rng::from_seed(42);
        let net = init_weights(&a, &mut rng, 0.8, WeightInit::NormalScaled).unwrap();
        let batch = sample_normal(&mut rng, 4, 5);
        let trace = forward(&net, &batch).unwrap();
        let oracle = scalar_forward(&net, &batch);
        for (x, y) in trace.output().as_slice().iter().zip(oracle.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let a = arch(&[4, 3, 2]);
        let mut rng = Rng::from_seed(2);
        let net = init_weights(&a, &mut rng, 0.1, WeightInit::NormalScaled).unwrap();
        assert!(forward(&net, &Matrix::zeros(5, 1)).is_err());
    }

    #[test]
    fn softmax_columns_sum_to_one_even_for_extreme_logits() {
        let logits = Matrix::from_rows(&[
            &[500.0, -500.0, 3.0],
            &[-500.0, 500.0, 1.0],
            &[0.0, 250.0, -2.0],
        ]);
        let p = softmax_columns(&logits);
        for c in 0..3 {
            let sum: f64 = (0..3).map(|r| p.get(r, c)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for r in 0..3 {
                let v = p.get(r, c);
                assert!((0.0..=1.0).contains(&v) && v.is_finite());
            }
        }
    }

    #[test]
    fn tanh_outputs_bounded_and_finite() {
        let a = arch(&[8, 6, 3]);
        let mut rng = Rng::from_seed(3);
        let net = init_weights(&a, &mut rng, 1.5, WeightInit::NormalScaled).unwrap();
        let batch = sample_normal(&mut rng, 8, 4);
        let trace = forward(&net, &batch).unwrap();
        assert!(trace.act[0]
            .as_slice()
            .iter()
            .all(|v| v.is_finite() && v.abs() <= 1.0));
        assert!(trace.output().is_all_finite());
    }

    #[test]
    fn init_scale_zero_is_exactly_zero() {
        let a = arch(&[5, 4, 3]);
        let mut rng = Rng::from_seed(7);
        let net = init_weights(&a, &mut rng, 0.0, WeightInit::NormalScaled).unwrap();
        assert!(net.weights().iter().all(Matrix::is_all_zero));
    }

    #[test]
    fn equal_to_feedback_scales_feedback_exactly() {
        let a = arch(&[5, 4, 3]);
        let mut frng = Rng::from_seed(11);
        let fb = FeedbackSet::sample_fa(&a, FeedbackDistribution::Normal, &mut frng).unwrap();
        let mut wrng = Rng::from_seed(13);
        let net = init_weights(&a, &mut wrng, 0.05, WeightInit::EqualToFeedback(&fb)).unwrap();
        for (w, r) in net.weights()[1..].iter().zip(fb.matrices()) {
            assert_eq!(w, &r.scale(0.05));
        }
    }

    #[test]
    fn sign_matched_copies_feedback_signs() {
        let a = arch(&[5, 4, 3]);
        let mut frng = Rng::from_seed(17);
        let fb = FeedbackSet::sample_fa(&a, FeedbackDistribution::Rademacher, &mut frng).unwrap();
        let mut wrng = Rng::from_seed(19);
        let net = init_weights(&a, &mut wrng, 0.05, WeightInit::SignMatched(&fb)).unwrap();
        for (w, r) in net.weights()[1..].iter().zip(fb.matrices()) {
            for (wv, rv) in w.as_slice().iter().zip(r.as_slice()) {
                if *rv != 0.0 && *wv != 0.0 {
                    assert_eq!(wv.signum(), rv.signum());
                }
            }
        }
    }

    #[test]
    fn first_layer_identical_across_init_modes() {
        let a = arch(&[5, 4, 3]);
        let mut frng = Rng::from_seed(23);
        let fb = FeedbackSet::sample_fa(&a, FeedbackDistribution::Normal, &mut frng).unwrap();
        let blue = init_weights(&a, &mut Rng::from_seed(29), 0.05, WeightInit::NormalScaled).unwrap();
        let green =
            init_weights(&a, &mut Rng::from_seed(29), 0.05, WeightInit::SignMatched(&fb)).unwrap();
        let red = init_weights(
            &a,
            &mut Rng::from_seed(29),
            0.05,
            WeightInit::EqualToFeedback(&fb),
        )
        .unwrap();
        assert_eq!(blue.weights()[0], green.weights()[0]);
        assert_eq!(blue.weights()[0], red.weights()[0]);
    }

    #[test]
    fn cross_entropy_examples() {
        // Exact one-hot prediction contributes zero loss.
        let probs = Matrix::from_rows(&[&[1.0, 0.25], &[0.0, 0.75]]);
        let onehot = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let loss = cross_entropy(&probs, &onehot).unwrap();
        let expect = (-(0.75f64).ln()) / 2.0;
        assert!((loss - expect).abs() < 1e-15);

        // Uniform over ten classes.
        let probs = Matrix::from_fn(10, 4, |_, _| 0.1);
        let labels = [0u8, 3, 7, 9];
        let loss = cross_entropy(&probs, &one_hot(&labels, 10)).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);

        // Zero probability at a true class is an error, never inf.
        let probs = Matrix::from_rows(&[&[0.0], &[1.0]]);
        let onehot = Matrix::from_rows(&[&[1.0], &[0.0]]);
        assert!(cross_entropy(&probs, &onehot).is_err());
    }

    #[test]
    fn cross_entropy_matches_scalar_oracle() {
        let mut rng = Rng::from_seed(31);
        let logits = sample_normal(&mut rng, 6, 9);
        let probs = softmax_columns(&logits);
        let labels: Vec<u8> = (0..9).map(|i| (i % 6) as u8).collect();
        let onehot = one_hot(&labels, 6);
        let mut expect = 0.0;
        for (c, &lab) in labels.iter().enumerate() {
            expect -= probs.get(lab as usize, c).ln();
        }
        expect /= labels.len() as f64;
        assert!((cross_entropy(&probs, &onehot).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        let probs = Matrix::from_rows(&[&[0.9, 0.1], &[0.1, 0.9]]);
        assert_eq!(accuracy(&probs, &[0, 1]), 1.0);
        assert_eq!(accuracy(&probs, &[1, 0]), 0.0);

        let single = Matrix::from_rows(&[&[0.2], &[0.8]]);
        assert_eq!(accuracy(&single, &[1]), 1.0);

        // Ties break toward the lowest class index.
        let tie = Matrix::from_rows(&[&[0.5], &[0.5]]);
        assert_eq!(accuracy(&tie, &[0]), 1.0);
        assert_eq!(accuracy(&tie, &[1]), 0.0);
    }

    #[test]
    fn random_predictor_is_near_chance_on_ten_classes() {
        // Binomial bound at n = 10000: 0.1 +/- 0.01 is ~3.3 sigma.
        let mut rng = Rng::from_seed(37);
        let probs = sample_normal(&mut rng, 10, 10_000).map(|v| v.abs());
        let labels: Vec<u8> = (0..10_000).map(|_| (rng.next_u32() % 10) as u8).collect();
        let acc = accuracy(&probs, &labels);
        assert!((acc - 0.1).abs() < 0.01, "accuracy {acc}");
    }

    #[test]
    fn softmax_jacobian_peak_examples() {
        // Scale zero: uniform probe, peak is p(1-p) at p = 1/3.
        let at0 = softmax_jacobian_peak(0.0);
        assert!((at0 - 2.0 / 9.0).abs() < 1e-15);

        assert!(softmax_jacobian_peak(100.0) < 1e-8);
        assert!(softmax_jacobian_peak(50.0) >= softmax_jacobian_peak(100.0));
    }

    #[test]
    fn one_hot_columns_sum_to_one() {
        let m = one_hot(&[2, 0, 1], 3);
        for c in 0..3 {
            let sum: f64 = (0..3).map(|r| m.get(r, c)).sum();
            assert_eq!(sum, 1.0);
        }
        assert_eq!(m.get(2, 0), 1.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 2), 1.0);
    }

    #[test]
    fn rademacher_feedback_shapes_match() {
        let a = arch(&[6, 5, 4, 3]);
        let mut rng = Rng::from_seed(41);
        let r = sample_rademacher(&mut rng, 4, 5);
        assert_eq!(r.shape(), (4, 5));
        assert_eq!(a.weight_shape(0), (5, 6));
        assert_eq!(a.weight_shape(2), (3, 4));
    }
}
