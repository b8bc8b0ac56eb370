//! The five weight-update rules behind one interface.
//!
//! Exact backprop propagates the output error through the transposed
//! forward weights. Feedback alignment (FA) runs the identical recursion
//! but substitutes a fixed random matrix for each weight transpose;
//! direct feedback alignment (DFA) projects the output error straight to
//! every layer through fixed random matrices. The perturbed-backprop rule
//! rotates each hidden-layer gradient to a prescribed angle against the
//! true gradient, and last-layer-only freezes everything below the top.
//!
//! All rules share the output layer: the fused softmax/cross-entropy
//! error `(p - y) / batch`, validated against finite differences in the
//! tests. Updates are means over the batch, so the learning rate keeps
//! its meaning when the batch size changes.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, Network};
use crate::numerics::{axpy, sample_normal, sample_rademacher, Matrix, Rng};

/// Distribution for feedback matrix entries. Rademacher ({-1, +1}) is the
/// default; normal exists for the alignment-forcing experiment, where the
/// random init must be statistically indistinguishable from the
/// feedback-copied one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackDistribution {
    Rademacher,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    Fa,
    Dfa,
}

/// Fixed random feedback matrices, sampled once and never updated.
///
/// For FA, `matrices[l-1]` stands in for `weights[l]` in the backward
/// pass (`l = 1..L`, so shapes mirror the forward weights above the first
/// layer). For DFA, `matrices[l]` has shape `n_L x n_{l+1}` and carries
/// the output error directly to layer `l` (`l = 0..L-1`).
///
/// Construction asserts every matrix has maximal rank. Note a small
/// Rademacher matrix is singular with positive probability; callers that
/// build tiny test networks pick seeds (or the normal distribution)
/// accordingly.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSet {
    kind: FeedbackKind,
    matrices: Vec<Matrix>,
}

impl FeedbackSet {
    pub fn sample_fa(
        arch: &crate::network::Architecture,
        dist: FeedbackDistribution,
        rng: &mut Rng,
    ) -> Result<FeedbackSet> {
        let mut matrices = Vec::with_capacity(arch.num_layers() - 1);
        for l in 1..arch.num_layers() {
            let (rows, cols) = arch.weight_shape(l);
            matrices.push(sample_full_rank(dist, rng, rows, cols, l)?);
        }
        Ok(FeedbackSet {
            kind: FeedbackKind::Fa,
            matrices,
        })
    }

    pub fn sample_dfa(
        arch: &crate::network::Architecture,
        dist: FeedbackDistribution,
        rng: &mut Rng,
    ) -> Result<FeedbackSet> {
        let out = arch.output_dim();
        let sizes = arch.layer_sizes();
        let mut matrices = Vec::with_capacity(arch.num_layers() - 1);
        for l in 0..arch.num_layers() - 1 {
            matrices.push(sample_full_rank(dist, rng, out, sizes[l + 1], l + 1)?);
        }
        Ok(FeedbackSet {
            kind: FeedbackKind::Dfa,
            matrices,
        })
    }

    /// Wraps explicit matrices (used by tests, e.g. to set `R = W`).
    /// Unlike the samplers, which redraw a bad matrix, an explicit
    /// rank-deficient matrix is an error.
    pub fn new(kind: FeedbackKind, matrices: Vec<Matrix>) -> Result<FeedbackSet> {
        for (i, m) in matrices.iter().enumerate() {
            let expected = m.rows().min(m.cols());
            let r = rank(m);
            if r < expected {
                return Err(Error::RankDeficient {
                    layer: i + 1,
                    rank: r,
                    expected,
                });
            }
        }
        Ok(FeedbackSet { kind, matrices })
    }

    pub fn kind(&self) -> FeedbackKind {
        self.kind
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    /// Order-sensitive digest of the exact bit patterns; experiments
    /// compare it before and after a run to prove the set was never
    /// touched.
    pub fn checksum(&self) -> u64 {
        const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = FNV_OFFSET;
        for m in &self.matrices {
            for v in m.as_slice() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(FNV_PRIME);
                }
            }
        }
        h
    }
}

fn sample(dist: FeedbackDistribution, rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    match dist {
        FeedbackDistribution::Rademacher => sample_rademacher(rng, rows, cols),
        FeedbackDistribution::Normal => sample_normal(rng, rows, cols),
    }
}

/// Draws until the matrix has maximal rank. A normal draw is full rank
/// with probability 1; a small Rademacher draw is singular a few percent
/// of the time, and the fixed-point analysis needs the nullspace to
/// vanish, so a bad draw is simply discarded (deterministically, from the
/// same stream).
fn sample_full_rank(
    dist: FeedbackDistribution,
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    layer: usize,
) -> Result<Matrix> {
    let expected = rows.min(cols);
    let mut last_rank = 0;
    for _ in 0..64 {
        let m = sample(dist, rng, rows, cols);
        last_rank = rank(&m);
        if last_rank == expected {
            return Ok(m);
        }
    }
    Err(Error::RankDeficient {
        layer,
        rank: last_rank,
        expected,
    })
}

/// Numerical rank via Gaussian elimination with partial pivoting.
fn rank(m: &Matrix) -> usize {
    let (rows, cols) = m.shape();
    let mut a: Vec<f64> = m.as_slice().to_vec();
    let tol = 1e-10 * m.inf_norm().max(1.0) * rows.max(cols) as f64;
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        if row >= rows {
            break;
        }
        let mut piv = row;
        for r in row + 1..rows {
            if a[r * cols + col].abs() > a[piv * cols + col].abs() {
                piv = r;
            }
        }
        if a[piv * cols + col].abs() <= tol {
            continue;
        }
        if piv != row {
            for c in 0..cols {
                a.swap(row * cols + c, piv * cols + c);
            }
        }
        for r in row + 1..rows {
            let factor = a[r * cols + col] / a[row * cols + col];
            for c in col..cols {
                a[r * cols + c] -= factor * a[row * cols + c];
            }
        }
        rank += 1;
        row += 1;
    }
    rank
}

/// Which rule produced an update; carried on every [`GradientSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Bp,
    Fa,
    Dfa,
    PerturbedBp,
    LastLayerOnly,
}

impl std::fmt::Display for RuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RuleKind::Bp => "bp",
            RuleKind::Fa => "fa",
            RuleKind::Dfa => "dfa",
            RuleKind::PerturbedBp => "perturbed",
            RuleKind::LastLayerOnly => "lastlayer",
        };
        f.write_str(s)
    }
}

/// An update rule ready to run: tag plus whatever fixed state it needs.
#[derive(Debug, Clone)]
pub enum UpdateRule {
    Bp,
    Fa(FeedbackSet),
    Dfa(FeedbackSet),
    /// Exact backprop, then each layer below the top is rotated to the
    /// given angle (radians, in `[0, pi]`) against the true gradient.
    PerturbedBp { angle: f64 },
    LastLayerOnly,
}

impl UpdateRule {
    pub fn perturbed_bp(angle: f64) -> Result<UpdateRule> {
        if !angle.is_finite() || !(0.0..=std::f64::consts::PI).contains(&angle) {
            return Err(Error::Config(format!(
                "perturbation angle must lie in [0, pi], got {angle}"
            )));
        }
        Ok(UpdateRule::PerturbedBp { angle })
    }

    pub fn kind(&self) -> RuleKind {
        match self {
            UpdateRule::Bp => RuleKind::Bp,
            UpdateRule::Fa(_) => RuleKind::Fa,
            UpdateRule::Dfa(_) => RuleKind::Dfa,
            UpdateRule::PerturbedBp { .. } => RuleKind::PerturbedBp,
            UpdateRule::LastLayerOnly => RuleKind::LastLayerOnly,
        }
    }

    pub fn feedback(&self) -> Option<&FeedbackSet> {
        match self {
            UpdateRule::Fa(fb) | UpdateRule::Dfa(fb) => Some(fb),
            _ => None,
        }
    }
}

/// Per-layer update matrices, shaped exactly like the network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<Matrix>,
    rule: RuleKind,
}

impl GradientSet {
    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn rule(&self) -> RuleKind {
        self.rule
    }

    pub fn is_all_zero(&self) -> bool {
        self.layers.iter().all(Matrix::is_all_zero)
    }

    pub fn inf_norms(&self) -> Vec<f64> {
        self.layers.iter().map(Matrix::inf_norm).collect()
    }
}

/// Error at the output pre-activations: `(softmax - onehot) / batch`.
/// This is the fused softmax/cross-entropy derivative, the mean-over-batch
/// convention included.
pub fn output_delta(trace: &ForwardTrace, onehot: &Matrix) -> Result<Matrix> {
    let probs = trace.output();
    if probs.shape() != onehot.shape() {
        return Err(Error::Shape {
            op: "output_delta",
            lhs_rows: probs.rows(),
            lhs_cols: probs.cols(),
            rhs_rows: onehot.rows(),
            rhs_cols: onehot.cols(),
        });
    }
    let inv_b = 1.0 / trace.batch_size() as f64;
    Ok(axpy(-1.0, onehot, probs)?.scale(inv_b))
}

fn check_trace(net: &Network, trace: &ForwardTrace, op: &'static str) -> Result<()> {
    let layers = net.arch().num_layers();
    if trace.activations().len() != layers
        || trace.input().rows() != net.arch().input_dim()
        || trace.output().rows() != net.arch().output_dim()
    {
        return Err(Error::Dimension {
            op,
            msg: "forward trace does not match network architecture".into(),
        });
    }
    Ok(())
}

/// tanh'(h) computed from the stored activation: `1 - f^2`.
fn tanh_derivative(act: &Matrix) -> Matrix {
    act.map(|f| 1.0 - f * f)
}

/// Shared backward recursion. `carriers[l-1]` is the matrix whose
/// transpose carries the error from layer `l` down to layer `l-1`: the
/// forward weights for BP, the fixed random stand-ins for FA.
fn backward_recursion(
    net: &Network,
    trace: &ForwardTrace,
    onehot: &Matrix,
    rule: RuleKind,
    carriers: &[&Matrix],
) -> Result<GradientSet> {
    let layers = net.arch().num_layers();
    debug_assert_eq!(carriers.len() + 1, layers);
    let mut grads = vec![Matrix::zeros(1, 1); layers];
    let mut delta = output_delta(trace, onehot)?;
    for l in (0..layers).rev() {
        let below = if l == 0 {
            trace.input()
        } else {
            &trace.activations()[l - 1]
        };
        grads[l] = delta.matmul_nt(below)?;
        if l > 0 {
            let carried = carriers[l - 1].matmul_tn(&delta)?;
            delta = carried.hadamard(&tanh_derivative(&trace.activations()[l - 1]))?;
        }
    }
    Ok(GradientSet {
        layers: grads,
        rule,
    })
}

/// Exact loss gradient, layer by layer.
pub fn backprop(net: &Network, trace: &ForwardTrace, onehot: &Matrix) -> Result<GradientSet> {
    check_trace(net, trace, "backprop")?;
    let carriers: Vec<&Matrix> = net.weights()[1..].iter().collect();
    backward_recursion(net, trace, onehot, RuleKind::Bp, &carriers)
}

/// FA pseudo-gradient: the backprop recursion with each weight transpose
/// replaced by the fixed random matrix of the same shape. The output
/// layer is identical to backprop, so loss extrema are fixed points of
/// this rule too; away from them the update is not the gradient of any
/// function.
pub fn fa_pseudogradient(
    net: &Network,
    feedback: &FeedbackSet,
    trace: &ForwardTrace,
    onehot: &Matrix,
) -> Result<GradientSet> {
    check_trace(net, trace, "fa_pseudogradient")?;
    if feedback.kind() != FeedbackKind::Fa {
        return Err(Error::Config("fa_pseudogradient needs FA feedback".into()));
    }
    if feedback.matrices().len() + 1 != net.arch().num_layers() {
        return Err(Error::Dimension {
            op: "fa_pseudogradient",
            msg: format!(
                "feedback set has {} matrices, network has {} layers",
                feedback.matrices().len(),
                net.arch().num_layers()
            ),
        });
    }
    for (l, r) in feedback.matrices().iter().enumerate() {
        if r.shape() != net.arch().weight_shape(l + 1) {
            return Err(Error::Dimension {
                op: "fa_pseudogradient",
                msg: format!(
                    "feedback matrix {} is {:?}, weights are {:?}",
                    l + 1,
                    r.shape(),
                    net.arch().weight_shape(l + 1)
                ),
            });
        }
    }
    let carriers: Vec<&Matrix> = feedback.matrices().iter().collect();
    backward_recursion(net, trace, onehot, RuleKind::Fa, &carriers)
}

/// DFA pseudo-gradient: every hidden layer receives the output error
/// directly through its own fixed random matrix, no layer-by-layer
/// propagation.
pub fn dfa_pseudogradient(
    net: &Network,
    feedback: &FeedbackSet,
    trace: &ForwardTrace,
    onehot: &Matrix,
) -> Result<GradientSet> {
    check_trace(net, trace, "dfa_pseudogradient")?;
    if feedback.kind() != FeedbackKind::Dfa {
        return Err(Error::Config("dfa_pseudogradient needs DFA feedback".into()));
    }
    let layers = net.arch().num_layers();
    if feedback.matrices().len() + 1 != layers {
        return Err(Error::Dimension {
            op: "dfa_pseudogradient",
            msg: format!(
                "feedback set has {} matrices, network has {} layers",
                feedback.matrices().len(),
                layers
            ),
        });
    }
    let out_delta = output_delta(trace, onehot)?;
    let mut grads = Vec::with_capacity(layers);
    for l in 0..layers {
        let below = if l == 0 {
            trace.input()
        } else {
            &trace.activations()[l - 1]
        };
        let delta = if l + 1 == layers {
            out_delta.clone()
        } else {
            let b = &feedback.matrices()[l];
            if b.shape() != (net.arch().output_dim(), net.arch().layer_sizes()[l + 1]) {
                return Err(Error::Dimension {
                    op: "dfa_pseudogradient",
                    msg: format!("feedback matrix {} has shape {:?}", l, b.shape()),
                });
            }
            b.matmul_tn(&out_delta)?
                .hadamard(&tanh_derivative(&trace.activations()[l]))?
        };
        grads.push(delta.matmul_nt(below)?);
    }
    Ok(GradientSet {
        layers: grads,
        rule: RuleKind::Dfa,
    })
}

/// Rotates `grad` to the prescribed angle against itself: the result has
/// the same Frobenius norm, its alignment with `grad` is `cos(angle)`,
/// and the orthogonal component points in a uniformly random direction of
/// the orthogonal complement (Gaussian sample, Gram-Schmidt against the
/// gradient, then the cos/sin combination rescaled to the original norm).
///
/// Degenerate cases: an all-zero gradient is returned unchanged, and
/// `angle == 0` returns the gradient bit-for-bit without consuming any
/// draws, so a zero-angle perturbed run is exactly a backprop run.
pub fn perturb_gradient(grad: &Matrix, angle: f64, rng: &mut Rng) -> Result<Matrix> {
    if !angle.is_finite() || !(0.0..=std::f64::consts::PI).contains(&angle) {
        return Err(Error::Config(format!(
            "perturbation angle must lie in [0, pi], got {angle}"
        )));
    }
    if grad.is_all_zero() || angle == 0.0 {
        return Ok(grad.clone());
    }
    let norm = grad.frobenius_norm();
    let unit = grad.scale(1.0 / norm);
    // Gram-Schmidt, two passes; one pass leaves O(eps * sqrt(n)) residue
    // which the alignment tolerance of 1e-9 cannot afford at n ~ 5e5.
    let mut ortho = None;
    for _ in 0..32 {
        let mut u = sample_normal(rng, grad.rows(), grad.cols());
        for _ in 0..2 {
            let proj = u.dot(&unit)?;
            u = axpy(-proj, &unit, &u)?;
        }
        let n = u.frobenius_norm();
        if n > 1e-12 {
            ortho = Some(u.scale(1.0 / n));
            break;
        }
    }
    let ortho = ortho.ok_or(Error::Domain {
        op: "perturb_gradient",
        msg: "could not find a direction orthogonal to the gradient".into(),
    })?;
    let combined = axpy(angle.cos(), &unit, &ortho.scale(angle.sin()))?;
    let scale = norm / combined.frobenius_norm();
    Ok(combined.scale(scale))
}

/// Dispatches to the rule implementations. The RNG is consumed only by
/// the perturbed rule; every other rule is a pure function of its inputs.
pub fn compute_update(
    rule: &UpdateRule,
    net: &Network,
    trace: &ForwardTrace,
    onehot: &Matrix,
    rng: &mut Rng,
) -> Result<GradientSet> {
    match rule {
        UpdateRule::Bp => backprop(net, trace, onehot),
        UpdateRule::Fa(fb) => fa_pseudogradient(net, fb, trace, onehot),
        UpdateRule::Dfa(fb) => dfa_pseudogradient(net, fb, trace, onehot),
        UpdateRule::PerturbedBp { angle } => {
            let bp = backprop(net, trace, onehot)?;
            let layers = bp.layers.len();
            let mut out = Vec::with_capacity(layers);
            for (l, g) in bp.layers.into_iter().enumerate() {
                if l + 1 == layers {
                    // Output layer stays exact.
                    out.push(g);
                } else {
                    out.push(perturb_gradient(&g, *angle, rng)?);
                }
            }
            Ok(GradientSet {
                layers: out,
                rule: RuleKind::PerturbedBp,
            })
        }
        UpdateRule::LastLayerOnly => {
            check_trace(net, trace, "compute_update")?;
            let layers = net.arch().num_layers();
            let delta = output_delta(trace, onehot)?;
            let below = if layers == 1 {
                trace.input()
            } else {
                &trace.activations()[layers - 2]
            };
            let mut grads: Vec<Matrix> = (0..layers - 1)
                .map(|l| {
                    let (r, c) = net.arch().weight_shape(l);
                    Matrix::zeros(r, c)
                })
                .collect();
            grads.push(delta.matmul_nt(below)?);
            Ok(GradientSet {
                layers: grads,
                rule: RuleKind::LastLayerOnly,
            })
        }
    }
}

/// Descent step: `w <- w - learning_rate * grad` per layer. Any
/// non-finite result is an error naming the layer, never a silent NaN in
/// the weights.
pub fn apply_update(net: &Network, grads: &GradientSet, learning_rate: f64) -> Result<Network> {
    if grads.layers.len() != net.weights().len() {
        return Err(Error::Dimension {
            op: "apply_update",
            msg: format!(
                "gradient set has {} layers, network has {}",
                grads.layers.len(),
                net.weights().len()
            ),
        });
    }
    let mut new_weights = Vec::with_capacity(net.weights().len());
    for (l, (w, g)) in net.weights().iter().zip(&grads.layers).enumerate() {
        let updated = axpy(-learning_rate, g, w)?;
        if !updated.is_all_finite() {
            return Err(Error::NonFinite {
                context: format!("apply_update produced a non-finite weight in layer {l}"),
            });
        }
        new_weights.push(updated);
    }
    let mut out = net.clone();
    out.replace_weights(new_weights);
    Ok(out)
}

/// Max relative error between analytic backprop and central finite
/// differences of the loss, over every weight entry of a small seeded
/// network. Backs the `gradcheck` CLI subcommand; the acceptance suite
/// carries its own independent copy of the finite-difference oracle.
pub fn finite_difference_max_rel_error(seed: u64) -> Result<f64> {
    use crate::network::{cross_entropy, forward, init_weights, one_hot, Architecture, WeightInit};

    let arch = Architecture::new(vec![4, 3, 2])?;
    let mut wrng = Rng::derived(seed, "gradcheck-weights");
    let net = init_weights(&arch, &mut wrng, 0.7, WeightInit::NormalScaled)?;
    let mut drng = Rng::derived(seed, "gradcheck-data");
    let batch = sample_normal(&mut drng, 4, 2);
    let labels = [(drng.next_u32() % 2) as u8, (drng.next_u32() % 2) as u8];
    let onehot = one_hot(&labels, 2);

    let trace = forward(&net, &batch)?;
    let analytic = backprop(&net, &trace, &onehot)?;

    let h = 1e-5;
    let mut worst = 0.0f64;
    for l in 0..net.arch().num_layers() {
        let (rows, cols) = net.weights()[l].shape();
        for i in 0..rows {
            for j in 0..cols {
                let loss_at = |delta: f64| -> Result<f64> {
                    let mut ws: Vec<Matrix> = net.weights().to_vec();
                    let mut bumped = ws[l].clone();
                    let idx = i * cols + j;
                    bumped.as_mut_slice()[idx] += delta;
                    ws[l] = bumped;
                    let bumped_net = Network::new(net.arch().clone(), ws)?;
                    cross_entropy(forward(&bumped_net, &batch)?.output(), &onehot)
                };
                let numeric = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
                let a = analytic.layers()[l].get(i, j);
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}
