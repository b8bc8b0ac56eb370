//! Alignment measures, gradient norms, and the per-step metrics record
//! every experiment emits.
//!
//! The alignment of two same-shaped matrices is their flattened inner
//! product divided by the product of Frobenius norms, in `[-1, 1]`. The
//! flattening order is irrelevant (the sum is over entries either way),
//! which the tests pin down by comparing against the transposed pair.
//!
//! A zero matrix has no direction, so its alignment is an error at the
//! measure level and a missing value (empty CSV field, JSON null) at the
//! record level — reporting 0 would fabricate orthogonality.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::numerics::Matrix;
use crate::rules::{backprop, FeedbackKind, FeedbackSet, GradientSet, RuleKind};

/// Inner product over entries divided by the product of norms.
pub fn alignment(a: &Matrix, b: &Matrix) -> Result<f64> {
    let na = a.frobenius_norm();
    let nb = b.frobenius_norm();
    if na == 0.0 {
        return Err(Error::ZeroAlignment { which: "left" });
    }
    if nb == 0.0 {
        return Err(Error::ZeroAlignment { which: "right" });
    }
    Ok(a.dot(b)? / (na * nb))
}

fn alignment_or_missing(a: &Matrix, b: &Matrix) -> Result<Option<f64>> {
    match alignment(a, b) {
        Ok(v) => Ok(Some(v)),
        Err(Error::ZeroAlignment { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per-layer alignment of a rule's update against the exact gradient
/// computed on the identical `(net, trace, onehot)` state. The backprop
/// gradient is computed here for measurement only and never applied;
/// no RNG is consumed, so measuring never shifts a training trajectory.
/// Zero-gradient layers report `None`.
pub fn gradient_alignment(
    net: &Network,
    trace: &crate::network::ForwardTrace,
    onehot: &Matrix,
    update: &GradientSet,
) -> Result<Vec<Option<f64>>> {
    debug_assert!(
        update.rule() != RuleKind::Bp,
        "gradient alignment of backprop against itself is vacuous"
    );
    let reference = backprop(net, trace, onehot)?;
    update
        .layers()
        .iter()
        .zip(reference.layers())
        .map(|(u, g)| alignment_or_missing(u, g))
        .collect()
}

/// Per-layer alignment of the forward weights with their FA feedback
/// stand-ins, defined for layers `1..L` (the layers that have one).
pub fn weight_alignment(net: &Network, feedback: &FeedbackSet) -> Result<Vec<Option<f64>>> {
    if feedback.kind() != FeedbackKind::Fa {
        return Err(Error::Config(
            "weight alignment is defined against FA feedback matrices".into(),
        ));
    }
    if feedback.matrices().len() + 1 != net.arch().num_layers() {
        return Err(Error::Dimension {
            op: "weight_alignment",
            msg: format!(
                "feedback set has {} matrices, network has {} layers",
                feedback.matrices().len(),
                net.arch().num_layers()
            ),
        });
    }
    net.weights()[1..]
        .iter()
        .zip(feedback.matrices())
        .map(|(w, r)| alignment_or_missing(w, r))
        .collect()
}

/// Per-layer alignment between the weights of two networks with identical
/// architectures (e.g. an FA run and a BP run trained in lockstep).
pub fn cross_run_weight_alignment(a: &Network, b: &Network) -> Result<Vec<Option<f64>>> {
    if a.arch() != b.arch() {
        return Err(Error::Dimension {
            op: "cross_run_weight_alignment",
            msg: "architectures differ".into(),
        });
    }
    a.weights()
        .iter()
        .zip(b.weights())
        .map(|(wa, wb)| alignment_or_missing(wa, wb))
        .collect()
}

/// One instrumented training step.
///
/// `step` counts update steps from 1 and is strictly increasing within a
/// run; the record describes the pre-update state at that step together
/// with the update about to be applied. Alignment vectors are empty when
/// the rule does not define them (backprop has no gradient alignment,
/// only FA has weight alignment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub epoch: u32,
    pub test_accuracy: Option<f64>,
    pub train_loss: f64,
    /// Per-layer alignment of the applied update with the exact gradient;
    /// `ga[l]` is layer `l+1` in 1-based terms. Empty for backprop runs.
    pub ga: Vec<Option<f64>>,
    /// Per-layer weight/feedback alignment for layers `2..=L`. Empty for
    /// rules without FA feedback.
    pub wa: Vec<Option<f64>>,
    /// Per-layer infinity norm of the applied update.
    pub ginf: Vec<f64>,
}

/// CSV header for a network of `num_layers` weight layers:
/// `step,epoch,test_accuracy,train_loss,ga_l1..,wa_l2..,ginf_l1..`.
pub fn csv_header(num_layers: usize) -> String {
    let mut cols = vec![
        "step".to_string(),
        "epoch".to_string(),
        "test_accuracy".to_string(),
        "train_loss".to_string(),
    ];
    for l in 1..=num_layers {
        cols.push(format!("ga_l{l}"));
    }
    for l in 2..=num_layers {
        cols.push(format!("wa_l{l}"));
    }
    for l in 1..=num_layers {
        cols.push(format!("ginf_l{l}"));
    }
    cols.join(",")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

impl MetricsRecord {
    /// One CSV row matching [`csv_header`]; missing values serialize as
    /// empty fields. Floats use the shortest round-trip formatting, so a
    /// parsed row reproduces the exact bits.
    pub fn to_csv_row(&self, num_layers: usize) -> String {
        assert!(self.ga.is_empty() || self.ga.len() == num_layers);
        assert!(self.wa.is_empty() || self.wa.len() + 1 == num_layers);
        assert_eq!(self.ginf.len(), num_layers);
        let mut cols = vec![
            self.step.to_string(),
            self.epoch.to_string(),
            fmt_opt(self.test_accuracy),
            format!("{}", self.train_loss),
        ];
        for l in 0..num_layers {
            cols.push(fmt_opt(self.ga.get(l).copied().flatten()));
        }
        for l in 0..num_layers - 1 {
            cols.push(fmt_opt(self.wa.get(l).copied().flatten()));
        }
        for v in &self.ginf {
            cols.push(format!("{v}"));
        }
        cols.join(",")
    }

    /// Parses a data row written by [`Self::to_csv_row`].
    pub fn from_csv_row(row: &str, num_layers: usize) -> Result<MetricsRecord> {
        let fields: Vec<&str> = row.split(',').collect();
        let expected = 4 + num_layers + (num_layers - 1) + num_layers;
        if fields.len() != expected {
            return Err(Error::Config(format!(
                "CSV row has {} fields, expected {expected}",
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Config(format!("bad float {s:?}: {e}")))
        };
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f(s).map(Some)
            }
        };
        let step = fields[0]
            .parse()
            .map_err(|e| Error::Config(format!("bad step: {e}")))?;
        let epoch = fields[1]
            .parse()
            .map_err(|e| Error::Config(format!("bad epoch: {e}")))?;
        let test_accuracy = parse_opt(fields[2])?;
        let train_loss = parse_f(fields[3])?;
        let ga: Vec<Option<f64>> = fields[4..4 + num_layers]
            .iter()
            .map(|s| parse_opt(s))
            .collect::<Result<_>>()?;
        let wa: Vec<Option<f64>> = fields[4 + num_layers..4 + 2 * num_layers - 1]
            .iter()
            .map(|s| parse_opt(s))
            .collect::<Result<_>>()?;
        let ginf: Vec<f64> = fields[4 + 2 * num_layers - 1..]
            .iter()
            .map(|s| parse_f(s))
            .collect::<Result<_>>()?;
        let all_none = |v: &[Option<f64>]| v.iter().all(Option::is_none);
        Ok(MetricsRecord {
            step,
            epoch,
            test_accuracy,
            train_loss,
            ga: if all_none(&ga) { vec![] } else { ga },
            wa: if all_none(&wa) { vec![] } else { wa },
            ginf,
        })
    }

    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("record serialization cannot fail")
    }
}

/// Writes header plus one row per record.
pub fn write_csv(path: &Path, num_layers: usize, records: &[MetricsRecord]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 64);
    out.push_str(&csv_header(num_layers));
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row(num_layers));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// JSON-lines alternative to the CSV, one record per line, same field
/// names with the per-layer columns grouped into arrays.
pub fn write_jsonl(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 96);
    for r in records {
        out.push_str(&r.to_jsonl());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
