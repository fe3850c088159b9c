//! Finite-difference verification of analytic gradients.
//!
//! Runs in f64 regardless of training precision. The caller provides a
//! builder closure that reconstructs the forward computation from leaf
//! ids; central differences around each parameter element are compared
//! against one analytic backward pass.
//!
//! Kinked activations (ReLU family) have no derivative at zero, so
//! finite differences straddling a kink are meaningless. The checker
//! does not try to detect that; callers are expected to choose inputs
//! whose pre-activations stay away from zero by more than `eps`.

use alloc::format;
use alloc::vec::Vec;

use super::{AutodiffError, Graph, VarId};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error |analytic - numeric| / max(|a|, |n|, 1e-8).
    pub max_rel_err: f64,
    /// Parameter and flat element index where the maximum occurred.
    pub worst_param: usize,
    pub worst_index: usize,
    /// Number of scalar elements checked.
    pub checked: usize,
}

/// Checks every element of every parameter. `build` must be a pure
/// function of the leaf values and return a scalar loss node.
pub fn grad_check<F>(
    build: F,
    params: &[Tensor<f64>],
    eps: f64,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph<f64>, &[VarId]) -> Result<VarId, AutodiffError>,
{
    let eval = |values: &[Tensor<f64>], track: bool| -> Result<(Graph<f64>, Vec<VarId>, VarId), AutodiffError> {
        let mut g = Graph::new();
        let ids: Vec<VarId> = values.iter().map(|p| g.leaf(p.clone(), track)).collect();
        let loss = build(&mut g, &ids)?;
        if !g.value(loss).is_scalar() {
            return Err(AutodiffError::NonScalarLoss { shape: g.value(loss).shape().to_vec() });
        }
        let lv = g.value(loss).item()?;
        if !lv.is_finite() {
            return Err(AutodiffError::NonFinite { context: format!("loss value {lv}") });
        }
        Ok((g, ids, loss))
    };

    let (mut g, ids, loss) = eval(params, true)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = ids
        .iter()
        .map(|&id| g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(g.value(id).shape())))
        .collect();

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst_param: 0, worst_index: 0, checked: 0 };
    for pi in 0..params.len() {
        for ei in 0..params[pi].numel() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + eps;
            let (gp, _, lp) = eval(&work, false)?;
            let plus = gp.value(lp).item()?;
            work[pi].data_mut()[ei] = orig - eps;
            let (gm, _, lm) = eval(&work, false)?;
            let minus = gm.value(lm).item()?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(AutodiffError::NonFinite {
                    context: format!("finite difference for parameter {pi} element {ei}"),
                });
            }
            let a = analytic[pi].data()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = pi;
                report.worst_index = ei;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
