//! Central finite-difference verification of analytic gradients.
//!
//! Only forward values are used on the numeric side, so the check is
//! independent of the tape's backward rules.

use alloc::string::String;

use crate::error::Result;
use crate::params::ParamStore;
use crate::tape::ParamGrads;

/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<Mismatch>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares `analytic` against `(f(θ+h) - f(θ-h)) / 2h` for every scalar of
/// every parameter in `store`. `stride` > 1 samples every `stride`-th entry.
pub fn check_store(
    store: &ParamStore,
    analytic: &ParamGrads,
    h: f64,
    stride: usize,
    mut loss: impl FnMut(&ParamStore) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for id in store.ids() {
        let n = store.get(id).len();
        let grad = analytic.0[id.index()].as_ref();
        for k in (0..n).step_by(stride.max(1)) {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = loss(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = loss(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.map_or(0.0, |g| g.data()[k]);
            let rel = relative_error(a, numeric);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst = Some(Mismatch {
                    param: store.name(id).into(),
                    index: k,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
