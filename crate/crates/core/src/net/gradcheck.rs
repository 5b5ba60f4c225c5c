//! Central finite-difference check of tape gradients.

use super::model::{Model, Pyramid};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckEntry {
    /// `|analytic - numeric| / max(|analytic|, floor)`.
    pub fn rel_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(floor)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst: Option<GradCheckEntry>,
    /// Gradient magnitude below which the stencil's rounding error exceeds
    /// 1e-4 of the value; smaller gradients are measured against it.
    pub floor: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |w| w.rel_error(self.floor))
    }
}

/// Rounding error of the five-point stencil on a loss whose terms sum to
/// `magnitude` in absolute value, divided by 1e-4.
fn stencil_floor(magnitude: f64, h: f64) -> f64 {
    1.5 * f64::EPSILON * magnitude / h / 1e-4
}

/// Compares the tape gradient of `L = sum(weights .* d)` with the five-point
/// central difference of step `h` for the flat parameter indices in `which`. The
/// numeric side uses the tape-free forward pass.
pub fn check_gradients(
    model: &Model,
    pyr: &Pyramid,
    blind_spot: bool,
    weights: &Tensor,
    which: impl IntoIterator<Item = usize>,
    h: f64,
) -> Result<GradCheckReport> {
    let (tape, out) = model.forward_tape(pyr, blind_spot)?;
    let grads = tape.backward(out, weights.clone())?;
    let flat: Vec<f64> = grads.params.iter().flat_map(|t| t.data.iter().copied()).collect();
    let mut locate = Vec::with_capacity(flat.len());
    for (ti, t) in grads.params.iter().enumerate() {
        locate.extend((0..t.len()).map(|k| (ti, k)));
    }
    let ctx = model.prepare(pyr, blind_spot)?;
    let loss = |m: &Model| -> f64 {
        let d = m.infer_prepared(&ctx);
        d.iter()
            .enumerate()
            .map(|(i, v)| (0..3).map(|c| v[c] * weights.data[3 * i + c]).sum::<f64>())
            .sum()
    };
    let magnitude: f64 = model
        .infer_prepared(&ctx)
        .iter()
        .enumerate()
        .map(|(i, v)| (0..3).map(|c| (v[c] * weights.data[3 * i + c]).abs()).sum::<f64>())
        .sum();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        floor: stencil_floor(magnitude, h),
        ..Default::default()
    };
    for k in which {
        let orig = probe.params.flat_get(k);
        let mut at = |x: f64| {
            probe.params.flat_set(k, orig + x);
            loss(&probe)
        };
        let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        probe.params.flat_set(k, orig);
        let (ti, local) = locate[k];
        let entry = GradCheckEntry {
            param: model.params.name(ti).to_string(),
            index: local,
            analytic: flat[k],
            numeric,
        };
        report.checked += 1;
        let floor = report.floor;
        if report.worst.as_ref().is_none_or(|w| entry.rel_error(floor) > w.rel_error(floor)) {
            report.worst = Some(entry);
        }
    }
    Ok(report)
}
