//! Central finite-difference checks of analytic gradients, run in `f64`.
//!
//! The loss used for a single layer is `<r, layer(x)>` with a fixed random
//! projection `r`, so the analytic input gradient is `layer.backward(r)`.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Layer, Mode, ParamStore, Result, Tensor};

/// Smooth curvature moves the one-sided slopes apart by about `step * L''`;
/// a gap larger than `KINK_CURVATURE * step` is taken as a kink.
const KINK_CURVATURE: f64 = 100.0;

/// Worst relative error seen over the checked entries.
#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Entries skipped because the one-sided differences disagree, i.e. the
    /// perturbation crossed a ReLU kink.
    pub kinks: usize,
    pub worst: String,
}

impl GradReport {
    fn record(&mut self, what: String, analytic: f64, numeric: f64, floor: f64) {
        let rel = relative_error(analytic, numeric, floor);
        self.checked += 1;
        if rel > self.max_rel_err || self.worst.is_empty() {
            self.max_rel_err = self.max_rel_err.max(rel);
            self.worst = format!("{what}: analytic {analytic:.6e} numeric {numeric:.6e}");
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        if other.max_rel_err >= self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.kinks += other.kinks;
    }

    /// Central difference from `L(θ-h)`, `L(θ)`, `L(θ+h)`. When the two
    /// one-sided slopes disagree by more than smooth curvature explains, the
    /// perturbation crossed a ReLU kink; the analytic value must then match
    /// one of the second-order one-sided differences taken with `h/4`.
    #[allow(clippy::too_many_arguments)]
    fn record_at(
        &mut self,
        what: String,
        analytic: f64,
        step: f64,
        floor: f64,
        mut loss: impl FnMut(f64) -> Result<f64>,
    ) -> Result<()> {
        let (lm, l0, lp) = (loss(-step)?, loss(0.0)?, loss(step)?);
        let fwd = (lp - l0) / step;
        let bwd = (l0 - lm) / step;
        if (fwd - bwd).abs() <= KINK_CURVATURE * step * fwd.abs().max(bwd.abs()).max(1.0) {
            self.record(what, analytic, (lp - lm) / (2.0 * step), floor);
            return Ok(());
        }
        self.kinks += 1;
        let s = step / 4.0;
        let one_sided = |dir: f64, loss: &mut dyn FnMut(f64) -> Result<f64>| -> Result<f64> {
            Ok(dir * (-3.0 * l0 + 4.0 * loss(dir * s)? - loss(dir * 2.0 * s)?) / (2.0 * s))
        };
        let right = one_sided(1.0, &mut loss)?;
        let left = one_sided(-1.0, &mut loss)?;
        let numeric = if (analytic - right).abs() <= (analytic - left).abs() {
            right
        } else {
            left
        };
        self.record(format!("{what} (kink)"), analytic, numeric, floor);
        Ok(())
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn random_tensor<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

fn pick<R: Rng + ?Sized>(len: usize, max: usize, rng: &mut R) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        sample(rng, len, max).into_vec()
    }
}

fn project(r: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Checks input and parameter gradients of one layer.
///
/// At most `max_entries` randomly chosen entries of the input and of each
/// parameter tensor are perturbed by `±step`.
#[allow(clippy::too_many_arguments)]
pub fn check_layer<L: Layer<f64>, R: Rng + ?Sized>(
    layer: &mut L,
    store: &mut ParamStore<f64>,
    x: &Tensor<f64>,
    mode: Mode,
    step: f64,
    floor: f64,
    max_entries: usize,
    rng: &mut R,
) -> Result<GradReport> {
    let y = layer.forward(store, x.clone(), mode)?;
    let r = random_tensor(y.shape(), rng);
    store.zero_grads();
    let gx = layer.backward(store, r.clone())?;

    let loss_at = |layer: &mut L, store: &mut ParamStore<f64>, x: Tensor<f64>| -> Result<f64> {
        let y = layer.forward(store, x, mode)?;
        Ok(project(&r, &y))
    };

    let mut report = GradReport::default();
    for i in pick(x.len(), max_entries, rng) {
        report.record_at(format!("input[{i}]"), gx.data()[i], step, floor, |d| {
            let mut xd = x.clone();
            xd.data_mut()[i] += d;
            loss_at(layer, store, xd)
        })?;
    }

    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let analytic = store.param(&name)?.grad.clone();
        let len = analytic.len();
        for i in pick(len, max_entries, rng) {
            let orig = store.value(&name)?.data()[i];
            report.record_at(format!("{name}[{i}]"), analytic.data()[i], step, floor, |d| {
                store.param_mut(&name)?.value.data_mut()[i] = orig + d;
                let l = loss_at(layer, store, x.clone());
                store.param_mut(&name)?.value.data_mut()[i] = orig;
                l
            })?;
        }
    }
    Ok(report)
}
