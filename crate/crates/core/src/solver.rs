//! Reduced-problem solvers for internal nodes: exact weighted axis-aligned
//! split search and weighted l1-regularized logistic regression.
//!
//! Both work on [`WeightedBinarySample`]s whose pseudo-label says which
//! child the instance should go to (`+1` = right, `-1` = left).

use crate::error::{Error, Result};
use crate::tree::{dot, NodeKind};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBinarySample<'a> {
    pub x: &'a [f64],
    /// `+1.0` (go right) or `-1.0` (go left).
    pub pseudo_label: f64,
    /// Strictly positive.
    pub weight: f64,
}

impl<'a> WeightedBinarySample<'a> {
    pub fn new(x: &'a [f64], goes_right: bool, weight: f64) -> Self {
        WeightedBinarySample { x, pseudo_label: if goes_right { 1.0 } else { -1.0 }, weight }
    }

    #[inline]
    pub fn wants_right(&self) -> bool {
        self.pseudo_label > 0.0
    }
}

/// Weighted misrouting error of a split on a set of samples.
pub fn weighted_error(split: &NodeKind, samples: &[WeightedBinarySample<'_>]) -> f64 {
    samples
        .iter()
        .filter(|s| split.goes_right(s.x) != s.wants_right())
        .map(|s| s.weight)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSplit {
    pub feature: usize,
    /// May be `-inf` (everything right) or `+inf` (everything left).
    pub threshold: f64,
    pub weighted_error: f64,
}

impl AxisSplit {
    pub fn to_kind(self) -> NodeKind {
        NodeKind::Axis { feature: self.feature, threshold: self.threshold }
    }
}

const INNER_SWEEPS: usize = 100;
const INNER_TOL: f64 = 1e-3;
const SUFFICIENT_DECREASE: f64 = 0.01;

/// Relative slack under which two candidate errors count as tied.
const TIE_EPS: f64 = 1e-12;

/// Exact minimizer of the weighted misrouting error over all features and
/// all thresholds: midpoints between consecutive distinct values, plus the
/// `-inf` / `+inf` sentinels that send every sample one way. Ties go to the
/// lowest feature, then the lowest threshold.
pub fn best_axis_split(samples: &[WeightedBinarySample<'_>]) -> Result<AxisSplit> {
    let first = samples.first().ok_or_else(|| Error::invalid("best_axis_split needs at least one sample"))?;
    let d = first.x.len();
    if samples.iter().any(|s| s.x.len() != d) {
        return Err(Error::invalid("samples have different dimensions"));
    }
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    let neg_total: f64 = samples.iter().filter(|s| !s.wants_right()).map(|s| s.weight).sum();
    let tol = TIE_EPS * total.max(1.0);

    let mut best = AxisSplit { feature: 0, threshold: f64::NEG_INFINITY, weighted_error: neg_total };
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for j in 0..d {
        order.sort_unstable_by(|&a, &b| samples[a].x[j].total_cmp(&samples[b].x[j]));
        // Threshold -inf: everyone right, the negatives are wrong.
        let mut err = neg_total;
        let mut i = 0;
        while i < order.len() {
            let v = samples[order[i]].x[j];
            // Move the whole group of equal values to the left side.
            while i < order.len() && samples[order[i]].x[j] == v {
                let s = &samples[order[i]];
                err += if s.wants_right() { s.weight } else { -s.weight };
                i += 1;
            }
            let threshold = match order.get(i) {
                Some(&next) => midpoint(v, samples[next].x[j]),
                None => f64::INFINITY,
            };
            if err < best.weighted_error - tol {
                best = AxisSplit { feature: j, threshold, weighted_error: err };
            }
        }
    }
    // Report the exact error of the chosen split rather than the running sum.
    best.weighted_error = weighted_error(&best.to_kind(), samples);
    Ok(best)
}

/// A threshold strictly above `lo` and at most `hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Settings for [`l1_logistic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Stop when the largest coordinate change in a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Also stop when a sweep lowers the objective by no more than this
    /// fraction of its value. 0 disables the test.
    pub rel_objective_tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions { tol: 1e-6, max_sweeps: 1000, rel_objective_tol: 0.0 }
    }
}

/// Margin given to every sample when all pseudo-labels agree: the loss
/// per unit weight is then below 1e-13.
const ONE_CLASS_MARGIN: f64 = 30.0;

/// Solution of the weighted l1-regularized logistic regression. The model's
/// margin is `w . x + intercept`; as a tree split it sends `x` right iff
/// `w . x >= -intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// `sum_n weight_n * log(1 + exp(-y_n (w . x_n + intercept)))`.
    pub surrogate_loss: f64,
    pub nonzeros: usize,
    pub sweeps: usize,
}

impl HyperplaneSolution {
    /// `surrogate_loss + lambda * ||w||_1`.
    pub fn objective(&self, lambda: f64) -> f64 {
        self.surrogate_loss + lambda * self.weights.iter().map(|w| w.abs()).sum::<f64>()
    }

    pub fn to_kind(&self) -> NodeKind {
        NodeKind::Oblique { weights: self.weights.clone(), bias: -self.intercept }
    }

    /// Warm start from an existing oblique split.
    pub fn from_split(weights: &[f64], bias: f64) -> Self {
        HyperplaneSolution {
            weights: weights.to_vec(),
            intercept: -bias,
            surrogate_loss: f64::NAN,
            nonzeros: weights.iter().filter(|w| **w != 0.0).count(),
            sweeps: 0,
        }
    }
}

fn sw_total(samples: &[WeightedBinarySample<'_>]) -> f64 {
    samples.iter().map(|s| s.weight).sum()
}

/// `log(1 + exp(-z))` without overflow.
#[inline]
fn log1pexp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `1 / (1 + exp(z))`, the derivative magnitude of `log(1 + exp(-z))`.
#[inline]
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Weighted surrogate loss plus `lambda * ||w||_1` at a given point; the
/// function the solver minimizes.
pub fn logistic_objective(samples: &[WeightedBinarySample<'_>], weights: &[f64], intercept: f64, lambda: f64) -> f64 {
    let loss: f64 = samples
        .iter()
        .map(|s| s.weight * log1pexp_neg(s.pseudo_label * (dot(weights, s.x) + intercept)))
        .sum();
    loss + lambda * weights.iter().map(|w| w.abs()).sum::<f64>()
}

/// Minimizes `sum_n weight_n log(1 + exp(-y_n (w . x_n + c))) + lambda ||w||_1`
/// (intercept `c` unpenalized) by proximal Newton iterations.
///
/// Every outer iteration (a "sweep") builds the second-order model of the
/// smooth part at the current point and minimizes model plus l1 term by
/// cyclic coordinate descent with soft-thresholding. The resulting
/// direction goes through a backtracking line search with a
/// sufficient-decrease test, so the objective never increases. Coordinates
/// sitting at zero whose model gradient lies inside `[-lambda, lambda]`
/// already satisfy optimality and are left in place. Stops when no
/// coordinate moves by `opts.tol` or more.
pub fn l1_logistic(
    samples: &[WeightedBinarySample<'_>],
    lambda: f64,
    warm_start: Option<&HyperplaneSolution>,
    opts: LogisticOptions,
) -> Result<HyperplaneSolution> {
    l1_logistic_traced(samples, lambda, warm_start, opts, &mut |_| {})
}

/// [`l1_logistic`] that reports the objective after every sweep.
pub fn l1_logistic_traced(
    samples: &[WeightedBinarySample<'_>],
    lambda: f64,
    warm_start: Option<&HyperplaneSolution>,
    opts: LogisticOptions,
    on_sweep: &mut dyn FnMut(f64),
) -> Result<HyperplaneSolution> {
    let first = samples.first().ok_or_else(|| Error::invalid("l1_logistic needs at least one sample"))?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be a finite non-negative number, got {lambda}")));
    }
    let d = first.x.len();
    for s in samples {
        if s.x.len() != d {
            return Err(Error::invalid("samples have different dimensions"));
        }
        if s.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(Error::invalid("sample weights must be positive and finite"));
        }
    }

    let (w, c) = match warm_start {
        Some(ws) if ws.weights.len() == d && ws.intercept.is_finite() && ws.weights.iter().all(|v| v.is_finite()) => {
            (ws.weights.clone(), ws.intercept)
        }
        Some(ws) if ws.weights.len() != d => return Err(Error::DimensionMismatch { expected: d, got: ws.weights.len() }),
        _ => (vec![0.0; d], 0.0),
    };

    let n = samples.len();
    if let Some(first_label) = samples.iter().map(|s| s.pseudo_label).next() {
        if samples.iter().all(|s| s.pseudo_label == first_label) {
            // No finite minimizer: the unpenalized intercept runs off to
            // infinity. Zero weights with a saturating intercept come within
            // a negligible distance of the infimum.
            let intercept = first_label * ONE_CLASS_MARGIN;
            let surrogate_loss = sw_total(samples) * log1pexp_neg(ONE_CLASS_MARGIN);
            on_sweep(surrogate_loss);
            return Ok(HyperplaneSolution { weights: vec![0.0; d], intercept, surrogate_loss, nonzeros: 0, sweeps: 0 });
        }
    }
    // Column-major copy of y_n * x_nj; column d is y_n itself (intercept).
    let mut cols = vec![0.0; (d + 1) * n];
    for (i, s) in samples.iter().enumerate() {
        for j in 0..d {
            cols[j * n + i] = s.pseudo_label * s.x[j];
        }
        cols[d * n + i] = s.pseudo_label;
    }
    let sw: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let lam_of = |j: usize| if j < d { lambda } else { 0.0 };
    let l1 = |w: &[f64]| lambda * w.iter().map(|v| v.abs()).sum::<f64>();

    // theta = (w, c); z_n = y_n * (w . x_n + c)
    let mut theta = w.clone();
    theta.push(c);
    let mut z: Vec<f64> = samples.iter().map(|s| s.pseudo_label * (dot(&w, s.x) + c)).collect();
    let mut loss: f64 = z.iter().zip(&sw).map(|(zi, wi)| wi * log1pexp_neg(*zi)).sum();

    let mut grad = vec![0.0; d + 1];
    let mut curv = vec![0.0; n];
    let mut hdiag = vec![0.0; d + 1];
    let mut step = vec![0.0; d + 1];
    let mut r = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        // Quadratic model of the smooth part around theta.
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let p = sigmoid_neg(z[i]);
            curv[i] = sw[i] * p * (1.0 - p);
            let gi = -sw[i] * p;
            for j in 0..=d {
                grad[j] += gi * cols[j * n + i];
            }
        }
        for j in 0..=d {
            let col = &cols[j * n..(j + 1) * n];
            hdiag[j] = col.iter().zip(&curv).map(|(a, h)| h * a * a).sum::<f64>() + 1e-12;
        }
        // Cyclic soft-thresholded coordinate descent on the model.
        step.iter_mut().for_each(|v| *v = 0.0);
        r.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..INNER_SWEEPS {
            let mut inner_change: f64 = 0.0;
            let mut size: f64 = 0.0;
            for j in 0..=d {
                let lam = lam_of(j);
                let cur = theta[j] + step[j];
                let col = &cols[j * n..(j + 1) * n];
                let g = grad[j] + col.iter().zip(&curv).zip(&r).map(|((a, h), ri)| a * h * ri).sum::<f64>();
                if lam > 0.0 && cur == 0.0 && g.abs() <= lam {
                    continue;
                }
                let h = hdiag[j];
                let delta = if g + lam <= h * cur {
                    -(g + lam) / h
                } else if g - lam >= h * cur {
                    -(g - lam) / h
                } else {
                    -cur
                };
                if delta == 0.0 || !delta.is_finite() {
                    continue;
                }
                step[j] += delta;
                for (ri, a) in r.iter_mut().zip(col) {
                    *ri += delta * a;
                }
                inner_change = inner_change.max(delta.abs());
                size = size.max(step[j].abs());
            }
            if inner_change <= INNER_TOL * size.max(opts.tol) {
                break;
            }
        }
        // Backtracking line search on the full objective.
        let base = loss + l1(&theta[..d]);
        let model_drop = grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>()
            + (0..d).map(|j| lambda * ((theta[j] + step[j]).abs() - theta[j].abs())).sum::<f64>();
        if model_drop.is_nan() || model_drop >= 0.0 {
            on_sweep(base);
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut new_loss = 0.0;
            for i in 0..n {
                trial[i] = z[i] + t * r[i];
                new_loss += sw[i] * log1pexp_neg(trial[i]);
            }
            let pen: f64 = (0..d).map(|j| (theta[j] + t * step[j]).abs()).sum::<f64>() * lambda;
            if new_loss + pen <= base + SUFFICIENT_DECREASE * t * model_drop {
                std::mem::swap(&mut z, &mut trial);
                loss = new_loss;
                for j in 0..=d {
                    theta[j] += t * step[j];
                }
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let value = loss + l1(&theta[..d]);
        on_sweep(value);
        let flat = base - value <= opts.rel_objective_tol * value.abs();
        let max_change = step.iter().fold(0.0f64, |m, s| m.max((t * s).abs()));
        if !accepted || max_change < opts.tol || flat {
            break;
        }
    }
    let c = theta[d];
    let w = theta[..d].to_vec();
    let nonzeros = w.iter().filter(|v| **v != 0.0).count();
    Ok(HyperplaneSolution { weights: w, intercept: c, surrogate_loss: loss, nonzeros, sweeps })
}
