//! The trajectory weight `φ(v)` of the CPT policy gradient.
//!
//! `φ(v) = ∫₀^{u⁺(v)} w⁺′(P(u⁺(X) > z)) dz − ∫₀^{u⁻(v)} w⁻′(P(u⁻(X) > z)) dz`.
//!
//! The tail is a step function of `z` for a discrete law, for an empirical
//! batch, and for the breakpoint quantiles of a piecewise-affine weight, so
//! each estimator reduces to a [`StepIntegral`]: a list of segments with a
//! constant integrand. Tail levels of 1 where a smooth weight has an infinite
//! slope cover `(0, min u]`, which every outcome crosses; that common
//! constant is dropped because it cancels against the zero-mean score.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cpt::{tail_steps, CptSpec, DiscreteDist, PiecewiseAffine, UtilitySpec, WeightSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub gains_part: f64,
    pub losses_part: f64,
}

impl PhiValue {
    pub fn value(&self) -> f64 {
        self.gains_part - self.losses_part
    }
}

fn slope(w: &WeightSpec, tail: f64) -> f64 {
    let d = w.derivative(tail);
    if tail >= 1.0 && !d.is_finite() {
        0.0
    } else {
        d
    }
}

/// `t ↦ ∫₀^t g(z) dz` for a step function `g` that equals `slopes[k]` on
/// `(tops[k−1], tops[k]]` (`tops[−1] = 0`) and `beyond` after the last top.
#[derive(Debug, Clone, PartialEq)]
pub struct StepIntegral {
    tops: Vec<f64>,
    slopes: Vec<f64>,
    cumulative: Vec<f64>,
    beyond: f64,
}

impl StepIntegral {
    fn new(segments: Vec<(f64, f64)>, beyond: f64) -> Self {
        let mut tops = Vec::with_capacity(segments.len());
        let mut slopes = Vec::with_capacity(segments.len());
        let mut cumulative = Vec::with_capacity(segments.len());
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (top, g) in segments {
            if top <= prev {
                continue;
            }
            acc += g * (top - prev);
            tops.push(top);
            slopes.push(g);
            cumulative.push(acc);
            prev = top;
        }
        StepIntegral {
            tops,
            slopes,
            cumulative,
            beyond,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.tops.partition_point(|&top| top < t);
        let (base, start) = if k == 0 { (0.0, 0.0) } else { (self.cumulative[k - 1], self.tops[k - 1]) };
        let g = self.slopes.get(k).copied().unwrap_or(self.beyond);
        if t == start {
            return base;
        }
        base + g * (t - start)
    }
}

/// φ prepared for one law or batch: evaluate at many returns cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiFunction {
    utility: UtilitySpec,
    gains: StepIntegral,
    losses: StepIntegral,
}

impl PhiFunction {
    pub fn eval(&self, v: f64) -> PhiValue {
        PhiValue {
            gains_part: self.gains.eval(self.utility.gain(v)),
            losses_part: self.losses.eval(self.utility.loss(v)),
        }
    }

    /// φ of an exact discrete law.
    pub fn exact(law: &DiscreteDist, spec: &CptSpec) -> Self {
        let side = |steps: Vec<(f64, f64)>, w: &WeightSpec| {
            let segments = steps.into_iter().map(|(u, tail)| (u, slope(w, tail))).collect();
            StepIntegral::new(segments, slope(w, 0.0))
        };
        PhiFunction {
            utility: spec.utility.clone(),
            gains: side(tail_steps(law, |x| spec.utility.gain(x)), &spec.w_plus),
            losses: side(tail_steps(law, |x| spec.utility.loss(x)), &spec.w_minus),
        }
    }

    /// φ from the order statistics of a batch.
    pub fn quantile(table: &QuantileTable, spec: &CptSpec) -> Self {
        PhiFunction {
            utility: spec.utility.clone(),
            gains: order_statistic_walk(&table.gains, &spec.w_plus),
            losses: order_statistic_walk(&table.losses, &spec.w_minus),
        }
    }

    /// φ for piecewise-affine weights from estimated breakpoint quantiles.
    pub fn piecewise_affine(quantiles: &AffineQuantiles, spec: &CptSpec) -> Self {
        PhiFunction {
            utility: spec.utility.clone(),
            gains: affine_side(&quantiles.gains_weight, &quantiles.gains),
            losses: affine_side(&quantiles.losses_weight, &quantiles.losses),
        }
    }
}

/// Sorted values `ξ_1 ≤ … ≤ ξ_n` of one side. On `(ξ_{k−1}, ξ_k]` the
/// empirical tail `P(ξ > z)` is the fraction of samples at or above `ξ_k`.
fn order_statistic_walk(sorted: &[f64], w: &WeightSpec) -> StepIntegral {
    let n = sorted.len();
    let nf = n as f64;
    let mut segments = Vec::new();
    let mut prev = 0.0;
    for (k, &top) in sorted.iter().enumerate() {
        if top <= prev {
            continue;
        }
        let level = (n - k) as f64 / nf;
        segments.push((top, slope(w, level)));
        prev = top;
    }
    StepIntegral::new(segments, slope(w, 0.0))
}

/// Piece `i` (slope `β_i`, tail in `[q_i, q_{i+1})`) covers
/// `z ∈ [q̃_{i+1}, q̃_i)`, so `φ(t) = Σ_{i>j} β_i (q̃_i − q̃_{i+1}) + β_j (t − q̃_{j+1})`
/// for `t` in piece `j`.
fn affine_side(w: &PiecewiseAffine, q: &[f64]) -> StepIntegral {
    let k = w.breakpoints.len();
    let last = w.pieces() - 1;
    // Below q̃_k the tail is 1, which the last piece covers.
    let mut segments = vec![(q[k - 1], w.slopes[last])];
    for i in (1..k - 1).rev() {
        segments.push((q[i], w.slopes[i]));
    }
    StepIntegral::new(segments, w.slopes[0])
}

/// Order statistics of `u⁺(R)` and `u⁻(R)` over a batch, each ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub n: usize,
    pub gains: Vec<f64>,
    pub losses: Vec<f64>,
}

impl QuantileTable {
    pub fn from_returns(returns: &[f64], spec: &CptSpec) -> Result<Self> {
        if returns.len() < 2 {
            return Err(Error::argument(format!(
                "quantile table needs a batch of at least 2 returns, got {}",
                returns.len()
            )));
        }
        let mut gains: Vec<f64> = returns.iter().map(|&x| spec.utility.gain(x)).collect();
        let mut losses: Vec<f64> = returns.iter().map(|&x| spec.utility.loss(x)).collect();
        gains.sort_by(f64::total_cmp);
        losses.sort_by(f64::total_cmp);
        Ok(QuantileTable {
            n: returns.len(),
            gains,
            losses,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,quantile_gain,quantile_loss\n");
        for i in 0..self.n {
            let _ = writeln!(out, "{},{},{}", i + 1, self.gains[i], self.losses[i]);
        }
        out
    }
}

/// Breakpoint quantiles `q̃_i = inf{z ≥ 0 : P(u(X) > z) < q_i}` of both sides
/// (`q̃_1 = +∞`), together with the weights they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineQuantiles {
    gains_weight: PiecewiseAffine,
    losses_weight: PiecewiseAffine,
    pub gains: Vec<f64>,
    pub losses: Vec<f64>,
}

fn affine_weights(spec: &CptSpec) -> Result<(PiecewiseAffine, PiecewiseAffine)> {
    match (spec.w_plus.as_piecewise(), spec.w_minus.as_piecewise()) {
        (Some(p), Some(m)) => Ok((p, m)),
        _ => Err(Error::unsupported("piecewise-affine φ needs piecewise-affine weights on both sides")),
    }
}

impl AffineQuantiles {
    /// Estimated from a batch: `q̃_i` is the `⌈q_i n⌉`-th largest sample.
    pub fn from_table(table: &QuantileTable, spec: &CptSpec) -> Result<Self> {
        let (gw, lw) = affine_weights(spec)?;
        let pick = |w: &PiecewiseAffine, sorted: &[f64]| -> Vec<f64> {
            let n = sorted.len();
            w.breakpoints
                .iter()
                .map(|&q| {
                    let m = (q * n as f64 - 1e-9).ceil().max(0.0) as usize;
                    if m == 0 {
                        f64::INFINITY
                    } else {
                        sorted[n - m.min(n)].max(0.0)
                    }
                })
                .collect()
        };
        Ok(AffineQuantiles {
            gains: pick(&gw, &table.gains),
            losses: pick(&lw, &table.losses),
            gains_weight: gw,
            losses_weight: lw,
        })
    }

    /// Exact breakpoint quantiles of a discrete law.
    pub fn from_law(law: &DiscreteDist, spec: &CptSpec) -> Result<Self> {
        let (gw, lw) = affine_weights(spec)?;
        let pick = |w: &PiecewiseAffine, steps: Vec<(f64, f64)>| -> Vec<f64> {
            w.breakpoints
                .iter()
                .map(|&q| {
                    if q <= 0.0 {
                        return f64::INFINITY;
                    }
                    // The tail on (u_{k−1}, u_k] is steps[k].1; it drops below q
                    // right after the first u_k whose successor tail is below q.
                    let mut prev = 0.0;
                    for (k, &(u, tail)) in steps.iter().enumerate() {
                        if tail < q {
                            return prev;
                        }
                        let next_tail = steps.get(k + 1).map_or(0.0, |s| s.1);
                        if next_tail < q {
                            return u;
                        }
                        prev = u;
                    }
                    prev
                })
                .collect()
        };
        Ok(AffineQuantiles {
            gains: pick(&gw, tail_steps(law, |x| spec.utility.gain(x))),
            losses: pick(&lw, tail_steps(law, |x| spec.utility.loss(x))),
            gains_weight: gw,
            losses_weight: lw,
        })
    }
}

/// Exact φ at `v` under a finitely supported law.
pub fn phi_exact_discrete(v: f64, law: &DiscreteDist, spec: &CptSpec) -> PhiValue {
    PhiFunction::exact(law, spec).eval(v)
}

/// Order-statistics estimate of φ at `v` from a batch of returns.
pub fn phi_quantile(v: f64, batch_returns: &[f64], spec: &CptSpec) -> Result<PhiValue> {
    let table = QuantileTable::from_returns(batch_returns, spec)?;
    Ok(PhiFunction::quantile(&table, spec).eval(v))
}

/// φ at `v` for piecewise-affine weights, from batch estimates of the
/// breakpoint quantiles.
pub fn phi_piecewise_affine(v: f64, batch_returns: &[f64], spec: &CptSpec) -> Result<PhiValue> {
    affine_weights(spec)?;
    let table = QuantileTable::from_returns(batch_returns, spec)?;
    let q = AffineQuantiles::from_table(&table, spec)?;
    Ok(PhiFunction::piecewise_affine(&q, spec).eval(v))
}

/// Sample mean of `min(max(U(X) − a, 0), b − a)`.
pub fn clamped_expectation(samples: &[f64], a: f64, b: f64, utility: &UtilitySpec) -> Result<f64> {
    if !(a < b) {
        return Err(Error::argument(format!("clamp bounds need a < b, got a = {a}, b = {b}")));
    }
    if samples.is_empty() {
        return Err(Error::argument("clamped expectation needs at least one sample"));
    }
    let total: f64 = samples.iter().map(|&x| (utility.eval(x) - a).max(0.0).min(b - a)).sum();
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_law(p: f64) -> DiscreteDist {
        DiscreteDist::new([(0.0, p / 2.0), (1.0, 1.0 - p), (1.5, p / 2.0)]).unwrap()
    }

    #[test]
    fn identity_weights_give_v() {
        let law = DiscreteDist::new([(-1.0, 0.3), (0.5, 0.2), (2.5, 0.5)]).unwrap();
        let spec = CptSpec::expectation();
        assert!((phi_exact_discrete(2.0, &law, &spec).value() - 2.0).abs() < 1e-12);
        assert!((phi_exact_discrete(-1.0, &law, &spec).value() + 1.0).abs() < 1e-12);
        let batch = [0.3, -2.0, 4.0, 1.0];
        assert!((phi_quantile(2.0, &batch, &spec).unwrap().value() - 2.0).abs() < 1e-12);
        assert!((phi_piecewise_affine(-0.7, &batch, &spec).unwrap().value() + 0.7).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_step_integral() {
        let spec = CptSpec::gains_only(WeightSpec::w_rs());
        let phi = phi_exact_discrete(1.5, &two_state_law(0.4), &spec);
        assert!((phi.gains_part - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(phi.losses_part, 0.0);
    }

    #[test]
    fn below_support_is_zero() {
        let spec = CptSpec::gains_only(WeightSpec::w_rs());
        assert_eq!(phi_exact_discrete(-0.5, &two_state_law(0.4), &spec).gains_part, 0.0);
        assert_eq!(phi_quantile(0.0, &[0.5, 1.0, 1.5], &spec).unwrap().gains_part, 0.0);
        assert!(phi_quantile(1.0, &[1.0], &spec).is_err());
    }

    #[test]
    fn affine_with_exact_quantiles_matches_exact() {
        let spec = CptSpec::gains_only(WeightSpec::w_rs());
        for p in [0.1, 0.4, 0.7, 1.0] {
            let law = two_state_law(p);
            let q = AffineQuantiles::from_law(&law, &spec).unwrap();
            let f = PhiFunction::piecewise_affine(&q, &spec);
            for &(v, _) in law.atoms() {
                let exact = phi_exact_discrete(v, &law, &spec).value();
                assert!((f.eval(v).value() - exact).abs() < 1e-12, "p={p} v={v}");
            }
        }
    }

    #[test]
    fn affine_rejects_smooth_weights() {
        let spec = CptSpec::gains_only(WeightSpec::Prelec { eta: 0.65 });
        assert!(matches!(
            phi_piecewise_affine(1.0, &[0.0, 1.0], &spec),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn clamp_examples() {
        let u = UtilitySpec::identity();
        assert_eq!(clamped_expectation(&[0.0, 10.0], 1.0, 2.0, &u).unwrap(), 0.5);
        assert_eq!(clamped_expectation(&[0.0, 0.5], 1.0, 2.0, &u).unwrap(), 0.0);
        assert_eq!(clamped_expectation(&[3.0, 5.0], 1.0, 2.0, &u).unwrap(), 1.0);
        assert!(clamped_expectation(&[3.0], 2.0, 2.0, &u).is_err());
    }

    #[test]
    fn quantile_table_csv() {
        let spec = CptSpec::expectation();
        let t = QuantileTable::from_returns(&[1.0, -2.0], &spec).unwrap();
        assert_eq!(t.to_csv(), "i,quantile_gain,quantile_loss\n1,0,0\n2,1,2\n");
    }
}
