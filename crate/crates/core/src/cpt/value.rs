use serde::{Deserialize, Serialize};

use super::dist::{DiscreteDist, MERGE_TOL};
use super::utility::UtilitySpec;
use super::weight::WeightSpec;
use crate::error::{Error, Result};

/// Reference point, utility and the two probability distortions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptSpec {
    pub utility: UtilitySpec,
    pub w_plus: WeightSpec,
    pub w_minus: WeightSpec,
}

impl CptSpec {
    pub fn new(utility: UtilitySpec, w_plus: WeightSpec, w_minus: WeightSpec) -> Result<Self> {
        let spec = CptSpec {
            utility,
            w_plus,
            w_minus,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Identity utility and weights: the CPT value is the expectation.
    pub fn expectation() -> Self {
        CptSpec {
            utility: UtilitySpec::identity(),
            w_plus: WeightSpec::Identity,
            w_minus: WeightSpec::Identity,
        }
    }

    /// Identity weights with the given utility: expected utility.
    pub fn expected_utility(utility: UtilitySpec) -> Self {
        CptSpec {
            utility,
            w_plus: WeightSpec::Identity,
            w_minus: WeightSpec::Identity,
        }
    }

    /// Identity utility, distorted gains, no loss term.
    pub fn gains_only(w_plus: WeightSpec) -> Self {
        CptSpec {
            utility: UtilitySpec::identity(),
            w_plus,
            w_minus: WeightSpec::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.utility.validate()?;
        self.w_plus.validate()?;
        self.w_minus.validate()
    }

    pub fn has_identity_weights(&self) -> bool {
        self.w_plus == WeightSpec::Identity && self.w_minus == WeightSpec::Identity
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: CptSpec = serde_json::from_str(s)
            .map_err(|e| Error::validation(format!("CPT spec JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One side of the CPT integral: the distinct positive levels `u_1 < … < u_m`
/// of `u^±(X)` together with the tail `P(u^±(X) ≥ u_k)`.
///
/// On `(u_{k−1}, u_k]` (with `u_0 = 0`) the tail `P(u^±(X) > z)` equals the
/// k-th entry, which turns every `∫ g(tail(z)) dz` into a finite sum.
pub(crate) fn tail_steps(dist: &DiscreteDist, side: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let mut levels: Vec<(f64, f64)> = dist
        .atoms()
        .iter()
        .map(|&(v, p)| (side(v), p))
        .filter(|&(u, _)| u > 0.0)
        .collect();
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(levels.len());
    for (u, p) in levels {
        match merged.last_mut() {
            Some(last) if (u - last.0).abs() <= MERGE_TOL => last.1 += p,
            _ => merged.push((u, p)),
        }
    }
    let mut tail = 0.0;
    for entry in merged.iter_mut().rev() {
        tail += entry.1;
        entry.1 = tail.min(1.0);
    }
    merged
}

fn side_integral(steps: &[(f64, f64)], w: &WeightSpec) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for &(u, tail) in steps {
        total += w.eval(tail) * (u - prev);
        prev = u;
    }
    total
}

/// Exact CPT value of a finitely supported law.
pub fn cpt_value_exact(dist: &DiscreteDist, spec: &CptSpec) -> f64 {
    let gains = tail_steps(dist, |x| spec.utility.gain(x));
    let losses = tail_steps(dist, |x| spec.utility.loss(x));
    side_integral(&gains, &spec.w_plus) - side_integral(&losses, &spec.w_minus)
}

/// Order-statistics estimate of the CPT value from i.i.d. samples.
pub fn cpt_value_empirical(samples: &[f64], spec: &CptSpec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::argument("empirical CPT value needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(cpt_value_sorted(&sorted, spec))
}

fn cpt_value_sorted(sorted: &[f64], spec: &CptSpec) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let mut gains = 0.0;
    let mut losses = 0.0;
    for (idx, &x) in sorted.iter().enumerate() {
        let i = idx + 1;
        let up = spec.utility.gain(x);
        if up > 0.0 {
            let hi = spec.w_plus.eval((n + 1 - i) as f64 / nf);
            let lo = spec.w_plus.eval((n - i) as f64 / nf);
            gains += up * (hi - lo);
        }
        let um = spec.utility.loss(x);
        if um > 0.0 {
            let hi = spec.w_minus.eval(i as f64 / nf);
            let lo = spec.w_minus.eval((i - 1) as f64 / nf);
            losses += um * (hi - lo);
        }
    }
    gains - losses
}

/// Expresses the distortion risk measure with distortion `g` as a CPT value:
/// identity utility, `w⁺(t) = 1 − g(1 − t)`, `w⁻ = g`.
pub fn make_distortion_risk_measure(g: &WeightSpec) -> Result<CptSpec> {
    g.validate()?;
    CptSpec::new(UtilitySpec::identity(), g.dual(), g.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpt::weight::PiecewiseAffine;

    fn two_atom(p: f64) -> DiscreteDist {
        // Law of the two-state counterexample return when B is picked w.p. p.
        DiscreteDist::new([(0.0, p / 2.0), (1.0, 1.0 - p), (1.5, p / 2.0)]).unwrap()
    }

    #[test]
    fn counterexample_values() {
        let spec = CptSpec::gains_only(WeightSpec::w_rs());
        let d = DiscreteDist::new([(0.0, 0.5), (1.5, 0.5)]).unwrap();
        assert!((cpt_value_exact(&d, &spec) - 13.0 / 12.0).abs() < 1e-12);
        assert!((cpt_value_exact(&two_atom(0.2), &spec) - 43.0 / 36.0).abs() < 1e-12);
        assert!((cpt_value_exact(&two_atom(0.0), &spec) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_spec_is_the_mean() {
        let d = DiscreteDist::new([(-2.0, 0.1), (-0.5, 0.3), (0.0, 0.2), (3.0, 0.4)]).unwrap();
        assert!((cpt_value_exact(&d, &CptSpec::expectation()) - d.mean()).abs() < 1e-12);
    }

    #[test]
    fn empirical_small_cases() {
        let mean = cpt_value_empirical(&[1.0, 2.0, 3.0], &CptSpec::expectation()).unwrap();
        assert!((mean - 2.0).abs() < 1e-15);
        let spec = CptSpec::gains_only(WeightSpec::w_rs());
        let v = cpt_value_empirical(&[0.0, 1.5], &spec).unwrap();
        assert!((v - 13.0 / 12.0).abs() < 1e-12);
        assert!(cpt_value_empirical(&[], &spec).is_err());
    }

    #[test]
    fn empirical_keeps_duplicates() {
        let spec = CptSpec::new(
            UtilitySpec::kahneman_tversky(2.25, 0.88).unwrap(),
            WeightSpec::w_ra(),
            WeightSpec::w_rs(),
        )
        .unwrap();
        let s = [-1.0, 2.0, 2.0, 0.5, -1.0, 3.0];
        let e = cpt_value_empirical(&s, &spec).unwrap();
        let x = cpt_value_exact(&DiscreteDist::empirical(&s).unwrap(), &spec);
        assert!((e - x).abs() < 1e-12);
    }

    #[test]
    fn cvar_as_distortion_risk_measure() {
        let g = WeightSpec::PiecewiseAffine(PiecewiseAffine::cvar(0.5).unwrap());
        let spec = make_distortion_risk_measure(&g).unwrap();
        let d = DiscreteDist::new([(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert!((cpt_value_exact(&d, &spec) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_distortion_risk_measure_is_mean() {
        let spec = make_distortion_risk_measure(&WeightSpec::Identity).unwrap();
        let d = DiscreteDist::new([(-3.0, 0.2), (1.0, 0.5), (4.0, 0.3)]).unwrap();
        assert!((cpt_value_exact(&d, &spec) - d.mean()).abs() < 1e-12);
    }

    #[test]
    fn risk_averse_drm_respects_dominance() {
        let spec = make_distortion_risk_measure(&WeightSpec::w_ra()).unwrap();
        let probes = [
            DiscreteDist::new([(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
            DiscreteDist::new([(-3.0, 0.05), (0.2, 0.9), (2.0, 0.05)]).unwrap(),
            two_atom(0.7),
        ];
        for d in &probes {
            for &c in &[0.01, 0.3, 2.0] {
                assert!(cpt_value_exact(&d.shifted(c), &spec) >= cpt_value_exact(d, &spec));
            }
        }
    }

    #[test]
    fn spec_json_uses_tagged_unions() {
        let spec = CptSpec::gains_only(WeightSpec::w_rs());
        let json = serde_json::to_string(&spec).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["utility"]["kind"], "identity");
        assert_eq!(v["w_plus"]["kind"], "preset");
        assert_eq!(v["w_minus"]["kind"], "zero");
        assert_eq!(CptSpec::from_json(&json).unwrap(), spec);
        let bad = r#"{"utility":{"kind":"identity"},"w_plus":{"kind":"prelec","eta":1.5},"w_minus":{"kind":"identity"}}"#;
        assert!(CptSpec::from_json(bad).is_err());
    }
}
