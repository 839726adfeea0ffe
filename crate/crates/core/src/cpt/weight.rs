use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_POINTS: usize = 1001;
const GRID_TOL: f64 = 1e-9;

/// Named piecewise-affine distortions used throughout the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPreset {
    /// Risk averse: `0.5x` up to 0.9, then `5.5x − 4.5`.
    WRa,
    /// Risk seeking: `5x` up to 0.1, then `1/2 + 5/9 (x − 0.1)`.
    WRs,
    /// Strongly risk averse: `0.1x` up to 0.9, then `9.1x − 8.1`.
    WSra,
    /// Strongly risk seeking: `9x` up to 0.1, then `x/9 + 8/9`.
    WSrs,
}

impl WeightPreset {
    pub fn piecewise(self) -> &'static PiecewiseAffine {
        static CELLS: [OnceLock<PiecewiseAffine>; 4] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let (idx, knot, slopes, intercepts) = match self {
            WeightPreset::WRa => (0, 0.9, [0.5, 5.5], [0.0, -4.5]),
            WeightPreset::WRs => (1, 0.1, [5.0, 5.0 / 9.0], [0.0, 4.0 / 9.0]),
            WeightPreset::WSra => (2, 0.9, [0.1, 9.1], [0.0, -8.1]),
            WeightPreset::WSrs => (3, 0.1, [9.0, 1.0 / 9.0], [0.0, 8.0 / 9.0]),
        };
        CELLS[idx].get_or_init(|| PiecewiseAffine {
            breakpoints: vec![0.0, knot, 1.0],
            slopes: slopes.to_vec(),
            intercepts: intercepts.to_vec(),
        })
    }
}

/// Continuous piecewise-affine map on `[0, 1]`: on `[q_i, q_{i+1})` it equals
/// `β_i x + δ_i`; the last piece also covers `x = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffine {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl PiecewiseAffine {
    /// Builds the interpolant through `(x, w(x))` knots; the first knot must be
    /// `(0, 0)` and the last `(1, 1)`.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::validation("piecewise-affine weight needs at least two knots"));
        }
        let mut slopes = Vec::with_capacity(knots.len() - 1);
        let mut intercepts = Vec::with_capacity(knots.len() - 1);
        for w in knots.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x1 <= x0 {
                return Err(Error::validation("weight knots must be strictly increasing"));
            }
            let slope = (y1 - y0) / (x1 - x0);
            slopes.push(slope);
            intercepts.push(y0 - slope * x0);
        }
        let pa = PiecewiseAffine {
            breakpoints: knots.iter().map(|k| k.0).collect(),
            slopes,
            intercepts,
        };
        pa.validate()?;
        Ok(pa)
    }

    /// CVaR-style distortion at level `alpha`: `x/(1−α)` below `1−α`, then 1.
    pub fn cvar(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::validation(format!("CVaR level must lie in (0, 1), got {alpha}")));
        }
        Self::from_knots(&[(0.0, 0.0), (1.0 - alpha, 1.0), (1.0, 1.0)])
    }

    pub fn pieces(&self) -> usize {
        self.slopes.len()
    }

    fn piece_right(&self, p: f64) -> usize {
        let k = self.pieces();
        // Largest i with q_i <= p, capped to the last piece.
        let i = self.breakpoints.partition_point(|&q| q <= p);
        i.saturating_sub(1).min(k - 1)
    }

    fn piece_left(&self, p: f64) -> usize {
        // Smallest i with p <= q_{i+1}.
        let i = self.breakpoints[1..].partition_point(|&q| q < p);
        i.min(self.pieces() - 1)
    }

    pub fn eval(&self, p: f64) -> f64 {
        let i = self.piece_right(p);
        self.slopes[i] * p + self.intercepts[i]
    }

    /// Right derivative; at `p = 1` the slope of the last piece.
    pub fn derivative(&self, p: f64) -> f64 {
        self.slopes[self.piece_right(p)]
    }

    /// Left derivative; at `p = 0` the slope of the first piece.
    pub fn derivative_left(&self, p: f64) -> f64 {
        self.slopes[self.piece_left(p)]
    }

    /// `t ↦ 1 − w(1 − t)` as an explicit piecewise-affine map.
    pub fn dual(&self) -> PiecewiseAffine {
        let k = self.breakpoints.len();
        let breakpoints = (0..k).map(|i| 1.0 - self.breakpoints[k - 1 - i]).collect();
        let mut slopes = Vec::with_capacity(k - 1);
        let mut intercepts = Vec::with_capacity(k - 1);
        for i in (0..k - 1).rev() {
            // 1 − (β(1 − t) + δ) = β t + (1 − β − δ)
            slopes.push(self.slopes[i]);
            intercepts.push(1.0 - self.slopes[i] - self.intercepts[i]);
        }
        PiecewiseAffine {
            breakpoints,
            slopes,
            intercepts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.breakpoints.len();
        if k < 2 || self.slopes.len() != k - 1 || self.intercepts.len() != k - 1 {
            return Err(Error::validation(
                "piecewise-affine weight needs k >= 2 breakpoints and k − 1 slopes and intercepts",
            ));
        }
        if self.breakpoints[0] != 0.0 || self.breakpoints[k - 1] != 1.0 {
            return Err(Error::validation("piecewise-affine breakpoints must start at 0 and end at 1"));
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("piecewise-affine breakpoints must be strictly increasing"));
        }
        if self.slopes.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::validation("piecewise-affine slopes must be finite and non-negative"));
        }
        for i in 0..k - 2 {
            let q = self.breakpoints[i + 1];
            let left = self.slopes[i] * q + self.intercepts[i];
            let right = self.slopes[i + 1] * q + self.intercepts[i + 1];
            if (left - right).abs() > GRID_TOL {
                return Err(Error::validation(format!(
                    "piecewise-affine weight is discontinuous at {q}: {left} vs {right}"
                )));
            }
        }
        if self.intercepts[0].abs() > GRID_TOL {
            return Err(Error::validation("piecewise-affine weight must satisfy w(0) = 0"));
        }
        if (self.slopes[k - 2] + self.intercepts[k - 2] - 1.0).abs() > GRID_TOL {
            return Err(Error::validation("piecewise-affine weight must satisfy w(1) = 1"));
        }
        Ok(())
    }
}

/// A probability distortion `w : [0, 1] → [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Identity,
    /// `w ≡ 0`: switches off one side of the CPT value entirely.
    Zero,
    /// `p^η (p^η + (1−p)^η)^{−1/η}`.
    KahnemanTversky { eta: f64 },
    /// `exp(−(−ln p)^η)`.
    Prelec { eta: f64 },
    PiecewiseAffine(PiecewiseAffine),
    Preset { name: WeightPreset },
    /// `t ↦ 1 − g(1 − t)`.
    Dual { inner: Box<WeightSpec> },
}

impl WeightSpec {
    pub fn preset(name: WeightPreset) -> Self {
        WeightSpec::Preset { name }
    }

    pub fn w_ra() -> Self {
        Self::preset(WeightPreset::WRa)
    }

    pub fn w_rs() -> Self {
        Self::preset(WeightPreset::WRs)
    }

    pub fn w_sra() -> Self {
        Self::preset(WeightPreset::WSra)
    }

    pub fn w_srs() -> Self {
        Self::preset(WeightPreset::WSrs)
    }

    /// The piecewise-affine representation, when this weight has one.
    pub fn as_piecewise(&self) -> Option<PiecewiseAffine> {
        match self {
            WeightSpec::Identity => Some(PiecewiseAffine {
                breakpoints: vec![0.0, 1.0],
                slopes: vec![1.0],
                intercepts: vec![0.0],
            }),
            WeightSpec::Zero => Some(PiecewiseAffine {
                breakpoints: vec![0.0, 1.0],
                slopes: vec![0.0],
                intercepts: vec![0.0],
            }),
            WeightSpec::PiecewiseAffine(pa) => Some(pa.clone()),
            WeightSpec::Preset { name } => Some(name.piecewise().clone()),
            WeightSpec::Dual { inner } => inner.as_piecewise().map(|pa| pa.dual()),
            WeightSpec::KahnemanTversky { .. } | WeightSpec::Prelec { .. } => None,
        }
    }

    /// `t ↦ 1 − w(1 − t)`, kept piecewise-affine when possible.
    pub fn dual(&self) -> WeightSpec {
        match self {
            WeightSpec::Identity => WeightSpec::Identity,
            WeightSpec::Dual { inner } => (**inner).clone(),
            WeightSpec::KahnemanTversky { .. } | WeightSpec::Prelec { .. } | WeightSpec::Zero => {
                WeightSpec::Dual {
                    inner: Box::new(self.clone()),
                }
            }
            WeightSpec::PiecewiseAffine(_) | WeightSpec::Preset { .. } => WeightSpec::PiecewiseAffine(
                self.as_piecewise().expect("piecewise kinds have a piecewise form").dual(),
            ),
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        match self {
            WeightSpec::Identity => p,
            WeightSpec::Zero => 0.0,
            WeightSpec::KahnemanTversky { eta } => {
                if p <= 0.0 {
                    return 0.0;
                }
                if p >= 1.0 {
                    return 1.0;
                }
                let a = p.powf(*eta);
                let b = (1.0 - p).powf(*eta);
                a / (a + b).powf(1.0 / eta)
            }
            WeightSpec::Prelec { eta } => {
                if p <= 0.0 {
                    return 0.0;
                }
                (-(-p.ln()).powf(*eta)).exp()
            }
            WeightSpec::PiecewiseAffine(pa) => pa.eval(p),
            WeightSpec::Preset { name } => name.piecewise().eval(p),
            WeightSpec::Dual { inner } => 1.0 - inner.eval(1.0 - p),
        }
    }

    /// `w′(p)`; at breakpoints of piecewise kinds this is the right derivative.
    /// Smooth kinds with unbounded slope at 0 or 1 return `+∞` there.
    pub fn derivative(&self, p: f64) -> f64 {
        match self {
            WeightSpec::Identity => 1.0,
            WeightSpec::Zero => 0.0,
            WeightSpec::KahnemanTversky { eta } => {
                if p <= 0.0 || p >= 1.0 {
                    return f64::INFINITY;
                }
                let a = p.powf(*eta);
                let b = (1.0 - p).powf(*eta);
                let d = a + b;
                let w = a / d.powf(1.0 / eta);
                let dlog = eta / p - (p.powf(eta - 1.0) - (1.0 - p).powf(eta - 1.0)) / d;
                w * dlog
            }
            WeightSpec::Prelec { eta } => {
                if p <= 0.0 || p >= 1.0 {
                    return f64::INFINITY;
                }
                let l = -p.ln();
                self.eval(p) * eta * l.powf(eta - 1.0) / p
            }
            WeightSpec::PiecewiseAffine(pa) => pa.derivative(p),
            WeightSpec::Preset { name } => name.piecewise().derivative(p),
            WeightSpec::Dual { inner } => inner.derivative_left(1.0 - p),
        }
    }

    /// Left derivative; coincides with [`WeightSpec::derivative`] for smooth kinds.
    pub fn derivative_left(&self, p: f64) -> f64 {
        match self {
            WeightSpec::PiecewiseAffine(pa) => pa.derivative_left(p),
            WeightSpec::Preset { name } => name.piecewise().derivative_left(p),
            WeightSpec::Dual { inner } => inner.derivative(1.0 - p),
            other => other.derivative(p),
        }
    }

    pub fn is_smooth(&self) -> bool {
        match self {
            WeightSpec::KahnemanTversky { .. } | WeightSpec::Prelec { .. } => true,
            WeightSpec::Identity | WeightSpec::Zero => true,
            WeightSpec::Dual { inner } => inner.is_smooth(),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::KahnemanTversky { eta } | WeightSpec::Prelec { eta } => {
                if !(*eta > 0.0 && *eta < 1.0) {
                    return Err(Error::validation(format!(
                        "weight parameter eta must lie in (0, 1), got {eta}"
                    )));
                }
            }
            WeightSpec::PiecewiseAffine(pa) => pa.validate()?,
            WeightSpec::Dual { inner } => inner.validate()?,
            _ => {}
        }
        let expect_one = !matches!(self, WeightSpec::Zero);
        if self.eval(0.0).abs() > GRID_TOL {
            return Err(Error::validation("weight must satisfy w(0) = 0"));
        }
        if expect_one && (self.eval(1.0) - 1.0).abs() > GRID_TOL {
            return Err(Error::validation("weight must satisfy w(1) = 1"));
        }
        let mut prev = 0.0;
        for i in 0..GRID_POINTS {
            let p = i as f64 / (GRID_POINTS - 1) as f64;
            let v = self.eval(p);
            if !(v.is_finite() && (-GRID_TOL..=1.0 + GRID_TOL).contains(&v)) {
                return Err(Error::validation(format!("weight leaves [0, 1] at p = {p}")));
            }
            if v < prev - GRID_TOL {
                return Err(Error::validation(format!("weight decreases near p = {p}")));
            }
            prev = v;
        }
        Ok(())
    }
}

/// `w′(p)` with the right-derivative convention at breakpoints.
pub fn eval_weight_derivative(w: &WeightSpec, p: f64) -> f64 {
    w.derivative(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_continuous() {
        for w in [
            WeightSpec::w_ra(),
            WeightSpec::w_rs(),
            WeightSpec::w_sra(),
            WeightSpec::w_srs(),
        ] {
            w.validate().unwrap();
        }
    }

    #[test]
    fn w_rs_values() {
        let w = WeightSpec::w_rs();
        assert!((w.eval(0.5) - 13.0 / 18.0).abs() < 1e-15);
        assert!((w.eval(0.9) - 17.0 / 18.0).abs() < 1e-15);
        assert!((w.eval(0.1) - 0.5).abs() < 1e-15);
        assert_eq!(eval_weight_derivative(&w, 0.05), 5.0);
        // right derivative at the breakpoint
        assert_eq!(w.derivative(0.1), 5.0 / 9.0);
        assert_eq!(w.derivative_left(0.1), 5.0);
        assert_eq!(w.derivative(1.0), 5.0 / 9.0);
    }

    #[test]
    fn identity_derivative() {
        assert_eq!(eval_weight_derivative(&WeightSpec::Identity, 0.37), 1.0);
    }

    #[test]
    fn prelec_derivative_matches_central_difference() {
        let w = WeightSpec::Prelec { eta: 0.65 };
        let h = 1e-6;
        let fd = (w.eval(0.5 + h) - w.eval(0.5 - h)) / (2.0 * h);
        let d = w.derivative(0.5);
        assert!(((d - fd) / fd).abs() <= 1e-6, "{d} vs {fd}");
    }

    #[test]
    fn kahneman_tversky_derivative_matches_central_difference() {
        let w = WeightSpec::KahnemanTversky { eta: 0.61 };
        for &p in &[0.05, 0.3, 0.5, 0.8, 0.97] {
            let h = 1e-6;
            let fd = (w.eval(p + h) - w.eval(p - h)) / (2.0 * h);
            assert!(((w.derivative(p) - fd) / fd).abs() <= 1e-6);
        }
    }

    #[test]
    fn discontinuous_piecewise_is_rejected() {
        let pa = PiecewiseAffine {
            breakpoints: vec![0.0, 0.5, 1.0],
            slopes: vec![1.0, 1.0],
            intercepts: vec![0.0, 0.1],
        };
        assert!(pa.validate().is_err());
    }

    #[test]
    fn non_monotone_kt_is_rejected() {
        assert!(WeightSpec::KahnemanTversky { eta: 0.2 }.validate().is_err());
        assert!(WeightSpec::KahnemanTversky { eta: 0.69 }.validate().is_ok());
    }

    #[test]
    fn dual_of_piecewise_is_piecewise() {
        let g = WeightSpec::w_ra();
        let d = g.dual();
        d.validate().unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            assert!((d.eval(t) - (1.0 - g.eval(1.0 - t))).abs() < 1e-12);
        }
        // right derivative of the dual is the left derivative of g at 1 − t
        assert_eq!(d.derivative(0.1), g.derivative_left(0.9));
        assert_eq!(d.dual(), WeightSpec::PiecewiseAffine(g.as_piecewise().unwrap()));
    }

    #[test]
    fn cvar_distortion_shape() {
        let g = PiecewiseAffine::cvar(0.5).unwrap();
        assert_eq!(g.eval(0.25), 0.5);
        assert_eq!(g.eval(0.5), 1.0);
        assert_eq!(g.eval(0.9), 1.0);
    }

    #[test]
    fn serde_roundtrip_of_nested_kinds() {
        let w = WeightSpec::Dual {
            inner: Box::new(WeightSpec::Prelec { eta: 0.65 }),
        };
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"kind\":\"dual\""));
        assert_eq!(serde_json::from_str::<WeightSpec>(&s).unwrap(), w);
        let p: WeightSpec = serde_json::from_str(r#"{"kind":"preset","name":"w_rs"}"#).unwrap();
        assert_eq!(p, WeightSpec::w_rs());
    }
}
