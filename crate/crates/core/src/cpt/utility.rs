use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the probe grid used to validate utilities around `x₀`.
const PROBE_HALF_WIDTH: f64 = 10.0;
const PROBE_POINTS: usize = 1001;
const PROBE_TOL: f64 = 1e-9;

/// Shape of the utility as a function of the offset `y = x − x₀`.
///
/// Every kind satisfies `f(0) = 0`, so gains map to non-negative and losses
/// to non-positive utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityKind {
    Identity,
    /// `y^α` for gains, `−λ(−y)^α` for losses.
    KahnemanTversky { lambda: f64, alpha: f64 },
    /// `A + B·exp(C·y)`; requires `A + B = 0`.
    Exponential { a: f64, b: f64, c: f64 },
    /// `√max(y + offset, 0) − √offset`.
    SqrtShift { offset: f64 },
    Custom { form: CustomUtility },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CustomUtility {
    /// Linear interpolation through `(y, f(y))` knots, extrapolated with the end slopes.
    PiecewiseLinear { knots: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    #[serde(default)]
    pub reference_point: f64,
    #[serde(flatten)]
    pub kind: UtilityKind,
}

impl UtilitySpec {
    pub fn new(kind: UtilityKind, reference_point: f64) -> Result<Self> {
        let spec = UtilitySpec {
            reference_point,
            kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn identity() -> Self {
        UtilitySpec {
            reference_point: 0.0,
            kind: UtilityKind::Identity,
        }
    }

    pub fn kahneman_tversky(lambda: f64, alpha: f64) -> Result<Self> {
        Self::new(UtilityKind::KahnemanTversky { lambda, alpha }, 0.0)
    }

    /// `U(x) = 1 − exp(−β x)`, the exponential criterion with risk parameter `β`.
    pub fn exponential_risk(beta: f64) -> Result<Self> {
        Self::new(
            UtilityKind::Exponential {
                a: 1.0,
                b: -1.0,
                c: -beta,
            },
            0.0,
        )
    }

    pub fn sqrt_shift(offset: f64) -> Result<Self> {
        Self::new(UtilityKind::SqrtShift { offset }, 0.0)
    }

    fn shape(&self, y: f64) -> f64 {
        match &self.kind {
            UtilityKind::Identity => y,
            UtilityKind::KahnemanTversky { lambda, alpha } => {
                if y >= 0.0 {
                    y.powf(*alpha)
                } else {
                    -lambda * (-y).powf(*alpha)
                }
            }
            UtilityKind::Exponential { a, b, c } => a + b * (c * y).exp(),
            UtilityKind::SqrtShift { offset } => (y + offset).max(0.0).sqrt() - offset.sqrt(),
            UtilityKind::Custom {
                form: CustomUtility::PiecewiseLinear { knots },
            } => interpolate(knots, y),
        }
    }

    /// The utility `U(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.shape(x - self.reference_point)
    }

    /// `u⁺(x) = U(x)·1[x ≥ x₀]`.
    pub fn gain(&self, x: f64) -> f64 {
        if x >= self.reference_point {
            self.eval(x).max(0.0)
        } else {
            0.0
        }
    }

    /// `u⁻(x) = −U(x)·1[x ≤ x₀]`.
    pub fn loss(&self, x: f64) -> f64 {
        if x <= self.reference_point {
            (-self.eval(x)).max(0.0)
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.reference_point.is_finite() {
            return Err(Error::validation("utility reference point must be finite"));
        }
        match &self.kind {
            UtilityKind::Identity => {}
            UtilityKind::KahnemanTversky { lambda, alpha } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::validation(format!(
                        "Kahneman-Tversky lambda must be positive, got {lambda}"
                    )));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(Error::validation(format!(
                        "Kahneman-Tversky alpha must lie in (0, 1], got {alpha}"
                    )));
                }
            }
            UtilityKind::Exponential { a, b, c } => {
                if ![a, b, c].iter().all(|v| v.is_finite()) {
                    return Err(Error::validation("exponential utility parameters must be finite"));
                }
                if (a + b).abs() > PROBE_TOL {
                    return Err(Error::validation(format!(
                        "exponential utility must vanish at the reference point (A + B = 0), got A + B = {}",
                        a + b
                    )));
                }
            }
            UtilityKind::SqrtShift { offset } => {
                if !(*offset > 0.0 && offset.is_finite()) {
                    return Err(Error::validation(format!(
                        "sqrt_shift offset must be positive, got {offset}"
                    )));
                }
            }
            UtilityKind::Custom {
                form: CustomUtility::PiecewiseLinear { knots },
            } => {
                if knots.len() < 2 {
                    return Err(Error::validation("piecewise-linear utility needs at least two knots"));
                }
                if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::validation(
                        "piecewise-linear utility knots must be strictly increasing",
                    ));
                }
            }
        }

        let step = 2.0 * PROBE_HALF_WIDTH / (PROBE_POINTS - 1) as f64;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..PROBE_POINTS {
            let y = -PROBE_HALF_WIDTH + step * i as f64;
            let v = self.shape(y);
            if !v.is_finite() {
                return Err(Error::validation(format!("utility is not finite at offset {y}")));
            }
            if v < prev - PROBE_TOL {
                return Err(Error::validation(format!("utility decreases near offset {y}")));
            }
            if (y >= 0.0 && v < -PROBE_TOL) || (y <= 0.0 && v > PROBE_TOL) {
                return Err(Error::validation(format!(
                    "utility has the wrong sign relative to the reference point at offset {y}"
                )));
            }
            prev = v;
        }
        Ok(())
    }
}

fn interpolate(knots: &[[f64; 2]], y: f64) -> f64 {
    let n = knots.len();
    let seg = if y <= knots[0][0] {
        0
    } else if y >= knots[n - 1][0] {
        n - 2
    } else {
        knots.partition_point(|k| k[0] <= y) - 1
    };
    let [x0, y0] = knots[seg];
    let [x1, y1] = knots[seg + 1];
    y0 + (y1 - y0) * (y - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahneman_tversky_shape() {
        let u = UtilitySpec::kahneman_tversky(2.25, 0.88).unwrap();
        assert!((u.eval(1.0) - 1.0).abs() < 1e-15);
        assert!((u.eval(-1.0) + 2.25).abs() < 1e-15);
        assert_eq!(u.gain(-1.0), 0.0);
        assert!((u.loss(-1.0) - 2.25).abs() < 1e-15);
        assert_eq!(u.loss(2.0), 0.0);
    }

    #[test]
    fn reference_point_shifts_the_utility() {
        let u = UtilitySpec::new(UtilityKind::Identity, 1.0).unwrap();
        assert_eq!(u.gain(3.0), 2.0);
        assert_eq!(u.loss(0.5), 0.5);
        assert_eq!(u.gain(0.5), 0.0);
    }

    #[test]
    fn exponential_must_vanish_at_reference() {
        assert!(UtilitySpec::new(
            UtilityKind::Exponential {
                a: 1.0,
                b: 1.0,
                c: -0.5
            },
            0.0
        )
        .is_err());
        let u = UtilitySpec::exponential_risk(0.5).unwrap();
        assert!((u.eval(2.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn decreasing_custom_utility_is_rejected() {
        let form = CustomUtility::PiecewiseLinear {
            knots: vec![[-1.0, -1.0], [0.0, 0.0], [1.0, -0.5]],
        };
        assert!(UtilitySpec::new(UtilityKind::Custom { form }, 0.0).is_err());
    }

    #[test]
    fn custom_piecewise_linear_extrapolates() {
        let form = CustomUtility::PiecewiseLinear {
            knots: vec![[-1.0, -2.0], [0.0, 0.0], [1.0, 1.0]],
        };
        let u = UtilitySpec::new(UtilityKind::Custom { form }, 0.0).unwrap();
        assert_eq!(u.eval(3.0), 3.0);
        assert_eq!(u.eval(-2.0), -4.0);
        assert_eq!(u.eval(0.5), 0.5);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(UtilitySpec::kahneman_tversky(-1.0, 0.5).is_err());
        assert!(UtilitySpec::kahneman_tversky(2.0, 1.5).is_err());
        assert!(UtilitySpec::sqrt_shift(0.0).is_err());
    }

    #[test]
    fn json_is_a_tagged_union() {
        let u = UtilitySpec::kahneman_tversky(2.25, 0.88).unwrap();
        let json = serde_json::to_value(&u).unwrap();
        assert_eq!(json["kind"], "kahneman_tversky");
        let back: UtilitySpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, u);
    }
}
