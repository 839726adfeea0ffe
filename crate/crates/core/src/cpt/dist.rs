use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values closer than this are treated as the same atom.
pub const MERGE_TOL: f64 = 1e-9;
const SUM_TOL: f64 = 1e-12;

/// A finitely supported law, atoms sorted by strictly increasing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDist {
    /// Validates, sorts and merges `(value, prob)` pairs. Zero-probability
    /// atoms are dropped.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for (v, p) in atoms {
            if !v.is_finite() || !p.is_finite() {
                return Err(Error::validation("distribution atoms must be finite"));
            }
            if p < 0.0 {
                return Err(Error::validation(format!("negative probability {p} at value {v}")));
            }
            if p > 0.0 {
                raw.push((v, p));
            }
        }
        let total: f64 = raw.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::validation(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self::merged(raw))
    }

    /// Builds a law from atoms whose probabilities are known to be accumulated
    /// from an exact enumeration; the sum is checked at a looser tolerance.
    pub(crate) fn from_enumeration(raw: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = raw.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "enumerated probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self::merged(raw.into_iter().filter(|a| a.1 > 0.0).collect()))
    }

    fn merged(mut raw: Vec<(f64, f64)>) -> Self {
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (v, p) in raw {
            match atoms.last_mut() {
                Some(last) if (v - last.0).abs() <= MERGE_TOL => last.1 += p,
                _ => atoms.push((v, p)),
            }
        }
        DiscreteDist { atoms }
    }

    /// Point mass at `value`.
    pub fn dirac(value: f64) -> Self {
        DiscreteDist {
            atoms: vec![(value, 1.0)],
        }
    }

    /// Uniform law over the given samples (duplicates accumulate mass).
    pub fn empirical(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::argument("empirical law needs at least one sample"));
        }
        let w = 1.0 / samples.len() as f64;
        Ok(Self::merged(samples.iter().map(|&v| (v, w)).collect()))
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(v, p)| f(v) * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|v| (v - m) * (v - m))
    }

    /// Shifts every atom by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        DiscreteDist {
            atoms: self.atoms.iter().map(|&(v, p)| (v + c, p)).collect(),
        }
    }

    /// Draws one value by inverse-CDF lookup.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(v, p) in &self.atoms {
            acc += p;
            if u < acc {
                return v;
            }
        }
        self.atoms[self.atoms.len() - 1].0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_and_sorts() {
        let d = DiscreteDist::new([(1.5, 0.25), (0.0, 0.5), (1.5, 0.25)]).unwrap();
        assert_eq!(d.atoms(), &[(0.0, 0.5), (1.5, 0.5)]);
        assert_eq!(d.mean(), 0.75);
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(DiscreteDist::new([(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(DiscreteDist::new([(0.0, 1.5), (1.0, -0.5)]).is_err());
        assert!(DiscreteDist::new([(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn empirical_accumulates_duplicates() {
        let d = DiscreteDist::empirical(&[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.atoms(), &[(1.0, 0.25), (2.0, 0.5), (3.0, 0.25)]);
        assert!(DiscreteDist::empirical(&[]).is_err());
    }
}
