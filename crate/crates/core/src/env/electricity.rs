//! Home battery with solar panels selling to the grid over one day.
//!
//! The day starts at 6am and is cut into [`SLOTS`] two-hour slots. The
//! observation is `[slot, battery, sell price, production, consumption]`;
//! the action is the net energy sold in the slot (negative means bought).

use std::f64::consts::PI;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{Action, EnvState, Environment, Space, Transition};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const SLOTS: usize = 12;
const FIRST_HOUR: f64 = 6.0;
const SLOT_HOURS: f64 = 2.0;

/// Sell price (per kWh) for each slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceSeries(Vec<f64>);

impl PriceSeries {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.len() != SLOTS {
            return Err(Error::Ingestion(format!(
                "price series needs {SLOTS} slots, got {}",
                prices.len()
            )));
        }
        if let Some((i, p)) = prices.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Ingestion(format!("slot {i}: price {p} must be finite and non-negative")));
        }
        Ok(PriceSeries(prices))
    }

    /// Bell-shaped default curve peaking in the slot covering 4pm.
    pub fn synthetic() -> Self {
        let prices = (0..SLOTS)
            .map(|t| {
                let z = (t as f64 - 5.0) / 1.5;
                0.06 + 0.12 * (-0.5 * z * z).exp()
            })
            .collect();
        PriceSeries(prices)
    }

    pub fn prices(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the most expensive slot (earliest on ties).
    pub fn peak_slot(&self) -> usize {
        let m = self.max();
        self.0.iter().position(|&p| p == m).unwrap_or(0)
    }

    /// Clock hours `[start, end)` covered by a slot.
    pub fn slot_hours(slot: usize) -> (f64, f64) {
        let start = FIRST_HOUR + SLOT_HOURS * slot as f64;
        (start, start + SLOT_HOURS)
    }
}

impl TryFrom<Vec<f64>> for PriceSeries {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        PriceSeries::new(v)
    }
}

impl From<PriceSeries> for Vec<f64> {
    fn from(p: PriceSeries) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElecParams {
    /// kWh.
    pub capacity: f64,
    pub initial_charge: f64,
    /// kW at solar noon.
    pub solar_peak: f64,
    /// Per-slot consumption is uniform on this range (kWh).
    pub consumption: (f64, f64),
    /// Fixed buy price; `None` means twice the highest sell price.
    pub buy_price: Option<f64>,
}

impl Default for ElecParams {
    fn default() -> Self {
        ElecParams {
            capacity: 10.0,
            initial_charge: 5.0,
            solar_peak: 3.0,
            consumption: (0.2, 1.0),
            buy_price: None,
        }
    }
}

impl ElecParams {
    fn validate(&self, prices: &PriceSeries) -> Result<f64> {
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(Error::validation(format!("battery capacity must be positive, got {}", self.capacity)));
        }
        if !(0.0..=self.capacity).contains(&self.initial_charge) {
            return Err(Error::validation("initial charge must lie in [0, capacity]"));
        }
        let (lo, hi) = self.consumption;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) || !(self.solar_peak >= 0.0 && self.solar_peak.is_finite()) {
            return Err(Error::validation("consumption range and solar peak must be finite and non-negative"));
        }
        let buy = self.buy_price.unwrap_or(2.0 * prices.max());
        if !(buy > prices.max() && buy.is_finite()) {
            return Err(Error::validation(format!(
                "buy price {buy} must exceed every sell price (max {})",
                prices.max()
            )));
        }
        Ok(buy)
    }
}

#[derive(Debug, Clone)]
pub struct ElectricityEnv {
    prices: PriceSeries,
    params: ElecParams,
    buy_price: f64,
    consumption: Uniform<f64>,
}

impl ElectricityEnv {
    pub fn new(prices: PriceSeries, params: ElecParams) -> Result<Self> {
        let buy_price = params.validate(&prices)?;
        let (lo, hi) = params.consumption;
        let consumption =
            Uniform::new_inclusive(lo, hi).map_err(|e| Error::validation(format!("consumption range: {e}")))?;
        Ok(ElectricityEnv {
            prices,
            params,
            buy_price,
            consumption,
        })
    }

    pub fn prices(&self) -> &PriceSeries {
        &self.prices
    }

    pub fn params(&self) -> &ElecParams {
        &self.params
    }

    pub fn buy_price(&self) -> f64 {
        self.buy_price
    }

    /// Solar energy (kWh) produced during a slot: a half-sine over 6am–6pm,
    /// evaluated at the slot midpoint.
    pub fn production(&self, slot: usize) -> f64 {
        let (start, end) = PriceSeries::slot_hours(slot);
        let mid = 0.5 * (start + end);
        let shape = (PI * (mid - 6.0) / 12.0).sin().max(0.0);
        self.params.solar_peak * SLOT_HOURS * shape
    }

    /// Per-feature factors bringing every observation coordinate to order one.
    pub fn observation_scale(&self) -> Vec<f64> {
        let inv = |x: f64| if x > 0.0 { 1.0 / x } else { 1.0 };
        vec![
            inv(SLOTS as f64),
            inv(self.params.capacity),
            inv(self.prices.max()),
            inv(self.params.solar_peak * SLOT_HOURS),
            inv(self.params.consumption.1),
        ]
    }

    fn observe(&self, slot: usize, battery: f64, rng: &mut SimRng) -> EnvState {
        let price = self.prices.0.get(slot).copied().unwrap_or(0.0);
        let production = if slot < SLOTS { self.production(slot) } else { 0.0 };
        let consumption = if slot < SLOTS { self.consumption.sample(rng) } else { 0.0 };
        EnvState::Continuous(vec![slot as f64, battery, price, production, consumption])
    }
}

impl Environment for ElectricityEnv {
    fn horizon(&self) -> usize {
        SLOTS
    }

    fn observation_space(&self) -> Space {
        Space::Continuous(5)
    }

    fn action_space(&self) -> Space {
        Space::Continuous(1)
    }

    fn r_max(&self) -> f64 {
        let energy = 2.0 * self.params.capacity + self.params.solar_peak * SLOT_HOURS + self.params.consumption.1;
        self.buy_price.max(self.prices.max()) * energy
    }

    fn reset(&self, rng: &mut SimRng) -> EnvState {
        self.observe(0, self.params.initial_charge, rng)
    }

    /// Sales are capped by the energy at hand and purchases by the battery
    /// size. Consumption not covered by the battery is bought at the buy
    /// price; surplus beyond capacity is lost.
    fn step(&self, t: usize, state: &EnvState, action: &Action, rng: &mut SimRng) -> Result<Transition> {
        let obs = match state {
            EnvState::Continuous(v) if v.len() == 5 => v,
            _ => return Err(Error::config("electricity state must be a 5-vector")),
        };
        let requested = match action {
            Action::Continuous(a) if a.len() == 1 && a[0].is_finite() => a[0],
            _ => return Err(Error::config("electricity action must be one finite real")),
        };
        let (battery, price, production, consumption) = (obs[1], obs[2], obs[3], obs[4]);
        let cap = self.params.capacity;
        let sold = requested.clamp(-cap, battery + production);
        let mut next = battery + production - consumption - sold;
        let shortfall = (-next).max(0.0);
        next = next.clamp(0.0, cap);
        let reward = price * sold.max(0.0) - self.buy_price * ((-sold).max(0.0) + shortfall);
        let slot = t + 1;
        Ok(Transition {
            next: self.observe(slot, next, rng),
            reward,
            done: slot >= SLOTS,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_sale(rng: &mut SimRng) -> f64 {
        rng.random_range(-10.0..10.0)
    }

    #[test]
    fn synthetic_peak_covers_four_pm() {
        let p = PriceSeries::synthetic();
        let (start, end) = PriceSeries::slot_hours(p.peak_slot());
        assert!(start <= 16.0 && 16.0 < end);
    }

    #[test]
    fn production_vanishes_at_night() {
        let env = ElectricityEnv::new(PriceSeries::synthetic(), ElecParams::default()).unwrap();
        for slot in 6..SLOTS {
            assert_eq!(env.production(slot), 0.0, "slot {slot}");
        }
        assert!(env.production(2) > env.production(0));
        assert!(env.buy_price() > PriceSeries::synthetic().max());
    }

    #[test]
    fn bad_series_rejected() {
        assert!(matches!(PriceSeries::new(vec![0.1; 11]), Err(Error::Ingestion(m)) if m.contains("11")));
        let mut v = vec![0.1; 12];
        v[3] = -0.1;
        assert!(PriceSeries::new(v).is_err());
        let params = ElecParams {
            buy_price: Some(0.01),
            ..ElecParams::default()
        };
        assert!(ElectricityEnv::new(PriceSeries::synthetic(), params).is_err());
    }

    #[test]
    fn battery_and_sales_stay_feasible() {
        let env = ElectricityEnv::new(PriceSeries::synthetic(), ElecParams::default()).unwrap();
        let mut rng = seeded(3);
        for _ in 0..200 {
            let mut state = env.reset(&mut rng);
            for t in 0..SLOTS {
                let x = random_sale(&mut rng) * 2.0;
                let EnvState::Continuous(obs) = &state else { unreachable!() };
                let available = obs[1] + obs[3];
                let tr = env.step(t, &state, &Action::Continuous(vec![x]), &mut rng).unwrap();
                let EnvState::Continuous(next) = &tr.next else { unreachable!() };
                assert!((0.0..=10.0).contains(&next[1]));
                if tr.reward > 0.0 {
                    assert!(tr.reward <= obs[2] * available + 1e-12);
                }
                assert!(tr.reward.abs() <= env.r_max());
                assert_eq!(tr.done, t + 1 == SLOTS);
                state = tr.next;
            }
        }
    }
}
