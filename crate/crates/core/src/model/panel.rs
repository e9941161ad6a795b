//! Customer spend panels and the derived (calendar, recency, lifetime)
//! observations of the repeat-spend risk set.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::error::{GppmError, Result};

use super::params::spend_probability;

/// One customer: acquisition information plus the days with a spend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub customer_id: String,
    pub install_day: u32,
    pub first_spend_day: u32,
    pub channel: String,
    pub spend_days: BTreeSet<u32>,
}

/// Daily binary spend incidence for a set of customers over days `1..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendPanel {
    pub customers: Vec<CustomerRecord>,
    pub horizon: u32,
    /// Sorted channel vocabulary; the first level is the reference category.
    pub channel_levels: Vec<String>,
}

impl SpendPanel {
    pub fn new(customers: Vec<CustomerRecord>, horizon: u32) -> Result<Self> {
        if horizon == 0 {
            return Err(GppmError::Panel("horizon must be >= 1".into()));
        }
        let mut seen = HashSet::with_capacity(customers.len());
        for c in &customers {
            if !seen.insert(c.customer_id.as_str()) {
                return Err(GppmError::Panel(format!("duplicate customer_id {}", c.customer_id)));
            }
            if c.install_day < 1 || c.install_day > horizon {
                return Err(GppmError::Panel(format!(
                    "customer {}: install_day {} outside [1, {horizon}]",
                    c.customer_id, c.install_day
                )));
            }
            if c.first_spend_day < c.install_day {
                return Err(GppmError::Panel(format!(
                    "customer {}: first_spend_day {} before install_day {}",
                    c.customer_id, c.first_spend_day, c.install_day
                )));
            }
            if !c.spend_days.contains(&c.first_spend_day) {
                return Err(GppmError::Panel(format!(
                    "customer {}: first_spend_day {} is not a spend day",
                    c.customer_id, c.first_spend_day
                )));
            }
            if let Some(&d) = c.spend_days.iter().next() {
                if d < c.first_spend_day {
                    return Err(GppmError::Panel(format!(
                        "customer {}: spend on day {d} before first_spend_day {}",
                        c.customer_id, c.first_spend_day
                    )));
                }
            }
            if let Some(&d) = c.spend_days.iter().next_back() {
                if d > horizon {
                    return Err(GppmError::Panel(format!(
                        "customer {}: spend on day {d} beyond horizon {horizon}",
                        c.customer_id
                    )));
                }
            }
        }
        let channel_levels: BTreeSet<String> = customers.iter().map(|c| c.channel.clone()).collect();
        Ok(Self {
            customers,
            horizon,
            channel_levels: channel_levels.into_iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    /// Panel restricted to days `1..=cutoff`. Customers whose first spend is
    /// after the cutoff are dropped; channel levels are kept so effect
    /// layouts stay aligned.
    pub fn truncate(&self, cutoff: u32) -> Result<SpendPanel> {
        if cutoff == 0 || cutoff > self.horizon {
            return Err(GppmError::InvalidInput(format!(
                "cutoff {cutoff} outside [1, {}]",
                self.horizon
            )));
        }
        let customers = self
            .customers
            .iter()
            .filter(|c| c.first_spend_day <= cutoff && c.install_day <= cutoff)
            .map(|c| CustomerRecord {
                spend_days: c.spend_days.range(..=cutoff).copied().collect(),
                ..c.clone()
            })
            .collect();
        Ok(SpendPanel {
            customers,
            horizon: cutoff,
            channel_levels: self.channel_levels.clone(),
        })
    }

    pub fn channel_index(&self, channel: &str) -> Option<usize> {
        self.channel_levels.binary_search_by(|l| l.as_str().cmp(channel)).ok()
    }

    /// Number of spend incidences per day `1..=horizon` (index 0 is day 1),
    /// first spends included.
    pub fn daily_spend_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.horizon as usize];
        for c in &self.customers {
            for &d in &c.spend_days {
                counts[(d - 1) as usize] += 1;
            }
        }
        counts
    }

    /// Repeat spends per day (first spends excluded).
    pub fn daily_repeat_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.horizon as usize];
        for c in &self.customers {
            for &d in c.spend_days.range(c.first_spend_day + 1..) {
                counts[(d - 1) as usize] += 1;
            }
        }
        counts
    }

    /// Customers in the repeat-spend risk set on each day (first spend
    /// strictly before the day).
    pub fn daily_at_risk(&self, horizon: u32) -> Vec<u32> {
        let mut counts = vec![0u32; horizon as usize];
        for c in &self.customers {
            for d in (c.first_spend_day + 1)..=horizon {
                counts[(d - 1) as usize] += 1;
            }
        }
        counts
    }
}

/// Position of one customer-day in the three time dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationTriple {
    /// Calendar day.
    pub t: u32,
    /// Days since the most recent spend.
    pub r: u32,
    /// Days since the first spend.
    pub l: u32,
    /// Spends strictly before day `t`, floored at 1.
    pub purchase_number: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub triple: ObservationTriple,
    pub y: bool,
}

/// Risk-set observations for one customer: every day from the day after the
/// first spend through the horizon. The first spend itself is conditioned on.
pub fn customer_observations(c: &CustomerRecord, horizon: u32) -> Vec<Observation> {
    let mut out = Vec::with_capacity(horizon.saturating_sub(c.first_spend_day) as usize);
    let mut last = c.first_spend_day;
    let mut count = 1u32;
    for t in (c.first_spend_day + 1)..=horizon {
        let y = c.spend_days.contains(&t);
        out.push(Observation {
            triple: ObservationTriple {
                t,
                r: t - last,
                l: t - c.first_spend_day,
                purchase_number: count.max(1),
            },
            y,
        });
        if y {
            last = t;
            count += 1;
        }
    }
    out
}

/// Per-customer observation lists, in panel order.
pub fn derive_triples(panel: &SpendPanel) -> Vec<Vec<Observation>> {
    panel
        .customers
        .iter()
        .map(|c| customer_observations(c, panel.horizon))
        .collect()
}

/// Simulates one customer's spend days forward from the first spend, drawing
/// each day's incidence from `propensity` evaluated at the triple implied by
/// the simulated history so far.
pub fn simulate_spends<R, F>(first_spend_day: u32, horizon: u32, mut propensity: F, rng: &mut R) -> BTreeSet<u32>
where
    R: Rng + ?Sized,
    F: FnMut(&ObservationTriple) -> f64,
{
    let mut days = BTreeSet::new();
    days.insert(first_spend_day);
    let mut last = first_spend_day;
    let mut count = 1u32;
    for t in (first_spend_day + 1)..=horizon {
        let triple = ObservationTriple {
            t,
            r: t - last,
            l: t - first_spend_day,
            purchase_number: count,
        };
        let p = spend_probability(propensity(&triple));
        if rng.gen::<f64>() < p {
            days.insert(t);
            last = t;
            count += 1;
        }
    }
    days
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn customer(id: &str, first: u32, days: &[u32]) -> CustomerRecord {
        CustomerRecord {
            customer_id: id.into(),
            install_day: first,
            first_spend_day: first,
            channel: "organic".into(),
            spend_days: days.iter().copied().collect(),
        }
    }

    #[test]
    fn recency_resets_after_each_spend() {
        let panel = SpendPanel::new(vec![customer("a", 3, &[3, 5])], 7).unwrap();
        let obs = &derive_triples(&panel)[0];
        let ts: Vec<u32> = obs.iter().map(|o| o.triple.t).collect();
        let rs: Vec<u32> = obs.iter().map(|o| o.triple.r).collect();
        let ls: Vec<u32> = obs.iter().map(|o| o.triple.l).collect();
        let ys: Vec<bool> = obs.iter().map(|o| o.y).collect();
        let pn: Vec<u32> = obs.iter().map(|o| o.triple.purchase_number).collect();
        assert_eq!(ts, vec![4, 5, 6, 7]);
        assert_eq!(rs, vec![1, 2, 1, 2]);
        assert_eq!(ls, vec![1, 2, 3, 4]);
        assert_eq!(ys, vec![false, true, false, false]);
        assert_eq!(pn, vec![1, 1, 2, 2]);
    }

    #[test]
    fn single_spend_on_last_day_is_empty() {
        let panel = SpendPanel::new(vec![customer("a", 7, &[7])], 7).unwrap();
        assert!(derive_triples(&panel)[0].is_empty());
    }

    #[test]
    fn responses_count_repeat_spends() {
        let panel = SpendPanel::new(
            vec![
                customer("a", 1, &[1, 2, 3, 9]),
                customer("b", 4, &[4, 10]),
                customer("c", 2, &[2]),
            ],
            10,
        )
        .unwrap();
        for (c, obs) in panel.customers.iter().zip(derive_triples(&panel)) {
            let ys = obs.iter().filter(|o| o.y).count();
            assert_eq!(ys, c.spend_days.len() - 1);
            for o in &obs {
                assert!(o.triple.r <= o.triple.l);
            }
        }
    }

    #[test]
    fn every_day_a_spend_keeps_recency_at_one() {
        let panel = SpendPanel::new(vec![customer("a", 1, &[1, 2, 3, 4, 5])], 5).unwrap();
        assert!(derive_triples(&panel)[0].iter().all(|o| o.triple.r == 1));
    }

    #[test]
    fn validation_errors() {
        assert!(SpendPanel::new(vec![customer("a", 3, &[4])], 7).is_err());
        assert!(SpendPanel::new(vec![customer("a", 3, &[3, 9])], 7).is_err());
        assert!(SpendPanel::new(vec![customer("a", 1, &[1]), customer("a", 2, &[2])], 7).is_err());
    }

    #[test]
    fn truncation_drops_late_customers_and_days() {
        let panel = SpendPanel::new(vec![customer("a", 1, &[1, 5, 9]), customer("b", 8, &[8])], 10).unwrap();
        let t = panel.truncate(6).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(
            t.customers[0].spend_days.iter().copied().collect::<Vec<_>>(),
            vec![1, 5]
        );
        assert_eq!(t.horizon, 6);
    }

    #[test]
    fn simulated_history_is_consistent_with_derived_triples() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut seen = Vec::new();
        let days = simulate_spends(
            4,
            40,
            |o| {
                seen.push(*o);
                -0.5 - 0.1 * o.r as f64
            },
            &mut rng,
        );
        let panel = SpendPanel::new(
            vec![CustomerRecord {
                spend_days: days,
                ..customer("a", 4, &[4])
            }],
            40,
        )
        .unwrap();
        let derived: Vec<ObservationTriple> = derive_triples(&panel)[0].iter().map(|o| o.triple).collect();
        assert_eq!(seen, derived);
    }

    #[test]
    fn saturated_propensity_never_spends_again() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let days = simulate_spends(2, 100, |_| -50.0, &mut rng);
        assert_eq!(days.into_iter().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn channel_levels_sorted() {
        let mut a = customer("a", 1, &[1]);
        a.channel = "social".into();
        let b = customer("b", 1, &[1]);
        let panel = SpendPanel::new(vec![a, b], 3).unwrap();
        assert_eq!(panel.channel_levels, vec!["organic".to_string(), "social".to_string()]);
        assert_eq!(panel.channel_index("social"), Some(1));
    }
}
