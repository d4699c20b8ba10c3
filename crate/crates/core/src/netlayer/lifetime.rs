//! Markov link-lifetime predictor.
//!
//! Each link keeps a 3x3 count matrix over lifetime intervals
//! (short, medium, long). A completed up-period is classified into an
//! interval and counted as a transition from the previous period's
//! interval. Transitions to a shorter interval (M->S, L->M, L->S) are not
//! permitted and never counted.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Interval {
    Short,
    Medium,
    Long,
}

impl Interval {
    pub const ALL: [Interval; 3] = [Interval::Short, Interval::Medium, Interval::Long];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Interval {
        Self::ALL[i]
    }

    pub fn label(self) -> &'static str {
        match self {
            Interval::Short => "S",
            Interval::Medium => "M",
            Interval::Long => "L",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeBounds {
    pub short_max_s: f64,
    pub medium_max_s: f64,
}

impl Default for LifetimeBounds {
    fn default() -> Self {
        Self {
            short_max_s: 30.0,
            medium_max_s: 120.0,
        }
    }
}

impl LifetimeBounds {
    /// Conservative duration of an interval: its lower bound.
    pub fn lower_bound(&self, interval: Interval) -> f64 {
        match interval {
            Interval::Short => 0.0,
            Interval::Medium => self.short_max_s,
            Interval::Long => self.medium_max_s,
        }
    }
}

/// Interval of a lifetime; both boundaries are inclusive on the short side.
pub fn classify_lifetime(duration_s: f64, bounds: &LifetimeBounds) -> Interval {
    if duration_s <= bounds.short_max_s {
        Interval::Short
    } else if duration_s <= bounds.medium_max_s {
        Interval::Medium
    } else {
        Interval::Long
    }
}

pub fn permitted(from: Interval, to: Interval) -> bool {
    to >= from
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub interval: Interval,
    pub probability: f64,
    pub lifetime_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkLifetimeModel {
    counts: [[u64; 3]; 3],
    prev: Option<Interval>,
    up_since: Option<SimTime>,
}

impl LinkLifetimeModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counts(&self) -> &[[u64; 3]; 3] {
        &self.counts
    }

    pub fn previous(&self) -> Option<Interval> {
        self.prev
    }

    pub fn up_since(&self) -> Option<SimTime> {
        self.up_since
    }

    pub fn is_up(&self) -> bool {
        self.up_since.is_some()
    }

    /// Records the end of an up-period of `completed_lifetime_s`.
    pub fn record_link_transition(&mut self, completed_lifetime_s: f64, bounds: &LifetimeBounds) {
        let this = classify_lifetime(completed_lifetime_s, bounds);
        if let Some(prev) = self.prev {
            if permitted(prev, this) {
                self.counts[prev.index()][this.index()] += 1;
            }
        }
        self.prev = Some(this);
    }

    pub fn link_up(&mut self, now: SimTime) {
        if self.up_since.is_none() {
            self.up_since = Some(now);
        }
    }

    /// Marks the link down and feeds the finished up-period to the chain.
    pub fn link_down(&mut self, now: SimTime, bounds: &LifetimeBounds) {
        if let Some(since) = self.up_since.take() {
            self.record_link_transition(now - since, bounds);
        }
    }

    /// Row of transition probabilities out of `from`. Rows without data
    /// fall back to a uniform prior over permitted targets.
    pub fn row_probabilities(&self, from: Interval) -> [f64; 3] {
        let row = &self.counts[from.index()];
        let total: u64 = row.iter().sum();
        let mut p = [0.0; 3];
        if total == 0 {
            let allowed = Interval::ALL.iter().filter(|&&to| permitted(from, to)).count();
            for to in Interval::ALL {
                if permitted(from, to) {
                    p[to.index()] = 1.0 / allowed as f64;
                }
            }
        } else {
            for to in Interval::ALL {
                p[to.index()] = row[to.index()] as f64 / total as f64;
            }
        }
        p
    }

    /// Most probable next interval from `current`; ties go to the shorter interval.
    pub fn predict_lifetime(&self, current: Interval, bounds: &LifetimeBounds) -> Prediction {
        predict_from_row(&self.row_probabilities(current), bounds)
    }

    /// State to predict from while the link is up: the previous period's
    /// interval, or the current period's age class before any period ended.
    pub fn current_state(&self, now: SimTime, bounds: &LifetimeBounds) -> Option<Interval> {
        let since = self.up_since?;
        Some(
            self.prev
                .unwrap_or_else(|| classify_lifetime(now - since, bounds)),
        )
    }

    /// Prediction for a link that is currently up, `None` when it is down.
    pub fn predict_now(&self, now: SimTime, bounds: &LifetimeBounds) -> Option<Prediction> {
        self.current_state(now, bounds)
            .map(|s| self.predict_lifetime(s, bounds))
    }
}

/// Argmax over a probability row with ties resolved toward shorter intervals.
pub fn predict_from_row(row: &[f64; 3], bounds: &LifetimeBounds) -> Prediction {
    let mut best = 0;
    for i in 1..3 {
        if row[i] > row[best] {
            best = i;
        }
    }
    let interval = Interval::from_index(best);
    Prediction {
        interval,
        probability: row[best],
        lifetime_s: bounds.lower_bound(interval),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const B: LifetimeBounds = LifetimeBounds {
        short_max_s: 30.0,
        medium_max_s: 120.0,
    };

    #[test]
    fn classification() {
        assert_eq!(classify_lifetime(10.0, &B), Interval::Short);
        assert_eq!(classify_lifetime(30.0, &B), Interval::Short);
        assert_eq!(classify_lifetime(30.5, &B), Interval::Medium);
        assert_eq!(classify_lifetime(120.0, &B), Interval::Medium);
        assert_eq!(classify_lifetime(500.0, &B), Interval::Long);
    }

    #[test]
    fn first_observation_records_nothing() {
        let mut m = LinkLifetimeModel::new();
        m.record_link_transition(5.0, &B);
        assert_eq!(m.counts(), &[[0; 3]; 3]);
        assert_eq!(m.previous(), Some(Interval::Short));
    }

    #[test]
    fn count_based_rows() {
        let mut m = LinkLifetimeModel::new();
        m.record_link_transition(5.0, &B);
        m.record_link_transition(6.0, &B);
        assert_eq!(m.row_probabilities(Interval::Short), [1.0, 0.0, 0.0]);
        m.record_link_transition(60.0, &B);
        // S,S,M: S->S then S->M
        assert_eq!(m.row_probabilities(Interval::Short), [0.5, 0.5, 0.0]);
    }

    #[test]
    fn forbidden_transition_is_not_counted() {
        let mut m = LinkLifetimeModel::new();
        m.record_link_transition(500.0, &B);
        m.record_link_transition(5.0, &B);
        assert_eq!(m.counts()[Interval::Long.index()], [0, 0, 0]);
        assert_eq!(m.previous(), Some(Interval::Short));
        assert_eq!(m.row_probabilities(Interval::Long), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn worked_example_row() {
        let p = predict_from_row(&[0.5, 0.4, 0.1], &B);
        assert_eq!(p.interval, Interval::Short);
        assert_eq!(p.probability, 0.5);
        assert_eq!(p.lifetime_s, 0.0);
    }

    #[test]
    fn uniform_prior_ties_to_shorter() {
        let m = LinkLifetimeModel::new();
        let s = m.predict_lifetime(Interval::Short, &B);
        assert_eq!(s.interval, Interval::Short);
        assert!((s.probability - 1.0 / 3.0).abs() < 1e-15);
        let md = m.predict_lifetime(Interval::Medium, &B);
        assert_eq!((md.interval, md.probability, md.lifetime_s), (Interval::Medium, 0.5, 30.0));
        let l = m.predict_lifetime(Interval::Long, &B);
        assert_eq!((l.interval, l.probability, l.lifetime_s), (Interval::Long, 1.0, 120.0));
    }

    #[test]
    fn up_down_cycle_feeds_chain() {
        let mut m = LinkLifetimeModel::new();
        m.link_up(0.0);
        assert_eq!(m.current_state(45.0, &B), Some(Interval::Medium));
        m.link_down(45.0, &B);
        assert!(m.predict_now(50.0, &B).is_none());
        m.link_up(50.0);
        m.link_down(200.0, &B);
        assert_eq!(m.counts()[1][2], 1);
        m.link_up(210.0);
        assert_eq!(m.current_state(211.0, &B), Some(Interval::Long));
    }

    proptest! {
        #[test]
        fn rows_normalised_and_never_predict_shorter(lifetimes in proptest::collection::vec(0.0f64..400.0, 0..60)) {
            let mut m = LinkLifetimeModel::new();
            for l in lifetimes {
                m.record_link_transition(l, &B);
            }
            for from in Interval::ALL {
                let row = m.row_probabilities(from);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                for to in Interval::ALL {
                    if !permitted(from, to) {
                        prop_assert_eq!(row[to.index()], 0.0);
                    }
                }
                prop_assert!(m.predict_lifetime(from, &B).interval >= from);
            }
        }
    }
}
