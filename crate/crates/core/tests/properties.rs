mod common;

use adhoc_cloud::middleware::{allocate, allocate_relaxed, allocation, cost};
use adhoc_cloud::netlayer::lifetime::permitted;
use adhoc_cloud::netlayer::{link_quality, packets_for, Interval, LifetimeBounds, LinkLifetimeModel, RouteEntry};
use adhoc_cloud::radio::{estimate_distance, min_power_level, rssi, PowerLevel, RadioConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::rel_err;

fn radio_with_ranges(ranges: &[f64]) -> RadioConfig {
    RadioConfig {
        levels: ranges
            .iter()
            .enumerate()
            .map(|(i, &r)| PowerLevel {
                tx_power_dbm: -10.0 + 5.0 * i as f64,
                range_m: r,
                energy_per_packet_j: 1e-4 * (i + 1) as f64,
            })
            .collect(),
        ..RadioConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_estimate_inverts_rssi(tx in -30.0f64..10.0, d in 1.0f64..180.0, n in 1.5f64..5.0) {
        let back = estimate_distance(tx, rssi(tx, d, n), n);
        prop_assert!(rel_err(back, d) <= 1e-9);
    }

    #[test]
    fn lowest_covering_level(mut ranges in prop::collection::vec(1.0f64..300.0, 1..5), d in 0.0f64..320.0) {
        ranges.sort_by(f64::total_cmp);
        ranges.dedup();
        let radio = radio_with_ranges(&ranges);
        let scan = ranges.iter().position(|&r| d <= r);
        match min_power_level(d, &radio) {
            Ok(l) => prop_assert_eq!(Some(l), scan),
            Err(_) => prop_assert_eq!(scan, None),
        }
    }

    #[test]
    fn link_quality_is_floored_and_bounded(b in 0.0f64..2e7, nb in prop::collection::vec(0.0f64..5e6, 0..10)) {
        let lq = link_quality(b, nb.iter().copied());
        prop_assert!(lq >= 0.0 && lq <= b);
        prop_assert!(rel_err(lq, common::link_quality(b, &nb)) <= 1e-9);
    }

    #[test]
    fn packets_cover_data_tightly(data in 0u64..100_000_000, pkt in 2u64..10_000, hdr_frac in 0.0f64..1.0) {
        let hdr = ((pkt - 1) as f64 * hdr_frac) as u64;
        let p = packets_for(data, pkt, hdr).unwrap();
        let payload = pkt - hdr;
        prop_assert!(p * payload >= data);
        prop_assert!(p == 0 || (p - 1) * payload < data);
        prop_assert!(packets_for(data, hdr, hdr).is_err());
    }

    #[test]
    fn queue_time_grows_with_queue(
        queued in prop::collection::vec(0.0f64..1e9, 0..8),
        extra in 0.0f64..1e9,
        cpi in 0.5f64..8.0,
        phi in 0.0f64..0.1,
    ) {
        let cct = 1e-7;
        let before = cost::queue_time(None, &queued, cpi, cct, phi);
        let mut longer = queued.clone();
        longer.push(extra);
        prop_assert!(cost::queue_time(None, &longer, cpi, cct, phi) >= before);
    }

    #[test]
    fn completion_time_grows_with_loss(seed in any::<u64>(), extra in 0.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (task, cands, fmt) = common::allocation_instance(&mut rng);
        for c in &cands {
            for r in &c.routes {
                let worse = RouteEntry { avg_dropped_lost: r.avg_dropped_lost + extra, ..r.clone() };
                let a = allocation::estimate(&task, c, r, fmt).unwrap().e_ct;
                let b = allocation::estimate(&task, c, &worse, fmt).unwrap().e_ct;
                prop_assert!(b >= a || (a.is_infinite() && b.is_infinite()));
            }
        }
    }

    #[test]
    fn allocation_matches_exhaustive_search(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (task, cands, fmt) = common::allocation_instance(&mut rng);
        let lib = allocate(&task, &cands, fmt).unwrap();
        let oracle = common::brute_force_allocate(&task, &cands, fmt);
        match (&lib, &oracle) {
            (None, None) => {}
            (Some(l), Some(o)) => {
                prop_assert_eq!(l.node, o.node);
                prop_assert_eq!(&l.route.path, &o.path);
                prop_assert_eq!(l.route.power_level, o.level);
                prop_assert!(l.lifetime_ok() && l.route.lifetime_probability > 0.0);
            }
            _ => prop_assert!(false, "library {:?} vs oracle {:?}", lib.map(|e| e.node), oracle),
        }
        if let (Some(strict), Some(relaxed)) = (lib, allocate_relaxed(&task, &cands, fmt).unwrap()) {
            prop_assert!(relaxed.e_ct <= strict.e_ct);
        }
    }

    #[test]
    fn markov_rows_stay_normalized(durations in prop::collection::vec(0.0f64..400.0, 0..200)) {
        let bounds = LifetimeBounds::default();
        let mut m = LinkLifetimeModel::new();
        for &d in &durations {
            m.record_link_transition(d, &bounds);
        }
        for from in Interval::ALL {
            let row = m.row_probabilities(from);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for to in Interval::ALL {
                if !permitted(from, to) {
                    prop_assert_eq!(row[to.index()], 0.0);
                    prop_assert_eq!(m.counts()[from.index()][to.index()], 0);
                }
            }
            let p = m.predict_lifetime(from, &bounds);
            let (i, prob) = common::count_scan(&m.counts()[from.index()], from.index());
            prop_assert_eq!(p.interval.index(), i);
            prop_assert!(rel_err(p.probability, prob) <= 1e-12);
            prop_assert!(permitted(from, p.interval));
        }
        let expected = durations.len().saturating_sub(1) as u64;
        let counted: u64 = m.counts().iter().flatten().sum();
        prop_assert!(counted <= expected);
    }
}
