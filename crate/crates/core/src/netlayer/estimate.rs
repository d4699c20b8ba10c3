use thiserror::Error;

use super::routing::RouteEntry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PacketError {
    #[error("packet size {pkt_bits} bits must exceed header size {header_bits} bits")]
    HeaderTooLarge { pkt_bits: u64, header_bits: u64 },
}

/// Available bandwidth on a link whose receiving end has the given
/// neighbours' self-traffic: `B_channel - sum(B_self)`, floored at zero.
pub fn link_quality<I>(b_channel_bps: f64, neighbor_self_traffic: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let used: f64 = neighbor_self_traffic.into_iter().sum();
    (b_channel_bps - used).max(0.0)
}

/// Packets needed to carry `data_bits` when each packet spends
/// `header_bits` of its `pkt_bits` on headers.
pub fn packets_for(data_bits: u64, pkt_bits: u64, header_bits: u64) -> Result<u64, PacketError> {
    if pkt_bits <= header_bits {
        return Err(PacketError::HeaderTooLarge {
            pkt_bits,
            header_bits,
        });
    }
    Ok(data_bits.div_ceil(pkt_bits - header_bits))
}

/// Estimated data transfer time over `entry` for `packets` packets of
/// `pkt_bits` each. Returns `f64::INFINITY` when the route has no
/// available bandwidth.
pub fn dtt_for_packets(packets: u64, pkt_bits: u64, entry: &RouteEntry) -> f64 {
    if packets == 0 {
        return 0.0;
    }
    if !(entry.link_quality_bps > 0.0) {
        return f64::INFINITY;
    }
    let size = pkt_bits as f64;
    (packets as f64 * size) / entry.link_quality_bps
        + (entry.avg_dropped_lost * size) / entry.link_quality_bps
}

/// Estimated data transfer time for `data_bits` of payload over `entry`.
pub fn estimate_dtt(
    data_bits: u64,
    pkt_bits: u64,
    header_bits: u64,
    entry: &RouteEntry,
) -> Result<f64, PacketError> {
    let packets = packets_for(data_bits, pkt_bits, header_bits)?;
    Ok(dtt_for_packets(packets, pkt_bits, entry))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(lq: f64, dl: f64) -> RouteEntry {
        RouteEntry {
            link_quality_bps: lq,
            avg_dropped_lost: dl,
            ..RouteEntry::direct(1, 0)
        }
    }

    #[test]
    fn link_quality_cases() {
        assert_eq!(link_quality(11e6, []), 11e6);
        assert_eq!(link_quality(11e6, [2e6, 3e6]), 6e6);
        assert_eq!(link_quality(11e6, [8e6, 5e6]), 0.0);
    }

    #[test]
    fn packet_counts() {
        assert_eq!(packets_for(3840, 4096, 256), Ok(1));
        assert_eq!(packets_for(8192, 4096, 256), Ok(3));
        assert_eq!(packets_for(0, 4096, 256), Ok(0));
        assert!(packets_for(10, 256, 256).is_err());
    }

    #[test]
    fn dtt_hand_values() {
        // 8192 bits -> 3 packets of 4096 bits at 1 Mb/s
        let e = entry(1e6, 0.0);
        assert!((estimate_dtt(8192, 4096, 256, &e).unwrap() - 0.012288).abs() < 1e-15);
        let e = entry(1e6, 1.0);
        assert!((estimate_dtt(8192, 4096, 256, &e).unwrap() - 0.016384).abs() < 1e-15);
        assert_eq!(estimate_dtt(0, 4096, 256, &e).unwrap(), 0.0);
        assert_eq!(estimate_dtt(1, 4096, 256, &entry(0.0, 0.0)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn dtt_monotone_in_quality_and_losses() {
        let slow = estimate_dtt(100_000, 4096, 256, &entry(1e6, 2.0)).unwrap();
        let fast = estimate_dtt(100_000, 4096, 256, &entry(2e6, 2.0)).unwrap();
        let lossy = estimate_dtt(100_000, 4096, 256, &entry(1e6, 3.0)).unwrap();
        assert!(fast < slow && lossy > slow);
    }
}
