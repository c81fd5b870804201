use artic_core::transport::{
    packet_count, packetize, sample_for_mllm, Frame, LossDetector, Packet, Reassembler, SampleOutcome,
    SamplerConfig, SubstituteWindow,
};
use proptest::prelude::*;

const MTU: f64 = 11_200.0;

/// Frames at 10 FPS with the given sizes, packetized back to back.
fn stream(sizes: &[f64]) -> (Vec<Frame>, Vec<Packet>) {
    let mut seq = 0;
    let mut frames = Vec::new();
    let mut packets = Vec::new();
    for (i, &bits) in sizes.iter().enumerate() {
        let f = Frame {
            frame_id: i as u64,
            capture_ts: i as f64 * 100.0,
            size_bits: bits,
            budget: None,
        };
        let p = packetize(&f, seq, MTU, f.capture_ts).unwrap();
        seq += p.len() as u64;
        packets.extend(p);
        frames.push(f);
    }
    (frames, packets)
}

fn replay(frames: &[Frame], packets: &[Packet], deliveries: &[(usize, f64)]) -> Reassembler {
    let mut r = Reassembler::new();
    let mut seq = 0;
    for f in frames {
        let n = packet_count(f.size_bits, MTU);
        r.announce(f.frame_id, f.capture_ts, seq, n);
        seq += u64::from(n);
    }
    for &(i, at) in deliveries {
        r.on_packet_arrival(&packets[i], at);
    }
    r
}

fn scenario() -> impl Strategy<Value = (Vec<f64>, Vec<(usize, f64)>, Vec<usize>)> {
    prop::collection::vec(1.0f64..60_000.0, 1..12).prop_flat_map(|sizes| {
        let total: usize = sizes.iter().map(|&b| packet_count(b, MTU) as usize).sum();
        let deliveries = prop::collection::vec((0..total, 0.0f64..1500.0), 0..(3 * total));
        let dupes = prop::collection::vec(0usize..1000, 0..20);
        (Just(sizes), deliveries, dupes)
    })
}

proptest! {
    #[test]
    fn packetization_preserves_bits(bits in 1.0f64..1e6, first in 0u64..1000) {
        let f = Frame { frame_id: 0, capture_ts: 0.0, size_bits: bits, budget: None };
        let p = packetize(&f, first, MTU, 0.0).unwrap();
        prop_assert_eq!(p.len() as u32, packet_count(bits, MTU));
        prop_assert!((p.iter().map(|x| x.payload_bits).sum::<f64>() - bits).abs() < 1e-6);
        prop_assert!(p.iter().enumerate().all(|(i, x)| x.seq == first + i as u64 && x.payload_bits <= MTU));
    }

    #[test]
    fn duplicate_delivery_changes_nothing((sizes, mut deliveries, dupes) in scenario()) {
        deliveries.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (frames, packets) = stream(&sizes);
        let base = replay(&frames, &packets, &deliveries);

        let mut noisy = deliveries.clone();
        for d in dupes {
            if let Some(&(i, at)) = deliveries.get(d % deliveries.len().max(1)) {
                noisy.push((i, at + (d as f64) * 0.37));
            }
        }
        noisy.sort_by(|a, b| a.1.total_cmp(&b.1));
        let dup = replay(&frames, &packets, &noisy);

        let done = |r: &Reassembler| r.frames().map(|f| f.completion_ts).collect::<Vec<_>>();
        prop_assert_eq!(done(&base), done(&dup));
        let cfg = SamplerConfig::new(2.0, 60.0, SubstituteWindow::Group).unwrap();
        for k in 0..3 {
            let t = k as f64 * 500.0;
            prop_assert_eq!(sample_for_mllm(&base, &cfg, t), sample_for_mllm(&dup, &cfg, t));
        }
    }

    #[test]
    fn nacks_only_name_real_gaps(arrivals in prop::collection::vec(0u64..200, 1..100)) {
        let mut d = LossDetector::new();
        let mut seen = std::collections::BTreeSet::new();
        for (i, &s) in arrivals.iter().enumerate() {
            d.on_arrival(s, i as f64);
            seen.insert(s);
        }
        let high = *seen.iter().next_back().unwrap();
        let nacked = d.detect_losses(1e6, 10.0, 60.0);
        let want: Vec<u64> = (0..high).filter(|s| !seen.contains(s)).collect();
        prop_assert_eq!(nacked, want);
        // a second round within one RTT repeats nothing
        prop_assert!(d.detect_losses(1e6 + 59.0, 10.0, 60.0).is_empty());
    }
}

#[test]
fn substitute_comes_from_the_current_group() {
    // 6 FPS into a 2 FPS sampler: frames at 0, 166.7, 333.3, 500 ...
    let interval = 1000.0 / 6.0;
    let mut r = Reassembler::new();
    for i in 0..4u64 {
        r.announce(i, i as f64 * interval, i, 1);
    }
    let pkt = |i: u64| Packet {
        seq: i,
        frame_id: i,
        index: 0,
        count: 1,
        payload_bits: 800.0,
        capture_ts: i as f64 * interval,
        send_ts: i as f64 * interval,
        is_retransmit: false,
    };
    r.on_packet_arrival(&pkt(0), 31.0);
    r.on_packet_arrival(&pkt(2), 364.0);
    let group = SamplerConfig::new(2.0, 60.0, SubstituteWindow::Group).unwrap();
    let any = SamplerConfig::new(2.0, 60.0, SubstituteWindow::Any).unwrap();
    match sample_for_mllm(&r, &group, 500.0) {
        SampleOutcome::Substitute { frame_id: 2, age_ms } => assert!((age_ms - 500.0 / 3.0).abs() < 1e-9),
        other => panic!("{other:?}"),
    }
    assert!(matches!(sample_for_mllm(&r, &group, 0.0), SampleOutcome::Expected { frame_id: 0 }));

    // frame 2 missing as well: the group has nothing, `any` reaches back to frame 0
    let mut r2 = Reassembler::new();
    for i in 0..4u64 {
        r2.announce(i, i as f64 * interval, i, 1);
    }
    r2.on_packet_arrival(&pkt(0), 31.0);
    assert!(matches!(sample_for_mllm(&r2, &group, 500.0), SampleOutcome::Stall { wait_ms: None, .. }));
    assert!(matches!(
        sample_for_mllm(&r2, &any, 500.0),
        SampleOutcome::Substitute { frame_id: 0, .. }
    ));
}
