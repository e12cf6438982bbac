use insitu_core::mechanisms::MechanismId;
use insitu_core::stream::{
    emit_csv, fuse, parse_csv, quantize, resample_hold, ActivityLabel, LabelEvent, LabelledSample, SensorFrame,
    StreamBundle, StreamMeta,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn meta() -> StreamMeta {
    StreamMeta::new("p01", MechanismId::Slider)
}

/// Random quantised samples: an unlabelled prefix, then runs of labels.
fn random_samples(n: usize, seed: u64) -> Vec<LabelledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = rng.gen_range(0..1000u64);
    let unlabelled = rng.gen_range(0..n.max(1));
    let mut label = ActivityLabel::ALL[rng.gen_range(0..3)];
    (0..n)
        .map(|i| {
            t += rng.gen_range(1..40);
            if rng.gen_bool(0.02) {
                label = ActivityLabel::ALL[rng.gen_range(0..3)];
            }
            let scale = 10f64.powi(rng.gen_range(-4..5));
            let v: [f64; 9] = std::array::from_fn(|_| quantize(rng.gen_range(-1.0..1.0) * scale));
            LabelledSample {
                frame: SensorFrame::from_values(t, v),
                label: (i >= unlabelled).then_some(label),
            }
        })
        .collect()
}

#[test]
fn thousand_sample_bundle_round_trips() {
    let samples = random_samples(1000, 17);
    let bundle = StreamBundle::from_labelled(meta(), &samples);
    let text = emit_csv(&bundle);
    assert_eq!(text.lines().count(), 1001);
    let back = parse_csv(&text, meta()).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.fused(), samples);
    // bit-exact, not merely equal under float comparison
    for (a, b) in back.frames.iter().zip(&bundle.frames) {
        assert_eq!(a.values().map(f64::to_bits), b.values().map(f64::to_bits));
    }
}

proptest! {
    #[test]
    fn csv_round_trip(n in 0usize..200, seed in any::<u64>()) {
        let samples = random_samples(n, seed);
        let bundle = StreamBundle::from_labelled(meta(), &samples);
        let back = parse_csv(&emit_csv(&bundle), meta()).unwrap();
        prop_assert_eq!(back, bundle);
    }

    #[test]
    fn fuse_matches_brute_force(
        frame_gaps in prop::collection::vec(1u64..30, 1..80),
        event_times in prop::collection::vec(0u64..1500, 0..12),
        labels in prop::collection::vec(0usize..3, 12),
    ) {
        let mut t = 0;
        let frames: Vec<_> = frame_gaps.iter().map(|g| { t += g; SensorFrame::from_values(t, [0.0; 9]) }).collect();
        let mut times = event_times.clone();
        times.sort();
        let events: Vec<_> = times.iter().zip(&labels).map(|(&t, &l)| LabelEvent {
            t_ms: t, label: ActivityLabel::ALL[l], mechanism: MechanismId::App,
        }).collect();
        let fused = fuse(&frames, &events);
        for s in &fused {
            let expected = events.iter().filter(|e| e.t_ms <= s.frame.t_ms).last().map(|e| e.label);
            prop_assert_eq!(s.label, expected);
        }

        // appending a later event leaves earlier frames untouched
        let cut = times.last().copied().unwrap_or(0) + 1;
        let mut more = events.clone();
        more.push(LabelEvent { t_ms: cut, label: ActivityLabel::Upstairs, mechanism: MechanismId::App });
        let refused = fuse(&frames, &more);
        for (a, b) in fused.iter().zip(&refused) {
            if a.frame.t_ms < cut {
                prop_assert_eq!(a.label, b.label);
            }
        }
    }

    #[test]
    fn resample_is_hold_on_a_grid(
        gaps in prop::collection::vec(1u64..50, 1..100),
        rate in prop::sample::select(vec![1.0, 2.0, 4.0, 5.0, 8.0, 10.0, 20.0, 25.0, 40.0, 50.0, 100.0, 125.0, 200.0]),
    ) {
        let mut t = 100;
        let frames: Vec<_> = std::iter::once(0).chain(gaps).map(|g| {
            t += g;
            SensorFrame::from_values(t, [t as f64; 9])
        }).collect();
        let out = resample_hold(&frames, rate).unwrap();
        let period = (1000.0 / rate) as u64;
        prop_assert_eq!(out[0].t_ms, frames[0].t_ms);
        for (k, f) in out.iter().enumerate() {
            prop_assert_eq!(f.t_ms, frames[0].t_ms + k as u64 * period);
            let src = frames.iter().filter(|s| s.t_ms <= f.t_ms).last().unwrap();
            prop_assert_eq!(f.values(), src.values());
        }
        let last = frames.last().unwrap().t_ms;
        prop_assert!(out.last().unwrap().t_ms <= last);
        prop_assert!(out.last().unwrap().t_ms + period > last);
    }
}
