use insitu_cli::rates::{bundle_stats, rates_table, stress_stats};
use insitu_core::mechanisms::MechanismId;
use insitu_core::stream::{ActivityLabel, LabelEvent, SensorFrame, StreamBundle, StreamMeta};

fn bundle(events: &[(u64, ActivityLabel)], seconds: u64) -> StreamBundle {
    let mechanism = MechanismId::ThreeButton;
    StreamBundle {
        meta: StreamMeta::new("u01", mechanism),
        frames: (0..seconds * 50).map(|k| SensorFrame::from_values(k * 20, [0.0; 9])).collect(),
        events: events.iter().map(|&(t_ms, label)| LabelEvent { t_ms, label, mechanism }).collect(),
    }
}

#[test]
fn no_events_give_a_zero_row() {
    let stats = bundle_stats(&[bundle(&[], 60)]).unwrap();
    assert_eq!(stats.counts, [0, 0, 0]);
    assert_eq!((stats.total, stats.changes), (0, 0));
    assert_eq!(stats.duration_s, 60.0);
    let table = rates_table("t", &[(MechanismId::ThreeButton, stats)]);
    assert_eq!(table.cell(0, "labels_per_min"), Some("0.000"));
    assert_eq!(table.cell(0, "walking_per_min"), Some("0.000"));
}

#[test]
fn single_label_session_has_no_changes() {
    use ActivityLabel::Walking;
    let stats = bundle_stats(&[bundle(&[(0, Walking), (5000, Walking), (9000, Walking)], 60)]).unwrap();
    assert_eq!(stats.count(Walking), 3);
    assert_eq!(stats.changes, 0);
    assert_eq!(stats.labels_per_min, 3.0);
}

#[test]
fn changes_do_not_span_sessions() {
    use ActivityLabel::*;
    let a = bundle(&[(0, Walking), (1000, Upstairs)], 30);
    let b = bundle(&[(0, Downstairs)], 30);
    let stats = bundle_stats(&[a, b]).unwrap();
    assert_eq!(stats.total, 3);
    assert_eq!(stats.changes, 1);
    assert_eq!(stats.duration_s, 60.0);
}

#[test]
fn stress_input_orders_mechanisms_by_what_they_allow() {
    let total = |m| stress_stats(m, 120.0, 250).unwrap().total;
    for two in [MechanismId::TwoAdjacent, MechanismId::TwoOpposite] {
        for direct in [MechanismId::ThreeButton, MechanismId::App] {
            assert!(total(two) < total(direct), "{two} vs {direct}");
        }
    }
    // one label per attempt: 120 s / 250 ms
    assert_eq!(total(MechanismId::ThreeButton), 480);
    let table = rates_table(
        "stress",
        &MechanismId::ALL.map(|m| (m, stress_stats(m, 120.0, 250).unwrap())),
    );
    assert_eq!(table.rows.len(), 6);
    assert_eq!(table.cell(2, "total"), Some("480"));
}
