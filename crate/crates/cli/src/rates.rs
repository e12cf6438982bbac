//! Labelling-rate tables per mechanism.

use insitu_core::mechanisms::{analyze_labels, replay, LabelStats, MechanismConfig, MechanismId};
use insitu_core::simulator::stress_inputs;
use insitu_core::stream::{ActivityLabel, StreamBundle};
use insitu_stats::report::{fmt3, Table};

/// Session length of a bundle, from its first to last frame or event.
pub fn duration_s(bundle: &StreamBundle, sample_rate_hz: f64) -> f64 {
    let times = bundle.frames.iter().map(|f| f.t_ms).chain(bundle.events.iter().map(|e| e.t_ms));
    let (lo, hi) = times.fold((u64::MAX, 0), |(lo, hi), t| (lo.min(t), hi.max(t)));
    if lo > hi {
        return 0.0;
    }
    (hi - lo) as f64 / 1000.0 + 1.0 / sample_rate_hz
}

/// Pooled label statistics of every session recorded with one mechanism.
pub fn bundle_stats(bundles: &[StreamBundle]) -> anyhow::Result<LabelStats> {
    let mut events = Vec::new();
    let mut total_s = 0.0;
    for b in bundles {
        events.extend(b.events.iter().copied());
        total_s += duration_s(b, b.meta.sample_rate_hz);
    }
    if total_s == 0.0 {
        total_s = 1.0;
    }
    let mut stats = analyze_labels(&events, total_s)?;
    // changes never span two sessions
    stats.changes = bundles
        .iter()
        .map(|b| b.events.windows(2).filter(|w| w[0].label != w[1].label).count())
        .sum();
    stats.changes_per_min = stats.changes as f64 * 60.0 / total_s;
    Ok(stats)
}

/// Labels produced by scripted as-fast-as-possible input over `duration_s`.
pub fn stress_stats(mechanism: MechanismId, duration_s: f64, cadence_ms: u64) -> anyhow::Result<LabelStats> {
    let config = MechanismConfig::default();
    let events = replay(mechanism, config, &stress_inputs(mechanism, config, duration_s, cadence_ms))?;
    Ok(analyze_labels(&events, duration_s)?)
}

pub fn rates_table(title: &str, rows: &[(MechanismId, LabelStats)]) -> Table {
    let mut headers = vec!["mechanism"];
    let per_label: Vec<String> = ActivityLabel::ALL.iter().map(|l| format!("{}_per_min", l.name())).collect();
    headers.extend(ActivityLabel::ALL.iter().map(|l| l.name()));
    headers.extend(["total", "changes", "duration_s"]);
    headers.extend(per_label.iter().map(|s| s.as_str()));
    headers.extend(["labels_per_min", "changes_per_min"]);
    let mut table = Table::new(title, &headers);
    for (m, s) in rows {
        let mut row = vec![m.name().to_string()];
        row.extend(s.counts.iter().map(|c| c.to_string()));
        row.extend([s.total.to_string(), s.changes.to_string(), fmt3(s.duration_s)]);
        row.extend(ActivityLabel::ALL.iter().map(|&l| fmt3(s.rate_per_min(l))));
        row.extend([fmt3(s.labels_per_min), fmt3(s.changes_per_min)]);
        table.push(row);
    }
    table
}
