//! Rebuilding the metrics table and an infection timeline from a log alone.

use std::collections::{BTreeMap, BTreeSet};

use quinelab::websim::{write_metrics, Event, EventKind, MetricsRow};

/// One row per step seen in the log. A field counts as infected from its
/// first INFECTION_WRITE on.
pub fn metrics_from_log(events: &[Event]) -> Vec<MetricsRow> {
    let Some(last) = events.last().map(|e| e.step) else { return Vec::new() };
    let mut fields: BTreeMap<&str, BTreeSet<FieldKey>> = BTreeMap::new();
    let mut requests = 0;
    let mut rows = Vec::new();
    let mut it = events.iter().peekable();
    for step in 0..=last {
        while let Some(e) = it.next_if(|e| e.step == step) {
            match e.kind {
                EventKind::HttpGet => requests += 1,
                EventKind::InfectionWrite => {
                    let d = &e.detail;
                    let key = (d.table.as_deref().unwrap_or(""), d.column.as_deref().unwrap_or(""), d.row.unwrap_or(0));
                    fields.entry(e.site.as_str()).or_default().insert(key);
                }
                _ => {}
            }
        }
        rows.push(MetricsRow {
            step,
            infected_sites: fields.values().filter(|f| !f.is_empty()).count(),
            infected_fields: fields.values().map(BTreeSet::len).sum(),
            requests_total: requests,
        });
    }
    rows
}

type FieldKey<'a> = (&'a str, &'a str, usize);

/// Per site: the step of its first infection and its final field count.
pub fn timeline(events: &[Event]) -> Vec<(String, Option<u64>, usize)> {
    let mut sites: BTreeMap<&str, (Option<u64>, BTreeSet<FieldKey>)> = BTreeMap::new();
    for e in events.iter().filter(|e| !e.site.is_empty()) {
        let entry = sites.entry(e.site.as_str()).or_default();
        if e.kind == EventKind::InfectionWrite {
            entry.0.get_or_insert(e.step);
            let d = &e.detail;
            entry.1.insert((d.table.as_deref().unwrap_or(""), d.column.as_deref().unwrap_or(""), d.row.unwrap_or(0)));
        }
    }
    sites.into_iter().map(|(s, (first, f))| (s.to_string(), first, f.len())).collect()
}

pub fn render(events: &[Event]) -> String {
    let mut out = write_metrics(&metrics_from_log(events));
    out.push('\n');
    for (site, first, n) in timeline(events) {
        match first {
            Some(step) => out.push_str(&format!("{site}: infected at step {step}, {n} fields\n")),
            None => out.push_str(&format!("{site}: never infected\n")),
        }
    }
    out
}
