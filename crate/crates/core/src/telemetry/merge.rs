use std::collections::BTreeMap;

use super::table::TopicTable;

/// Topic tables resampled onto one uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterTable {
    pub time: Vec<f64>,
    pub frequency: f64,
    columns: BTreeMap<String, Vec<f64>>,
}

impl MasterTable {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Column `name` of `topic`, if that topic was merged.
    pub fn get(&self, topic: &str, name: &str) -> Option<&[f64]> {
        self.columns.get(&key(topic, name)).map(Vec::as_slice)
    }

    pub fn insert(&mut self, topic: &str, name: &str, values: Vec<f64>) {
        assert_eq!(values.len(), self.time.len(), "column length must match the grid");
        self.columns.insert(key(topic, name), values);
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frequency
    }
}

fn key(topic: &str, name: &str) -> String {
    format!("{topic}:{name}")
}

/// Index of the sample nearest to `t` in sorted `ts`; ties go to the
/// earlier sample.
pub fn nearest(ts: &[f64], t: f64) -> usize {
    let i = ts.partition_point(|x| *x < t);
    if i == 0 {
        return 0;
    }
    if i == ts.len() {
        return ts.len() - 1;
    }
    if t - ts[i - 1] <= ts[i] - t {
        i - 1
    } else {
        i
    }
}

/// Merge the numeric columns of `tables` onto a grid spanning all their
/// samples. The grid runs at the highest topic frequency, capped at
/// `freq_bound`, and every cell holds the nearest sample of its topic.
/// Empty tables are skipped.
pub fn merge_tables<'a>(tables: impl IntoIterator<Item = &'a TopicTable>, freq_bound: f64) -> MasterTable {
    let tables: Vec<&TopicTable> = tables.into_iter().filter(|t| !t.is_empty()).collect();
    let freq = tables
        .iter()
        .map(|t| t.frequency())
        .fold(0.0_f64, f64::max)
        .min(freq_bound);
    let freq = if freq > 0.0 { freq } else { freq_bound };
    let t0 = tables.iter().map(|t| t.timestamps[0]).fold(f64::INFINITY, f64::min);
    let t1 = tables
        .iter()
        .map(|t| *t.timestamps.last().unwrap_or(&0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut time = Vec::new();
    if t0.is_finite() {
        let n = ((t1 - t0) * freq + 1e-9).floor() as usize;
        time = (0..=n).map(|k| t0 + k as f64 / freq).collect();
    }
    let mut columns = BTreeMap::new();
    for t in tables {
        let picks: Vec<usize> = time.iter().map(|x| nearest(&t.timestamps, *x)).collect();
        for (name, col) in &t.columns {
            if let super::table::Column::Num(v) = col {
                columns.insert(key(&t.topic, name), picks.iter().map(|&i| v[i]).collect());
            }
        }
    }
    MasterTable {
        time,
        frequency: freq,
        columns,
    }
}
