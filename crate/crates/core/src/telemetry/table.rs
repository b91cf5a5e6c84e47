use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::TelemetryError;
use crate::simbus::{Field, Payload, RunTrace};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }
}

/// One topic's log. `timestamps` are delivery times; the original stamp is
/// the `stamp` column.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicTable {
    pub topic: String,
    pub timestamps: Vec<f64>,
    pub columns: Vec<(String, Column)>,
}

impl TopicTable {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).and_then(|(_, c)| match c {
            Column::Num(v) => Some(v.as_slice()),
            Column::Text(_) => None,
        })
    }

    pub fn text(&self, name: &str) -> Option<&[String]> {
        self.columns.iter().find(|(n, _)| n == name).and_then(|(_, c)| match c {
            Column::Text(v) => Some(v.as_slice()),
            Column::Num(_) => None,
        })
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    /// Median publication frequency, Hz. Zero for fewer than two rows.
    pub fn frequency(&self) -> f64 {
        let mut dts: Vec<f64> = self
            .timestamps
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .collect();
        if dts.is_empty() {
            return 0.0;
        }
        dts.sort_by(f64::total_cmp);
        let f = 1.0 / dts[dts.len() / 2];
        (f * 1e6).round() / 1e6
    }

    fn empty(topic: &str, schema: &Payload) -> Self {
        let mut columns = vec![("stamp".to_owned(), Column::Num(Vec::new()))];
        flatten(schema, "", &mut |name, leaf| {
            let col = match leaf {
                Leaf::Num(_) => Column::Num(Vec::new()),
                Leaf::Text(_) => Column::Text(Vec::new()),
            };
            columns.push((name, col));
        });
        Self {
            topic: topic.to_owned(),
            timestamps: Vec::new(),
            columns,
        }
    }

    /// Append one message. Leaves missing from the payload become NaN (or
    /// empty text); leaves not yet seen add a column backfilled the same way.
    fn push(&mut self, t: f64, stamp: f64, payload: &Payload) {
        let rows = self.timestamps.len();
        self.timestamps.push(t);
        let mut cells: BTreeMap<String, Leaf> = BTreeMap::new();
        cells.insert("stamp".into(), Leaf::Num(stamp));
        let mut order = vec!["stamp".to_owned()];
        flatten(payload, "", &mut |name, leaf| {
            order.push(name.clone());
            cells.insert(name, leaf);
        });
        for name in order {
            if !self.columns.iter().any(|(n, _)| *n == name) {
                let col = match cells[&name] {
                    Leaf::Num(_) => Column::Num(vec![f64::NAN; rows]),
                    Leaf::Text(_) => Column::Text(vec![String::new(); rows]),
                };
                self.columns.push((name, col));
            }
        }
        for (name, col) in self.columns.iter_mut() {
            match (col, cells.remove(name.as_str())) {
                (Column::Num(v), Some(Leaf::Num(x))) => v.push(x),
                (Column::Text(v), Some(Leaf::Text(s))) => v.push(s),
                (Column::Text(v), Some(Leaf::Num(x))) => v.push(x.to_string()),
                (Column::Num(v), _) => v.push(f64::NAN),
                (Column::Text(v), None) => v.push(String::new()),
            }
        }
    }
}

enum Leaf {
    Num(f64),
    Text(String),
}

/// Depth-first flattening with dot paths; vectors expand to `path.i`.
fn flatten(p: &Payload, prefix: &str, out: &mut dyn FnMut(String, Leaf)) {
    for (k, v) in p.iter() {
        let path = if prefix.is_empty() {
            k.to_owned()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Field::Scalar(x) => out(path, Leaf::Num(*x)),
            Field::Vector(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    out(format!("{path}.{i}"), Leaf::Num(*x));
                }
            }
            Field::Text(s) => out(path, Leaf::Text(s.clone())),
            Field::Tree(t) => flatten(t, &path, out),
        }
    }
}

/// One table per topic in `schemas` (so silent topics get header-only
/// tables), filled from the trace in delivery order.
pub fn extract_tables(trace: &RunTrace, schemas: &BTreeMap<String, Payload>) -> BTreeMap<String, TopicTable> {
    let mut tables: BTreeMap<String, TopicTable> = schemas
        .iter()
        .map(|(t, s)| (t.clone(), TopicTable::empty(t, s)))
        .collect();
    for e in trace.entries() {
        let table = tables
            .entry(e.msg.topic.clone())
            .or_insert_with(|| TopicTable::empty(&e.msg.topic, &e.msg.payload));
        table.push(e.delivered_at(), e.msg.stamp, &e.msg.payload);
    }
    tables
}

pub fn file_name(topic: &str) -> String {
    format!("{}.csv", topic.replace('/', "__"))
}

pub fn topic_from_file(name: &str) -> Option<String> {
    name.strip_suffix(".csv").map(|s| s.replace("__", "/"))
}

pub fn write_tables(dir: &Path, tables: &BTreeMap<String, TopicTable>) -> Result<(), TelemetryError> {
    std::fs::create_dir_all(dir).map_err(|e| TelemetryError::io(dir, e))?;
    for t in tables.values() {
        write_csv(&dir.join(file_name(&t.topic)), t)?;
    }
    Ok(())
}

pub fn write_csv(path: &Path, t: &TopicTable) -> Result<(), TelemetryError> {
    let csv_err = |e: csv::Error| TelemetryError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header = std::iter::once("timestamp").chain(t.column_names());
    w.write_record(header).map_err(csv_err)?;
    for row in 0..t.len() {
        let mut rec = vec![t.timestamps[row].to_string()];
        for (_, c) in &t.columns {
            rec.push(match c {
                Column::Num(v) => v[row].to_string(),
                Column::Text(v) => v[row].clone(),
            });
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| TelemetryError::io(path, e))
}

/// Parse a table written by [`write_csv`]. A column is numeric unless some
/// cell fails to parse as a float.
pub fn read_csv(path: &Path, topic: &str) -> Result<TopicTable, TelemetryError> {
    let bad = |message: String| TelemetryError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.first().map(String::as_str) != Some("timestamp") {
        return Err(bad("first column must be timestamp".into()));
    }
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(bad(format!("row has {} cells, header has {}", rec.len(), header.len())));
        }
        for (i, cell) in rec.iter().enumerate() {
            raw[i].push(cell.to_owned());
        }
    }
    let parse = |cells: &[String]| cells.iter().map(|c| c.parse::<f64>()).collect::<Result<Vec<_>, _>>();
    let timestamps = parse(&raw[0]).map_err(|_| bad("non-numeric timestamp".into()))?;
    if timestamps.windows(2).any(|w| w[1] < w[0]) {
        return Err(bad("timestamps must be non-decreasing".into()));
    }
    let mut columns = Vec::new();
    for (name, cells) in header.iter().zip(&raw).skip(1) {
        // text columns are the ones error descriptions and commands use
        let text_named = ["description", "target", "param", "value"].contains(&name.as_str());
        let col = match parse(cells) {
            Ok(v) if !text_named => Column::Num(v),
            _ => Column::Text(cells.clone()),
        };
        debug_assert_eq!(col.len(), timestamps.len());
        columns.push((name.clone(), col));
    }
    Ok(TopicTable {
        topic: topic.to_owned(),
        timestamps,
        columns,
    })
}

/// Load every `*.csv` table in `dir`.
pub fn read_tables(dir: &Path) -> Result<BTreeMap<String, TopicTable>, TelemetryError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| TelemetryError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let Some(topic) = topic_from_file(&name) else { continue };
        out.insert(topic.clone(), read_csv(&p, &topic)?);
    }
    Ok(out)
}
