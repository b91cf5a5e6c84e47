//! Messages exchanged on the bus.
//!
//! A payload is a tree of named fields. Leaves are float64 scalars or
//! fixed-length float64 vectors; a small number of control topics
//! (scenario commands) additionally carry text leaves.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A node in a payload tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(f64),
    Vector(Vec<f64>),
    Text(String),
    Tree(Payload),
}

impl Field {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Field::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Field::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Field::Text(v) => Some(v),
            _ => None,
        }
    }

    /// Same variant and, for vectors, same length; trees recurse.
    pub fn same_shape(&self, other: &Field) -> bool {
        match (self, other) {
            (Field::Scalar(_), Field::Scalar(_)) => true,
            (Field::Text(_), Field::Text(_)) => true,
            (Field::Vector(a), Field::Vector(b)) => a.len() == b.len(),
            (Field::Tree(a), Field::Tree(b)) => a.same_shape(b),
            _ => false,
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Scalar(v)
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field::Vector(v)
    }
}

impl From<[f64; 2]> for Field {
    fn from(v: [f64; 2]) -> Self {
        Field::Vector(v.to_vec())
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_owned())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

impl From<Payload> for Field {
    fn from(v: Payload) -> Self {
        Field::Tree(v)
    }
}

/// Ordered tree of named fields. Ordering is lexicographic by name so that
/// iteration, flattening and serialization are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Payload {
    fields: BTreeMap<String, Field>,
}

impl Payload {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder-style insert of a direct child.
    pub fn with(mut self, name: &str, field: impl Into<Field>) -> Self {
        self.fields.insert(name.to_owned(), field.into());
        self
    }

    pub fn insert(&mut self, name: &str, field: impl Into<Field>) {
        self.fields.insert(name.to_owned(), field.into());
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Field)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Look up a dot-separated path, e.g. `pose.position`.
    pub fn get(&self, path: &str) -> Option<&Field> {
        let mut parts = path.split('.');
        let first = parts.next()?;
        let mut cur = self.fields.get(first)?;
        for p in parts {
            match cur {
                Field::Tree(t) => cur = t.fields.get(p)?,
                _ => return None,
            }
        }
        Some(cur)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Field> {
        let mut parts = path.split('.');
        let first = parts.next()?;
        let mut cur = self.fields.get_mut(first)?;
        for p in parts {
            match cur {
                Field::Tree(t) => cur = t.fields.get_mut(p)?,
                _ => return None,
            }
        }
        Some(cur)
    }

    pub fn scalar(&self, path: &str) -> Option<f64> {
        self.get(path).and_then(Field::as_scalar)
    }

    pub fn vector(&self, path: &str) -> Option<&[f64]> {
        self.get(path).and_then(Field::as_vector)
    }

    pub fn text(&self, path: &str) -> Option<&str> {
        self.get(path).and_then(Field::as_text)
    }

    pub fn same_shape(&self, other: &Payload) -> bool {
        self.fields.len() == other.fields.len()
            && self
                .fields
                .iter()
                .zip(other.fields.iter())
                .all(|((ka, va), (kb, vb))| ka == kb && va.same_shape(vb))
    }

    /// Depth-first list of numeric leaves as `(dot.path, values)`. Scalars
    /// yield a one-element slice. Text leaves are skipped.
    pub fn numeric_leaves(&self) -> Vec<(String, Vec<f64>, bool)> {
        let mut out = Vec::new();
        self.collect_leaves("", &mut out);
        out
    }

    fn collect_leaves(&self, prefix: &str, out: &mut Vec<(String, Vec<f64>, bool)>) {
        for (k, v) in &self.fields {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            match v {
                Field::Scalar(x) => out.push((path, vec![*x], false)),
                Field::Vector(xs) => out.push((path, xs.clone(), true)),
                Field::Text(_) => {}
                Field::Tree(t) => t.collect_leaves(&path, out),
            }
        }
    }

    /// Apply `f` to every numeric leaf under `path` (the path itself may be a
    /// leaf). Returns false if the path does not exist.
    pub fn for_each_leaf_mut(&mut self, path: &str, f: &mut dyn FnMut(&mut Field)) -> bool {
        match self.get_mut(path) {
            Some(field) => {
                visit_leaves_mut(field, f);
                true
            }
            None => false,
        }
    }
}

fn visit_leaves_mut(field: &mut Field, f: &mut dyn FnMut(&mut Field)) {
    match field {
        Field::Tree(t) => {
            for v in t.fields.values_mut() {
                visit_leaves_mut(v, f);
            }
        }
        Field::Text(_) => {}
        leaf => f(leaf),
    }
}

/// A published message. `stamp` is the sim time at original publication and
/// is never rewritten when a message is forwarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub topic: String,
    pub stamp: f64,
    pub seq: u64,
    /// Registration index of the publishing node.
    pub publisher: usize,
    pub payload: Payload,
}

pub type SharedMessage = Arc<Message>;

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} @{:.3} seq={} from #{}",
            self.topic, self.stamp, self.seq, self.publisher
        )
    }
}
