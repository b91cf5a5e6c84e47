use std::path::Path;

use serde::Deserialize;
use serde_yaml::{Mapping, Value};

use super::FaultError;

/// Value repetition: override the field for `count` consecutive messages.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Repeat {
    pub count: u64,
    /// Value to hold. When absent the field value of the first message after
    /// activation is held.
    #[serde(default)]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gauss {
    pub mean: f64,
    pub variance: f64,
}

/// Perturbations attached to one payload field or subtree.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFault {
    #[serde(default)]
    pub fault_mult: Option<f64>,
    #[serde(default)]
    pub fault_offset: Option<f64>,
    #[serde(default)]
    pub fault_repeat: Option<Repeat>,
    #[serde(default)]
    pub fault_gauss: Option<Gauss>,
}

impl FieldFault {
    fn validate(&self, at: &str) -> Result<(), FaultError> {
        let bad = |why: &str| Err(FaultError::Invalid(format!("{at}: {why}")));
        if self.fault_repeat.as_ref().is_some_and(|r| r.count < 1) {
            return bad("fault_repeat.count must be at least 1");
        }
        if let Some(g) = self.fault_gauss {
            if !(g.variance >= 0.0) || !g.mean.is_finite() {
                return bad("fault_gauss needs a finite mean and non-negative variance");
            }
        }
        let finite = [self.fault_mult, self.fault_offset]
            .into_iter()
            .chain(self.fault_repeat.as_ref().map(|r| r.value))
            .flatten()
            .all(f64::is_finite);
        if !finite {
            return bad("fault values must be finite");
        }
        Ok(())
    }
}

/// Fault configuration for one topic. `name` may contain `*` segments.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicFault {
    pub name: String,
    /// Delivery delay in ms; `Some(-1.0)` stops publication. `None` in a
    /// runtime patch keeps the active delay.
    pub delay: Option<f64>,
    /// Dotted field path and its faults, in file order.
    pub fields: Vec<(String, FieldFault)>,
}

/// Parsed fault file: stack module name to topic entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultSpec {
    pub modules: Vec<(String, Vec<TopicFault>)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopic {
    name: String,
    #[serde(default)]
    delay: Option<f64>,
    #[serde(default)]
    field_faults: Option<Mapping>,
}

impl FaultSpec {
    pub fn from_yaml(text: &str) -> Result<Self, FaultError> {
        let root: Value = serde_yaml::from_str(text).map_err(|e| FaultError::Invalid(e.to_string()))?;
        Self::from_value(&root)
    }

    pub fn from_file(path: &Path) -> Result<Self, FaultError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FaultError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }

    pub fn from_value(root: &Value) -> Result<Self, FaultError> {
        let map = match root {
            Value::Null => return Ok(Self::default()),
            Value::Mapping(m) => m,
            _ => return Err(FaultError::Invalid("fault file must map modules to topic lists".into())),
        };
        let mut modules = Vec::new();
        for (k, v) in map {
            let module = k
                .as_str()
                .ok_or_else(|| FaultError::Invalid("module names must be strings".into()))?;
            let raw: Vec<RawTopic> = serde_yaml::from_value(v.clone())
                .map_err(|e| FaultError::Invalid(format!("{module}: {e}")))?;
            let mut topics = Vec::new();
            for t in raw {
                if let Some(d) = t.delay {
                    if !(d >= 0.0 || d == -1.0) || !d.is_finite() {
                        return Err(FaultError::Invalid(format!("{}: delay must be >= 0 or -1", t.name)));
                    }
                }
                let mut fields = Vec::new();
                if let Some(ff) = &t.field_faults {
                    collect_fields(ff, "", &t.name, &mut fields)?;
                }
                topics.push(TopicFault {
                    name: t.name,
                    delay: t.delay,
                    fields,
                });
            }
            modules.push((module.to_owned(), topics));
        }
        Ok(Self { modules })
    }

    pub fn topics(&self) -> impl Iterator<Item = &TopicFault> {
        self.modules.iter().flat_map(|(_, t)| t.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.topics().next().is_none()
    }
}

/// Walk a `field_faults` tree. Keys starting with `fault_` describe faults
/// on the current path; any other key descends into a subfield.
fn collect_fields(
    map: &Mapping,
    prefix: &str,
    topic: &str,
    out: &mut Vec<(String, FieldFault)>,
) -> Result<(), FaultError> {
    let mut own = Mapping::new();
    for (k, v) in map {
        let key = k
            .as_str()
            .ok_or_else(|| FaultError::Invalid(format!("{topic}: field names must be strings")))?;
        if key.starts_with("fault_") {
            own.insert(k.clone(), v.clone());
            continue;
        }
        let path = if prefix.is_empty() {
            key.to_owned()
        } else {
            format!("{prefix}.{key}")
        };
        match v {
            Value::Mapping(m) => collect_fields(m, &path, topic, out)?,
            _ => {
                return Err(FaultError::Invalid(format!(
                    "{topic}: {path} must map to fault definitions"
                )))
            }
        }
    }
    if !own.is_empty() {
        if prefix.is_empty() {
            return Err(FaultError::Invalid(format!("{topic}: faults must name a field")));
        }
        let at = format!("{topic} {prefix}");
        let fault: FieldFault =
            serde_yaml::from_value(Value::Mapping(own)).map_err(|e| FaultError::Invalid(format!("{at}: {e}")))?;
        fault.validate(&at)?;
        out.push((prefix.to_owned(), fault));
    }
    Ok(())
}
