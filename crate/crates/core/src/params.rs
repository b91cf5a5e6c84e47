//! Dotted-path patches on serde parameter structs.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Replace the value at `path` (dot separated, numeric segments index
/// arrays) inside `target` with `value`, given as YAML text. The patched
/// struct is re-validated through deserialization, so type errors and
/// unknown paths are rejected and leave `target` untouched.
pub fn patch<T: Serialize + DeserializeOwned>(target: &mut T, path: &str, value: &str) -> Result<(), String> {
    let new: Value = serde_yaml::from_str(value).map_err(|e| format!("{path}: bad value {value:?}: {e}"))?;
    let mut tree = serde_json::to_value(&*target).map_err(|e| e.to_string())?;
    let mut slot = &mut tree;
    for seg in path.split('.') {
        slot = match slot {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("unknown parameter {path}"))?;
    }
    *slot = new;
    *target = serde_json::from_value(tree).map_err(|e| format!("{path}: {e}"))?;
    Ok(())
}
