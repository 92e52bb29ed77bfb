//! JSON output helpers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Keys holding wall-clock measurements.
pub const TIMING_KEYS: [&str; 5] = ["pred_time_s", "best_pred_time", "seconds", "rows_per_second", "wall_seconds"];

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
    }
    let file = File::create(path).map_err(|e| write_error(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Internal(e.to_string()))?;
    w.write_all(b"\n").and_then(|()| w.flush()).map_err(|e| write_error(path, e))
}

pub fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

/// Removes every wall-clock field from a report so runs can be compared.
///
/// A tune result whose winner was decided by prediction time among several
/// equally accurate configurations also loses `best`, which then depends on
/// timing as well.
pub fn strip_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            let timing_decided = map.get("accuracy_ties").and_then(Value::as_array).is_some_and(|ties| ties.len() > 1);
            if timing_decided {
                map.remove("best");
            }
            for key in TIMING_KEYS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn strips_nested_timing() {
        let mut v = json!({
            "best": {"n_estimators": 10},
            "best_pred_time": 0.2,
            "accuracy_ties": [{"n_estimators": 10}],
            "per_config": [{"mean": {"accuracy": 1.0, "pred_time_s": 0.1}}]
        });
        strip_timing(&mut v);
        assert_eq!(
            v,
            json!({"best": {"n_estimators": 10}, "accuracy_ties": [{"n_estimators": 10}], "per_config": [{"mean": {"accuracy": 1.0}}]})
        );
    }

    #[test]
    fn timing_decided_best_is_stripped() {
        let mut v =
            json!({"best": {"n_estimators": 20}, "accuracy_ties": [{"n_estimators": 10}, {"n_estimators": 20}]});
        strip_timing(&mut v);
        assert!(v.get("best").is_none());
    }
}
