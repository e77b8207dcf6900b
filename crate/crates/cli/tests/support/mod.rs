#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

pub fn lobfactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobfactor"))
        .args(args)
        .env_remove("LOBFACTOR_SEED")
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Bars CSV with one row per day, prices built from the given log returns.
pub fn write_bars(path: &Path, days: &[(&str, Vec<f64>)]) {
    let mut text = String::from("day_id");
    for m in 1..=300 {
        text.push_str(&format!(",m{m}"));
    }
    text.push('\n');
    for (day, returns) in days {
        assert_eq!(returns.len(), 299);
        let mut p = 100.0f64;
        text.push_str(day);
        text.push_str(&format!(",{p}"));
        for r in returns {
            p *= r.exp();
            text.push_str(&format!(",{p}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Checks `value` against the subset of JSON Schema used by the shipped
/// schema files: type, required, properties, additionalProperties, items,
/// enum and minimum.
pub fn validate(schema: &Value, value: &Value, at: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().map(|v| v.as_str().unwrap()).collect(),
            _ => return Err(format!("{at}: bad schema type")),
        };
        let ok = types.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            "null" => value.is_null(),
            "boolean" => value.is_boolean(),
            _ => false,
        });
        if !ok {
            return Err(format!("{at}: expected {types:?}, got {value}"));
        }
    }
    if value.is_null() {
        return Ok(());
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(value) {
            return Err(format!("{at}: {value} not in enum"));
        }
    }
    if let (Some(min), Some(x)) = (
        schema.get("minimum").and_then(Value::as_f64),
        value.as_f64(),
    ) {
        if x < min {
            return Err(format!("{at}: {x} below minimum {min}"));
        }
    }
    if let Value::Object(map) = value {
        if let Some(Value::Array(req)) = schema.get("required") {
            for r in req {
                let key = r.as_str().unwrap();
                if !map.contains_key(key) {
                    return Err(format!("{at}: missing {key}"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, v) in map {
            let path = format!("{at}.{k}");
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate(sub, v, &path)?,
                None => match schema.get("additionalProperties") {
                    Some(Value::Bool(false)) => return Err(format!("{path}: not allowed")),
                    Some(sub @ Value::Object(_)) => validate(sub, v, &path)?,
                    _ => {}
                },
            }
        }
    }
    if let (Value::Array(items), Some(sub)) = (value, schema.get("items")) {
        for (i, v) in items.iter().enumerate() {
            validate(sub, v, &format!("{at}[{i}]"))?;
        }
    }
    Ok(())
}
