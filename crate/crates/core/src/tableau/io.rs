//! JSON tableau files.
//!
//! ```json
//! { "name": "...", "s": 2, "A": [[..], [..]], "Aeps": [[..], [..]], "b": [..], "beps": [..] }
//! ```
//!
//! Numbers are written with 17 significant digits so every coefficient
//! survives a round trip bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{Map, Value};

use super::{Matrix, PerturbedTableau};
use crate::error::{Error, Result};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn vector(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("[{}]", items.join(", "))
}

fn matrix(m: &Matrix) -> String {
    let rows: Vec<String> = m.iter().map(|r| format!("    {}", vector(r))).collect();
    format!("[\n{}\n  ]", rows.join(",\n"))
}

pub fn save(t: &PerturbedTableau) -> String {
    let mut out = String::from("{\n");
    let name = serde_json::to_string(t.name()).expect("string serialisation");
    let _ = writeln!(out, "  \"name\": {name},");
    let _ = writeln!(out, "  \"s\": {},", t.stages());
    let _ = writeln!(out, "  \"A\": {},", matrix(t.a()));
    let _ = writeln!(out, "  \"Aeps\": {},", matrix(t.a_eps()));
    let _ = writeln!(out, "  \"b\": {},", vector(t.b()));
    let _ = writeln!(out, "  \"beps\": {}", vector(t.b_eps()));
    out.push_str("}\n");
    out
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::parse(key, "missing field"))
}

fn read_vector(v: &Value, path: &str, s: usize) -> Result<Vec<f64>> {
    let items = v
        .as_array()
        .ok_or_else(|| Error::parse(path, "expected an array"))?;
    if items.len() != s {
        return Err(Error::parse(
            path,
            format!("expected {s} entries, found {}", items.len()),
        ));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| Error::parse(format!("{path}[{i}]"), "expected a number"))
        })
        .collect()
}

fn read_matrix(v: &Value, path: &str, s: usize) -> Result<Matrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::parse(path, "expected an array of rows"))?;
    if rows.len() != s {
        return Err(Error::parse(
            path,
            format!("expected {s} rows, found {}", rows.len()),
        ));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| read_vector(r, &format!("{path}[{i}]"), s))
        .collect()
}

pub fn load(text: &str) -> Result<PerturbedTableau> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::parse("$", e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::parse("$", "expected an object"))?;
    let name = field(obj, "name")?
        .as_str()
        .ok_or_else(|| Error::parse("name", "expected a string"))?;
    let s = field(obj, "s")?
        .as_u64()
        .filter(|&s| s > 0)
        .ok_or_else(|| Error::parse("s", "expected a positive integer"))? as usize;
    let a = read_matrix(field(obj, "A")?, "A", s)?;
    let a_eps = read_matrix(field(obj, "Aeps")?, "Aeps", s)?;
    let b = read_vector(field(obj, "b")?, "b", s)?;
    let b_eps = read_vector(field(obj, "beps")?, "beps", s)?;
    PerturbedTableau::new(name, a, a_eps, b, b_eps)
}

pub fn load_file(path: impl AsRef<Path>) -> Result<PerturbedTableau> {
    load(&std::fs::read_to_string(path)?)
}
