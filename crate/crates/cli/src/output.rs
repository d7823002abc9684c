use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// 17 significant digits; non-finite values become null (JSON) or empty (CSV).
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

/// `indent = None` writes everything on one line.
fn emit(v: &Value, indent: Option<usize>, out: &mut String) {
    let pad = |n: Option<usize>| n.map_or(String::new(), |n| "  ".repeat(n));
    let nl = if indent.is_some() { "\n" } else { "" };
    let sub = indent.map(|n| n + 1);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let s = num(n.as_f64().expect("f64"));
                out.push_str(if s.is_empty() { "null" } else { &s });
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            // rows of plain numbers stay on one line
            if a.iter().all(|x| x.is_number()) {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    emit(x, None, out);
                }
                out.push(']');
                return;
            }
            out.push('[');
            out.push_str(nl);
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(sub));
                emit(x, sub, out);
                if i + 1 < a.len() {
                    out.push(',');
                }
                out.push_str(nl);
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push('{');
            out.push_str(nl);
            for (i, (k, x)) in m.iter().enumerate() {
                out.push_str(&pad(sub));
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(if indent.is_some() { ": " } else { ":" });
                emit(x, sub, out);
                if i + 1 < m.len() {
                    out.push(',');
                }
                out.push_str(nl);
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with keys sorted and every float written with 17 significant digits.
pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = String::new();
    emit(&serde_json::to_value(v)?, Some(0), &mut s);
    s.push('\n');
    Ok(s)
}

pub fn to_json_line<T: Serialize>(v: &T) -> Result<String> {
    let mut s = String::new();
    emit(&serde_json::to_value(v)?, None, &mut s);
    Ok(s)
}

/// Wraps a report with the schema version, the kind tag and the resolved config.
pub fn report<T: Serialize, C: Serialize>(kind: &str, config: &C, body: &T) -> Result<Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), SCHEMA_VERSION.into());
    m.insert("kind".into(), kind.into());
    m.insert("config".into(), serde_json::to_value(config)?);
    m.insert("result".into(), serde_json::to_value(body)?);
    Ok(Value::Object(m))
}

pub enum Cell {
    F(f64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

/// CSV with a leading `# config=` comment line carrying the resolved config, then the header.
pub fn to_csv<C: Serialize>(config: &C, header: &[&str], rows: &[Vec<Cell>]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# schema_version={SCHEMA_VERSION} config={}", to_json_line(config)?);
    s.push_str(&header.join(","));
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .map(|c| match c {
                Cell::F(x) => num(*x),
                Cell::S(t) => t.clone(),
            })
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// Collects written artifacts; files go through a temporary name and a rename.
pub struct Artifacts {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: vec![] })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("renaming to {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish<C: Serialize>(mut self, command: &str, config: &C) -> Result<()> {
        let files = self.files.clone();
        let body = serde_json::json!({ "command": command, "artifacts": files });
        let text = to_json(&report("manifest", config, &body)?)?;
        self.write("manifest.json", &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        assert_eq!(num(f64::NAN), "");
        let back: f64 = num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn json_is_valid_and_sorted() {
        let v = serde_json::json!({ "b": 1.5, "a": [1, 2.25], "c": { "z": null, "y": "s" } });
        let s = to_json(&v).unwrap();
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["b"], 1.5);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("2.2500000000000000e0"));
        let line = to_json_line(&v).unwrap();
        assert!(!line.contains('\n'));
        assert_eq!(serde_json::from_str::<Value>(&line).unwrap(), back);
    }

    #[test]
    fn csv_layout() {
        let s = to_csv(&serde_json::json!({"k": 1}), &["x", "tag"], &[vec![1.0.into(), "front".into()]]).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# schema_version=1 config="));
        assert_eq!(lines[1], "x,tag");
        assert_eq!(lines[2], "1.0000000000000000e0,front");
    }
}
