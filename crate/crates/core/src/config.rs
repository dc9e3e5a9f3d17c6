//! Loading and validating network documents.
//!
//! A network document is a JSON object:
//!
//! ```json
//! {
//!   "roads": [{"free_flow_latency": 30, "capacity": 900, "car_cost": 15, "min_taxi_fare": 9}],
//!   "rail": {"latency": 35, "capacity": 1500, "fare": 3, "full_capacity_risk_rate": 10},
//!   "walk": {"latency": 120, "risk_rate": 1},
//!   "alpha": 0.15, "beta": 4, "taxi_risk_rate": 1, "demand": 3000
//! }
//! ```
//!
//! `rail` and `walk` may be omitted. `alpha` and `beta` default to the usual
//! BPR calibration (0.15 and 4). Every violation is reported, each with the
//! line it was found on.

use std::collections::HashMap;
use std::fmt;

use serde_json::{Map, Value};

use crate::network::{NetworkConfig, RailSpec, RoadSpec, WalkSpec, DEFAULT_BPR_ALPHA, DEFAULT_BPR_BETA};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// Dotted path of the offending field, e.g. `roads[1].capacity`.
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} problem(s) in network config:", self.0.len())?;
        for issue in &self.0 {
            writeln!(f, "  {issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy)]
enum Bound {
    Positive,
    NonNegative,
}

struct Checker<'a> {
    lines: HashMap<String, usize>,
    issues: Vec<ConfigIssue>,
    _src: &'a str,
}

impl<'a> Checker<'a> {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        let line = self.lines.get(path).copied().or_else(|| {
            // Missing fields point at their enclosing object.
            let parent = path.rfind('.').map(|i| &path[..i]).unwrap_or("");
            self.lines.get(parent).copied()
        });
        self.issues.push(ConfigIssue { path: path.to_string(), line, message: message.into() });
    }

    fn number<T: Scalar>(&mut self, obj: &Map<String, Value>, prefix: &str, key: &str, bound: Bound, default: Option<f64>) -> Option<T> {
        let path = if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
        let raw = match obj.get(key) {
            None => match default {
                Some(d) => return Some(T::lit(d)),
                None => {
                    self.push(&path, "missing required field");
                    return None;
                }
            },
            Some(v) => v,
        };
        let Some(x) = raw.as_f64() else {
            self.push(&path, format!("expected a number, found {}", kind(raw)));
            return None;
        };
        let ok = match bound {
            Bound::Positive => x > 0.0,
            Bound::NonNegative => x >= 0.0,
        };
        if !ok {
            let what = match bound {
                Bound::Positive => "must be > 0",
                Bound::NonNegative => "must be >= 0",
            };
            self.push(&path, format!("{what}, got {x}"));
            return None;
        }
        Some(T::lit(x))
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v.as_object() {
            Some(m) => {
                self.unknown_keys(m, path);
                Some(m)
            }
            None => {
                self.push(path, format!("expected an object, found {}", kind(v)));
                None
            }
        }
    }

    fn unknown_keys(&mut self, m: &Map<String, Value>, path: &str) {
        let known: &[&str] = if path.is_empty() {
            &["roads", "rail", "walk", "alpha", "beta", "taxi_risk_rate", "demand"]
        } else if path.starts_with("roads[") {
            &["free_flow_latency", "capacity", "car_cost", "min_taxi_fare"]
        } else if path == "rail" {
            &["latency", "capacity", "fare", "full_capacity_risk_rate"]
        } else {
            &["latency", "risk_rate"]
        };
        for key in m.keys() {
            if !known.contains(&key.as_str()) {
                let p = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                self.push(&p, "unknown field");
            }
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Parses and validates a network document, collecting every issue.
pub fn parse_network<T: Scalar>(src: &str) -> Result<NetworkConfig<T>, ConfigErrors> {
    let value: Value = serde_json::from_str(src).map_err(|e| {
        ConfigErrors(vec![ConfigIssue { path: "<document>".into(), line: Some(e.line()), message: e.to_string() }])
    })?;
    let mut ck = Checker { lines: value_lines(src), issues: Vec::new(), _src: src };
    let Some(root) = ck.object(&value, "") else {
        return Err(ConfigErrors(ck.issues));
    };

    let mut roads = Vec::new();
    match root.get("roads") {
        None => ck.push("roads", "missing required field"),
        Some(Value::Array(items)) if items.is_empty() => ck.push("roads", "at least one road is required"),
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let p = format!("roads[{i}]");
                let Some(m) = ck.object(item, &p) else { continue };
                let a = ck.number(m, &p, "free_flow_latency", Bound::Positive, None);
                let c = ck.number(m, &p, "capacity", Bound::Positive, None);
                let x = ck.number(m, &p, "car_cost", Bound::NonNegative, None);
                let t = ck.number(m, &p, "min_taxi_fare", Bound::NonNegative, None);
                if let (Some(free_flow_latency), Some(capacity), Some(car_cost), Some(min_taxi_fare)) = (a, c, x, t) {
                    roads.push(RoadSpec { free_flow_latency, capacity, car_cost, min_taxi_fare });
                }
            }
        }
        Some(other) => ck.push("roads", format!("expected an array, found {}", kind(other))),
    }

    let rail = match root.get("rail") {
        None | Some(Value::Null) => None,
        Some(v) => ck.object(v, "rail").and_then(|m| {
            let latency = ck.number(m, "rail", "latency", Bound::Positive, None);
            let capacity = ck.number(m, "rail", "capacity", Bound::Positive, None);
            let fare = ck.number(m, "rail", "fare", Bound::NonNegative, None);
            let rate = ck.number(m, "rail", "full_capacity_risk_rate", Bound::NonNegative, None);
            Some(RailSpec { latency: latency?, capacity: capacity?, fare: fare?, full_capacity_risk_rate: rate? })
        }),
    };
    let walk = match root.get("walk") {
        None | Some(Value::Null) => None,
        Some(v) => ck.object(v, "walk").and_then(|m| {
            let latency = ck.number(m, "walk", "latency", Bound::Positive, None);
            let risk_rate = ck.number(m, "walk", "risk_rate", Bound::NonNegative, None);
            Some(WalkSpec { latency: latency?, risk_rate: risk_rate? })
        }),
    };

    let alpha = ck.number(root, "", "alpha", Bound::Positive, Some(DEFAULT_BPR_ALPHA));
    let beta = ck.number(root, "", "beta", Bound::Positive, Some(DEFAULT_BPR_BETA));
    let taxi_risk_rate = ck.number(root, "", "taxi_risk_rate", Bound::NonNegative, None);
    let demand = ck.number(root, "", "demand", Bound::Positive, None);

    if !ck.issues.is_empty() {
        return Err(ConfigErrors(ck.issues));
    }
    Ok(NetworkConfig {
        roads,
        rail,
        walk,
        alpha: alpha.unwrap(),
        beta: beta.unwrap(),
        taxi_risk_rate: taxi_risk_rate.unwrap(),
        demand: demand.unwrap(),
    })
}

/// Maps the dotted path of every value in a syntactically valid JSON document
/// to the 1-based line where the value starts.
fn value_lines(src: &str) -> HashMap<String, usize> {
    let mut scan = Scanner { bytes: src.as_bytes(), pos: 0, line: 1, out: HashMap::new() };
    scan.value(String::new());
    scan.out
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    out: HashMap<String, usize>,
}

impl Scanner<'_> {
    fn skip_ws(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b'\n' => self.line += 1,
                b' ' | b'\t' | b'\r' => {}
                _ => break,
            }
            self.pos += 1;
        }
    }

    fn string(&mut self) -> String {
        // Opening quote.
        self.pos += 1;
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b'\\' => self.pos += 2,
                b'"' => break,
                _ => self.pos += 1,
            }
        }
        let raw = &self.bytes[start..self.pos.min(self.bytes.len())];
        self.pos += 1;
        serde_json::from_slice::<String>(&[b"\"", raw, b"\""].concat()).unwrap_or_default()
    }

    fn value(&mut self, path: String) {
        self.skip_ws();
        self.out.insert(path.clone(), self.line);
        match self.bytes.get(self.pos) {
            Some(b'{') => {
                self.pos += 1;
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        Some(b'}') | None => {
                            self.pos += 1;
                            return;
                        }
                        Some(b',') => self.pos += 1,
                        Some(b'"') => {
                            let key = self.string();
                            self.skip_ws();
                            self.pos += 1; // ':'
                            let child = if path.is_empty() { key } else { format!("{path}.{key}") };
                            self.value(child);
                        }
                        Some(_) => self.pos += 1,
                    }
                }
            }
            Some(b'[') => {
                self.pos += 1;
                let mut idx = 0;
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        Some(b']') | None => {
                            self.pos += 1;
                            return;
                        }
                        Some(b',') => self.pos += 1,
                        Some(_) => {
                            self.value(format!("{path}[{idx}]"));
                            idx += 1;
                        }
                    }
                }
            }
            Some(b'"') => {
                self.string();
            }
            Some(_) => {
                while let Some(&b) = self.bytes.get(self.pos) {
                    if matches!(b, b',' | b'}' | b']') || b.is_ascii_whitespace() {
                        break;
                    }
                    self.pos += 1;
                }
            }
            None => {}
        }
    }
}
