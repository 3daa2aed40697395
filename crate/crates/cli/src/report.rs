use std::collections::BTreeMap;

use serde::Serialize;

use crate::format::g17;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Real(f64),
    Count(u64),
    Flag(bool),
    Text(String),
}

impl Value {
    pub fn csv_field(&self) -> String {
        match self {
            Value::Real(x) => g17(*x),
            Value::Count(n) => n.to_string(),
            Value::Flag(b) => b.to_string(),
            Value::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}

impl From<usize> for Value {
    fn from(n: usize) -> Self {
        Value::Count(n as u64)
    }
}

impl From<u64> for Value {
    fn from(n: u64) -> Self {
        Value::Count(n)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Flag(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ToleranceExceeded,
    Error,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::ToleranceExceeded | Status::Error => 1,
        }
    }
}

/// A named output. `tolerance` is `null` for informational values that no check reads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Output {
    pub value: Value,
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub inputs: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, Output>,
    pub seed: Option<u64>,
    pub message: Option<String>,
    pub table: Option<Table>,
    failed: bool,
}

#[derive(Serialize)]
struct Record<'a> {
    generated_at: &'a str,
    command: &'a str,
    inputs: &'a BTreeMap<String, Value>,
    outputs: &'a BTreeMap<String, Output>,
    status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<&'a str>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    table: Option<&'a Table>,
}

impl Report {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed: None,
            message: None,
            table: None,
            failed: false,
        }
    }

    pub fn input(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        self.inputs.insert(key.into(), v.into());
        self
    }

    pub fn info(&mut self, key: &str, v: impl Into<Value>) -> &mut Self {
        let out = Output { value: v.into(), tolerance: None, pass: None };
        self.outputs.insert(key.into(), out);
        self
    }

    pub fn check(&mut self, key: &str, v: impl Into<Value>, tolerance: f64, pass: bool) -> &mut Self {
        let out = Output { value: v.into(), tolerance: Some(tolerance), pass: Some(pass) };
        self.outputs.insert(key.into(), out);
        self
    }

    /// A value compared against `tolerance` to classify, not to pass or fail.
    pub fn compared(&mut self, key: &str, v: impl Into<Value>, tolerance: f64) -> &mut Self {
        let out = Output { value: v.into(), tolerance: Some(tolerance), pass: None };
        self.outputs.insert(key.into(), out);
        self
    }

    /// Record a computation failure; the report is still written.
    pub fn fail(&mut self, message: impl Into<String>) -> &mut Self {
        self.failed = true;
        self.message = Some(message.into());
        self
    }

    pub fn status(&self) -> Status {
        if self.failed {
            Status::Error
        } else if self.outputs.values().any(|o| o.pass == Some(false)) {
            Status::ToleranceExceeded
        } else {
            Status::Ok
        }
    }

    pub fn to_json(&self, generated_at: &str) -> String {
        let record = Record {
            generated_at,
            command: self.command,
            inputs: &self.inputs,
            outputs: &self.outputs,
            status: self.status(),
            seed: self.seed,
            message: self.message.as_deref(),
            table: self.table.as_ref(),
        };
        let mut s = serde_json::to_string_pretty(&record).expect("report serializes");
        s.push('\n');
        s
    }

    /// The table if there is one, otherwise a single row of inputs, outputs and status.
    pub fn to_csv(&self, generated_at: &str) -> String {
        let mut w = csv::Writer::from_writer(vec![]);
        match &self.table {
            Some(t) => {
                w.write_record(&t.columns).expect("in-memory write");
                for row in &t.rows {
                    w.write_record(row.iter().map(Value::csv_field)).expect("in-memory write");
                }
            }
            None => {
                let cells = self.inputs.iter().chain(self.outputs.iter().map(|(k, o)| (k, &o.value)));
                let (mut header, mut row): (Vec<String>, Vec<String>) =
                    cells.map(|(k, v)| (k.clone(), v.csv_field())).unzip();
                header.push("status".into());
                row.push(status_name(self.status()).into());
                w.write_record(&header).expect("in-memory write");
                w.write_record(&row).expect("in-memory write");
            }
        }
        let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
        format!("# generated_at: {generated_at}\n{body}")
    }

    /// Human-readable lines for stderr.
    pub fn summary(&self) -> String {
        let mut s = format!("{}: {}\n", self.command, status_name(self.status()));
        if let Some(t) = &self.table {
            s += &format!("  {} rows\n", t.rows.len());
        }
        for (k, o) in &self.outputs {
            let v = match &o.value {
                Value::Real(x) => format!("{x:.6e}"),
                other => other.csv_field(),
            };
            match (o.tolerance, o.pass) {
                (Some(tol), Some(pass)) => {
                    s += &format!("  {k} = {v}  [tol {tol:e}: {}]\n", if pass { "pass" } else { "FAIL" })
                }
                (Some(tol), None) => s += &format!("  {k} = {v}  [vs {tol:e}]\n"),
                _ => s += &format!("  {k} = {v}\n"),
            }
        }
        if let Some(m) = &self.message {
            s += &format!("  {m}\n");
        }
        s
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::ToleranceExceeded => "tolerance_exceeded",
        Status::Error => "error",
    }
}
