//! JSON summaries and CSV rendering shared by the verification harness and
//! the command-line runner.

use std::fmt::Display;
use std::io::{self, Write};

use serde::Serialize;
use serde_json::{Map, Value};

/// One statistical test: what went in, what came out, the thresholds used
/// and the verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub seed: u64,
    pub inputs: Value,
    pub statistics: Value,
    pub thresholds: Value,
    pub flags: Vec<String>,
    pub pass: bool,
}

impl TestReport {
    pub fn new(name: impl Into<String>, seed: u64) -> Self {
        TestReport {
            name: name.into(),
            seed,
            inputs: Value::Object(Map::new()),
            statistics: Value::Object(Map::new()),
            thresholds: Value::Object(Map::new()),
            flags: Vec::new(),
            pass: true,
        }
    }

    fn put(slot: &mut Value, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).expect("report values serialize");
        slot.as_object_mut()
            .expect("object")
            .insert(key.to_string(), v);
    }

    pub fn input(mut self, key: &str, v: impl Serialize) -> Self {
        Self::put(&mut self.inputs, key, v);
        self
    }

    pub fn stat(mut self, key: &str, v: impl Serialize) -> Self {
        Self::put(&mut self.statistics, key, v);
        self
    }

    pub fn threshold(mut self, key: &str, v: impl Serialize) -> Self {
        Self::put(&mut self.thresholds, key, v);
        self
    }

    pub fn flag(mut self, f: impl Into<String>) -> Self {
        self.flags.push(f.into());
        self
    }

    pub fn verdict(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

/// Writes a CSV file from a header and rows of already-rendered cells.
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Csv {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Floats render through `Display`, the shortest string that parses
    /// back to the same value.
    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_to<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()
    }

    pub fn to_string_lossless(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Renders a cell.
pub fn cell(v: impl Display) -> String {
    v.to_string()
}
