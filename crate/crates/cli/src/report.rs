//! Report assembly and deterministic JSON/CSV serialization. Floats are
//! written with 17 significant digits.

use serde_json::{Map, Number, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Int(i128),
    Float(f64),
    Str(String),
    Bool(bool),
    Null,
    List(Vec<Val>),
}

macro_rules! int_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Val {
            fn from(x: $t) -> Self {
                Val::Int(x as i128)
            }
        }
    )*};
}
int_from!(u32, u64, usize, i64, i32);

impl From<f64> for Val {
    fn from(x: f64) -> Self {
        Val::Float(x)
    }
}

impl From<bool> for Val {
    fn from(x: bool) -> Self {
        Val::Bool(x)
    }
}

impl From<&str> for Val {
    fn from(x: &str) -> Self {
        Val::Str(x.to_string())
    }
}

impl From<String> for Val {
    fn from(x: String) -> Self {
        Val::Str(x)
    }
}

impl<T: Into<Val>> From<Option<T>> for Val {
    fn from(x: Option<T>) -> Self {
        x.map_or(Val::Null, Into::into)
    }
}

impl<T: Into<Val>> From<Vec<T>> for Val {
    fn from(x: Vec<T>) -> Self {
        Val::List(x.into_iter().map(Into::into).collect())
    }
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

impl Val {
    fn to_json(&self) -> Value {
        match self {
            Val::Int(i) => Value::Number(i.to_string().parse::<Number>().expect("integer literal")),
            Val::Float(x) if x.is_finite() => Value::Number(format_float(*x).parse::<Number>().expect("float literal")),
            Val::Float(x) => Value::String(format_float(*x)),
            Val::Str(s) => Value::String(s.clone()),
            Val::Bool(b) => Value::Bool(*b),
            Val::Null => Value::Null,
            Val::List(v) => Value::Array(v.iter().map(Val::to_json).collect()),
        }
    }

    fn to_cell(&self) -> String {
        match self {
            Val::Int(i) => i.to_string(),
            Val::Float(x) => format_float(*x),
            Val::Str(s) => s.clone(),
            Val::Bool(b) => b.to_string(),
            Val::Null => String::new(),
            Val::List(v) => v.iter().map(Val::to_cell).collect::<Vec<_>>().join(";"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Row(pub Vec<(String, Val)>);

impl Row {
    pub fn new() -> Self {
        Row(Vec::new())
    }

    pub fn with(mut self, key: &str, v: impl Into<Val>) -> Self {
        self.0.push((key.to_string(), v.into()));
        self
    }

    pub fn push(&mut self, key: &str, v: impl Into<Val>) {
        self.0.push((key.to_string(), v.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Val> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    fn to_json(&self) -> Value {
        Value::Object(
            self.0
                .iter()
                .map(|(k, v)| (k.clone(), v.to_json()))
                .collect::<Map<_, _>>(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub tag: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<Row>,
    pub summary: Row,
    pub violations: Vec<String>,
}

impl Report {
    pub fn new(command: &str, tag: &str, seed: u64, config_hash: String) -> Self {
        Report {
            command: command.into(),
            tag: tag.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_hash,
            rows: Vec::new(),
            summary: Row::new(),
            violations: Vec::new(),
        }
    }

    pub fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(what());
        }
    }

    fn header(&self) -> Row {
        Row::new()
            .with("command", self.command.as_str())
            .with("tag", self.tag.as_str())
            .with("version", self.version.as_str())
            .with("seed", self.seed)
            .with("config_hash", self.config_hash.as_str())
    }

    pub fn to_json(&self) -> String {
        let mut doc = match self.header().to_json() {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        doc.insert(
            "rows".into(),
            Value::Array(self.rows.iter().map(Row::to_json).collect()),
        );
        doc.insert("summary".into(), self.summary.to_json());
        doc.insert(
            "invariants".into(),
            Row::new()
                .with("ok", self.violations.is_empty())
                .with("violations", self.violations.clone())
                .to_json(),
        );
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("serializable");
        text.push('\n');
        text
    }

    /// Metadata and summary as `# key=value` lines, then one header row and
    /// the data rows. Columns are the union of row keys in first-seen order.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut text = String::new();
        for (k, v) in self.header().0.iter().chain(&self.summary.0) {
            text.push_str(&format!("# {k}={}\n", v.to_cell()));
        }
        text.push_str(&format!("# invariants_ok={}\n", self.violations.is_empty()));
        let mut columns: Vec<&str> = Vec::new();
        for row in &self.rows {
            for (k, _) in &row.0 {
                if !columns.contains(&k.as_str()) {
                    columns.push(k);
                }
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        if !columns.is_empty() {
            w.write_record(&columns)?;
            for row in &self.rows {
                w.write_record(columns.iter().map(|c| row.get(c).map(Val::to_cell).unwrap_or_default()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        text.push_str(&String::from_utf8(bytes).expect("utf-8"));
        Ok(text)
    }
}
