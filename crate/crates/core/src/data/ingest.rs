//! CSV ingestion driven by a sidecar schema document.
//!
//! The CSV carries a header row and RFC-4180 quoting; the sidecar (JSON or
//! TOML) assigns each column a role and, for numeric columns, a binning.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{natural_labels, Binning, Column, Dataset, Role};
use crate::dgp::SyntheticDgp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    #[default]
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnConfig {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub kind: ColumnKind,
    /// Declared value set (categorical); fixes the code order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binning: Option<Binning>,
}

/// Sidecar schema: one entry per CSV column the analysis uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<ColumnConfig>,
    /// The generating process, when the data was simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<SyntheticDgp>,
}

impl Schema {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        Self::parse(&text, is_toml)
    }

    pub fn parse(text: &str, is_toml: bool) -> Result<Self> {
        let schema: Schema = if is_toml {
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?
        } else {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("column {:?} declared twice", c.name)));
            }
            if let Some(values) = &c.values {
                if values.is_empty() {
                    return Err(Error::Schema(format!("column {:?} declares no values", c.name)));
                }
            }
            if c.kind == ColumnKind::Numeric && c.values.is_some() {
                return Err(Error::Schema(format!(
                    "numeric column {:?} cannot declare values",
                    c.name
                )));
            }
        }
        let states = self.columns.iter().filter(|c| c.role == Role::State).count();
        match states {
            0 => Err(Error::Schema("missing state column".into())),
            1 => Ok(()),
            _ => Err(Error::Schema("more than one state column".into())),
        }?;
        if self.columns.iter().filter(|c| c.role == Role::Weight).count() > 1 {
            return Err(Error::Schema("more than one weight column".into()));
        }
        Ok(())
    }
}

/// A loaded dataset plus non-fatal ingestion warnings.
#[derive(Debug)]
pub struct Ingested {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Ingested> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut warnings = Vec::new();

    let config: HashMap<&str, &ColumnConfig> =
        schema.columns.iter().map(|c| (c.name.as_str(), c)).collect();
    for h in headers.iter() {
        if !config.contains_key(h) {
            warnings.push(format!("column {h:?} is not in the schema and was ignored"));
        }
    }
    let mut positions = Vec::new();
    for c in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h == c.name)
            .ok_or_else(|| Error::Schema(format!("column {:?} missing from CSV header", c.name)))?;
        positions.push(pos);
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.columns.len()];
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (k, &pos) in positions.iter().enumerate() {
            let value = record.get(pos).ok_or_else(|| {
                Error::Schema(format!("line {line}: missing field {:?}", schema.columns[k].name))
            })?;
            raw[k].push(value.to_string());
        }
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let parse_numeric = |k: usize| -> Result<Vec<f64>> {
        raw[k]
            .iter()
            .zip(&lines)
            .map(|(v, line)| {
                let x: f64 = v.trim().parse().map_err(|_| {
                    Error::Schema(format!(
                        "line {line}: column {:?}: {v:?} is not a number",
                        schema.columns[k].name
                    ))
                })?;
                if !x.is_finite() {
                    return Err(Error::Schema(format!(
                        "line {line}: column {:?}: non-finite value",
                        schema.columns[k].name
                    )));
                }
                Ok(x)
            })
            .collect()
    };

    let mut builder = Dataset::builder();
    for (k, c) in schema.columns.iter().enumerate() {
        match c.role {
            Role::Ignore => {}
            Role::Weight => {
                let w = parse_numeric(k)?;
                if let Some(i) = w.iter().position(|w| *w <= 0.0) {
                    return Err(Error::Schema(format!(
                        "line {}: weight must be positive",
                        lines[i]
                    )));
                }
                builder = builder.weights(w);
            }
            Role::Score => {
                builder = builder.score(&c.name, parse_numeric(k)?);
            }
            Role::Signal | Role::Agent | Role::State => {
                let column = match c.kind {
                    ColumnKind::Numeric => {
                        if c.role == Role::State {
                            return Err(Error::Schema("the state column must be categorical".into()));
                        }
                        let values = parse_numeric(k)?;
                        Column::numeric(&c.name, c.role, &values, &c.binning.clone().unwrap_or_default())?
                    }
                    ColumnKind::Categorical => {
                        let labels = match &c.values {
                            Some(v) => v.clone(),
                            None => natural_labels(raw[k].iter().map(String::as_str)),
                        };
                        Column::from_values_with_labels(&c.name, c.role, &raw[k], labels).map_err(
                            |e| match e {
                                Error::Schema(msg) => Error::Schema(line_addressed(&msg, &lines)),
                                other => other,
                            },
                        )?
                    }
                };
                builder = if c.role == Role::State {
                    builder.state_column(column)
                } else {
                    builder.column(column)
                };
            }
        }
    }
    Ok(Ingested { dataset: builder.build()?, warnings })
}

/// Writes signal, agent and state columns as labels, plus a `weight` column
/// when any weight differs from 1.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let columns: Vec<&Column> = ds.columns().iter().chain(std::iter::once(ds.state_column())).collect();
    let weighted = ds.weights().iter().any(|w| *w != 1.0);
    let mut header: Vec<&str> = columns.iter().map(|c| c.name()).collect();
    if weighted {
        header.push("weight");
    }
    w.write_record(&header)?;
    for row in 0..ds.n_rows() {
        let mut record: Vec<String> =
            columns.iter().map(|c| c.labels()[c.codes()[row] as usize].clone()).collect();
        if weighted {
            record.push(ds.weight(row).to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Rewrites "row N" in a message to the CSV line number of that row.
fn line_addressed(msg: &str, lines: &[u64]) -> String {
    if let Some(start) = msg.find(" row ") {
        let rest = &msg[start + 5..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if let Ok(row) = digits.parse::<usize>() {
            if let Some(line) = lines.get(row) {
                return format!("line {line}: {}{}", &msg[..start], &rest[digits.len()..]);
            }
        }
    }
    msg.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
        [[columns]]
        name = "v"
        role = "signal"
        [[columns]]
        name = "y"
        role = "state"
        values = ["0", "1"]
        [[columns]]
        name = "w"
        role = "weight"
    "#;

    #[test]
    fn weighted_rows_load() {
        let schema = Schema::parse(SCHEMA, true).unwrap();
        let csv = "v,y,w,extra\na,0,1,x\na,1,3,x\n";
        let ing = load_csv_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ing.dataset.n_rows(), 2);
        assert_eq!(ing.dataset.total_weight(), 4.0);
        assert_eq!(ing.warnings.len(), 1);
    }

    #[test]
    fn missing_state_is_schema_error() {
        let text = "[[columns]]\nname = \"v\"\nrole = \"signal\"\n";
        assert!(matches!(Schema::parse(text, true), Err(Error::Schema(_))));
    }

    #[test]
    fn undeclared_value_is_line_addressed() {
        let schema = Schema::parse(SCHEMA, true).unwrap();
        let csv = "v,y,w\na,0,1\na,2,1\n";
        let err = load_csv_reader(csv.as_bytes(), &schema).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn bad_weight_rejected() {
        let schema = Schema::parse(SCHEMA, true).unwrap();
        let csv = "v,y,w\na,0,-1\n";
        assert!(load_csv_reader(csv.as_bytes(), &schema).is_err());
    }

    #[test]
    fn quoted_fields() {
        let schema = Schema::parse(SCHEMA, true).unwrap();
        let csv = "v,y,w\n\"a, b\",0,1\n\"a, b\",1,1\n";
        let ing = load_csv_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ing.dataset.column(0).labels(), &["a, b".to_string()]);
    }

    #[test]
    fn simulated_data_round_trips() {
        let dgp = crate::dgp::fixtures::noisy_signals_with_agent(0.4, &[0.1, 0.2], 0.3);
        let ds = dgp.sample(200, 3).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s1,s2,a,y\n"));
        let back = load_csv_reader(text.as_bytes(), &dgp.schema()).unwrap();
        assert!(back.warnings.is_empty());
        for name in ["s1", "s2", "a"] {
            assert_eq!(back.dataset.column_by_name(name).unwrap().codes(), ds.column_by_name(name).unwrap().codes());
        }
        assert_eq!(back.dataset.state_column().codes(), ds.state_column().codes());
    }
}
