//! Audited dataset: embeddings, two-group membership, model correctness,
//! severity scores, and auxiliary categorical attributes.
//!
//! A [`Cohort`] is validated on construction and immutable afterwards, so it
//! can be shared read-only across concurrent solver runs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the audited attribute an instance falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::A => write!(f, "A"),
            Group::B => write!(f, "B"),
        }
    }
}

/// One audited sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub group: Group,
    pub correct: bool,
    pub severity: f64,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// On-disk cohort encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohortFormat {
    Csv,
    Jsonl,
}

impl CohortFormat {
    /// Guess the format from a file extension; `.jsonl`/`.json` map to
    /// JSON-lines, everything else to CSV.
    pub fn from_path(path: &Path) -> CohortFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => CohortFormat::Jsonl,
            _ => CohortFormat::Csv,
        }
    }
}

impl std::str::FromStr for CohortFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CohortFormat::Csv),
            "jsonl" => Ok(CohortFormat::Jsonl),
            other => Err(Error::Invalid(format!(
                "unknown cohort format `{other}` (expected csv or jsonl)"
            ))),
        }
    }
}

/// Validated collection of instances with a fixed embedding dimension and
/// attribute schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    instances: Vec<Instance>,
    dim: usize,
    attribute_schema: BTreeSet<String>,
}

impl Cohort {
    /// Build a cohort from instances, deriving the attribute schema as the
    /// union of attribute keys seen.
    pub fn new(instances: Vec<Instance>) -> Result<Cohort> {
        let schema = instances
            .iter()
            .flat_map(|i| i.attributes.keys().cloned())
            .collect();
        Cohort::with_schema(instances, schema)
    }

    /// Build a cohort with an explicit attribute schema (which must cover
    /// every key present on the instances).
    pub fn with_schema(
        instances: Vec<Instance>,
        attribute_schema: BTreeSet<String>,
    ) -> Result<Cohort> {
        if instances.is_empty() {
            return Err(Error::Degenerate("cohort has no instances".into()));
        }
        let dim = instances[0].embedding.len();
        if dim == 0 {
            return Err(Error::Degenerate("embedding dimension is zero".into()));
        }
        let mut ids: HashSet<&str> = HashSet::with_capacity(instances.len());
        let mut seen_a = false;
        let mut seen_b = false;
        for (idx, inst) in instances.iter().enumerate() {
            let line = idx + 1;
            if inst.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    line,
                    expected: dim,
                    found: inst.embedding.len(),
                });
            }
            if inst.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Malformed {
                    line,
                    message: format!("instance `{}` has a non-finite embedding entry", inst.id),
                });
            }
            if !inst.severity.is_finite() || inst.severity < 0.0 {
                return Err(Error::Malformed {
                    line,
                    message: format!(
                        "instance `{}` has invalid severity {} (must be finite and >= 0)",
                        inst.id, inst.severity
                    ),
                });
            }
            if !ids.insert(&inst.id) {
                return Err(Error::DuplicateId {
                    line,
                    id: inst.id.clone(),
                });
            }
            for key in inst.attributes.keys() {
                if !attribute_schema.contains(key) {
                    return Err(Error::Malformed {
                        line,
                        message: format!("attribute `{key}` is not in the schema"),
                    });
                }
            }
            match inst.group {
                Group::A => seen_a = true,
                Group::B => seen_b = true,
            }
        }
        if !seen_a {
            return Err(Error::EmptyGroup('A'));
        }
        if !seen_b {
            return Err(Error::EmptyGroup('B'));
        }
        Ok(Cohort {
            instances,
            dim,
            attribute_schema,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn attribute_schema(&self) -> &BTreeSet<String> {
        &self.attribute_schema
    }

    /// Number of group-A instances.
    pub fn n_a(&self) -> usize {
        self.instances.iter().filter(|i| i.group == Group::A).count()
    }

    /// Number of group-B instances.
    pub fn n_b(&self) -> usize {
        self.instances.iter().filter(|i| i.group == Group::B).count()
    }
}

/// Load a cohort file. Instance order equals file order.
pub fn load_cohort(path: &Path, format: CohortFormat) -> Result<Cohort> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        CohortFormat::Csv => read_csv(file),
        CohortFormat::Jsonl => read_jsonl(file),
    }
}

/// Write a cohort file in the given format.
pub fn save_cohort(cohort: &Cohort, path: &Path, format: CohortFormat) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = std::io::BufWriter::new(file);
    let res = match format {
        CohortFormat::Csv => write_csv(cohort, &mut w),
        CohortFormat::Jsonl => write_jsonl(cohort, &mut w),
    };
    res.and_then(|()| {
        w.flush().map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

/// Re-derive the A/B split from a stored attribute: instances whose value is
/// in `a_values` become group A, all others (including instances without the
/// attribute) become group B. Everything else is left untouched.
pub fn relabel_groups(
    cohort: &Cohort,
    attribute: &str,
    a_values: &BTreeSet<String>,
) -> Result<Cohort> {
    if !cohort.attribute_schema.contains(attribute) {
        return Err(Error::UnknownAttribute(attribute.to_string()));
    }
    let folded: BTreeSet<String> = a_values.iter().map(|v| v.to_lowercase()).collect();
    let instances = cohort
        .instances
        .iter()
        .map(|inst| {
            let group = match inst.attributes.get(attribute) {
                Some(v) if folded.contains(v.as_str()) => Group::A,
                _ => Group::B,
            };
            Instance {
                group,
                ..inst.clone()
            }
        })
        .collect();
    Cohort::with_schema(instances, cohort.attribute_schema.clone())
}

const ATTR_PREFIX: &str = "attr_";

fn parse_group(raw: &str, line: usize) -> Result<Group> {
    match raw.trim() {
        "A" | "a" => Ok(Group::A),
        "B" | "b" => Ok(Group::B),
        other => Err(Error::Malformed {
            line,
            message: format!("group must be A or B, got `{other}`"),
        }),
    }
}

fn parse_correct(raw: &str, line: usize) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Malformed {
            line,
            message: format!("correct must be 0 or 1, got `{other}`"),
        }),
    }
}

fn parse_f64(raw: &str, what: &str, line: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Malformed {
        line,
        message: format!("{what} is not a number: `{raw}`"),
    })
}

fn read_csv<R: Read>(reader: R) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Malformed {
            line: 1,
            message: format!("cannot read header: {e}"),
        })?
        .clone();

    // Fixed columns by name, embeddings as emb_0..emb_{d-1}, attributes as attr_<name>.
    let mut id_col = None;
    let mut group_col = None;
    let mut correct_col = None;
    let mut severity_col = None;
    let mut emb_cols: Vec<(usize, usize)> = Vec::new(); // (emb index, column index)
    let mut attr_cols: Vec<(String, usize)> = Vec::new();
    for (col, name) in headers.iter().enumerate() {
        match name {
            "id" => id_col = Some(col),
            "group" => group_col = Some(col),
            "correct" => correct_col = Some(col),
            "severity" => severity_col = Some(col),
            _ => {
                if let Some(rest) = name.strip_prefix("emb_") {
                    let idx: usize = rest.parse().map_err(|_| Error::Malformed {
                        line: 1,
                        message: format!("bad embedding column `{name}`"),
                    })?;
                    emb_cols.push((idx, col));
                } else if let Some(attr) = name.strip_prefix(ATTR_PREFIX) {
                    attr_cols.push((attr.to_string(), col));
                } else {
                    return Err(Error::Malformed {
                        line: 1,
                        message: format!("unrecognized column `{name}`"),
                    });
                }
            }
        }
    }
    let id_col = id_col.ok_or_else(|| Error::MissingColumn("id".into()))?;
    let group_col = group_col.ok_or_else(|| Error::MissingColumn("group".into()))?;
    let correct_col = correct_col.ok_or_else(|| Error::MissingColumn("correct".into()))?;
    let severity_col = severity_col.ok_or_else(|| Error::MissingColumn("severity".into()))?;
    if emb_cols.is_empty() {
        return Err(Error::MissingColumn("emb_0".into()));
    }
    emb_cols.sort_unstable();
    let dim = emb_cols.len();
    for (want, (have, _)) in emb_cols.iter().enumerate() {
        if *have != want {
            return Err(Error::Malformed {
                line: 1,
                message: format!(
                    "embedding columns must be emb_0..emb_{}, missing emb_{want}",
                    dim - 1
                ),
            });
        }
    }
    let expected_fields = headers.len();

    let mut instances = Vec::new();
    for (rec_idx, record) in rdr.records().enumerate() {
        let line = rec_idx + 2; // header occupies line 1
        let record = record.map_err(|e| Error::Malformed {
            line,
            message: format!("cannot parse record: {e}"),
        })?;
        if record.len() != expected_fields {
            // A ragged row in this format means the embedding width changed.
            let fixed = expected_fields - dim;
            if record.len() > fixed {
                return Err(Error::DimensionMismatch {
                    line,
                    expected: dim,
                    found: record.len() - fixed,
                });
            }
            return Err(Error::Malformed {
                line,
                message: format!(
                    "expected {expected_fields} fields, found {}",
                    record.len()
                ),
            });
        }
        let mut embedding = Vec::with_capacity(dim);
        for (emb_idx, col) in &emb_cols {
            embedding.push(parse_f64(&record[*col], &format!("emb_{emb_idx}"), line)?);
        }
        let mut attributes = BTreeMap::new();
        for (name, col) in &attr_cols {
            let raw = record[*col].trim();
            if !raw.is_empty() {
                attributes.insert(name.clone(), raw.to_lowercase());
            }
        }
        instances.push(Instance {
            id: record[id_col].trim().to_string(),
            group: parse_group(&record[group_col], line)?,
            correct: parse_correct(&record[correct_col], line)?,
            severity: parse_f64(&record[severity_col], "severity", line)?,
            embedding,
            attributes,
        });
    }

    let schema = attr_cols.into_iter().map(|(name, _)| name).collect();
    Cohort::with_schema(instances, schema).map_err(shift_for_header)
}

// Cohort validation numbers instances from 1; in a CSV file the header is line 1.
fn shift_for_header(err: Error) -> Error {
    match err {
        Error::DimensionMismatch {
            line,
            expected,
            found,
        } => Error::DimensionMismatch {
            line: line + 1,
            expected,
            found,
        },
        Error::DuplicateId { line, id } => Error::DuplicateId { line: line + 1, id },
        Error::Malformed { line, message } => Error::Malformed {
            line: line + 1,
            message,
        },
        other => other,
    }
}

fn read_jsonl<R: Read>(reader: R) -> Result<Cohort> {
    let reader = BufReader::new(reader);
    let mut instances = Vec::new();
    let mut schema: BTreeSet<String> = BTreeSet::new();
    for (idx, line_res) in reader.lines().enumerate() {
        let line = idx + 1;
        let text = line_res.map_err(|source| Error::Io {
            path: format!("line {line}"),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Malformed {
                line,
                message: format!("invalid JSON: {e}"),
            })?;
        let obj = value.as_object().ok_or_else(|| Error::Malformed {
            line,
            message: "expected a JSON object".into(),
        })?;
        for key in obj.keys() {
            if !matches!(
                key.as_str(),
                "id" | "group" | "correct" | "severity" | "embedding" | "attributes"
            ) {
                return Err(Error::Malformed {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
        }
        let get = |key: &str| {
            obj.get(key).ok_or_else(|| Error::Malformed {
                line,
                message: format!("missing key `{key}`"),
            })
        };
        let id = get("id")?
            .as_str()
            .ok_or_else(|| Error::Malformed {
                line,
                message: "`id` must be a string".into(),
            })?
            .to_string();
        let group = parse_group(
            get("group")?.as_str().ok_or_else(|| Error::Malformed {
                line,
                message: "`group` must be a string".into(),
            })?,
            line,
        )?;
        let correct = match get("correct")? {
            serde_json::Value::Bool(b) => *b,
            serde_json::Value::Number(n) if n.as_i64() == Some(0) => false,
            serde_json::Value::Number(n) if n.as_i64() == Some(1) => true,
            other => {
                return Err(Error::Malformed {
                    line,
                    message: format!("`correct` must be a boolean or 0/1, got {other}"),
                })
            }
        };
        let severity = get("severity")?.as_f64().ok_or_else(|| Error::Malformed {
            line,
            message: "`severity` must be a number".into(),
        })?;
        let embedding = get("embedding")?
            .as_array()
            .ok_or_else(|| Error::Malformed {
                line,
                message: "`embedding` must be an array".into(),
            })?
            .iter()
            .map(|v| {
                v.as_f64().ok_or_else(|| Error::Malformed {
                    line,
                    message: "`embedding` entries must be numbers".into(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut attributes = BTreeMap::new();
        if let Some(attrs) = obj.get("attributes") {
            let attrs = attrs.as_object().ok_or_else(|| Error::Malformed {
                line,
                message: "`attributes` must be an object".into(),
            })?;
            for (k, v) in attrs {
                let v = v.as_str().ok_or_else(|| Error::Malformed {
                    line,
                    message: format!("attribute `{k}` must be a string"),
                })?;
                schema.insert(k.clone());
                attributes.insert(k.clone(), v.to_lowercase());
            }
        }
        instances.push(Instance {
            id,
            group,
            correct,
            severity,
            embedding,
            attributes,
        });
    }
    Cohort::with_schema(instances, schema)
}

fn write_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Io {
        path: "<csv output>".into(),
        source: std::io::Error::other(e),
    };
    let attrs: Vec<&String> = cohort.attribute_schema.iter().collect();
    let mut header = vec![
        "id".to_string(),
        "group".to_string(),
        "correct".to_string(),
        "severity".to_string(),
    ];
    for i in 0..cohort.dim {
        header.push(format!("emb_{i}"));
    }
    for a in &attrs {
        header.push(format!("{ATTR_PREFIX}{a}"));
    }
    wtr.write_record(&header).map_err(io_err)?;
    for inst in &cohort.instances {
        let mut row = vec![
            inst.id.clone(),
            inst.group.to_string(),
            if inst.correct { "1" } else { "0" }.to_string(),
            format!("{}", inst.severity),
        ];
        for v in &inst.embedding {
            row.push(format!("{v}"));
        }
        for a in &attrs {
            row.push(inst.attributes.get(*a).cloned().unwrap_or_default());
        }
        wtr.write_record(&row).map_err(io_err)?;
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "<csv output>".into(),
        source: e,
    })
}

fn write_jsonl<W: Write>(cohort: &Cohort, mut writer: W) -> Result<()> {
    for inst in &cohort.instances {
        let line = serde_json::to_string(inst).map_err(|e| Error::Io {
            path: "<jsonl output>".into(),
            source: std::io::Error::other(e),
        })?;
        writeln!(writer, "{line}").map_err(|source| Error::Io {
            path: "<jsonl output>".into(),
            source,
        })?;
    }
    Ok(())
}
