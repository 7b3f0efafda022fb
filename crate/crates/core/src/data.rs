//! Row-aligned tabular datasets with anchor annotations and CSV ingestion.

use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

/// Heterogeneity annotation of every row.
#[derive(Debug, Clone, PartialEq)]
pub enum AnchorSpec {
    /// Environment labels. `codes[i]` indexes into `levels`, which is sorted.
    Discrete {
        name: String,
        levels: Vec<String>,
        codes: Vec<usize>,
    },
    /// Real-valued anchor matrix with one column per name.
    Continuous {
        names: Vec<String>,
        matrix: DMatrix<f64>,
    },
}

impl AnchorSpec {
    /// Builds a discrete anchor from raw per-row labels.
    pub fn discrete<S: AsRef<str>>(name: &str, labels: &[S]) -> Self {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for label in labels {
            index.entry(label.as_ref()).or_insert(0);
        }
        let levels: Vec<String> = index.keys().map(|s| s.to_string()).collect();
        for (code, slot) in index.values_mut().enumerate() {
            *slot = code;
        }
        let codes = labels.iter().map(|l| index[l.as_ref()]).collect();
        AnchorSpec::Discrete {
            name: name.to_string(),
            levels,
            codes,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            AnchorSpec::Discrete { codes, .. } => codes.len(),
            AnchorSpec::Continuous { matrix, .. } => matrix.nrows(),
        }
    }

    /// Number of environments for a discrete anchor.
    pub fn num_environments(&self) -> Option<usize> {
        match self {
            AnchorSpec::Discrete { levels, .. } => Some(levels.len()),
            AnchorSpec::Continuous { .. } => None,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            AnchorSpec::Discrete { levels, .. } => Some(levels),
            AnchorSpec::Continuous { .. } => None,
        }
    }

    /// Environment label of every row, for discrete anchors.
    pub fn labels(&self) -> Option<Vec<&str>> {
        match self {
            AnchorSpec::Discrete { levels, codes, .. } => {
                Some(codes.iter().map(|&c| levels[c].as_str()).collect())
            }
            AnchorSpec::Continuous { .. } => None,
        }
    }

    fn subset(&self, rows: &[usize]) -> Self {
        match self {
            AnchorSpec::Discrete { name, levels, codes } => {
                let labels: Vec<&str> = rows.iter().map(|&i| levels[codes[i]].as_str()).collect();
                AnchorSpec::discrete(name, &labels)
            }
            AnchorSpec::Continuous { names, matrix } => AnchorSpec::Continuous {
                names: names.clone(),
                matrix: matrix.select_rows(rows),
            },
        }
    }

    fn column_names(&self) -> Vec<String> {
        match self {
            AnchorSpec::Discrete { name, .. } => vec![name.clone()],
            AnchorSpec::Continuous { names, .. } => names.clone(),
        }
    }
}

/// Immutable, validated dataset. Features are an `n × p` dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    outcome: Vec<f64>,
    anchor: AnchorSpec,
    column_names: Vec<String>,
    outcome_name: String,
    task: Task,
    groups: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        outcome: Vec<f64>,
        anchor: AnchorSpec,
        column_names: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let n = features.nrows();
        check_len(n, outcome.len())?;
        check_len(n, anchor.n())?;
        check_len(features.ncols(), column_names.len())?;
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature value at row {}, column {}",
                idx % n.max(1) + 1,
                column_names[idx / n.max(1)]
            )));
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite outcome at row {}", i + 1)));
        }
        if task == Task::Classification {
            if let Some(i) = outcome.iter().position(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::Data(format!(
                    "classification outcome {} at row {} is not in {{-1, +1}}",
                    outcome[i],
                    i + 1
                )));
            }
        }
        if let AnchorSpec::Continuous { matrix, names } = &anchor {
            check_len(matrix.ncols(), names.len())?;
            if matrix.ncols() == 0 {
                return Err(Error::Data("continuous anchor needs at least one column".into()));
            }
            if matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite anchor value".into()));
            }
        }
        Ok(Dataset {
            features,
            outcome,
            anchor,
            column_names,
            outcome_name: "y".into(),
            task,
            groups: None,
        })
    }

    /// Attaches a sampling-unit (e.g. patient) id to every row.
    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        check_len(self.n(), groups.len())?;
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn with_outcome_name(mut self, name: &str) -> Self {
        self.outcome_name = name.to_string();
        self
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn anchor(&self) -> &AnchorSpec {
        &self.anchor
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            anchor: self.anchor.subset(rows),
            column_names: self.column_names.clone(),
            outcome_name: self.outcome_name.clone(),
            task: self.task,
            groups: self
                .groups
                .as_ref()
                .map(|g| rows.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// Same rows with every row placed in a single environment.
    /// The same rows with feature columns reordered to `names`; columns not
    /// listed are dropped. Missing names are a configuration error.
    pub fn with_feature_order(&self, names: &[String]) -> Result<Dataset> {
        if names == self.column_names.as_slice() {
            return Ok(self.clone());
        }
        let idx = names
            .iter()
            .map(|name| {
                self.column_names
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Config(format!("missing column '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            features: self.features.select_columns(&idx),
            column_names: names.to_vec(),
            ..self.clone()
        })
    }

    pub fn with_single_environment(&self, label: &str) -> Dataset {
        let labels = vec![label; self.n()];
        Dataset {
            anchor: AnchorSpec::discrete("env", &labels),
            ..self.clone()
        }
    }

    /// Leave-one-environment-out partition: rows of `holdout` versus the rest.
    pub fn split_by_environment(&self, holdout: &str) -> Result<(Dataset, Dataset)> {
        let (levels, codes) = match &self.anchor {
            AnchorSpec::Discrete { levels, codes, .. } => (levels, codes),
            AnchorSpec::Continuous { .. } => {
                return Err(Error::Unsupported(
                    "split_by_environment requires a discrete anchor".into(),
                ))
            }
        };
        let Some(code) = levels.iter().position(|l| l == holdout) else {
            return Err(Error::Config(format!(
                "environment '{holdout}' not found; available: {}",
                levels.join(", ")
            )));
        };
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.n()).partition(|&i| codes[i] == code);
        if train.is_empty() {
            return Err(Error::Data(format!(
                "holding out '{holdout}' leaves an empty training set"
            )));
        }
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Writes the dataset as CSV: features, outcome, anchor column(s), group.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self.column_names.clone();
        header.push(self.outcome_name.clone());
        header.extend(self.anchor.column_names());
        if self.groups.is_some() {
            header.push("group".into());
        }
        out.write_record(&header).map_err(csv_err)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.extend(self.features.row(i).iter().map(|v| v.to_string()));
            record.push(self.outcome[i].to_string());
            match &self.anchor {
                AnchorSpec::Discrete { levels, codes, .. } => record.push(levels[codes[i]].clone()),
                AnchorSpec::Continuous { matrix, .. } => {
                    record.extend(matrix.row(i).iter().map(|v| v.to_string()))
                }
            }
            if let Some(g) = &self.groups {
                record.push(g[i].clone());
            }
            out.write_record(&record).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

/// Column roles for CSV ingestion; also readable from a JSON sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub outcome: String,
    pub anchors: Vec<String>,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default = "default_task")]
    pub task: Task,
    /// Force a numeric single anchor column to be read as environment labels.
    #[serde(default)]
    pub discrete_anchor: bool,
}

fn default_task() -> Task {
    Task::Regression
}

impl CsvSchema {
    pub fn new(outcome: &str, anchors: &[&str], task: Task) -> Self {
        CsvSchema {
            outcome: outcome.into(),
            anchors: anchors.iter().map(|s| s.to_string()).collect(),
            group: None,
            task,
            discrete_anchor: false,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("schema {}: {e}", path.display())))
    }
}

/// Reads a headered, comma-separated UTF-8 file into a validated [`Dataset`].
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing column '{name}'")))
    };
    let outcome_idx = find(&schema.outcome)?;
    if schema.anchors.is_empty() {
        return Err(Error::Config("at least one anchor column is required".into()));
    }
    let anchor_idx = schema.anchors.iter().map(|a| find(a)).collect::<Result<Vec<_>>>()?;
    let group_idx = schema.group.as_deref().map(find).transpose()?;
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|j| *j != outcome_idx && !anchor_idx.contains(j) && Some(*j) != group_idx)
        .collect();

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
        rows.push(rec);
    }
    let n = rows.len();
    let p = feature_idx.len();

    let parse = |row: usize, col: usize, text: &str| -> Result<f64> {
        let v: f64 = text.trim().parse().map_err(|_| {
            Error::Data(format!(
                "row {}, column '{}': non-numeric value '{}'",
                row + 1,
                header[col],
                text
            ))
        })?;
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "row {}, column '{}': non-finite value",
                row + 1,
                header[col]
            )));
        }
        Ok(v)
    };

    let mut features = DMatrix::<f64>::zeros(n, p);
    let mut outcome = Vec::with_capacity(n);
    for (i, rec) in rows.iter().enumerate() {
        for (j, &col) in feature_idx.iter().enumerate() {
            features[(i, j)] = parse(i, col, &rec[col])?;
        }
        let y = parse(i, outcome_idx, &rec[outcome_idx])?;
        let y = match schema.task {
            Task::Regression => y,
            Task::Classification => match y {
                v if v == 0.0 || v == -1.0 => -1.0,
                1.0 => 1.0,
                v => {
                    return Err(Error::Data(format!(
                        "row {}: classification outcome {v} not in {{0, 1, -1, +1}}",
                        i + 1
                    )))
                }
            },
        };
        outcome.push(y);
    }

    let numeric_anchor = anchor_idx
        .iter()
        .all(|&c| rows.iter().all(|r| r[c].trim().parse::<f64>().is_ok()));
    let anchor = if anchor_idx.len() == 1 && (!numeric_anchor || schema.discrete_anchor) {
        let c = anchor_idx[0];
        let labels: Vec<&str> = rows.iter().map(|r| r.get(c).unwrap_or("")).collect();
        AnchorSpec::discrete(&header[c], &labels)
    } else if numeric_anchor {
        let mut matrix = DMatrix::<f64>::zeros(n, anchor_idx.len());
        for (i, rec) in rows.iter().enumerate() {
            for (j, &c) in anchor_idx.iter().enumerate() {
                matrix[(i, j)] = parse(i, c, &rec[c])?;
            }
        }
        AnchorSpec::Continuous {
            names: anchor_idx.iter().map(|&c| header[c].clone()).collect(),
            matrix,
        }
    } else {
        return Err(Error::Config(
            "multiple anchor columns must all be numeric; use a single label column for environments".into(),
        ));
    };

    let names = feature_idx.iter().map(|&c| header[c].clone()).collect();
    let mut ds = Dataset::new(features, outcome, anchor, names, schema.task)?.with_outcome_name(&schema.outcome);
    if let Some(g) = group_idx {
        ds = ds.with_groups(rows.iter().map(|r| r[g].to_string()).collect())?;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, task: Task) -> Result<Dataset> {
        read_csv(text.as_bytes(), &CsvSchema::new("y", &["env"], task))
    }

    #[test]
    fn feature_order_follows_names() {
        let ds = read("x1,x2,y,env\n1,2,3,a\n4,5,6,b\n", Task::Regression).unwrap();
        let swapped = ds.with_feature_order(&["x2".into(), "x1".into()]).unwrap();
        assert_eq!(swapped.column_names(), ["x2", "x1"]);
        assert_eq!(swapped.features()[(1, 0)], 5.0);
        assert_eq!(swapped.outcome(), ds.outcome());
        let err = ds.with_feature_order(&["x3".into()]).unwrap_err();
        assert!(err.to_string().contains("'x3'"));
    }

    #[test]
    fn loads_discrete_dataset() {
        let ds = read("x1,x2,y,env\n1,2,3,a\n4,5,6,b\n7,8,9,a\n", Task::Regression).unwrap();
        assert_eq!((ds.n(), ds.p()), (3, 2));
        assert_eq!(ds.column_names(), ["x1", "x2"]);
        assert_eq!(ds.anchor().num_environments(), Some(2));
        assert_eq!(ds.features()[(2, 1)], 8.0);
    }

    #[test]
    fn maps_zero_one_labels() {
        let ds = read("x,y,env\n1,0,a\n2,0,a\n", Task::Classification).unwrap();
        assert_eq!(ds.outcome(), [-1.0, -1.0]);
        let err = read("x,y,env\n1,2,a\n", Task::Classification).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn reports_bad_cells() {
        let mut text = String::from("x,y,env\n");
        for i in 1..=9 {
            let x = if i == 7 { "NaN".to_string() } else { i.to_string() };
            text.push_str(&format!("{x},1,a\n"));
        }
        let err = read(&text, Task::Regression).unwrap_err().to_string();
        assert!(err.contains("row 7"), "{err}");
        let err = read("x,y,env\nfoo,1,a\n", Task::Regression).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("'x'"), "{err}");
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_csv("x,y\n1,2\n".as_bytes(), &CsvSchema::new("y", &["site"], Task::Regression))
            .unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("site")), "{err}");
    }

    #[test]
    fn numeric_anchor_columns_are_continuous() {
        let ds = read_csv(
            "x,y,a1,a2\n1,2,0.5,1\n2,3,0.1,0\n".as_bytes(),
            &CsvSchema::new("y", &["a1", "a2"], Task::Regression),
        )
        .unwrap();
        assert!(matches!(ds.anchor(), AnchorSpec::Continuous { matrix, .. } if matrix.ncols() == 2));
        assert_eq!(ds.p(), 1);
    }

    fn sized(sizes: &[usize]) -> Dataset {
        let labels: Vec<String> = sizes
            .iter()
            .enumerate()
            .flat_map(|(e, &s)| std::iter::repeat_n(format!("e{e}"), s))
            .collect();
        let n = labels.len();
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let y = (0..n).map(|i| i as f64).collect();
        Dataset::new(x, y, AnchorSpec::discrete("env", &labels), vec!["x".into()], Task::Regression).unwrap()
    }

    #[test]
    fn split_partitions_rows() {
        let ds = sized(&[10, 20, 30]);
        let (train, test) = ds.split_by_environment("e2").unwrap();
        assert_eq!((train.n(), test.n()), (30, 30));
        assert_eq!(train.anchor().num_environments(), Some(2));
        let mut all: Vec<f64> = train.outcome().iter().chain(test.outcome()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.outcome());
    }

    #[test]
    fn split_errors() {
        let err = sized(&[10, 20, 30]).split_by_environment("missing").unwrap_err().to_string();
        assert!(err.contains("e0, e1, e2"), "{err}");
        assert!(sized(&[5]).split_by_environment("e0").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "x1,x2,y,env\n1.5,2,3,a\n4,-5.25,6,b\n";
        let ds = read(text, Task::Regression).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let again = read(std::str::from_utf8(&buf).unwrap(), Task::Regression).unwrap();
        assert_eq!(ds, again);
    }
}
