use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, TaskKind};
use crate::error::{Error, Result};

/// Column roles for a CSV file. Every column that is not the target or the
/// group column becomes a feature, in header order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub target: String,
    pub task_kind: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub group: Option<String>,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

pub fn parse_csv(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    let task_kind: TaskKind = schema.task_kind.parse()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();

    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: None,
            column: Some(name.to_string()),
            message: "column not found in header".into(),
        })
    };
    let target_col = find(&schema.target)?;
    let group_col = schema.group.as_deref().map(find).transpose()?;
    for c in &schema.categorical {
        find(c)?;
    }
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != target_col && Some(c) != group_col)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let mask = feature_names
        .iter()
        .map(|n| schema.categorical.contains(n))
        .collect();

    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut groups = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row_no = r + 1;
        let record = record.map_err(|e| Error::Parse {
            row: Some(row_no),
            column: None,
            message: e.to_string(),
        })?;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::Parse {
                    row: Some(row_no),
                    column: Some(header[c].clone()),
                    message: "missing value".into(),
                });
            }
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row: Some(row_no),
                column: Some(header[c].clone()),
                message: format!("non-numeric value `{raw}`"),
            })
        };
        rows.push(feature_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?);
        let y = cell(target_col)?;
        if task_kind == TaskKind::Classification && y != 0.0 && y != 1.0 {
            return Err(Error::Parse {
                row: Some(row_no),
                column: Some(schema.target.clone()),
                message: format!("classification label {y} is not 0 or 1"),
            });
        }
        targets.push(y);
        if let Some(g) = group_col {
            groups.push(record.get(g).unwrap_or("").to_string());
        }
    }
    if rows.is_empty() {
        return Err(Error::parse("CSV has no data rows"));
    }
    let ds = Dataset::new(rows, targets, feature_names, schema.target.clone(), task_kind)?
        .with_categorical_mask(mask)?;
    match group_col {
        Some(_) => ds.with_group_ids(groups),
        None => Ok(ds),
    }
}

/// Header of feature names then the target (then the group column when
/// present). Values use the shortest representation that round-trips.
pub fn render_csv(ds: &Dataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(ds.target_name());
    if ds.group_ids().is_some() {
        header.push("group");
    }
    w.write_record(&header).expect("in-memory write");
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.targets()[i].to_string());
        if let Some(g) = ds.group_ids() {
            rec.push(g[i].clone());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_csv(ds)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_synthetic;

    fn schema(target: &str) -> CsvSchema {
        CsvSchema {
            target: target.into(),
            task_kind: "regression".into(),
            categorical: vec![],
            group: None,
        }
    }

    #[test]
    fn small_file() {
        let ds = parse_csv("a,b,y\n1,2,3\n4,5,6\n", &schema("y")).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.row(1), &[4.0, 5.0]);
        assert_eq!(ds.targets(), &[3.0, 6.0]);
    }

    #[test]
    fn missing_target_column_is_named() {
        match parse_csv("a,b\n1,2\n", &schema("y")) {
            Err(Error::Parse { column, .. }) => assert_eq!(column.as_deref(), Some("y")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cells_report_location() {
        match parse_csv("a,y\n1,2\nfoo,3\n", &schema("y")) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, Some(2));
                assert_eq!(column.as_deref(), Some("a"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_csv("a,y\n,2\n", &schema("y")),
            Err(Error::Parse { row: Some(1), .. })
        ));
    }

    #[test]
    fn unknown_task_kind() {
        let mut s = schema("y");
        s.task_kind = "survival".into();
        assert!(matches!(parse_csv("a,y\n1,2\n", &s), Err(Error::Parse { .. })));
    }

    #[test]
    fn groups_and_categoricals() {
        let s = CsvSchema {
            target: "y".into(),
            task_kind: "classification".into(),
            categorical: vec!["sex".into()],
            group: Some("pid".into()),
        };
        let ds = parse_csv("pid,age,sex,y\np1,40,1,0\np1,41,1,1\np2,50,0,0\n", &s).unwrap();
        assert_eq!(ds.feature_names(), &["age".to_string(), "sex".to_string()]);
        assert_eq!(ds.categorical_mask(), &[false, true]);
        assert_eq!(ds.group_ids().unwrap()[2], "p2");
    }

    #[test]
    fn round_trip_rendering_is_exact() {
        let ds = generate_synthetic(64, 0.05, 8).unwrap();
        let text = render_csv(&ds);
        let back = parse_csv(&text, &schema("target")).unwrap();
        assert_eq!(render_csv(&back), text);
        assert_eq!(back, ds);
    }
}
