//! Per-example score table exchanged between CLI stages as CSV.
//!
//! Column order is fixed: `id,dataset,side`, then the score columns
//! `md,rmd,logit,knn,perplexity`, then `quality.<metric>` columns sorted by
//! metric name, then any combined-score columns in the order they were
//! added. Missing values are empty cells.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const KEY_COLUMNS: [&str; 3] = ["id", "dataset", "side"];
pub const SCORE_COLUMNS: [&str; 5] = ["md", "rmd", "logit", "knn", "perplexity"];
pub const QUALITY_PREFIX: &str = "quality.";

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub dataset: String,
    pub side: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ScoreTable {
    columns: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(columns: Vec<String>) -> Self {
        ScoreTable {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self
            .index_of(name)
            .ok_or_else(|| Error::MissingFeature(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r.values[j]).collect())
    }

    /// Adds a column, or overwrites it if the name exists.
    pub fn set_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.rows.len() {
            return Err(Error::LengthMismatch {
                left: self.rows.len(),
                right: values.len(),
            });
        }
        match self.index_of(name) {
            Some(j) => {
                for (r, v) in self.rows.iter_mut().zip(values) {
                    r.values[j] = v;
                }
            }
            None => {
                self.columns.push(name.to_string());
                for (r, v) in self.rows.iter_mut().zip(values) {
                    r.values.push(v);
                }
            }
        }
        Ok(())
    }

    /// Named values of one row, skipping empty cells.
    pub fn row_map(&self, i: usize) -> BTreeMap<String, f64> {
        self.columns
            .iter()
            .zip(&self.rows[i].values)
            .filter_map(|(c, v)| v.map(|v| (c.clone(), v)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<&str> = KEY_COLUMNS
            .iter()
            .copied()
            .chain(self.columns.iter().map(String::as_str))
            .collect();
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = vec![r.id.clone(), r.dataset.clone(), r.side.clone()];
            rec.extend(
                r.values
                    .iter()
                    .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || headers.iter().take(3).ne(KEY_COLUMNS.iter().copied()) {
            return Err(Error::MalformedLine {
                line: 1,
                message: "score table must start with id,dataset,side".into(),
            });
        }
        let columns: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
        let mut table = ScoreTable::new(columns);
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::MalformedLine {
                    line,
                    message: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            let values = rec
                .iter()
                .skip(3)
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::MalformedLine {
                                line,
                                message: format!("`{cell}` is not a number"),
                            })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            table.rows.push(ScoreRow {
                id: rec[0].to_string(),
                dataset: rec[1].to_string(),
                side: rec[2].to_string(),
                values,
            });
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        ScoreTable::read_csv(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_gaps() {
        let mut t = ScoreTable::new(vec!["md".into(), "rmd".into()]);
        t.rows.push(ScoreRow {
            id: "a".into(),
            dataset: "xsum".into(),
            side: "input".into(),
            values: vec![Some(0.1 + 0.2), None],
        });
        t.set_column("prsum", vec![Some(150.0)]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "id,dataset,side,md,rmd,prsum\na,xsum,input,0.30000000000000004,,150\n"
        );
        let back = ScoreTable::read_csv(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.row_map(0).len(), 2);
    }

    #[test]
    fn bad_header_and_cells() {
        assert!(ScoreTable::read_csv("x,y\n".as_bytes()).is_err());
        let err =
            ScoreTable::read_csv("id,dataset,side,md\na,b,input,zz\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn missing_column() {
        let t = ScoreTable::new(vec!["md".into()]);
        assert!(matches!(t.column("rmd"), Err(Error::MissingFeature(_))));
    }
}
