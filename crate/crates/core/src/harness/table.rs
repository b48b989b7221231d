use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::report::{fmt_f64, fmt_opt};

/// Numeric series sharing one x column.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub x_name: String,
    pub series: Vec<String>,
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
}

fn fmt_x(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        fmt_f64(x)
    }
}

impl Table {
    pub fn new(x_name: &str, series: &[&str]) -> Self {
        Table { x_name: x_name.into(), series: series.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, x: f64, values: Vec<Option<f64>>) {
        assert_eq!(values.len(), self.series.len(), "row width");
        self.rows.push((x, values));
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let c = self.series.iter().position(|s| s == name)?;
        Some(self.rows.iter().map(|(_, v)| v[c]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.x_name.clone();
        for name in &self.series {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (x, values) in &self.rows {
            s.push_str(&fmt_x(*x));
            for v in values {
                s.push(',');
                s.push_str(&fmt_opt(*v));
            }
            s.push('\n');
        }
        s
    }

    /// Parse CSV written by [`Table::to_csv`] (empty fields are missing values).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Schema("empty CSV".into()))?;
        let mut names = header.split(',').map(|s| s.trim().to_string());
        let x_name = names.next().filter(|s| !s.is_empty()).ok_or_else(|| Error::Schema("missing x column".into()))?;
        let series: Vec<String> = names.collect();
        if series.is_empty() {
            return Err(Error::Schema("CSV has no data columns".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != series.len() + 1 {
                return Err(Error::Schema(format!("row {} has {} fields, expected {}", i + 1, fields.len(), series.len() + 1)));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| Error::Schema(format!("row {}: {s:?} is not a number", i + 1)))
            };
            let x = num(fields[0])?;
            let values = fields[1..]
                .iter()
                .map(|f| if f.trim().is_empty() { Ok(None) } else { num(f).map(Some) })
                .collect::<Result<Vec<_>>>()?;
            rows.push((x, values));
        }
        Ok(Table { x_name, series, rows })
    }
}

/// Per x-value mean, min and max of every series across tables with the same
/// columns. Missing values are skipped; x-values are sorted ascending.
pub fn aggregate(tables: &[Table]) -> Result<Table> {
    let first = tables.first().ok_or_else(|| Error::Schema("nothing to aggregate".into()))?;
    if tables.iter().any(|t| t.series != first.series || t.x_name != first.x_name) {
        return Err(Error::Schema("tables have different columns".into()));
    }
    let mut groups: BTreeMap<u64, (f64, Vec<Vec<f64>>)> = BTreeMap::new();
    for table in tables {
        for (x, values) in &table.rows {
            // order-preserving key for finite f64 values
            let bits = x.to_bits();
            let key = if *x >= 0.0 { bits | (1 << 63) } else { !bits };
            let entry = groups.entry(key).or_insert_with(|| (*x, vec![Vec::new(); first.series.len()]));
            for (c, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    entry.1[c].push(*v);
                }
            }
        }
    }
    let mut names = Vec::new();
    for s in &first.series {
        for stat in ["mean", "min", "max"] {
            names.push(format!("{s}_{stat}"));
        }
    }
    let mut out = Table { x_name: first.x_name.clone(), series: names, rows: Vec::new() };
    for (_, (x, cols)) in groups {
        let mut values = Vec::with_capacity(out.series.len());
        for c in cols {
            if c.is_empty() {
                values.extend([None, None, None]);
            } else {
                let mean = c.iter().sum::<f64>() / c.len() as f64;
                values.push(Some(mean));
                values.push(c.iter().copied().reduce(f64::min));
                values.push(c.iter().copied().reduce(f64::max));
            }
        }
        out.rows.push((x, values));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new("j", &["a", "b"]);
        t.push(1.0, vec![Some(0.1), None]);
        t.push(2.0, vec![Some(1.0 / 3.0), Some(-2e-300)]);
        let back = Table::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn aggregate_statistics() {
        let mut a = Table::new("j", &["d"]);
        a.push(2.0, vec![Some(1.0)]);
        a.push(1.0, vec![Some(4.0)]);
        let mut b = Table::new("j", &["d"]);
        b.push(1.0, vec![Some(2.0)]);
        b.push(2.0, vec![None]);
        let agg = aggregate(&[a, b]).unwrap();
        assert_eq!(agg.series, vec!["d_mean", "d_min", "d_max"]);
        assert_eq!(agg.rows[0], (1.0, vec![Some(3.0), Some(2.0), Some(4.0)]));
        assert_eq!(agg.rows[1], (2.0, vec![Some(1.0), Some(1.0), Some(1.0)]));
    }

    #[test]
    fn empty_input_is_a_schema_error() {
        assert!(matches!(Table::from_csv(""), Err(Error::Schema(_))));
        assert!(matches!(Table::from_csv("x\n1\n"), Err(Error::Schema(_))));
        assert!(matches!(aggregate(&[]), Err(Error::Schema(_))));
    }
}
