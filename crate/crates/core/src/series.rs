//! Per-segment metric tables.
//!
//! A [`MetricSeries`] is a set of named columns over one segment index.
//! Missing entries (undefined metrics, first-segment novelty, degenerate
//! values) are `None` and are masked pairwise downstream, never imputed.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{CoevoError, Result};

/// A value paired with a flag telling whether it was produced by a
/// degenerate fallback (empty input, zero variance, zero norm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub degenerate: bool,
}

impl Flagged {
    pub fn ok(value: f64) -> Self {
        Flagged {
            value,
            degenerate: false,
        }
    }

    pub fn degenerate(value: f64) -> Self {
        Flagged {
            value,
            degenerate: true,
        }
    }
}

/// Rounds to 9 significant digits and prints the shortest representation,
/// so equal values always serialize to the same bytes.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricSeries {
    pub group: Option<String>,
    /// Segment index of each row.
    pub index: Vec<usize>,
    columns: Vec<(String, Vec<Option<f64>>)>,
}

impl MetricSeries {
    pub fn new(index: Vec<usize>) -> Self {
        MetricSeries {
            group: None,
            index,
            columns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Adds or replaces a column. Panics if the length does not match the index.
    pub fn set_column(&mut self, name: &str, values: Vec<Option<f64>>) {
        assert_eq!(values.len(), self.index.len(), "column `{name}` length mismatch");
        if let Some(col) = self.columns.iter_mut().find(|(n, _)| n == name) {
            col.1 = values;
        } else {
            self.columns.push((name.to_owned(), values));
        }
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn require(&self, name: &str) -> Result<&[Option<f64>]> {
        self.column(name)
            .ok_or_else(|| CoevoError::invalid(format!("no column named `{name}`")))
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Merges another series with the same index; its columns are appended.
    pub fn merge(&mut self, other: &MetricSeries) -> Result<()> {
        if other.index != self.index {
            return Err(CoevoError::invalid("cannot merge series with different indices"));
        }
        for (name, vals) in &other.columns {
            self.set_column(name, vals.clone());
        }
        Ok(())
    }

    /// Appends first differences of the named columns as `d_<name>`. The first
    /// row of each new column is missing.
    pub fn add_differences(&mut self, names: &[&str]) -> Result<()> {
        for name in names {
            let col = self.require(name)?.to_vec();
            let mut diff = vec![None; col.len()];
            for t in 1..col.len() {
                if let (Some(a), Some(b)) = (col[t], col[t - 1]) {
                    diff[t] = Some(a - b);
                }
            }
            self.set_column(&format!("d_{name}"), diff);
        }
        Ok(())
    }

    /// Rows where every named column is present, as dense column vectors.
    pub fn complete_rows(&self, names: &[&str]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<&[Option<f64>]> = names.iter().map(|n| self.require(n)).collect::<Result<_>>()?;
        let mut out = vec![Vec::new(); names.len()];
        for t in 0..self.len() {
            if cols.iter().all(|c| c[t].is_some()) {
                for (o, c) in out.iter_mut().zip(&cols) {
                    o.push(c[t].unwrap());
                }
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_tables(std::slice::from_ref(self), writer)
    }

    /// Reads a table with a leading `segment` column; empty cells are missing.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut tables = read_tables(reader)?;
        match tables.len() {
            0 => Ok(MetricSeries::default()),
            1 => Ok(tables.remove(0)),
            n => Err(CoevoError::invalid(format!(
                "expected a single table, found {n} groups"
            ))),
        }
    }

    /// Columns as a name → values map (for lookups by callers that do not
    /// care about column order).
    pub fn as_map(&self) -> BTreeMap<&str, &[Option<f64>]> {
        self.columns
            .iter()
            .map(|(n, v)| (n.as_str(), v.as_slice()))
            .collect()
    }
}

/// Writes one or more tables sharing the same columns. A leading `group`
/// column is added when any table carries a group label.
pub fn write_tables<W: Write>(tables: &[MetricSeries], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let grouped = tables.iter().any(|t| t.group.is_some());
    let names: Vec<&str> = tables.first().map(|t| t.column_names()).unwrap_or_default();
    let mut header: Vec<&str> = Vec::new();
    if grouped {
        header.push("group");
    }
    header.push("segment");
    header.extend(&names);
    w.write_record(&header)?;
    for t in tables {
        let cols: Vec<&[Option<f64>]> = names.iter().map(|n| t.require(n)).collect::<Result<_>>()?;
        if cols.len() != t.columns.len() {
            return Err(CoevoError::invalid(
                "tables written together must share their columns",
            ));
        }
        for (row, idx) in t.index.iter().enumerate() {
            let mut rec = Vec::with_capacity(header.len());
            if grouped {
                rec.push(t.group.clone().unwrap_or_default());
            }
            rec.push(idx.to_string());
            rec.extend(cols.iter().map(|c| fmt_opt(c[row])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Whether a CSV header row looks like a metric table.
pub fn is_table_header(first_line: &str) -> bool {
    first_line.starts_with("segment") || first_line.starts_with("group,segment")
}

/// Reads tables written by [`write_tables`]. Rows of one group must be
/// contiguous; groups come back in file order.
pub fn read_tables<R: Read>(reader: R) -> Result<Vec<MetricSeries>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let grouped = headers.get(0) == Some("group");
    let skip = usize::from(grouped);
    if headers.get(skip) != Some("segment") {
        return Err(CoevoError::Parse {
            line: 1,
            message: "expected a leading `segment` (or `group,segment`) column".into(),
        });
    }
    let names: Vec<String> = headers.iter().skip(skip + 1).map(str::to_owned).collect();

    struct Building {
        group: Option<String>,
        index: Vec<usize>,
        cols: Vec<Vec<Option<f64>>>,
    }
    let mut done: Vec<Building> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |m: String| CoevoError::Parse { line, message: m };
        if rec.len() != headers.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                headers.len(),
                rec.len()
            )));
        }
        let group = grouped
            .then(|| rec.get(0).unwrap_or(""))
            .filter(|g| !g.is_empty())
            .map(str::to_owned);
        if done.last().is_none_or(|b| b.group != group) {
            if done.iter().any(|b| b.group == group) {
                return Err(bad(format!("rows of group {group:?} are not contiguous")));
            }
            done.push(Building {
                group,
                index: Vec::new(),
                cols: vec![Vec::new(); names.len()],
            });
        }
        let b = done.last_mut().expect("pushed above");
        b.index.push(
            rec.get(skip)
                .unwrap_or("")
                .parse()
                .map_err(|_| bad("bad segment index".into()))?,
        );
        for (j, col) in b.cols.iter_mut().enumerate() {
            let cell = rec.get(skip + 1 + j).unwrap_or("").trim();
            col.push(if cell.is_empty() {
                None
            } else {
                Some(cell.parse().map_err(|_| bad(format!("bad number `{cell}`")))?)
            });
        }
    }
    Ok(done
        .into_iter()
        .map(|b| {
            let mut s = MetricSeries::new(b.index);
            s.group = b.group;
            for (n, c) in names.iter().zip(b.cols) {
                s.set_column(n, c);
            }
            s
        })
        .collect())
}

/// Merges tables column-wise by group label. Tables of the same group must
/// share their segment index. Groups keep the order of first appearance.
pub fn merge_by_group(tables: Vec<MetricSeries>) -> Result<Vec<MetricSeries>> {
    let mut out: Vec<MetricSeries> = Vec::new();
    for t in tables {
        match out.iter_mut().find(|o| o.group == t.group) {
            Some(o) => o.merge(&t)?,
            None => out.push(t),
        }
    }
    Ok(out)
}
