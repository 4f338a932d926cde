//! Result rows and deterministic CSV emission.
//!
//! Fixed column order, `.` decimal separator, 17 significant digits, LF line
//! endings: two runs of the same configuration produce byte-identical files
//! regardless of worker count.

use std::io::{self, Write};

pub const CSV_HEADER: &str =
    "experiment,L,param1,param2,b,a,d,t,T_signed,T_abs,engine,extra_key,extra_val";

/// One sampled point of an experiment.
#[derive(Debug, Clone)]
pub struct Row {
    pub experiment: &'static str,
    pub length: usize,
    pub param1: f64,
    pub param2: f64,
    pub frozen_site: usize,
    pub target: usize,
    pub distance: usize,
    pub t: f64,
    pub flow_signed: f64,
    pub engine: &'static str,
    pub extra: Option<(&'static str, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<Row>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// 17 significant digits, locale-independent.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize the table; see the module docs for the determinism contract.
pub fn write_csv<W: Write>(table: &ResultTable, mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &table.rows {
        let (ek, ev) = match &r.extra {
            Some((k, v)) => ((*k).to_string(), fmt_f64(*v)),
            None => (String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.length,
            fmt_f64(r.param1),
            fmt_f64(r.param2),
            r.frozen_site,
            r.target,
            r.distance,
            fmt_f64(r.t),
            fmt_f64(r.flow_signed),
            fmt_f64(r.flow_signed.abs()),
            r.engine,
            ek,
            ev,
        )?;
    }
    Ok(())
}

/// Write the table to a file path.
pub fn emit_csv(table: &ResultTable, path: &std::path::Path) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = io::BufWriter::new(file);
    write_csv(table, &mut buf)?;
    buf.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> Row {
        Row {
            experiment: "tfim_map",
            length: 250,
            param1: 0.0,
            param2: 0.5,
            frozen_site: 125,
            target: 128,
            distance: 3,
            t: 30.0,
            flow_signed: -0.125,
            engine: "bdg",
            extra: None,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut out = Vec::new();
        write_csv(&ResultTable::default(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn one_row_is_two_lines_with_17_digits() {
        let table = ResultTable {
            rows: vec![sample_row()],
        };
        let mut out = Vec::new();
        write_csv(&table, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("tfim_map,250,0.0000000000000000e0,5.0000000000000000e-1,"));
        assert!(lines[1].contains("-1.2500000000000000e-1,1.2500000000000000e-1,bdg,,"));
    }

    #[test]
    fn serialization_is_reproducible() {
        let table = ResultTable {
            rows: vec![sample_row(), sample_row()],
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&table, &mut a).unwrap();
        write_csv(&table, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
