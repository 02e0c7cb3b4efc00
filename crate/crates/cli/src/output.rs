//! CSV writers with matching readers, and plain-text tables.

use std::io::{Read, Write};

use clap::ValueEnum;
use serde::Deserialize;

use drphase_core::evolution::TraceRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
    Table,
}

/// 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub const EVOLVE_HEADER: [&str; 6] = ["n", "mean", "q_upper", "q_lower", "support_max", "leaked_mass"];
pub const SCAN_HEADER: [&str; 4] = ["parameter", "verdict", "d_super", "d_sub"];
pub const SIMULATE_HEADER: [&str; 5] = ["n", "mean", "std", "stderr", "exact_mean"];

pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r)
}

pub fn write_trace_row<W: Write>(w: &mut csv::Writer<W>, r: &TraceRow<f64>) -> csv::Result<()> {
    w.write_record([
        r.n.to_string(),
        fmt_f(r.mean_xn),
        fmt_f(r.q_upper),
        fmt_f(r.q_lower),
        r.support_max.to_string(),
        fmt_f(r.cumulative_leak),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct TraceRecord {
    pub n: usize,
    pub mean: f64,
    pub q_upper: f64,
    pub q_lower: f64,
    pub support_max: usize,
    pub leaked_mass: f64,
}

pub fn read_trace_csv<R: Read>(r: R) -> csv::Result<Vec<TraceRecord>> {
    csv_reader(r).deserialize().collect()
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ScanRecord {
    pub parameter: f64,
    pub verdict: String,
    pub d_super: f64,
    pub d_sub: Option<f64>,
}

/// Reads the grid of a scan CSV; `# ` summary lines are skipped.
pub fn read_scan_csv<R: Read>(r: R) -> csv::Result<Vec<ScanRecord>> {
    csv_reader(r).deserialize().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct SimulateRecord {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
    pub exact_mean: Option<f64>,
}

pub fn read_simulate_csv<R: Read>(r: R) -> csv::Result<Vec<SimulateRecord>> {
    csv_reader(r).deserialize().collect()
}

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let s: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&mut header.iter().copied());
    for row in rows {
        out += &line(&mut row.iter().map(String::as_str));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use drphase_core::evolution::RowSource;

    #[test]
    fn trace_round_trip() {
        let row = TraceRow {
            n: 3,
            mean_xn: 1.0 / 3.0,
            q_upper: 0.1,
            q_lower: -2.5e-300,
            support_max: 17,
            cumulative_leak: 0.0,
            source: RowSource::Full,
        };
        let mut w = csv_writer(Vec::new());
        w.write_record(EVOLVE_HEADER).unwrap();
        write_trace_row(&mut w, &row).unwrap();
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("n,mean,q_upper,q_lower,support_max,leaked_mass\n"));
        let back = read_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(
            back[0],
            TraceRecord {
                n: 3,
                mean: 1.0 / 3.0,
                q_upper: 0.1,
                q_lower: -2.5e-300,
                support_max: 17,
                leaked_mass: 0.0
            }
        );
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f(1.25), "1.2500000000000000e0");
        assert_eq!(fmt_f(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn scan_reader_skips_summary() {
        let text =
            "parameter,verdict,d_super,d_sub\n1e-1,subcritical,-5e-1,-5e-1\n5e-1,supercritical,1.5e0,\n# super_boundary [0.2, 0.2]\n";
        let rows = read_scan_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].d_sub, None);
    }

    #[test]
    fn table_alignment() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz  1\n");
    }
}
