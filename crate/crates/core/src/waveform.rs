//! Time-series output of a transient run, serializable to CSV.

use std::io::Write;

/// Named time series from a transient run. Every column has exactly one
/// entry per time point; times are strictly increasing.
#[derive(Debug, Clone)]
pub struct WaveformSet {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl WaveformSet {
    pub fn new(names: Vec<String>) -> WaveformSet {
        let columns = names.iter().map(|_| Vec::new()).collect();
        WaveformSet {
            times: Vec::new(),
            names,
            columns,
        }
    }

    pub fn push_row(&mut self, t: f64, values: impl Iterator<Item = f64>) {
        if let Some(&last) = self.times.last() {
            debug_assert!(t > last, "times must be strictly increasing");
        }
        self.times.push(t);
        let mut n = 0;
        for (col, v) in self.columns.iter_mut().zip(values) {
            col.push(v);
            n += 1;
        }
        debug_assert_eq!(n, self.names.len(), "row width mismatch");
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(|i| self.columns[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Value of a column at the last time point.
    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last().copied())
    }

    /// Write CSV: a literal `time` column first, then the columns in
    /// insertion order. Numbers carry 9 significant digits with a '.'
    /// decimal separator, independent of locale, so identical runs produce
    /// byte-identical files.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "time")?;
        for name in &self.names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (row, &t) in self.times.iter().enumerate() {
            write!(w, "{}", fmt_sig9(t))?;
            for col in &self.columns {
                write!(w, ",{}", fmt_sig9(col[row]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// 9 significant digits in scientific notation.
fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}
