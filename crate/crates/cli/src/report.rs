//! Rectangular CSV tables with a `#`-prefixed provenance footer.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct CsvReport {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `key=value` lines written after the rows.
    pub footer: Vec<(String, String)>,
}

impl CsvReport {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    /// Panics if the row width differs from the header.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.footer.push((key.to_string(), value.to_string()));
    }

    /// Appends the config hash, seed list and code version.
    pub fn provenance(&mut self, cfg: &ExperimentConfig) {
        self.note("config_sha256", cfg.hash());
        let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
        self.note("seeds", seeds.join(";"));
        self.note(
            "version",
            concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
        );
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out += &row.join(",");
            out.push('\n');
        }
        for (k, v) in &self.footer {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(path, self.render()).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Shortest round-trip form; scientific outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_layout() {
        let mut r = CsvReport::new(&["a", "b"]);
        r.push(vec![num(0.5), String::new()]);
        r.note("k", 3);
        assert_eq!(r.render(), "a,b\n0.5,\n# k=3\n");
        assert_eq!(r.column("b"), Some(1));
    }

    #[test]
    fn number_format_round_trips() {
        assert_eq!(num(3.4753372336139126e-7), "3.4753372336139126e-7");
        assert_eq!(num(100.0), "100");
        assert_eq!(num(0.0), "0");
        for x in [1e-300, 0.1 + 0.2, 2.5e20, -7e-9] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    #[should_panic]
    fn ragged_row_rejected() {
        CsvReport::new(&["a", "b"]).push(vec!["1".into()]);
    }

    #[test]
    fn provenance_fields() {
        let mut r = CsvReport::new(&["x"]);
        r.provenance(&ExperimentConfig::default());
        let keys: Vec<&str> = r.footer.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["config_sha256", "seeds", "version"]);
        assert_eq!(r.footer[1].1, "1;2;3;4;5");
    }
}
