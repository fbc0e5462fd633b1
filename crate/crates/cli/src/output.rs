//! Report rendering: CSV with a provenance header, plus JSONL records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ebtd::analysis::{write_records_jsonl, Record};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A tidy result table and its record view.
#[derive(Debug, Default)]
pub struct Report {
    pub command: &'static str,
    /// The resolved configuration as JSON; flags that cannot change results
    /// (threads, output directory) are not part of it.
    pub config_json: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub records: Vec<Record>,
    /// Human-readable text printed instead of the CSV on stdout.
    pub text: Option<String>,
    /// Self-check failures; any entry turns the exit code into 3.
    pub failed_checks: Vec<String>,
}

/// Shortest round-trip rendering, identical on every platform.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn config_hash(config_json: &str) -> String {
    Sha256::digest(config_json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Report {
    pub fn csv_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "# ebtd {} {}", self.command, env!("CARGO_PKG_VERSION")).expect("vec write");
        writeln!(buf, "# config_hash: {}", config_hash(&self.config_json)).expect("vec write");
        writeln!(buf, "# config: {}", self.config_json).expect("vec write");
        let mut w = csv::Writer::from_writer(buf);
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    /// Writes `<command>.csv` and `<command>.jsonl` into `out`, or the CSV
    /// (or the text view, when there is one) to `stdout`.
    pub fn emit(&self, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(e.to_string());
        match out {
            None => match &self.text {
                Some(text) => stdout.write_all(text.as_bytes()).map_err(io),
                None => stdout.write_all(&self.csv_bytes()?).map_err(io),
            },
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
                let stem = self.command.replace('-', "_");
                let csv_path = dir.join(format!("{stem}.csv"));
                std::fs::write(&csv_path, self.csv_bytes()?).map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
                let jsonl_path = dir.join(format!("{stem}.jsonl"));
                let file = File::create(&jsonl_path).map_err(|e| CliError::Io(format!("{}: {e}", jsonl_path.display())))?;
                let mut w = BufWriter::new(file);
                write_records_jsonl(&mut w, &self.records)?;
                w.flush().map_err(io)?;
                if let Some(text) = &self.text {
                    stdout.write_all(text.as_bytes()).map_err(io)?;
                }
                writeln!(stdout, "wrote {} and {}", csv_path.display(), jsonl_path.display()).map_err(io)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            command: "simulate",
            config_json: "{\"seed\":1}".into(),
            columns: vec!["name", "value"],
            rows: vec![vec!["a,b".into(), num(0.1)]],
            ..Default::default()
        }
    }

    #[test]
    fn csv_has_header_and_quotes() {
        let text = String::from_utf8(sample().csv_bytes().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# ebtd simulate {}", env!("CARGO_PKG_VERSION")));
        assert_eq!(lines[1], format!("# config_hash: {}", config_hash("{\"seed\":1}")));
        assert_eq!(&lines[3..], ["name,value", "\"a,b\",0.1"]);
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(config_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = sample();
        r.records.push(Record { name: "x".into(), lhs: 1.0, rhs: 2.0, se: 0.5, seed: 3 });
        let mut stdout = Vec::new();
        r.emit(Some(dir.path()), &mut stdout).unwrap();
        let jsonl = std::fs::read_to_string(dir.path().join("simulate.jsonl")).unwrap();
        assert_eq!(jsonl.lines().count(), 1);
        assert_eq!(std::fs::read(dir.path().join("simulate.csv")).unwrap(), r.csv_bytes().unwrap());
    }
}
