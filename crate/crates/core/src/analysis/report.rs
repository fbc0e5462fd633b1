use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One flat report line: a condition, identity or risk entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub seed: u64,
}

pub fn write_records_csv<W: Write>(writer: W, records: &[Record]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_jsonl<W: Write>(mut writer: W, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(|e| Error::Io(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_jsonl_shapes() {
        let recs = vec![Record { name: "eq7".into(), lhs: 1.5, rhs: 2.0, se: 0.01, seed: 7 }];
        let mut csv = Vec::new();
        write_records_csv(&mut csv, &recs).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "name,lhs,rhs,se,seed\neq7,1.5,2.0,0.01,7\n");
        let mut jl = Vec::new();
        write_records_jsonl(&mut jl, &recs).unwrap();
        assert_eq!(String::from_utf8(jl).unwrap(), "{\"name\":\"eq7\",\"lhs\":1.5,\"rhs\":2.0,\"se\":0.01,\"seed\":7}\n");
    }
}
