//! CSV and sidecar-metadata output.
//!
//! Every experiment writes one CSV with a fixed, documented column order and
//! one `.meta.txt` sidecar. The CSV holds only deterministic values so that
//! re-running a config byte-identically reproduces it; wall-clock timing and
//! other run-local details go to the sidecar.

use std::fs;
use std::io::Write;
use std::path::Path;

/// FNV-1a over the raw config bytes; identifies the configuration in the
/// sidecar and in every output row.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A fully materialized result table.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Writes `<name>.csv` and `<name>.meta.txt` under `dir`.
pub fn write_outputs(
    dir: &Path,
    name: &str,
    table: &Table,
    metadata: &[(String, String)],
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}.csv")), table.to_csv())?;
    let mut meta = fs::File::create(dir.join(format!("{name}.meta.txt")))?;
    for (key, value) in metadata {
        writeln!(meta, "{key} = {value}")?;
    }
    Ok(())
}

/// Deterministic float formatting (shortest round-trip representation).
pub fn fmt_f64(value: f64) -> String {
    format!("{value}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_ne!(fnv1a64(b"config-a"), fnv1a64(b"config-b"));
    }

    #[test]
    fn csv_round_trip_shape() {
        let mut table = Table::new(vec!["a", "b"]);
        table.push(vec!["1".into(), fmt_f64(0.5)]);
        let csv = table.to_csv();
        assert_eq!(csv, "a,b\n1,0.5\n");
    }
}
