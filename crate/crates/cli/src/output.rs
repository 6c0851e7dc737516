//! Atomic file output and fixed-format tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use manakov_core::C64;

use crate::CliError;

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Fixed scientific format with round-trip precision.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // Drop the sign of negative zero so output does not depend on it.
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}

/// A CSV table whose first line carries the config digest.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self, digest: &str) -> String {
        let mut s = format!("# config_sha256={digest}\n");
        s.push_str(&self.header.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path, digest: &str) -> Result<(), CliError> {
        write_atomic(path, self.render(digest).as_bytes())
    }
}

/// `re, im` cells.
pub fn cplx(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

/// Plain-text run report: `key: value` lines grouped under headings.
pub struct Report {
    text: String,
}

impl Report {
    pub fn new(command: &str, digest: &str) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "command: {command}");
        let _ = writeln!(text, "config_sha256: {digest}");
        Self { text }
    }

    pub fn section(&mut self, name: &str) {
        let _ = writeln!(self.text, "\n[{name}]");
    }

    pub fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key}: {value}");
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(num(1.0), "1.0000000000000000e0");
        assert_eq!(num(-0.0), num(0.0));
        let x = 0.1f64 + 0.2;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn table_render() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        assert_eq!(t.render("ff"), "# config_sha256=ff\na,b\n1,2\n");
    }
}
