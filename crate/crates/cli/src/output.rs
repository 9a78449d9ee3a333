//! JSON and CSV writers. Numbers use Rust's shortest round-trip formatting,
//! so equal results give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dstruct::geometry::EmbeddingField;
use serde::Serialize;

use crate::CliError;

pub fn to_json<T: Serialize>(value: &T, indent: usize) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let res = if indent == 0 {
        serde_json::to_writer(&mut buf, value)
    } else {
        let pad = vec![b' '; indent];
        let fmt = serde_json::ser::PrettyFormatter::with_indent(&pad);
        value.serialize(&mut serde_json::Serializer::with_formatter(&mut buf, fmt))
    };
    res.map_err(|e| CliError::Validation(format!("cannot serialize output: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub struct OutDir {
    root: PathBuf,
    indent: usize,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path, indent: usize) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            indent,
            written: Vec::new(),
        })
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, text)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = to_json(value, self.indent)?;
        self.write_text(name, &text)
    }

    pub fn indent(&self) -> usize {
        self.indent
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// CSV with a header row; `rows` are already formatted cells.
pub fn csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn cells(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// `slice,node,xi_*,x_*` for every node of every slice.
pub fn plotdata(slices: &[EmbeddingField], extra: &[(&str, Vec<Vec<f64>>)]) -> String {
    let Some(first) = slices.first() else {
        return String::new();
    };
    let g = first.grid();
    let mut header = vec!["slice".to_string(), "node".to_string()];
    header.extend((0..g.dim()).map(|a| format!("xi_{a}")));
    header.extend((0..first.ambient_dim()).map(|a| format!("x_{a}")));
    header.extend(extra.iter().map(|(name, _)| name.to_string()));
    let mut rows = Vec::with_capacity(slices.len() * g.len());
    for (t, e) in slices.iter().enumerate() {
        for i in 0..g.len() {
            let mut r = vec![t.to_string(), i.to_string()];
            r.extend(cells(&g.coords(i)));
            r.extend(cells(e.point(i)));
            for (_, col) in extra {
                r.push(col[t][i].to_string());
            }
            rows.push(r);
        }
    }
    csv(&header, rows)
}

/// Compact description of files written, one per line.
pub fn summary(paths: &[PathBuf]) -> String {
    let mut s = String::new();
    for p in paths {
        let _ = writeln!(s, "wrote {}", p.display());
    }
    s
}
