use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub label: String,
}

/// Dataset index: ordered class names and one row per image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Class index of every row.
    pub fn labels(&self) -> Vec<usize> {
        let index: HashMap<&str, usize> = self.class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        self.rows.iter().map(|r| index[r.label.as_str()]).collect()
    }

    /// Text form accepted by [`parse_manifest`].
    pub fn to_text(&self) -> String {
        let mut s = format!("classes: {}\n", self.class_names.join(","));
        for r in &self.rows {
            s.push_str(&format!("{},{}\n", r.path.display(), r.label));
        }
        s
    }
}

/// Parses manifest text. Relative image paths are resolved against `base`.
///
/// The first non-comment line is `classes: a,b,...`; every following line is
/// `path,label`. Blank lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Manifest> {
    let mut lines =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (lineno, header) = lines.next().ok_or_else(|| Error::Schema("manifest has no `classes:` line".into()))?;
    let names = header
        .strip_prefix("classes:")
        .ok_or_else(|| Error::Schema(format!("line {lineno}: expected `classes:`, got `{header}`")))?;
    let class_names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
    if class_names.iter().any(String::is_empty) {
        return Err(Error::Schema(format!("line {lineno}: empty class name")));
    }
    let declared: HashSet<&str> = class_names.iter().map(String::as_str).collect();
    if declared.len() != class_names.len() {
        return Err(Error::Schema(format!("line {lineno}: duplicate class name")));
    }

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in lines {
        let (path, label) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Schema(format!("line {lineno}: expected `path,label`, got `{line}`")))?;
        let (path, label) = (path.trim(), label.trim());
        if !declared.contains(label) {
            return Err(Error::Schema(format!("line {lineno}: undeclared label `{label}` for {path}")));
        }
        let path = base.join(path);
        if !seen.insert(path.clone()) {
            return Err(Error::Schema(format!("line {lineno}: duplicate path {}", path.display())));
        }
        rows.push(ManifestRow { path, label: label.to_string() });
    }
    if rows.is_empty() {
        log::warn!("manifest lists no samples");
    }
    Ok(Manifest { class_names, rows })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
