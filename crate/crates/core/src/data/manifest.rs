use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// One image reference. `path` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Option<usize>,
    pub class_name: String,
}

/// An ordered list of images with optional class labels.
///
/// On disk this is a CSV file with header `path,label,class_name`; unlabeled
/// entries leave the last two fields empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub class_names: Vec<String>,
    /// Directory the entry paths are relative to.
    pub root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Row {
    path: String,
    label: Option<usize>,
    class_name: Option<String>,
}

fn manifest_err(path: &Path, detail: impl Into<String>) -> DataError {
    DataError::Manifest { path: path.to_path_buf(), detail: detail.into() }
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, class_names: Vec<String>, root: impl Into<PathBuf>) -> Self {
        Self { entries, class_names, root: root.into() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Absolute (root-joined) location of an entry.
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Number of labeled entries per class index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for label in self.entries.iter().filter_map(|e| e.label) {
            if label >= counts.len() {
                counts.resize(label + 1, 0);
            }
            counts[label] += 1;
        }
        counts
    }

    pub fn class_name(&self, class: usize) -> String {
        self.class_names.get(class).cloned().unwrap_or_else(|| format!("class{class}"))
    }

    /// Derive the class-name table from labeled entries; gaps get `class{i}`.
    fn infer_class_names(entries: &[ManifestEntry], path: &Path) -> Result<Vec<String>, DataError> {
        let mut names: BTreeMap<usize, &str> = BTreeMap::new();
        for e in entries {
            if let Some(l) = e.label {
                match names.insert(l, &e.class_name) {
                    Some(prev) if prev != e.class_name => {
                        return Err(manifest_err(
                            path,
                            format!("label {l} is named both `{prev}` and `{}`", e.class_name),
                        ))
                    }
                    _ => {}
                }
            }
        }
        let n = names.keys().next_back().map_or(0, |&k| k + 1);
        Ok((0..n).map(|i| names.get(&i).map_or_else(|| format!("class{i}"), |s| s.to_string())).collect())
    }

    pub fn read(path: &Path) -> Result<Self, DataError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| manifest_err(path, e.to_string()))?;
        let headers = reader.headers().map_err(|e| manifest_err(path, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "label", "class_name"] {
            return Err(manifest_err(path, format!("expected header `path,label,class_name`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut entries = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| manifest_err(path, format!("line {}: {e}", i + 2)))?;
            if row.path.is_empty() {
                return Err(manifest_err(path, format!("line {}: empty path", i + 2)));
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(row.path),
                label: row.label,
                class_name: row.class_name.unwrap_or_default(),
            });
        }
        let class_names = Self::infer_class_names(&entries, path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { entries, class_names, root })
    }

    /// Write as CSV, rewriting entry paths relative to the destination's
    /// directory.
    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        let dest_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut writer = csv::Writer::from_path(path).map_err(|e| manifest_err(path, e.to_string()))?;
        for e in &self.entries {
            let rel = relative_path(&self.resolve(e), &dest_dir);
            let row = Row {
                path: rel.to_string_lossy().replace('\\', "/"),
                label: e.label,
                class_name: e.label.map(|_| e.class_name.clone()),
            };
            writer.serialize(row).map_err(|err| manifest_err(path, err.to_string()))?;
        }
        if self.entries.is_empty() {
            writer.write_record(["path", "label", "class_name"]).map_err(|err| manifest_err(path, err.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn absolute(p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir().unwrap_or_default().join(p) };
    let mut out = PathBuf::new();
    for c in joined.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

/// `target` expressed relative to directory `base` (lexically).
pub(crate) fn relative_path(target: &Path, base: &Path) -> PathBuf {
    let (t, b) = (absolute(target), absolute(base));
    let tc: Vec<_> = t.components().collect();
    let bc: Vec<_> = b.components().collect();
    let common = tc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return t;
    }
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &tc[common..] {
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths() {
        assert_eq!(relative_path(Path::new("/a/b/img/x.pgm"), Path::new("/a/b")), PathBuf::from("img/x.pgm"));
        assert_eq!(relative_path(Path::new("/a/b/img/x.pgm"), Path::new("/a/c")), PathBuf::from("../b/img/x.pgm"));
        assert_eq!(relative_path(Path::new("/a/./b/../x"), Path::new("/a")), PathBuf::from("x"));
    }

    #[test]
    fn round_trip_through_another_directory() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("data");
        std::fs::create_dir_all(src.join("images")).unwrap();
        let m = Manifest::new(
            vec![
                ManifestEntry { path: "images/a.pgm".into(), label: Some(1), class_name: "b".into() },
                ManifestEntry { path: "images/b.pgm".into(), label: Some(0), class_name: "a, quoted".into() },
                ManifestEntry { path: "images/c.pgm".into(), label: None, class_name: String::new() },
            ],
            vec!["a, quoted".into(), "b".into()],
            &src,
        );
        let out_dir = dir.path().join("splits");
        std::fs::create_dir_all(&out_dir).unwrap();
        let out = out_dir.join("m.csv");
        m.write(&out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("path,label,class_name\n../data/images/a.pgm,1,b\n"));
        assert!(text.ends_with("../data/images/c.pgm,,\n"));
        let back = Manifest::read(&out).unwrap();
        assert_eq!(back.class_names, m.class_names);
        for (a, b) in back.entries.iter().zip(&m.entries) {
            assert_eq!(absolute(&back.resolve(a)), absolute(&m.resolve(b)));
            assert_eq!((a.label, &a.class_name), (b.label, &b.class_name));
        }
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "file,label\nx,1\n").unwrap();
        assert!(Manifest::read(&p).is_err());
    }

    #[test]
    fn conflicting_class_names_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,label,class_name\nx,0,a\ny,0,b\n").unwrap();
        assert!(Manifest::read(&p).is_err());
    }

    #[test]
    fn empty_manifest_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        Manifest::new(vec![], vec![], dir.path()).write(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "path,label,class_name\n");
        assert!(Manifest::read(&p).unwrap().is_empty());
    }
}
