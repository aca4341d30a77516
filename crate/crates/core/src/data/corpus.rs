//! Corpus discovery from a `<root>/{real,fake}/<identity>/<image>` tree or a
//! `path,label,identity` manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::nn::train::{LABEL_FAKE, LABEL_REAL};

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    pub path: PathBuf,
    /// 0 = real, 1 = fake.
    pub label: usize,
    pub identity: String,
}

pub fn parse_label(s: &str) -> Option<usize> {
    match s.trim().to_ascii_lowercase().as_str() {
        "real" | "0" => Some(LABEL_REAL),
        "fake" | "1" => Some(LABEL_FAKE),
        _ => None,
    }
}

pub fn label_name(label: usize) -> &'static str {
    if label == LABEL_FAKE {
        "fake"
    } else {
        "real"
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map_or(false, |e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

fn scan_tree(root: &Path) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for class_dir in sorted_entries(root)? {
        if !class_dir.is_dir() {
            continue;
        }
        let name = class_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if name.starts_with('.') {
            continue;
        }
        let label = match name.as_str() {
            "real" => LABEL_REAL,
            "fake" => LABEL_FAKE,
            _ => return Err(Error::Corpus(format!("unknown label directory {}", class_dir.display()))),
        };
        for id_dir in sorted_entries(&class_dir)? {
            if !id_dir.is_dir() {
                if is_image(&id_dir) {
                    return Err(Error::Corpus(format!("{} is not inside an identity directory", id_dir.display())));
                }
                continue;
            }
            let identity = id_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            for file in sorted_entries(&id_dir)? {
                if file.is_file() && is_image(&file) {
                    out.push(Sample { path: file, label, identity: identity.clone() });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ManifestRow {
    path: String,
    label: String,
    identity: String,
}

/// Relative manifest paths are resolved against `root`.
fn read_manifest(root: &Path, manifest: &Path) -> Result<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| Error::Corpus(format!("{}: {e}", manifest.display())))?;
    let mut out = Vec::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| Error::Corpus(format!("{} row {}: {e}", manifest.display(), line + 2)))?;
        let label = parse_label(&row.label)
            .ok_or_else(|| Error::Corpus(format!("{} row {}: unknown label {}", manifest.display(), line + 2, row.label)))?;
        let p = PathBuf::from(&row.path);
        let path = if p.is_absolute() { p } else { root.join(p) };
        if !path.is_file() {
            return Err(Error::Corpus(format!("unreadable file {}", path.display())));
        }
        out.push(Sample { path, label, identity: row.identity });
    }
    Ok(out)
}

/// Samples sorted by path. With a manifest, its rows alone define the
/// corpus and take precedence over the directory names.
pub fn load_corpus(root: &Path, manifest: Option<&Path>) -> Result<Vec<Sample>> {
    if !root.is_dir() {
        return Err(Error::Corpus(format!("{} is not a directory", root.display())));
    }
    let mut samples = match manifest {
        Some(m) => read_manifest(root, m)?,
        None => scan_tree(root)?,
    };
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    samples.sort();
    let mut seen = HashSet::new();
    for s in &samples {
        if !seen.insert(&s.path) {
            return Err(Error::Corpus(format!("duplicate path {}", s.path.display())));
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(p: &Path) {
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        crate::imgproc::GrayImage::filled(4, 4, 9).save(p).unwrap();
    }

    #[test]
    fn tree_layout() {
        let dir = tempfile::tempdir().unwrap();
        for id in ["a", "b"] {
            for f in ["1.png", "2.pgm"] {
                touch(&dir.path().join("real").join(id).join(f));
            }
        }
        fs::write(dir.path().join("real/a/notes.txt"), "x").unwrap();
        let s = load_corpus(dir.path(), None).unwrap();
        assert_eq!(s.len(), 4);
        let ids: HashSet<_> = s.iter().map(|s| s.identity.as_str()).collect();
        assert_eq!(ids.len(), 2);
        assert!(s.windows(2).all(|w| w[0].path < w[1].path));
        assert!(s.iter().all(|s| s.label == LABEL_REAL));
    }

    #[test]
    fn manifest_wins() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("real/x/1.png"));
        touch(&dir.path().join("real/x/2.png"));
        let m = dir.path().join("m.csv");
        fs::write(&m, "path,label,identity\nreal/x/1.png,fake,m1\nreal/x/2.png,1,m1\n").unwrap();
        let s = load_corpus(dir.path(), Some(&m)).unwrap();
        assert!(s.iter().all(|s| s.label == LABEL_FAKE && s.identity == "m1"));
        fs::write(&m, "path,label,identity\nreal/x/1.png,fake,m1\nreal/x/1.png,fake,m1\n").unwrap();
        assert!(load_corpus(dir.path(), Some(&m)).is_err());
        fs::write(&m, "path,label,identity\nreal/x/9.png,fake,m1\n").unwrap();
        assert!(load_corpus(dir.path(), Some(&m)).is_err());
        fs::write(&m, "path,label,identity\nreal/x/1.png,maybe,m1\n").unwrap();
        assert!(load_corpus(dir.path(), Some(&m)).is_err());
    }

    #[test]
    fn empty_and_bad_roots() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus(dir.path(), None), Err(Error::EmptyCorpus)));
        touch(&dir.path().join("other/x/1.png"));
        assert!(matches!(load_corpus(dir.path(), None), Err(Error::Corpus(_))));
        assert!(load_corpus(&dir.path().join("missing"), None).is_err());
    }
}
