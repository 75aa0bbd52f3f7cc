//! JSONL sample manifests.
//!
//! One object per line with the exact lowercase keys `id`, `image`,
//! `question` and `answer`. Additional keys are carried through opaquely so a
//! selected subset written back out keeps whatever upstream metadata the pool
//! had.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: i/o error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: duplicate id {id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        path: PathBuf,
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("{path}:{line}: record {id:?} has an empty answer")]
    EmptyAnswer {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: record {id:?} references missing image {image}")]
    MissingImage {
        path: PathBuf,
        line: usize,
        id: String,
        image: String,
    },
}

/// One `(image, question, answer)` training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    #[serde(rename = "image")]
    pub image_path: String,
    pub question: String,
    pub answer: String,
    /// Unknown keys, preserved in their original order.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl SampleRecord {
    pub fn new(
        id: impl Into<String>,
        image_path: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            image_path: image_path.into(),
            question: question.into(),
            answer: answer.into(),
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PoolStats {
    pub total_count: usize,
    pub distinct_image_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Verify that local image paths exist. URIs are not checked.
    pub check_images: bool,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedManifest {
    pub records: Vec<SampleRecord>,
    pub stats: PoolStats,
    /// Non-fatal findings such as empty questions.
    pub warnings: Vec<String>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest, ManifestError> {
    load_manifest_with(path, &LoadOptions::default())
}

pub fn load_manifest_with(
    path: impl AsRef<Path>,
    options: &LoadOptions,
) -> Result<LoadedManifest, ManifestError> {
    let path = path.as_ref();
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut images: HashSet<String> = HashSet::new();
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord =
            serde_json::from_str(&line).map_err(|e| ManifestError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if record.id.is_empty() {
            return Err(ManifestError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                message: "id must be non-empty".into(),
            });
        }
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(ManifestError::DuplicateId {
                path: path.to_path_buf(),
                id: record.id,
                first_line,
                second_line: line_no,
            });
        }
        if record.answer.trim().is_empty() {
            return Err(ManifestError::EmptyAnswer {
                path: path.to_path_buf(),
                line: line_no,
                id: record.id,
            });
        }
        if record.question.trim().is_empty() {
            warnings.push(format!(
                "line {line_no}: record {:?} has an empty question",
                record.id
            ));
        }
        if options.check_images && is_local_path(&record.image_path) {
            let resolved = resolve_image_path(base_dir, &record.image_path);
            if !resolved.exists() {
                return Err(ManifestError::MissingImage {
                    path: path.to_path_buf(),
                    line: line_no,
                    id: record.id,
                    image: resolved.display().to_string(),
                });
            }
        }
        seen.insert(record.id.clone(), line_no);
        images.insert(record.image_path.clone());
        records.push(record);
    }

    let stats = PoolStats {
        total_count: records.len(),
        distinct_image_count: images.len(),
    };
    Ok(LoadedManifest {
        records,
        stats,
        warnings,
    })
}

pub fn write_manifest(records: &[SampleRecord], path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let io_err = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for record in records {
        // Serialization of owned strings and JSON values cannot fail.
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// True for plain filesystem paths; false for `scheme://` URIs and data URIs.
pub fn is_local_path(image: &str) -> bool {
    !(image.contains("://") || image.starts_with("data:"))
}

/// Relative image paths are resolved against the manifest's directory.
pub fn resolve_image_path(base_dir: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    #[test]
    fn loads_three_records_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "m.jsonl",
            &[
                r#"{"id":"a","image":"x.png","question":"q1","answer":"A1"}"#,
                r#"{"id":"b","image":"x.png","question":"q2","answer":"A2"}"#,
                r#"{"id":"c","image":"y.png","question":"q3","answer":"A3"}"#,
            ],
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.stats.total_count, 3);
        assert_eq!(m.stats.distinct_image_count, 2);
        let ids: Vec<_> = m.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn empty_file_is_empty_pool() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(dir.path(), "m.jsonl", &[]);
        let m = load_manifest(&p).unwrap();
        assert!(m.records.is_empty());
        assert_eq!(m.stats, PoolStats::default());
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "m.jsonl",
            &[
                r#"{"id":"s1","image":"x","question":"q","answer":"a"}"#,
                r#"{"id":"s2","image":"x","question":"q","answer":"a"}"#,
                r#"{"id":"s1","image":"x","question":"q","answer":"a"}"#,
            ],
        );
        match load_manifest(&p) {
            Err(ManifestError::DuplicateId {
                id,
                first_line,
                second_line,
                ..
            }) => {
                assert_eq!(id, "s1");
                assert_eq!((first_line, second_line), (1, 3));
            }
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_is_reported_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "m.jsonl",
            &[
                r#"{"id":"s1","image":"x","question":"q","answer":"a"}"#,
                r#"{"id":"s2","image":"x","question":"q"}"#,
            ],
        );
        let err = load_manifest(&p).unwrap_err();
        assert!(matches!(err, ManifestError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn blank_answer_is_rejected_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "m.jsonl",
            &[r#"{"id":"s9","image":"x","question":"q","answer":"  \t"}"#],
        );
        let err = load_manifest(&p).unwrap_err();
        assert!(matches!(err, ManifestError::EmptyAnswer { ref id, .. } if id == "s9"));
    }

    #[test]
    fn empty_question_is_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_lines(
            dir.path(),
            "m.jsonl",
            &[r#"{"id":"s1","image":"x","question":"","answer":"a"}"#],
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn extra_fields_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"id":"s1","image":"x","question":"q","answer":"a","source":"flan","meta":{"k":[1,2]}}"#;
        let p = write_lines(dir.path(), "m.jsonl", &[line]);
        let m = load_manifest(&p).unwrap();
        let out = dir.path().join("o.jsonl");
        write_manifest(&m.records, &out).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap().trim_end(), line);
    }

    #[test]
    fn non_ascii_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![SampleRecord::new("ü1", "图片.jpg", "这是什么？ «quote» \"x\"\n", "Ответ 🚌")];
        let out = dir.path().join("o.jsonl");
        write_manifest(&recs, &out).unwrap();
        assert_eq!(load_manifest(&out).unwrap().records, recs);
    }

    #[test]
    fn image_existence_check_is_opt_in() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("present.png"), b"png").unwrap();
        let p = write_lines(
            dir.path(),
            "m.jsonl",
            &[
                r#"{"id":"s1","image":"present.png","question":"q","answer":"a"}"#,
                r#"{"id":"s2","image":"https://example.org/i.png","question":"q","answer":"a"}"#,
                r#"{"id":"s3","image":"absent.png","question":"q","answer":"a"}"#,
            ],
        );
        assert!(load_manifest(&p).is_ok());
        let err = load_manifest_with(&p, &LoadOptions { check_images: true }).unwrap_err();
        assert!(matches!(err, ManifestError::MissingImage { line: 3, .. }));
    }

    #[cfg(unix)]
    #[test]
    fn write_into_read_only_dir_fails() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let ro = dir.path().join("ro");
        fs::create_dir(&ro).unwrap();
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o555)).unwrap();
        let target = ro.join("out.jsonl");
        let res = write_manifest(&[SampleRecord::new("a", "i", "q", "x")], &target);
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o755)).unwrap();
        // Root ignores directory permissions; only assert when the write was refused.
        if !target.exists() {
            assert!(matches!(res, Err(ManifestError::Io { .. })));
        }
    }

    #[test]
    fn write_to_missing_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let res = write_manifest(&[], dir.path().join("nope/out.jsonl"));
        assert!(matches!(res, Err(ManifestError::Io { .. })));
    }
}
