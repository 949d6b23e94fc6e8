use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, DatasetError, DatasetSplit, Pool, Provenance, SplitEntry, DATASET_SCHEMA, DATASET_SCHEMA_VERSION};

/// One exported line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub id: String,
    pub text: String,
    pub label_id: String,
    pub provenance: Provenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExportHeader {
    schema: String,
    version: u32,
    kind: String,
    part: String,
    plan: String,
    plan_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportReport {
    pub files: Vec<PathBuf>,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

fn resolve(split_part: &[SplitEntry], pool: &Pool) -> Result<Vec<ExportRecord>, DatasetError> {
    let mut out = Vec::with_capacity(split_part.len());
    for e in split_part {
        let item = pool
            .get(&e.id)
            .filter(|i| !i.is_removed())
            .ok_or_else(|| DatasetError::DanglingId(e.id.clone()))?;
        out.push(ExportRecord {
            id: item.id.clone(),
            text: item.text.clone(),
            label_id: e.label_id.clone(),
            provenance: item.provenance,
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Writes `train.jsonl`, `validation.jsonl`, `test.jsonl` and `split.json`
/// into `dir`. Every id must resolve to an unremoved pool item; nothing is
/// written otherwise.
pub fn export_split(split: &DatasetSplit, pool: &Pool, dir: impl AsRef<Path>) -> Result<ExportReport, DatasetError> {
    let dir = dir.as_ref();
    let parts = [
        ("train", resolve(&split.train, pool)?),
        ("validation", resolve(&split.validation, pool)?),
        ("test", resolve(&split.test, pool)?),
    ];
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    for (name, records) in &parts {
        let path = dir.join(format!("{name}.jsonl"));
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        let header = ExportHeader {
            schema: DATASET_SCHEMA.into(),
            version: DATASET_SCHEMA_VERSION,
            kind: "split".into(),
            part: name.to_string(),
            plan: split.plan.name.clone(),
            plan_digest: split.plan_digest.clone(),
        };
        serde_json::to_writer(&mut w, &header).expect("header serializes");
        w.write_all(b"\n").map_err(io_err(&path))?;
        for r in records {
            serde_json::to_writer(&mut w, r).expect("record serializes");
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        files.push(path);
    }
    let manifest = dir.join("split.json");
    let json = serde_json::to_string_pretty(split).expect("split serializes");
    std::fs::write(&manifest, json + "\n").map_err(io_err(&manifest))?;
    files.push(manifest);
    Ok(ExportReport {
        files,
        train: parts[0].1.len(),
        validation: parts[1].1.len(),
        test: parts[2].1.len(),
    })
}

/// Reads one exported part file, checking its header.
pub fn read_export(path: impl AsRef<Path>) -> Result<Vec<ExportRecord>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let fmt = |line: usize, message: String| DatasetError::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if i == 0 {
            let h: ExportHeader = serde_json::from_str(&line).map_err(|e| fmt(1, format!("bad header: {e}")))?;
            if h.schema != DATASET_SCHEMA || h.version != DATASET_SCHEMA_VERSION || h.kind != "split" {
                return Err(fmt(1, "not a split file".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| fmt(i + 1, e.to_string()))?);
    }
    Ok(out)
}
