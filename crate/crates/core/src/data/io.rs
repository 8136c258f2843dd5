//! File formats.
//!
//! Binary embeddings ("SVE1", little-endian): magic, u32 dim, u64 count,
//! then per record a u16-length-prefixed UTF-8 utterance id, a u8
//! has-speaker flag, the optional speaker id (same encoding) and dim
//! f64 components. The binary round trip is bit-exact.
//!
//! Text embeddings: a header line `#dim=D labeled={0,1}` followed by one
//! record per line, `utt_id [spk_id] v1 v2 ...`. Ids must be free of
//! whitespace in this format.
//!
//! Trial lists, keys, scores and enrollment maps are tab-separated text:
//! `enroll<TAB>test`, `enroll<TAB>test<TAB>{target|nontarget}`,
//! `enroll<TAB>test<TAB>score` and `model<TAB>utt1,utt2,...`. Columns
//! beyond the required ones are ignored in trial and key files (NIST
//! keys carry side info there). Floats are serialized with 17
//! significant digits, enough for an exact f64 round trip.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::bin;
use super::{
    EmbeddingRecord, EmbeddingSet, EnrollmentMap, EnrollmentModel, KeyEntry, ScoreSet,
    ScoredTrial, Trial, TrialKey, TrialLabel, TrialList,
};
use crate::error::{Error, Result};

const EMBEDDING_MAGIC: &[u8; 4] = b"SVE1";

/// On-disk representation of an embedding set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Text,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Format::Binary),
            "text" => Ok(Format::Text),
            other => Err(Error::invalid(
                "format",
                format!("`{other}` is not one of binary, text"),
            )),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Binary => write_embeddings_binary(set, path),
        Format::Text => write_embeddings_text(set, path),
    }
}

pub fn read_embeddings(path: &Path, format: Format) -> Result<EmbeddingSet> {
    match format {
        Format::Binary => read_embeddings_binary(path),
        Format::Text => read_embeddings_text(path),
    }
}

fn write_embeddings_binary(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| bin::io_err(path, e))?);
    let io = |e| bin::io_err(path, e);
    w.write_all(EMBEDDING_MAGIC).map_err(io)?;
    bin::write_u32(&mut w, set.dim() as u32).map_err(io)?;
    bin::write_u64(&mut w, set.len() as u64).map_err(io)?;
    for rec in set.records() {
        bin::write_str(&mut w, &rec.utterance_id)?;
        match &rec.speaker_id {
            Some(spk) => {
                w.write_all(&[1]).map_err(io)?;
                bin::write_str(&mut w, spk)?;
            }
            None => w.write_all(&[0]).map_err(io)?,
        }
        bin::write_f64_slice(&mut w, &rec.vector).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_embeddings_binary(path: &Path) -> Result<EmbeddingSet> {
    let mut r = BufReader::new(File::open(path).map_err(|e| bin::io_err(path, e))?);
    bin::expect_magic(&mut r, EMBEDDING_MAGIC, path)?;
    let header = |e| Error::parse(path, 0, format!("truncated header: {e}"));
    let dim = bin::read_u32(&mut r).map_err(header)? as usize;
    let count = bin::read_u64(&mut r).map_err(header)? as usize;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        // For binary files the error "line" is the 1-based record index.
        let ctx = |e| Error::parse(path, i + 1, format!("record {}: {e}", i + 1));
        let utterance_id = bin::read_str(&mut r).map_err(ctx)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(ctx)?;
        let speaker_id = match flag[0] {
            0 => None,
            1 => Some(bin::read_str(&mut r).map_err(ctx)?),
            other => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("record {}: bad speaker flag {other}", i + 1),
                ))
            }
        };
        let vector = bin::read_f64_vec(&mut r, dim).map_err(ctx)?;
        records.push(EmbeddingRecord {
            utterance_id,
            speaker_id,
            vector,
        });
    }
    EmbeddingSet::new(dim, records)
}

fn write_embeddings_text(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let labeled = set.is_labeled();
    let mut w = BufWriter::new(File::create(path).map_err(|e| bin::io_err(path, e))?);
    let io = |e| bin::io_err(path, e);
    writeln!(w, "#dim={} labeled={}", set.dim(), labeled as u8).map_err(io)?;
    for rec in set.records() {
        let ids_ok = !rec.utterance_id.chars().any(char::is_whitespace)
            && rec
                .speaker_id
                .as_deref()
                .is_none_or(|s| !s.chars().any(char::is_whitespace));
        if rec.utterance_id.is_empty() || !ids_ok {
            return Err(Error::invalid(
                "utterance_id",
                format!(
                    "`{}`: text format requires non-empty, whitespace-free ids",
                    rec.utterance_id
                ),
            ));
        }
        write!(w, "{}", rec.utterance_id).map_err(io)?;
        if let Some(spk) = &rec.speaker_id {
            write!(w, " {spk}").map_err(io)?;
        }
        for v in &rec.vector {
            write!(w, " {}", fmt_f64(*v)).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_embeddings_text(path: &Path) -> Result<EmbeddingSet> {
    let r = BufReader::new(File::open(path).map_err(|e| bin::io_err(path, e))?);
    let mut lines = r.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file, expected header"))?;
    let header = header.map_err(|e| bin::io_err(path, e))?;
    let (dim, labeled) = parse_text_header(&header)
        .ok_or_else(|| Error::parse(path, 1, format!("bad header `{header}`")))?;

    let mut records = Vec::new();
    for (lineno, line) in lines {
        let line = line.map_err(|e| bin::io_err(path, e))?;
        let record_index = lineno; // header is line 1, record r is line r+1
        let mut tokens = line.split_whitespace();
        let utterance_id = tokens
            .next()
            .ok_or_else(|| Error::parse(path, lineno + 1, format!("record {record_index}: empty line")))?
            .to_string();
        let speaker_id = if labeled {
            Some(
                tokens
                    .next()
                    .ok_or_else(|| {
                        Error::parse(
                            path,
                            lineno + 1,
                            format!("record {record_index}: missing speaker id"),
                        )
                    })?
                    .to_string(),
            )
        } else {
            None
        };
        let vector = tokens
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::parse(
                        path,
                        lineno + 1,
                        format!("record {record_index}: bad float `{t}`"),
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.len() != dim {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!(
                    "record {record_index}: expected {dim} components, got {}",
                    vector.len()
                ),
            ));
        }
        records.push(EmbeddingRecord {
            utterance_id,
            speaker_id,
            vector,
        });
    }
    EmbeddingSet::new(dim, records)
}

fn parse_text_header(line: &str) -> Option<(usize, bool)> {
    let rest = line.strip_prefix("#dim=")?;
    let (dim, rest) = rest.split_once(" labeled=")?;
    let dim = dim.parse::<usize>().ok()?;
    let labeled = match rest.trim() {
        "0" => false,
        "1" => true,
        _ => return None,
    };
    Some((dim, labeled))
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let r = BufReader::new(File::open(path).map_err(|e| bin::io_err(path, e))?);
    Ok(r.lines().enumerate().map(|(i, l)| (i + 1, l)))
}

pub fn read_trials(path: &Path) -> Result<TrialList> {
    let mut trials = Vec::new();
    for (lineno, line) in open_lines(path)? {
        let line = line.map_err(|e| bin::io_err(path, e))?;
        let mut cols = line.split('\t');
        let (enroll, test) = match (cols.next(), cols.next()) {
            (Some(e), Some(t)) if !e.is_empty() && !t.is_empty() => (e, t),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    "expected at least 2 tab-separated columns",
                ))
            }
        };
        trials.push(Trial::new(enroll, test));
    }
    TrialList::new(trials)
}

pub fn write_trials(list: &TrialList, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| bin::io_err(path, e))?);
    for t in list.trials() {
        writeln!(w, "{}\t{}", t.enroll_id, t.test_id).map_err(|e| bin::io_err(path, e))?;
    }
    w.flush().map_err(|e| bin::io_err(path, e))
}

pub fn read_key(path: &Path) -> Result<TrialKey> {
    let mut entries = Vec::new();
    for (lineno, line) in open_lines(path)? {
        let line = line.map_err(|e| bin::io_err(path, e))?;
        let mut cols = line.split('\t');
        let (enroll, test, label) = match (cols.next(), cols.next(), cols.next()) {
            (Some(e), Some(t), Some(l)) if !e.is_empty() && !t.is_empty() => (e, t, l),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno,
                    "expected at least 3 tab-separated columns",
                ))
            }
        };
        let label = match label {
            "target" => TrialLabel::Target,
            "nontarget" => TrialLabel::Nontarget,
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unknown label token `{other}`"),
                ))
            }
        };
        entries.push(KeyEntry {
            trial: Trial::new(enroll, test),
            label,
        });
    }
    TrialKey::new(entries)
}

pub fn write_key(key: &TrialKey, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| bin::io_err(path, e))?);
    for e in key.entries() {
        writeln!(w, "{}\t{}\t{}", e.trial.enroll_id, e.trial.test_id, e.label)
            .map_err(|err| bin::io_err(path, err))?;
    }
    w.flush().map_err(|e| bin::io_err(path, e))
}

pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    let mut scores = Vec::new();
    for (lineno, line) in open_lines(path)? {
        let line = line.map_err(|e| bin::io_err(path, e))?;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 3 tab-separated columns, got {}", cols.len()),
            ));
        }
        let score = cols[2].parse::<f64>().map_err(|_| {
            Error::parse(path, lineno, format!("bad score `{}`", cols[2]))
        })?;
        scores.push(ScoredTrial {
            trial: Trial::new(cols[0], cols[1]),
            score,
        });
    }
    ScoreSet::new(scores)
}

pub fn write_scores(set: &ScoreSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| bin::io_err(path, e))?);
    for s in set.scores() {
        writeln!(
            w,
            "{}\t{}\t{}",
            s.trial.enroll_id,
            s.trial.test_id,
            fmt_f64(s.score)
        )
        .map_err(|e| bin::io_err(path, e))?;
    }
    w.flush().map_err(|e| bin::io_err(path, e))
}

pub fn read_enrollment_map(path: &Path) -> Result<EnrollmentMap> {
    let mut models = Vec::new();
    for (lineno, line) in open_lines(path)? {
        let line = line.map_err(|e| bin::io_err(path, e))?;
        let (model_id, utts) = line.split_once('\t').ok_or_else(|| {
            Error::parse(path, lineno, "expected 2 tab-separated columns")
        })?;
        let utterance_ids: Vec<String> = utts
            .split(',')
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if model_id.is_empty() || utterance_ids.is_empty() {
            return Err(Error::parse(path, lineno, "empty model id or utterance list"));
        }
        models.push(EnrollmentModel {
            model_id: model_id.to_string(),
            utterance_ids,
        });
    }
    EnrollmentMap::new(models)
}

pub fn write_enrollment_map(map: &EnrollmentMap, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| bin::io_err(path, e))?);
    for m in map.models() {
        writeln!(w, "{}\t{}", m.model_id, m.utterance_ids.join(","))
            .map_err(|e| bin::io_err(path, e))?;
    }
    w.flush().map_err(|e| bin::io_err(path, e))
}
