//! Line-oriented text files exchanged between pipeline stages.
//!
//! Every file starts with a `# <SCHEMA> v<version>` line; fields are
//! tab-separated and boxes are written as `x1,y1,x2,y2`.

use std::fs;
use std::path::Path;

use crate::bbox::BBox;
use crate::dataset::{write_file, Detection};
use crate::error::{Error, Result};
use crate::proposals::Proposal;

pub const DETECTIONS_HEADER: &str = "# HOIDET-DETECTIONS v1";
pub const PROPOSALS_HEADER: &str = "# HOIDET-PROPOSALS v1";
pub const SCORES_HEADER: &str = "# HOIDET-SCORES v1";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Split into numbered data lines after checking the header.
fn records<'a>(
    text: &'a str,
    header: &str,
    file: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        _ => return Err(Error::parse(file, 1, "header", format!("expected `{header}`"))),
    }
    Ok(lines
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty()))
}

fn fields<'a>(line: &'a str, n: usize, file: &str, lineno: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != n {
        return Err(Error::parse(
            file,
            lineno,
            "record",
            format!("expected {n} tab-separated fields, got {}", f.len()),
        ));
    }
    Ok(f)
}

fn parse_box(s: &str, file: &str, lineno: usize, field: &str) -> Result<BBox> {
    s.parse().map_err(|e| Error::parse(file, lineno, field, e))
}

fn parse_score(s: &str, file: &str, lineno: usize, field: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|e| Error::parse(file, lineno, field, e))?;
    if !v.is_finite() {
        return Err(Error::parse(file, lineno, field, "non-finite score"));
    }
    Ok(v)
}

pub fn detections_to_text(dets: &[Detection]) -> String {
    let mut s = format!("{DETECTIONS_HEADER}\n");
    for d in dets {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            d.image_id, d.category, d.bbox, d.score
        ));
    }
    s
}

pub fn parse_detections(text: &str, file: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (lineno, line) in records(text, DETECTIONS_HEADER, file)? {
        let f = fields(line, 4, file, lineno)?;
        let score = parse_score(f[3], file, lineno, "score")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(file, lineno, "score", "outside [0, 1]"));
        }
        out.push(Detection {
            image_id: f[0].to_string(),
            category: f[1].to_string(),
            bbox: parse_box(f[2], file, lineno, "box")?,
            score,
        });
    }
    Ok(out)
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    write_file(path, detections_to_text(dets).as_bytes())
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(&read_text(path)?, &path.display().to_string())
}

pub fn proposals_to_text<'a>(props: impl IntoIterator<Item = &'a Proposal>) -> String {
    let mut s = format!("{PROPOSALS_HEADER}\n");
    for p in props {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            p.image_id, p.object_category, p.human.bbox, p.human.score, p.object.bbox, p.object.score
        ));
    }
    s
}

pub fn parse_proposals(text: &str, file: &str) -> Result<Vec<Proposal>> {
    let mut out = Vec::new();
    for (lineno, line) in records(text, PROPOSALS_HEADER, file)? {
        let f = fields(line, 6, file, lineno)?;
        let image_id = f[0].to_string();
        let object_category = f[1].to_string();
        out.push(Proposal {
            human: Detection {
                image_id: image_id.clone(),
                category: crate::dataset::PERSON.to_string(),
                bbox: parse_box(f[2], file, lineno, "human box")?,
                score: parse_score(f[3], file, lineno, "human score")?,
            },
            object: Detection {
                image_id: image_id.clone(),
                category: object_category.clone(),
                bbox: parse_box(f[4], file, lineno, "object box")?,
                score: parse_score(f[5], file, lineno, "object score")?,
            },
            image_id,
            object_category,
        });
    }
    Ok(out)
}

/// One scored proposal: per-class probabilities for the classes of its object category.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub image_id: String,
    pub object_category: String,
    pub human: BBox,
    pub object: BBox,
    pub scores: Vec<(usize, f64)>,
}

pub fn scores_to_text(rows: &[ScoreRow]) -> String {
    let mut s = format!("{SCORES_HEADER}\n");
    for r in rows {
        let probs: Vec<String> = r.scores.iter().map(|(k, p)| format!("{k}:{p}")).collect();
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.image_id,
            r.object_category,
            r.human,
            r.object,
            probs.join(",")
        ));
    }
    s
}

pub fn parse_scores(text: &str, file: &str) -> Result<Vec<ScoreRow>> {
    let mut out = Vec::new();
    for (lineno, line) in records(text, SCORES_HEADER, file)? {
        let f = fields(line, 5, file, lineno)?;
        let mut scores = Vec::new();
        if !f[4].is_empty() {
            for pair in f[4].split(',') {
                let (k, p) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::parse(file, lineno, "scores", format!("`{pair}`")))?;
                let k = k
                    .parse()
                    .map_err(|e| Error::parse(file, lineno, "hoi_id", e))?;
                scores.push((k, parse_score(p, file, lineno, "prob")?));
            }
        }
        out.push(ScoreRow {
            image_id: f[0].to_string(),
            object_category: f[1].to_string(),
            human: parse_box(f[2], file, lineno, "human box")?,
            object: parse_box(f[3], file, lineno, "object box")?,
            scores,
        });
    }
    Ok(out)
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    write_file(path, scores_to_text(rows).as_bytes())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    parse_scores(&read_text(path)?, &path.display().to_string())
}

pub fn write_proposals<'a>(
    path: &Path,
    props: impl IntoIterator<Item = &'a Proposal>,
) -> Result<()> {
    write_file(path, proposals_to_text(props).as_bytes())
}

pub fn read_proposals(path: &Path) -> Result<Vec<Proposal>> {
    parse_proposals(&read_text(path)?, &path.display().to_string())
}
