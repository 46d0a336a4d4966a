//! Header/body and header/sub-header detection over laid-out text boxes.
//!
//! Page coordinates have `y` growing downward, so reading order is
//! ascending `y0`, then ascending `x0`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{data_lines, PairDataset, PairRecord, PairRole};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) || x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidArgument(format!(
                "degenerate box ({x0}, {y0}, {x1}, {y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

/// One run of text in a single font and size on one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub doc_id: String,
    pub page_id: String,
    pub font_id: String,
    pub font_size: f64,
    pub bbox: BBox,
    pub char_count: u64,
}

impl TextBox {
    pub fn new(
        doc_id: impl Into<String>,
        page_id: impl Into<String>,
        font_id: impl Into<String>,
        font_size: f64,
        bbox: BBox,
        char_count: u64,
    ) -> Result<Self> {
        if !(font_size > 0.0 && font_size.is_finite()) {
            return Err(Error::InvalidArgument(format!("font size must be positive, got {font_size}")));
        }
        let font_id = font_id.into();
        if font_id.is_empty() {
            return Err(Error::InvalidArgument("empty font id".into()));
        }
        Ok(Self {
            doc_id: doc_id.into(),
            page_id: page_id.into(),
            font_id,
            font_size,
            bbox,
            char_count,
        })
    }

    pub fn to_line(&self) -> String {
        let b = &self.bbox;
        format!(
            "{}\t{}\t{}\t{}\t{},{},{},{}\t{}",
            self.doc_id, self.page_id, self.font_id, self.font_size, b.x0, b.y0, b.x1, b.y1, self.char_count
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceAxis {
    /// Euclidean distance between box centers.
    Planar,
    /// Vertical offset between box centers only.
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub subheader_distance_threshold: f64,
    pub body_min_chars: u64,
    pub min_boxes_per_page: usize,
    pub distance_axis: DistanceAxis,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            subheader_distance_threshold: 150.0,
            body_min_chars: 100,
            min_boxes_per_page: 2,
            distance_axis: DistanceAxis::Planar,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.subheader_distance_threshold > 0.0) {
            return Err(Error::InvalidArgument("distance threshold must be positive".into()));
        }
        if self.body_min_chars == 0 {
            return Err(Error::InvalidArgument("body character threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn distance(&self, a: &BBox, b: &BBox) -> f64 {
        let (ax, ay) = a.center();
        let (bx, by) = b.center();
        match self.distance_axis {
            DistanceAxis::Planar => (ax - bx).hypot(ay - by),
            DistanceAxis::Vertical => (ay - by).abs(),
        }
    }
}

fn reading_order(a: &TextBox, b: &TextBox) -> Ordering {
    a.bbox.y0.total_cmp(&b.bbox.y0).then(a.bbox.x0.total_cmp(&b.bbox.x0))
}

/// `Less` when `a` is the more header-like box: larger font size, then
/// larger area, then earlier in reading order.
fn prominence(a: &TextBox, b: &TextBox) -> Ordering {
    b.font_size
        .total_cmp(&a.font_size)
        .then(b.bbox.area().total_cmp(&a.bbox.area()))
        .then(reading_order(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    TooFewBoxes,
}

/// Index of the page's header box.
pub fn detect_header(page: &[TextBox], cfg: &ExtractionConfig) -> std::result::Result<usize, SkipReason> {
    if page.is_empty() || page.len() < cfg.min_boxes_per_page {
        return Err(SkipReason::TooFewBoxes);
    }
    Ok((0..page.len())
        .min_by(|&a, &b| prominence(&page[a], &page[b]).then(a.cmp(&b)))
        .expect("non-empty page"))
}

/// Most prominent non-header box within the distance threshold of the header.
pub fn detect_subheader(page: &[TextBox], header: usize, cfg: &ExtractionConfig) -> Option<usize> {
    let h = &page[header].bbox;
    (0..page.len())
        .filter(|&i| i != header && cfg.distance(&page[i].bbox, h) <= cfg.subheader_distance_threshold)
        .min_by(|&a, &b| prominence(&page[a], &page[b]).then(a.cmp(&b)))
}

/// Nearest box with at least `body_min_chars` characters, as a
/// `(header font, body font)` pair.
pub fn detect_body_pair(page: &[TextBox], header: usize, cfg: &ExtractionConfig) -> Option<(String, String)> {
    let h = &page[header].bbox;
    (0..page.len())
        .filter(|&i| i != header && page[i].char_count >= cfg.body_min_chars)
        .min_by(|&a, &b| {
            cfg.distance(&page[a].bbox, h)
                .total_cmp(&cfg.distance(&page[b].bbox, h))
                .then(reading_order(&page[a], &page[b]))
                .then(a.cmp(&b))
        })
        .map(|i| (page[header].font_id.clone(), page[i].font_id.clone()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionDiagnostics {
    pub documents: usize,
    pub pages: usize,
    pub skipped_pages: usize,
    pub malformed_records: usize,
    pub body_pairs: usize,
    pub subheader_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub header_body: PairDataset,
    pub header_subheader: PairDataset,
    pub diagnostics: ExtractionDiagnostics,
}

struct DocumentPairs {
    pages: usize,
    skipped: usize,
    body: Vec<PairRecord>,
    subheader: Option<PairRecord>,
}

fn extract_document(pages: &[Vec<&TextBox>], cfg: &ExtractionConfig) -> DocumentPairs {
    let mut out = DocumentPairs {
        pages: pages.len(),
        skipped: 0,
        body: Vec::new(),
        subheader: None,
    };
    for page in pages {
        let page: Vec<TextBox> = page.iter().map(|b| (*b).clone()).collect();
        let header = match detect_header(&page, cfg) {
            Ok(h) => h,
            Err(reason) => {
                debug!("skipping page {}/{}: {reason:?}", page.first().map_or("", |b| &b.doc_id), page.first().map_or("", |b| &b.page_id));
                out.skipped += 1;
                continue;
            }
        };
        if let Some((h, b)) = detect_body_pair(&page, header, cfg) {
            out.body.push(PairRecord::new(h, b, 1));
        }
        if out.subheader.is_none() {
            if let Some(s) = detect_subheader(&page, header, cfg) {
                out.subheader = Some(PairRecord::new(page[header].font_id.clone(), page[s].font_id.clone(), 1));
            }
        }
    }
    out
}

/// Groups boxes by document and page, keeping first-appearance order.
fn group(boxes: &[TextBox]) -> Vec<Vec<Vec<&TextBox>>> {
    let mut docs: Vec<Vec<Vec<&TextBox>>> = Vec::new();
    let mut doc_index: HashMap<&str, usize> = HashMap::new();
    let mut page_index: HashMap<(&str, &str), usize> = HashMap::new();
    for b in boxes {
        let d = *doc_index.entry(&b.doc_id).or_insert_with(|| {
            docs.push(Vec::new());
            docs.len() - 1
        });
        let pages = &mut docs[d];
        let p = *page_index.entry((&b.doc_id, &b.page_id)).or_insert_with(|| {
            pages.push(Vec::new());
            pages.len() - 1
        });
        pages[p].push(b);
    }
    docs
}

/// Header/body pairs (at most one per page) and header/sub-header pairs
/// (at most one per document, from its first page that has one).
pub fn extract_pairs(boxes: &[TextBox], cfg: &ExtractionConfig) -> Result<Extraction> {
    cfg.validate()?;
    let docs = group(boxes);
    let per_doc: Vec<DocumentPairs> = docs.par_iter().map(|pages| extract_document(pages, cfg)).collect();
    let mut diagnostics = ExtractionDiagnostics {
        documents: docs.len(),
        ..Default::default()
    };
    let mut body = Vec::new();
    let mut sub = Vec::new();
    for d in per_doc {
        diagnostics.pages += d.pages;
        diagnostics.skipped_pages += d.skipped;
        diagnostics.body_pairs += d.body.len();
        body.extend(d.body);
        if let Some(s) = d.subheader {
            diagnostics.subheader_pairs += 1;
            sub.push(s);
        }
    }
    Ok(Extraction {
        header_body: PairDataset::new(PairRole::HeaderBody, body)?,
        header_subheader: PairDataset::new(PairRole::HeaderSubheader, sub)?,
        diagnostics,
    })
}

/// A page-record line that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedRecord {
    pub line: usize,
    pub reason: String,
}

fn parse_box(line: &str) -> std::result::Result<TextBox, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 6 {
        return Err(format!("expected 6 columns, found {}", cols.len()));
    }
    let size: f64 = cols[3].trim().parse().map_err(|e| format!("bad font size `{}`: {e}", cols[3]))?;
    let coords: Vec<f64> = cols[4]
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad coordinate `{v}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if coords.len() != 4 {
        return Err(format!("expected 4 coordinates, found {}", coords.len()));
    }
    let chars: u64 = cols[5].trim().parse().map_err(|e| format!("bad char count `{}`: {e}", cols[5]))?;
    let bbox = BBox::new(coords[0], coords[1], coords[2], coords[3]).map_err(|e| e.to_string())?;
    TextBox::new(cols[0], cols[1], cols[2], size, bbox, chars).map_err(|e| e.to_string())
}

/// Parses page records, collecting unparseable lines instead of failing.
pub fn parse_page_records(text: &str) -> (Vec<TextBox>, Vec<MalformedRecord>) {
    let mut boxes = Vec::new();
    let mut malformed = Vec::new();
    for (line, content) in data_lines(text) {
        match parse_box(content) {
            Ok(b) => boxes.push(b),
            Err(reason) => malformed.push(MalformedRecord { line, reason }),
        }
    }
    (boxes, malformed)
}

/// Reads a page-record file and extracts both pair datasets.
pub fn extract_from_file(path: impl AsRef<Path>, cfg: &ExtractionConfig) -> Result<Extraction> {
    extract_from_text(&std::fs::read_to_string(path)?, cfg)
}

pub fn extract_from_text(text: &str, cfg: &ExtractionConfig) -> Result<Extraction> {
    let (boxes, malformed) = parse_page_records(text);
    for m in &malformed {
        debug!("line {}: {}", m.line, m.reason);
    }
    let mut out = extract_pairs(&boxes, cfg)?;
    out.diagnostics.malformed_records = malformed.len();
    Ok(out)
}
