//! WebKB hyperlink networks in the `content` / `cites` text layout.
//!
//! `content`: one page per line, `page-id f_1 ... f_D class`, whitespace separated,
//! binary word features. `cites`: one hyperlink per line, `page-id page-id`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;

use super::{make_splits, Dataset, Splits};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::Mode;

pub const WEBKB_CLASSES: [&str; 5] = ["course", "faculty", "project", "staff", "student"];

#[derive(Debug, Clone)]
pub struct WebKb {
    pub dataset: Dataset,
    pub graph: Arc<Graph>,
    pub page_ids: Vec<String>,
    /// Citations naming a page that is not in the content file.
    pub dropped_citations: usize,
}

fn ingest_err(path: &Path, line: usize, message: String) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        offset: line as u64,
        message,
    }
}

/// Loads a WebKB pair. Hyperlinks are symmetrized and self-loops added. The
/// dataset carries a default stratified 60/20/20 split (seed 0); the offset
/// in ingestion errors is the 1-based line number.
pub fn load_webkb(content_path: &Path, cites_path: &Path) -> Result<WebKb> {
    let content = std::fs::read_to_string(content_path)
        .map_err(|e| ingest_err(content_path, 0, e.to_string()))?;
    let cites = std::fs::read_to_string(cites_path).map_err(|e| ingest_err(cites_path, 0, e.to_string()))?;

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut page_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (lineno, line) in content.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 3 {
            return Err(ingest_err(content_path, lineno + 1, "expected id, features and class".into()));
        }
        let id = tokens[0];
        let class = tokens[tokens.len() - 1];
        let feats = &tokens[1..tokens.len() - 1];
        match width {
            None => width = Some(feats.len()),
            Some(w) if w != feats.len() => {
                return Err(ingest_err(
                    content_path,
                    lineno + 1,
                    format!("page {id} has {} features, expected {w}", feats.len()),
                ))
            }
            _ => {}
        }
        let label = WEBKB_CLASSES
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| ingest_err(content_path, lineno + 1, format!("unknown class {class:?}")))?;
        let row = feats
            .iter()
            .map(|t| match *t {
                "0" => Ok(0.0),
                "1" => Ok(1.0),
                other => Err(ingest_err(
                    content_path,
                    lineno + 1,
                    format!("feature {other:?} is not binary"),
                )),
            })
            .collect::<Result<Vec<f64>>>()?;
        if index.insert(id.to_string(), page_ids.len()).is_some() {
            return Err(ingest_err(content_path, lineno + 1, format!("duplicate page id {id}")));
        }
        page_ids.push(id.to_string());
        rows.push(row);
        labels.push(Some(label));
    }
    let n = page_ids.len();
    let width = width.ok_or_else(|| ingest_err(content_path, 0, "no pages".into()))?;

    let mut edges = Vec::new();
    let mut dropped = 0;
    for (lineno, line) in cites.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 2 {
            return Err(ingest_err(cites_path, lineno + 1, "expected two page ids".into()));
        }
        match (index.get(tokens[0]), index.get(tokens[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => dropped += 1,
        }
    }
    let graph = Arc::new(Graph::from_edges(n, edges, true)?);

    let mut features = Array2::zeros((n, width));
    for (i, row) in rows.into_iter().enumerate() {
        features.row_mut(i).assign(&ndarray::Array1::from(row));
    }
    let mut dataset = Dataset {
        mode: Mode::Vertex,
        signals: vec![features],
        labels,
        num_classes: WEBKB_CLASSES.len(),
        splits: Splits::default(),
    };
    // The default split only needs every class to have 3 pages; fall back to
    // everything-in-train for tiny fixtures.
    dataset.splits = match make_splits(&dataset, [0.6, 0.2, 0.2], 1, 0) {
        Ok(mut s) => s.remove(0),
        Err(_) => Splits {
            train: dataset.labeled_items(),
            ..Splits::default()
        },
    };
    Ok(WebKb {
        dataset,
        graph,
        page_ids,
        dropped_citations: dropped,
    })
}
