//! Text formats: ASCII PLY, Wavefront OBJ, and small CSV/JSON helpers.

pub mod model;
pub mod obj;
pub mod ply;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;

/// Loads a mesh from `.obj` or `.ply` based on the file extension.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path)?;
    match extension(path).as_deref() {
        Some("obj") => obj::parse_obj(&text),
        Some("ply") => ply::parse_ply_mesh(&text),
        _ => Err(Error::invalid(format!(
            "unsupported mesh format: {} (expected .obj or .ply)",
            path.display()
        ))),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

/// Parses `index,mask` rows (header optional) into a boolean mask.
pub fn parse_mask_csv(text: &str) -> Result<Vec<bool>> {
    let mut mask = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with("index")) {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(idx), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(lineno + 1, "expected two fields: index,mask"));
        };
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno + 1, format!("bad index {idx:?}")))?;
        if idx != mask.len() {
            return Err(Error::parse(
                lineno + 1,
                format!("index {idx} out of sequence (expected {})", mask.len()),
            ));
        }
        let value = match value.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::parse(lineno + 1, format!("bad mask value {other:?}"))),
        };
        mask.push(value);
    }
    Ok(mask)
}

pub fn write_mask_csv(mask: &[bool]) -> String {
    let mut out = String::with_capacity(8 * mask.len() + 16);
    out.push_str("index,mask\n");
    for (i, m) in mask.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i, u8::from(*m)));
    }
    out
}
