//! Template file I/O.
//!
//! On-disk format is a JSON object:
//! `{"width": int, "height": int, "identity_id": str|null, "impression_id":
//! str|null, "minutiae": [{"x": f, "y": f, "theta_deg": f, "type": ...}]}`
//! with `type` one of `bifurcation`, `termination`, `singular`.

use super::{Minutia, MinutiaKind, MinutiaeTemplate};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    width: u32,
    height: u32,
    identity_id: Option<String>,
    impression_id: Option<String>,
    minutiae: Vec<MinutiaRecord>,
}

#[derive(Serialize, Deserialize)]
struct MinutiaRecord {
    x: f64,
    y: f64,
    theta_deg: f64,
    #[serde(rename = "type")]
    kind: String,
}

pub fn write_template(template: &MinutiaeTemplate, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = TemplateFile {
        width: template.width,
        height: template.height,
        identity_id: template.identity_id.clone(),
        impression_id: template.impression_id.clone(),
        minutiae: template
            .minutiae
            .iter()
            .map(|m| MinutiaRecord {
                x: m.x,
                y: m.y,
                theta_deg: m.theta_deg,
                kind: m.kind.as_str().to_string(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::parse(path, format!("serialize failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_template(path: impl AsRef<Path>) -> Result<MinutiaeTemplate> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TemplateFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;

    let mut template = MinutiaeTemplate {
        width: file.width,
        height: file.height,
        identity_id: file.identity_id,
        impression_id: file.impression_id,
        minutiae: Vec::with_capacity(file.minutiae.len()),
    };
    for (i, rec) in file.minutiae.iter().enumerate() {
        let kind = match rec.kind.as_str() {
            "bifurcation" => MinutiaKind::Bifurcation,
            "termination" => MinutiaKind::Termination,
            "singular" => MinutiaKind::Singular,
            other => {
                return Err(Error::parse(
                    path,
                    format!("minutia record {i}: unknown type {other:?}"),
                ))
            }
        };
        if !(rec.x >= 0.0 && rec.x < file.width as f64 && rec.y >= 0.0 && rec.y < file.height as f64)
        {
            return Err(Error::parse(
                path,
                format!(
                    "minutia record {i}: position ({}, {}) outside image bounds {}x{}",
                    rec.x, rec.y, file.width, file.height
                ),
            ));
        }
        if !rec.theta_deg.is_finite() {
            return Err(Error::parse(
                path,
                format!("minutia record {i}: non-finite direction"),
            ));
        }
        template
            .minutiae
            .push(Minutia::new(rec.x, rec.y, rec.theta_deg, kind));
    }
    Ok(template)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MinutiaeTemplate {
        let mut t = MinutiaeTemplate::new(256, 288);
        t.identity_id = Some("id_0001".into());
        t.impression_id = Some("imp_0".into());
        t.minutiae.push(Minutia::new(10.5, 20.25, 0.0, MinutiaKind::Bifurcation));
        t.minutiae.push(Minutia::new(100.0, 200.0, 359.5, MinutiaKind::Termination));
        t.minutiae.push(Minutia::new(128.0, 144.0, 90.0, MinutiaKind::Singular));
        t
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let t = sample();
        write_template(&t, &path).unwrap();
        let back = read_template(&path).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_template_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        let t = MinutiaeTemplate::new(64, 64);
        write_template(&t, &path).unwrap();
        assert_eq!(read_template(&path).unwrap(), t);
    }

    #[test]
    fn unknown_type_names_record_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"width": 64, "height": 64, "identity_id": null, "impression_id": null,
                "minutiae": [
                  {"x": 1.0, "y": 2.0, "theta_deg": 0.0, "type": "termination"},
                  {"x": 3.0, "y": 4.0, "theta_deg": 0.0, "type": "ridge"}
                ]}"#,
        )
        .unwrap();
        let err = read_template(&path).unwrap_err().to_string();
        assert!(err.contains("record 1"), "error was: {err}");
        assert!(err.contains("ridge"), "error was: {err}");
    }

    #[test]
    fn out_of_bounds_minutia_names_record_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oob.json");
        std::fs::write(
            &path,
            r#"{"width": 64, "height": 64, "identity_id": null, "impression_id": null,
                "minutiae": [{"x": 64.0, "y": 2.0, "theta_deg": 0.0, "type": "singular"}]}"#,
        )
        .unwrap();
        let err = read_template(&path).unwrap_err().to_string();
        assert!(err.contains("record 0"), "error was: {err}");
    }
}
