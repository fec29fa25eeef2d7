//! COCO-like annotation and prediction files.
//!
//! ```json
//! {"images": [{"id": 1, "file_name": "a.png", "width": 512, "height": 512}],
//!  "annotations": [{"id": 1, "image_id": 1, "roof": [[x, y], ...], "offset": [ox, oy],
//!                   "footprint": [[x, y], ...], "building_bbox": [x, y, w, h], "score": 0.9}]}
//! ```
//!
//! `footprint` and `building_bbox` are optional and derived when absent.
//! Prediction files require `score`; their `roof` and `offset` are optional
//! as long as a footprint is present or derivable. Numbers are written with
//! the shortest representation that round-trips.

use std::fs;
use std::path::Path;

use offnadir_core::eval::PredictionInstance;
use offnadir_core::{AnnotationDraft, Dataset, ImageRecord, OffsetVector, Polygon, Split};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImageDto {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationDto {
    id: u64,
    image_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roof: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    footprint: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    building_bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileDto {
    #[serde(default)]
    images: Vec<ImageDto>,
    annotations: Vec<AnnotationDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
}

fn coords(p: &Polygon) -> Vec<[f64; 2]> {
    p.vertices().iter().map(|v| [v.x, v.y]).collect()
}

fn image_dto(im: &ImageRecord) -> ImageDto {
    ImageDto {
        id: im.id,
        file_name: im.file_name.clone(),
        width: im.width,
        height: im.height,
    }
}

fn parse_file(text: &str, path: &Path) -> Result<FileDto> {
    serde_json::from_str(text).map_err(|e| Error::parse(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn schema(path: &Path, message: String) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        message,
    }
}

fn content(path: &Path) -> impl Fn(offnadir_core::Error) -> Error + '_ {
    move |source| Error::Content {
        path: path.to_path_buf(),
        source,
    }
}

fn images_of(dto: &[ImageDto], path: &Path) -> Result<Vec<ImageRecord>> {
    dto.iter()
        .map(|im| ImageRecord::new(im.id, im.file_name.clone(), im.width, im.height).map_err(content(path)))
        .collect()
}

/// Parses a ground-truth file; `path` only labels errors.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let file = parse_file(text, path)?;
    let split = match &file.split {
        None => Split::Unsplit,
        Some(s) => Split::parse(s).ok_or_else(|| schema(path, format!("unknown split {s:?}")))?,
    };
    let drafts = file
        .annotations
        .iter()
        .map(|a| {
            let missing = |field| schema(path, format!("annotation {}: missing \"{field}\"", a.id));
            Ok(AnnotationDraft {
                id: a.id,
                image_id: a.image_id,
                roof: a.roof.clone().ok_or_else(|| missing("roof"))?,
                offset: a.offset.ok_or_else(|| missing("offset"))?,
                footprint: a.footprint.clone(),
                building_bbox: a.building_bbox,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_drafts(images_of(&file.images, path)?, &drafts, split).map_err(content(path))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&read_text(path)?, path)
}

/// Every field written out, derived ones included.
pub fn dataset_to_json(d: &Dataset) -> String {
    let file = FileDto {
        images: d.images().iter().map(image_dto).collect(),
        annotations: d
            .annotations()
            .iter()
            .map(|a| AnnotationDto {
                id: a.id,
                image_id: a.image_id,
                roof: Some(coords(&a.roof)),
                offset: Some([a.offset.ox, a.offset.oy]),
                footprint: Some(coords(&a.footprint)),
                building_bbox: Some(a.building_bbox.to_array()),
                score: None,
            })
            .collect(),
        split: (d.split() != Split::Unsplit).then(|| d.split().as_str().to_string()),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("plain data always serializes");
    s.push('\n');
    s
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    write_text(path, &dataset_to_json(d))
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<Vec<PredictionInstance>> {
    let file = parse_file(text, path)?;
    file.annotations
        .iter()
        .map(|a| {
            let bad = |m: &str| schema(path, format!("prediction {}: {m}", a.id));
            let score = a.score.ok_or_else(|| bad("missing \"score\""))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(bad("score must lie in [0, 1]"));
            }
            let roof = a.roof.as_deref().map(Polygon::from_coords).transpose().map_err(content(path))?;
            let offset = a.offset.map(|[x, y]| OffsetVector::new(x, y));
            if offset.is_some_and(|o| !o.is_finite()) {
                return Err(bad("offset must be finite"));
            }
            let footprint = match (&a.footprint, &roof, offset) {
                (Some(f), _, _) => Polygon::from_coords(f).map_err(content(path))?,
                (None, Some(r), Some(o)) => r.translate(o),
                _ => return Err(bad("needs \"footprint\" or both \"roof\" and \"offset\"")),
            };
            Ok(PredictionInstance {
                id: a.id,
                image_id: a.image_id,
                footprint,
                roof,
                offset,
                score,
            })
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionInstance>> {
    parse_predictions(&read_text(path)?, path)
}

pub fn predictions_to_json(images: &[ImageRecord], preds: &[PredictionInstance]) -> String {
    let file = FileDto {
        images: images.iter().map(image_dto).collect(),
        annotations: preds
            .iter()
            .map(|p| AnnotationDto {
                id: p.id,
                image_id: p.image_id,
                roof: p.roof.as_ref().map(coords),
                offset: p.offset.map(|o| [o.ox, o.oy]),
                footprint: Some(coords(&p.footprint)),
                building_bbox: None,
                score: Some(p.score),
            })
            .collect(),
        split: None,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("plain data always serializes");
    s.push('\n');
    s
}

pub fn write_predictions(path: &Path, images: &[ImageRecord], preds: &[PredictionInstance]) -> Result<()> {
    write_text(path, &predictions_to_json(images, preds))
}
