//! Instance-level annotation model.
//!
//! Every building carries a roof polygon, a roof-to-footprint offset vector,
//! the footprint polygon (the roof translated by the offset) and a building
//! bounding box covering both. Coordinates are continuous pixels with the
//! origin at the image's top-left corner, x growing rightward and y downward.
//!
//! Polygons are stored with positive shoelace orientation: walking
//! `(0,0) → (10,0) → (10,10) → (0,10)` is canonical. Loading reverses
//! polygons with the opposite orientation while keeping vertex 0 in place, so
//! roof/footprint vertex correspondence survives normalization.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl Add<OffsetVector> for Point2 {
    type Output = Point2;

    fn add(self, o: OffsetVector) -> Point2 {
        Point2::new(self.x + o.ox, self.y + o.oy)
    }
}

/// Roof-to-footprint translation in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OffsetVector {
    pub ox: f64,
    pub oy: f64,
}

impl OffsetVector {
    pub const ZERO: OffsetVector = OffsetVector { ox: 0.0, oy: 0.0 };

    pub const fn new(ox: f64, oy: f64) -> Self {
        Self { ox, oy }
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.ox, self.oy)
    }

    pub fn is_finite(&self) -> bool {
        self.ox.is_finite() && self.oy.is_finite()
    }
}

impl Add for OffsetVector {
    type Output = OffsetVector;

    fn add(self, rhs: Self) -> Self {
        OffsetVector::new(self.ox + rhs.ox, self.oy + rhs.oy)
    }
}

impl Sub for OffsetVector {
    type Output = OffsetVector;

    fn sub(self, rhs: Self) -> Self {
        OffsetVector::new(self.ox - rhs.ox, self.oy - rhs.oy)
    }
}

impl Neg for OffsetVector {
    type Output = OffsetVector;

    fn neg(self) -> Self {
        OffsetVector::new(-self.ox, -self.oy)
    }
}

/// Signed shoelace area of an arbitrary vertex ring.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice
}

/// Closed polygon with at least three vertices and non-zero area.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Validates and orientation-normalizes a vertex ring.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("polygon vertex"));
        }
        let area = signed_area(&vertices);
        if vertices.len() < 3 || area == 0.0 || !area.is_finite() {
            return Err(Error::DegeneratePolygon {
                vertices: vertices.len(),
                area,
            });
        }
        if area < 0.0 {
            vertices[1..].reverse();
        }
        Ok(Self { vertices })
    }

    pub fn from_coords(coords: &[[f64; 2]]) -> Result<Self> {
        Self::new(coords.iter().copied().map(Point2::from).collect())
    }

    /// Axis-aligned rectangle with top-left corner `(x, y)`.
    pub fn rectangle(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(alloc::vec![
            Point2::new(x, y),
            Point2::new(x + w, y),
            Point2::new(x + w, y + h),
            Point2::new(x, y + h),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn into_vertices(self) -> Vec<Point2> {
        self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Vertex-wise translation. Orientation and vertex count are unchanged.
    pub fn translate(&self, o: OffsetVector) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|&p| p + o).collect(),
        }
    }

    /// Tight bounds as `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        bounds_of(self.vertices.iter())
    }

    /// Number of pairs of non-adjacent edges that intersect.
    pub fn self_intersections(&self) -> usize {
        let n = self.vertices.len();
        let mut count = 0;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                // Adjacent edges share a vertex by construction.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    count += 1;
                }
            }
        }
        count
    }
}

fn bounds_of<'a>(points: impl Iterator<Item = &'a Point2>) -> (f64, f64, f64, f64) {
    points.fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
    )
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::NonFinite("bounding box"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBBox { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Largest absolute difference between corresponding edges.
    fn edge_deviation(&self, other: &BBox) -> f64 {
        let a = [self.x, self.y, self.x + self.w, self.y + self.h];
        let b = [other.x, other.y, other.x + other.w, other.y + other.h];
        a.iter()
            .zip(b.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

pub fn derive_footprint(roof: &Polygon, offset: OffsetVector) -> Polygon {
    roof.translate(offset)
}

/// Tight box over the union of both vertex sets.
pub fn derive_building_bbox(roof: &Polygon, footprint: &Polygon) -> BBox {
    let (x0, y0, x1, y1) = bounds_of(roof.vertices().iter().chain(footprint.vertices()));
    BBox {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildingAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub roof: Polygon,
    pub footprint: Polygon,
    pub offset: OffsetVector,
    pub building_bbox: BBox,
}

/// Builds a self-consistent annotation from a roof and its offset.
pub fn annotate_from_roof(
    roof: Polygon,
    offset: OffsetVector,
    image_id: u64,
    id: u64,
) -> Result<BuildingAnnotation> {
    if !offset.is_finite() {
        return Err(Error::NonFinite("offset"));
    }
    let footprint = derive_footprint(&roof, offset);
    let building_bbox = derive_building_bbox(&roof, &footprint);
    Ok(BuildingAnnotation {
        id,
        image_id,
        roof,
        footprint,
        offset,
        building_bbox,
    })
}

/// Unvalidated annotation fields as they appear in a file. Optional fields
/// are derived from roof + offset when absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationDraft {
    pub id: u64,
    pub image_id: u64,
    pub roof: Vec<[f64; 2]>,
    pub offset: [f64; 2],
    pub footprint: Option<Vec<[f64; 2]>>,
    pub building_bbox: Option<[f64; 4]>,
}

impl AnnotationDraft {
    pub fn build(&self) -> Result<BuildingAnnotation> {
        let roof = Polygon::from_coords(&self.roof)?;
        let offset = OffsetVector::new(self.offset[0], self.offset[1]);
        if !offset.is_finite() {
            return Err(Error::NonFinite("offset"));
        }
        let footprint = match &self.footprint {
            Some(coords) => Polygon::from_coords(coords)?,
            None => derive_footprint(&roof, offset),
        };
        let building_bbox = match self.building_bbox {
            Some([x, y, w, h]) => BBox::new(x, y, w, h)?,
            None => derive_building_bbox(&roof, &footprint),
        };
        Ok(BuildingAnnotation {
            id: self.id,
            image_id: self.image_id,
            roof,
            footprint,
            offset,
            building_bbox,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: alloc::string::String,
    pub width: u32,
    pub height: u32,
}

impl ImageRecord {
    pub fn new(id: u64, file_name: impl Into<alloc::string::String>, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage { id, width, height });
        }
        Ok(Self {
            id,
            file_name: file_name.into(),
            width,
            height,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unsplit,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "unsplit" => Some(Split::Unsplit),
            _ => None,
        }
    }
}

/// Images plus annotations with resolved image references and unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<ImageRecord>,
    annotations: Vec<BuildingAnnotation>,
    split: Split,
}

impl Dataset {
    pub fn new(
        images: Vec<ImageRecord>,
        annotations: Vec<BuildingAnnotation>,
        split: Split,
    ) -> Result<Self> {
        let mut image_ids = BTreeSet::new();
        for img in &images {
            if img.width == 0 || img.height == 0 {
                return Err(Error::InvalidImage {
                    id: img.id,
                    width: img.width,
                    height: img.height,
                });
            }
            if !image_ids.insert(img.id) {
                return Err(Error::DuplicateId {
                    kind: "image",
                    id: img.id,
                });
            }
        }
        let mut ann_ids = BTreeSet::new();
        for ann in &annotations {
            if !image_ids.contains(&ann.image_id) {
                return Err(Error::UnresolvedImage {
                    annotation: ann.id,
                    image: ann.image_id,
                });
            }
            if !ann_ids.insert(ann.id) {
                return Err(Error::DuplicateId {
                    kind: "annotation",
                    id: ann.id,
                });
            }
        }
        Ok(Self {
            images,
            annotations,
            split,
        })
    }

    /// Builds every draft, deriving missing footprints and boxes.
    pub fn from_drafts(
        images: Vec<ImageRecord>,
        drafts: &[AnnotationDraft],
        split: Split,
    ) -> Result<Self> {
        let annotations = drafts.iter().map(AnnotationDraft::build).collect::<Result<Vec<_>>>()?;
        Self::new(images, annotations, split)
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn annotations(&self) -> &[BuildingAnnotation] {
        &self.annotations
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|img| img.id == id)
    }

    pub fn annotations_for(&self, image_id: u64) -> impl Iterator<Item = &BuildingAnnotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    /// Footprint differs from roof + offset.
    FootprintConsistency,
    /// Roof and footprint have different vertex counts.
    VertexCount,
    /// Building box is not the tight box of roof ∪ footprint.
    BboxTightness,
    /// Roof or footprint has crossing edges.
    SelfIntersection,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::FootprintConsistency => "footprint-consistency",
            Rule::VertexCount => "vertex-count",
            Rule::BboxTightness => "bbox-tightness",
            Rule::SelfIntersection => "self-intersection",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub annotation_id: u64,
    pub rule: Rule,
    /// Pixels for geometric rules, a count for the others.
    pub magnitude: f64,
}

/// Checks every annotation invariant. Violations come back sorted by
/// annotation id, then rule.
pub fn validate(dataset: &Dataset, tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    for ann in dataset.annotations() {
        validate_annotation(ann, tol, &mut out);
    }
    out.sort_by(|a, b| {
        a.annotation_id
            .cmp(&b.annotation_id)
            .then(a.rule.cmp(&b.rule))
    });
    out
}

fn validate_annotation(ann: &BuildingAnnotation, tol: f64, out: &mut Vec<Violation>) {
    let roof = ann.roof.vertices();
    let foot = ann.footprint.vertices();
    if roof.len() != foot.len() {
        out.push(Violation {
            annotation_id: ann.id,
            rule: Rule::VertexCount,
            magnitude: roof.len().abs_diff(foot.len()) as f64,
        });
    } else {
        let worst = roof
            .iter()
            .zip(foot)
            .map(|(&r, f)| (r + ann.offset).distance(f))
            .fold(0.0, f64::max);
        if worst > tol {
            out.push(Violation {
                annotation_id: ann.id,
                rule: Rule::FootprintConsistency,
                magnitude: worst,
            });
        }
    }

    let tight = derive_building_bbox(&ann.roof, &ann.footprint);
    let dev = ann.building_bbox.edge_deviation(&tight);
    if dev > tol {
        out.push(Violation {
            annotation_id: ann.id,
            rule: Rule::BboxTightness,
            magnitude: dev,
        });
    }

    let crossings = ann.roof.self_intersections() + ann.footprint.self_intersections();
    if crossings > 0 {
        out.push(Violation {
            annotation_id: ann.id,
            rule: Rule::SelfIntersection,
            magnitude: crossings as f64,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn square() -> Polygon {
        Polygon::from_coords(&[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]).unwrap()
    }

    fn coords(p: &Polygon) -> Vec<[f64; 2]> {
        p.vertices().iter().map(|v| [v.x, v.y]).collect()
    }

    fn single(ann: BuildingAnnotation) -> Dataset {
        let img = ImageRecord::new(1, "a.png", 64, 64).unwrap();
        Dataset::new(vec![img], vec![ann], Split::Unsplit).unwrap()
    }

    #[test]
    fn footprint_is_translated_roof() {
        let f = derive_footprint(&square(), OffsetVector::new(5.0, -3.0));
        assert_eq!(coords(&f), vec![[5.0, -3.0], [15.0, -3.0], [15.0, 7.0], [5.0, 7.0]]);

        let tri = Polygon::from_coords(&[[1.0, 1.0], [4.0, 1.0], [1.0, 5.0]]).unwrap();
        let f = derive_footprint(&tri, OffsetVector::new(2.0, 2.0));
        assert_eq!(coords(&f), vec![[3.0, 3.0], [6.0, 3.0], [3.0, 7.0]]);

        assert_eq!(derive_footprint(&square(), OffsetVector::ZERO), square());
    }

    #[test]
    fn bbox_covers_roof_and_footprint() {
        let roof = square();
        let foot = derive_footprint(&roof, OffsetVector::new(5.0, -3.0));
        assert_eq!(
            derive_building_bbox(&roof, &foot),
            BBox::new(0.0, -3.0, 15.0, 13.0).unwrap()
        );
        assert_eq!(
            derive_building_bbox(&roof, &roof),
            BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()
        );
    }

    #[test]
    fn winding_is_normalized_keeping_first_vertex() {
        let cw = Polygon::from_coords(&[[0.0, 0.0], [0.0, 10.0], [10.0, 10.0], [10.0, 0.0]]).unwrap();
        assert!(cw.signed_area() > 0.0);
        assert_eq!(cw.vertices()[0], Point2::new(0.0, 0.0));
        assert_eq!(cw, square());
        let again = Polygon::new(cw.vertices().to_vec()).unwrap();
        assert_eq!(again, cw);
    }

    #[test]
    fn degenerate_roofs_rejected() {
        assert!(matches!(
            Polygon::from_coords(&[[0.0, 0.0], [1.0, 1.0]]),
            Err(Error::DegeneratePolygon { vertices: 2, .. })
        ));
        assert!(Polygon::from_coords(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
        assert!(Polygon::from_coords(&[[0.0, f64::NAN], [1.0, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn annotate_from_roof_validates_clean() {
        let ann = annotate_from_roof(square(), OffsetVector::new(5.0, -3.0), 1, 7).unwrap();
        assert!(validate(&single(ann), 1e-9).is_empty());

        let nadir = annotate_from_roof(square(), OffsetVector::ZERO, 1, 8).unwrap();
        assert_eq!(nadir.footprint, nadir.roof);
    }

    #[test]
    fn displaced_footprint_is_reported() {
        let mut ann = annotate_from_roof(square(), OffsetVector::new(5.0, -3.0), 1, 3).unwrap();
        ann.footprint = ann.footprint.translate(OffsetVector::new(2.0, 0.0));
        ann.building_bbox = derive_building_bbox(&ann.roof, &ann.footprint);
        let v = validate(&single(ann), 1e-6);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::FootprintConsistency);
        assert!((v[0].magnitude - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loose_bbox_is_reported() {
        let mut ann = annotate_from_roof(square(), OffsetVector::new(5.0, -3.0), 1, 3).unwrap();
        ann.building_bbox = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let v = validate(&single(ann), 1e-6);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::BboxTightness);
        assert!((v[0].magnitude - 5.0).abs() < 1e-12);
    }

    #[test]
    fn bowtie_is_a_violation_not_an_error() {
        // Skewed so the signed area stays non-zero.
        let roof = Polygon::from_coords(&[[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 12.0]]).unwrap();
        let ann = annotate_from_roof(roof, OffsetVector::ZERO, 1, 1).unwrap();
        let v = validate(&single(ann), 1e-6);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::SelfIntersection);
    }

    #[test]
    fn violations_sorted_by_annotation_id() {
        let img = ImageRecord::new(1, "a.png", 64, 64).unwrap();
        let mut anns = Vec::new();
        for id in [9u64, 2, 5] {
            let mut a = annotate_from_roof(square(), OffsetVector::new(1.0, 1.0), 1, id).unwrap();
            a.building_bbox = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
            anns.push(a);
        }
        let d = Dataset::new(vec![img], anns, Split::Test).unwrap();
        let ids: Vec<u64> = validate(&d, 1e-6).iter().map(|v| v.annotation_id).collect();
        assert_eq!(ids, vec![2, 5, 9]);
    }

    #[test]
    fn dataset_referential_integrity() {
        let img = ImageRecord::new(1, "a.png", 64, 64).unwrap();
        let ann = annotate_from_roof(square(), OffsetVector::ZERO, 2, 1).unwrap();
        assert_eq!(
            Dataset::new(vec![img.clone()], vec![ann.clone()], Split::Train),
            Err(Error::UnresolvedImage { annotation: 1, image: 2 })
        );
        let ok = annotate_from_roof(square(), OffsetVector::ZERO, 1, 1).unwrap();
        assert!(matches!(
            Dataset::new(vec![img.clone()], vec![ok.clone(), ok], Split::Train),
            Err(Error::DuplicateId { kind: "annotation", id: 1 })
        ));
        let empty = Dataset::new(vec![img], vec![], Split::Val).unwrap();
        assert!(empty.annotations().is_empty());
    }

    #[test]
    fn draft_derives_missing_fields() {
        let draft = AnnotationDraft {
            id: 1,
            image_id: 1,
            roof: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]],
            offset: [5.0, -3.0],
            footprint: None,
            building_bbox: None,
        };
        let ann = draft.build().unwrap();
        assert_eq!(ann.footprint, derive_footprint(&square(), OffsetVector::new(5.0, -3.0)));
        assert_eq!(ann.building_bbox, BBox::new(0.0, -3.0, 15.0, 13.0).unwrap());
    }
}
