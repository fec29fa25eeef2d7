//! Instance matching and the roof/footprint metric suite.

use alloc::vec;
use alloc::vec::Vec;

use crate::data_model::{BuildingAnnotation, Dataset, ImageRecord, OffsetVector, Point2, Polygon};
use crate::error::{Error, Result};
use crate::geometry::{default_boundary_d, polygon_iou, rasterize_region, Region};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInstance {
    pub id: u64,
    pub image_id: u64,
    pub footprint: Polygon,
    pub roof: Option<Polygon>,
    pub offset: Option<OffsetVector>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Track {
    Roof,
    Footprint,
}

impl Track {
    pub const ALL: [Track; 2] = [Track::Roof, Track::Footprint];

    pub fn as_str(&self) -> &'static str {
        match self {
            Track::Roof => "roof",
            Track::Footprint => "footprint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IouKind {
    /// Rasterized mask IoU.
    Mask,
    /// Exact IoU of the polygons' covered regions.
    Polygon,
    /// Boundary IoU with band radius `d` in pixels.
    Boundary { d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub prediction: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Indices refer to the slices handed to the matcher.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl core::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl MatchResult {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.pairs.len(),
            fp: self.unmatched_predictions.len(),
            fn_: self.unmatched_ground_truths.len(),
        }
    }
}

/// Prediction indices by descending score; equal scores keep input order.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy matching on a precomputed `iou[pred][gt]` table.
///
/// Predictions are visited by descending score and each takes the still
/// unmatched ground truth of highest IoU, provided it reaches `threshold`.
/// Among equal IoUs the lower ground-truth index wins. Unmatched lists are
/// ascending.
pub fn greedy_match(scores: &[f64], iou: &[Vec<f64>], n_gt: usize, threshold: f64) -> MatchResult {
    let mut taken = vec![false; n_gt];
    let mut matched_pred = vec![false; scores.len()];
    let mut pairs = Vec::new();
    for p in score_order(scores) {
        let mut best: Option<(usize, f64)> = None;
        for (g, &v) in iou[p].iter().enumerate() {
            if taken[g] || v < threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            taken[g] = true;
            matched_pred[p] = true;
            pairs.push(MatchPair {
                prediction: p,
                ground_truth: g,
                iou: v,
            });
        }
    }
    MatchResult {
        pairs,
        unmatched_predictions: (0..scores.len()).filter(|&p| !matched_pred[p]).collect(),
        unmatched_ground_truths: (0..n_gt).filter(|&g| !taken[g]).collect(),
    }
}

/// `(P, R, F1)` as ratios; every zero denominator yields 0.
pub fn precision_recall_f1(c: Counts) -> (f64, f64, f64) {
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = div(c.tp, c.tp + c.fp);
    let r = div(c.tp, c.tp + c.fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// 101-point interpolated average precision.
///
/// `tp` lists detections in descending score order. No ground truth and no
/// detections gives 1; otherwise no ground truth or no detections gives 0.
pub fn average_precision_101(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if tp.is_empty() { 1.0 } else { 0.0 };
    }
    if tp.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / n_gt as f64);
    }
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut i = 0usize;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        while i < recall.len() && recall[i] < r {
            i += 1;
        }
        if i == recall.len() {
            break;
        }
        sum += precision[i];
    }
    sum / 101.0
}

/// Mean end-point error, `None` for no pairs.
pub fn epe(pairs: &[(OffsetVector, OffsetVector)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let total: f64 = pairs.iter().map(|&(p, g)| (p - g).norm()).sum();
    Some(total / pairs.len() as f64)
}

/// Where the mask IoU behind TP/FP/FN is measured. Boundary IoU is always rasterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IouSpace {
    /// Pixel masks at ground-truth resolution (times `raster_scale`).
    #[default]
    Raster,
    /// Exact polygon areas; invariant under any common translation.
    Polygon,
}

impl IouSpace {
    pub fn as_str(&self) -> &'static str {
        match self {
            IouSpace::Raster => "raster",
            IouSpace::Polygon => "polygon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raster" => Some(IouSpace::Raster),
            "polygon" => Some(IouSpace::Polygon),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub iou_space: IouSpace,
    pub boundary_threshold: f64,
    /// Band radius in original pixels; 2% of each image diagonal when `None`.
    pub boundary_d: Option<f64>,
    /// Rasterization resolution relative to the ground-truth image.
    pub raster_scale: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            iou_space: IouSpace::Raster,
            boundary_threshold: 0.5,
            boundary_d: None,
            raster_scale: 1.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |t: f64| t > 0.0 && t <= 1.0;
        if !unit(self.iou_threshold) || !unit(self.boundary_threshold) {
            return Err(Error::InvalidConfig("IoU thresholds must lie in (0, 1]"));
        }
        if let Some(d) = self.boundary_d {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::NegativeRadius(d));
            }
        }
        if !(self.raster_scale > 0.0 && self.raster_scale.is_finite()) {
            return Err(Error::InvalidConfig("raster_scale must be positive"));
        }
        Ok(())
    }
}

struct Canvas {
    width: usize,
    height: usize,
    scale: f64,
}

impl Canvas {
    fn new(image: &ImageRecord, scale: f64) -> Self {
        let dim = |n: u32| libm::ceil(n as f64 * scale) as usize;
        Self {
            width: dim(image.width),
            height: dim(image.height),
            scale,
        }
    }

    fn region(&self, p: &Polygon) -> Region {
        if self.scale == 1.0 {
            return rasterize_region(p.vertices(), self.width, self.height);
        }
        let scaled: Vec<Point2> = p
            .vertices()
            .iter()
            .map(|v| Point2::new(v.x * self.scale, v.y * self.scale))
            .collect();
        rasterize_region(&scaled, self.width, self.height)
    }
}

fn check_single_image(preds: &[PredictionInstance], image: &ImageRecord) -> Result<()> {
    match preds.iter().find(|p| p.image_id != image.id) {
        Some(p) => Err(Error::MixedImages(image.id, p.image_id)),
        None => Ok(()),
    }
}

fn mask_for(p: &PredictionInstance, track: Track) -> Option<&Polygon> {
    match track {
        Track::Roof => p.roof.as_ref(),
        Track::Footprint => Some(&p.footprint),
    }
}

fn gt_mask(a: &BuildingAnnotation, track: Track) -> &Polygon {
    match track {
        Track::Roof => &a.roof,
        Track::Footprint => &a.footprint,
    }
}

/// Ground-truth positions in ascending annotation id, so IoU ties resolve
/// the same way whatever order the annotations arrive in.
fn id_order(gts: &[BuildingAnnotation]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&i| gts[i].id);
    order
}

fn iou_table(preds: &[Region], gts: &[Region]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| p.iou(g)).collect())
        .collect()
}

fn polygon_iou_table(preds: &[&Polygon], gts: &[&Polygon]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| polygon_iou(p, g)).collect())
        .collect()
}

/// Matches one image's predictions against its annotations on one track.
///
/// Equal IoUs go to the lower annotation id. On the roof track, predictions without a roof take no part; indices in
/// the result still refer to `preds`.
pub fn match_instances(
    preds: &[PredictionInstance],
    gts: &[BuildingAnnotation],
    image: &ImageRecord,
    track: Track,
    kind: IouKind,
    threshold: f64,
) -> Result<MatchResult> {
    check_single_image(preds, image)?;
    if let Some(a) = gts.iter().find(|a| a.image_id != image.id) {
        return Err(Error::MixedImages(image.id, a.image_id));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig("IoU threshold must lie in (0, 1]"));
    }
    let canvas = Canvas::new(image, 1.0);
    let band = |r: Region| match kind {
        IouKind::Boundary { d } => r.boundary_band(d),
        _ => r,
    };
    if let IouKind::Boundary { d } = kind {
        if !(d >= 0.0) {
            return Err(Error::NegativeRadius(d));
        }
    }
    let (idx, polys): (Vec<usize>, Vec<&Polygon>) = preds
        .iter()
        .enumerate()
        .filter_map(|(i, p)| mask_for(p, track).map(|m| (i, m)))
        .unzip();
    let order = id_order(gts);
    let gt_polys: Vec<&Polygon> = order.iter().map(|&g| gt_mask(&gts[g], track)).collect();
    let table = if kind == IouKind::Polygon {
        polygon_iou_table(&polys, &gt_polys)
    } else {
        let regions: Vec<Region> = polys.iter().map(|m| band(canvas.region(m))).collect();
        let gt_regions: Vec<Region> = gt_polys.iter().map(|m| band(canvas.region(m))).collect();
        iou_table(&regions, &gt_regions)
    };
    let scores: Vec<f64> = idx.iter().map(|&i| preds[i].score).collect();
    let mut m = greedy_match(&scores, &table, gts.len(), threshold);
    for pair in &mut m.pairs {
        pair.prediction = idx[pair.prediction];
        pair.ground_truth = order[pair.ground_truth];
    }
    for p in &mut m.unmatched_predictions {
        *p = idx[*p];
    }
    for g in &mut m.unmatched_ground_truths {
        *g = order[*g];
    }
    m.unmatched_ground_truths.sort_unstable();
    Ok(m)
}

/// One scored detection for AP accumulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub score: f64,
    /// Position in the global prediction list, breaks score ties.
    pub rank: usize,
    pub tp: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackEvaluation {
    pub counts: Counts,
    pub boundary_detections: Vec<Detection>,
    pub n_gt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEvaluation {
    pub image_id: u64,
    pub roof: TrackEvaluation,
    pub footprint: TrackEvaluation,
    /// `|pred - gt|` for footprint true positives that carry an offset.
    pub offset_errors: Vec<f64>,
}

/// Per-track metrics; ratios are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub boundary_ap50: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub roof: TrackMetrics,
    pub footprint: TrackMetrics,
    pub mean_epe: Option<f64>,
    pub epe_count: usize,
}

impl MetricsReport {
    pub fn track(&self, t: Track) -> &TrackMetrics {
        match t {
            Track::Roof => &self.roof,
            Track::Footprint => &self.footprint,
        }
    }
}

/// Evaluates one image. `ranks[i]` is the global position of `preds[i]`,
/// used only to order tied scores when AP pools detections across images.
pub fn evaluate_image(
    preds: &[PredictionInstance],
    ranks: &[usize],
    gts: &[BuildingAnnotation],
    image: &ImageRecord,
    config: &EvalConfig,
) -> Result<ImageEvaluation> {
    config.validate()?;
    check_single_image(preds, image)?;
    if ranks.len() != preds.len() {
        return Err(Error::InvalidConfig("one rank per prediction is required"));
    }
    let gts: Vec<&BuildingAnnotation> = id_order(gts).into_iter().map(|g| &gts[g]).collect();
    let canvas = Canvas::new(image, config.raster_scale);
    let d = config.boundary_d.unwrap_or_else(|| default_boundary_d(image.width, image.height))
        * config.raster_scale;

    let mut tracks = Vec::with_capacity(2);
    let mut offset_errors = Vec::new();
    for track in Track::ALL {
        let (idx, polys): (Vec<usize>, Vec<&Polygon>) = preds
            .iter()
            .enumerate()
            .filter_map(|(i, p)| mask_for(p, track).map(|m| (i, m)))
            .unzip();
        let gt_polys: Vec<&Polygon> = gts.iter().map(|a| gt_mask(a, track)).collect();
        let masks: Vec<Region> = polys.iter().map(|m| canvas.region(m)).collect();
        let gt_masks: Vec<Region> = gt_polys.iter().map(|m| canvas.region(m)).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| preds[i].score).collect();

        let table = match config.iou_space {
            IouSpace::Raster => iou_table(&masks, &gt_masks),
            IouSpace::Polygon => polygon_iou_table(&polys, &gt_polys),
        };
        let m = greedy_match(&scores, &table, gts.len(), config.iou_threshold);
        if track == Track::Footprint {
            for pair in &m.pairs {
                if let Some(o) = preds[idx[pair.prediction]].offset {
                    offset_errors.push((o - gts[pair.ground_truth].offset).norm());
                }
            }
        }

        let bands: Vec<Region> = masks.iter().map(|r| r.boundary_band(d)).collect();
        let gt_bands: Vec<Region> = gt_masks.iter().map(|r| r.boundary_band(d)).collect();
        let bm = greedy_match(&scores, &iou_table(&bands, &gt_bands), gts.len(), config.boundary_threshold);
        let mut hit = vec![false; idx.len()];
        for pair in &bm.pairs {
            hit[pair.prediction] = true;
        }
        let boundary_detections = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| Detection {
                score: preds[i].score,
                rank: ranks[i],
                tp: hit[k],
            })
            .collect();
        tracks.push(TrackEvaluation {
            counts: m.counts(),
            boundary_detections,
            n_gt: gts.len(),
        });
    }
    let footprint = tracks.pop().unwrap_or_default();
    let roof = tracks.pop().unwrap_or_default();
    Ok(ImageEvaluation {
        image_id: image.id,
        roof,
        footprint,
        offset_errors,
    })
}

/// AP over detections pooled from many images.
pub fn pooled_average_precision(detections: &mut [Detection], n_gt: usize) -> f64 {
    detections.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.rank.cmp(&b.rank)));
    let tp: Vec<bool> = detections.iter().map(|d| d.tp).collect();
    average_precision_101(&tp, n_gt)
}

fn track_metrics(parts: &[&TrackEvaluation]) -> TrackMetrics {
    let mut counts = Counts::default();
    let mut n_gt = 0;
    let mut detections = Vec::new();
    for t in parts {
        counts += t.counts;
        n_gt += t.n_gt;
        detections.extend_from_slice(&t.boundary_detections);
    }
    let (p, r, f1) = precision_recall_f1(counts);
    TrackMetrics {
        precision: 100.0 * p,
        recall: 100.0 * r,
        f1: 100.0 * f1,
        boundary_ap50: 100.0 * pooled_average_precision(&mut detections, n_gt),
        tp: counts.tp,
        fp: counts.fp,
        fn_: counts.fn_,
    }
}

/// Ordered reduction of per-image results; the caller fixes the order.
pub fn aggregate(images: &[ImageEvaluation]) -> MetricsReport {
    let roof: Vec<&TrackEvaluation> = images.iter().map(|e| &e.roof).collect();
    let footprint: Vec<&TrackEvaluation> = images.iter().map(|e| &e.footprint).collect();
    let errors: Vec<f64> = images.iter().flat_map(|e| e.offset_errors.iter().copied()).collect();
    let mean_epe = if errors.is_empty() {
        None
    } else {
        Some(errors.iter().sum::<f64>() / errors.len() as f64)
    };
    MetricsReport {
        roof: track_metrics(&roof),
        footprint: track_metrics(&footprint),
        mean_epe,
        epe_count: errors.len(),
    }
}

/// Predictions grouped by ground-truth image, in dataset image order, with
/// each prediction's global rank.
pub fn group_by_image<'a>(
    preds: &'a [PredictionInstance],
    gt: &Dataset,
) -> Result<Vec<(Vec<&'a PredictionInstance>, Vec<usize>)>> {
    let mut groups: Vec<(Vec<&PredictionInstance>, Vec<usize>)> =
        gt.images().iter().map(|_| (Vec::new(), Vec::new())).collect();
    for (rank, p) in preds.iter().enumerate() {
        let slot = gt
            .images()
            .iter()
            .position(|im| im.id == p.image_id)
            .ok_or(Error::UnknownImage(p.image_id))?;
        groups[slot].0.push(p);
        groups[slot].1.push(rank);
    }
    Ok(groups)
}

pub fn evaluate_dataset(preds: &[PredictionInstance], gt: &Dataset, config: &EvalConfig) -> Result<MetricsReport> {
    config.validate()?;
    let groups = group_by_image(preds, gt)?;
    let mut per_image = Vec::with_capacity(groups.len());
    for (image, (group, ranks)) in gt.images().iter().zip(groups) {
        let owned: Vec<PredictionInstance> = group.into_iter().cloned().collect();
        let gts: Vec<BuildingAnnotation> = gt.annotations_for(image.id).cloned().collect();
        per_image.push(evaluate_image(&owned, &ranks, &gts, image, config)?);
    }
    Ok(aggregate(&per_image))
}

/// Boundary AP at `config.boundary_threshold` for one track.
pub fn boundary_ap50(preds: &[PredictionInstance], gt: &Dataset, track: Track, config: &EvalConfig) -> Result<f64> {
    let r = evaluate_dataset(preds, gt, config)?;
    Ok(r.track(track).boundary_ap50 / 100.0)
}
