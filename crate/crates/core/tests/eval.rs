use offnadir_core::data_model::annotate_from_roof;
use offnadir_core::eval::{
    average_precision_101, evaluate_dataset, greedy_match, match_instances, precision_recall_f1, Counts,
    EvalConfig, IouKind, IouSpace, PredictionInstance, Track,
};
use offnadir_core::geometry::{boundary_band, mask_iou, polygon_iou, rasterize};
use offnadir_core::synth::{generate_scene, perturb_predictions, NoiseConfig, SceneConfig, ScoreModel};
use offnadir_core::{BuildingAnnotation, Dataset, ImageRecord, OffsetVector, Polygon, Split};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: usize = 40;

fn random_rect(rng: &mut ChaCha8Rng) -> Polygon {
    let (w, h) = (rng.random_range(4.0..14.0), rng.random_range(4.0..14.0));
    let (x, y) = (rng.random_range(0.0..W as f64 - w), rng.random_range(0.0..W as f64 - h));
    Polygon::rectangle(x, y, w, h).unwrap()
}

/// Near-duplicates of a few ground truths plus random boxes, so matches,
/// near misses and contention all occur.
fn toy_case(rng: &mut ChaCha8Rng) -> (Vec<BuildingAnnotation>, Vec<PredictionInstance>) {
    let n_gt = rng.random_range(0..=4);
    let gts: Vec<BuildingAnnotation> = (0..n_gt)
        .map(|i| annotate_from_roof(random_rect(rng), OffsetVector::ZERO, 1, i as u64 + 1).unwrap())
        .collect();
    let n_pred = rng.random_range(0..=4);
    let preds = (0..n_pred)
        .map(|i| {
            let footprint = if !gts.is_empty() && rng.random_bool(0.7) {
                let g = &gts[rng.random_range(0..gts.len())];
                let d = OffsetVector::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                g.footprint.translate(d)
            } else {
                random_rect(rng)
            };
            PredictionInstance {
                id: i as u64 + 1,
                image_id: 1,
                roof: Some(footprint.clone()),
                footprint,
                offset: None,
                score: (rng.random_range(0..5) as f64) / 4.0,
            }
        })
        .collect();
    (gts, preds)
}

fn image() -> ImageRecord {
    ImageRecord::new(1, "toy.png", W as u32, W as u32).unwrap()
}

/// IoU through full-size masks, independent of the cropped-region path.
fn full_iou_table(preds: &[PredictionInstance], gts: &[BuildingAnnotation], band: Option<f64>) -> Vec<Vec<f64>> {
    let mask = |p: &Polygon| {
        let m = rasterize(p, W, W);
        match band {
            Some(d) => boundary_band(&m, d),
            None => m,
        }
    };
    preds
        .iter()
        .map(|p| gts.iter().map(|g| mask_iou(&mask(&p.footprint), &mask(&g.footprint)).unwrap()).collect())
        .collect()
}

/// Every injective partial assignment of predictions to ground truths with
/// IoU at or above `threshold`.
fn assignments(iou: &[Vec<f64>], n_gt: usize, threshold: f64) -> Vec<Vec<Option<usize>>> {
    fn go(p: usize, iou: &[Vec<f64>], n_gt: usize, t: f64, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if p == iou.len() {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        go(p + 1, iou, n_gt, t, used, cur, out);
        cur.pop();
        for g in 0..n_gt {
            if !used[g] && iou[p][g] >= t {
                used[g] = true;
                cur.push(Some(g));
                go(p + 1, iou, n_gt, t, used, cur, out);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, iou, n_gt, threshold, &mut vec![false; n_gt], &mut Vec::new(), &mut out);
    out
}

/// The assignment that is lexicographically best when predictions are read
/// in score order: a higher IoU beats a lower one, any match beats none,
/// and between equal IoUs the lower ground-truth index wins.
fn brute_force_match(scores: &[f64], iou: &[Vec<f64>], n_gt: usize, threshold: f64) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let key = |a: &Vec<Option<usize>>| -> Vec<(f64, i64)> {
        order
            .iter()
            .map(|&p| match a[p] {
                Some(g) => (iou[p][g], -(g as i64)),
                None => (-1.0, 0),
            })
            .collect()
    };
    let all = assignments(iou, n_gt, threshold);
    let mut best = all[0].clone();
    for a in &all[1..] {
        if key(a).partial_cmp(&key(&best)) == Some(std::cmp::Ordering::Greater) {
            best = a.clone();
        }
    }
    best
}

/// Interpolated AP straight from the definition: for each recall level,
/// the best precision at any cut-off reaching it.
fn brute_force_ap(tp_in_score_order: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return if tp_in_score_order.is_empty() { 1.0 } else { 0.0 };
    }
    let curve: Vec<(f64, f64)> = (1..=tp_in_score_order.len())
        .map(|k| {
            let hits = tp_in_score_order[..k].iter().filter(|t| **t).count() as f64;
            (hits / n_gt as f64, hits / k as f64)
        })
        .collect();
    (0..=100)
        .map(|i| {
            let r = i as f64 / 100.0;
            curve.iter().filter(|(rec, _)| *rec >= r).map(|(_, p)| *p).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0
}

#[test]
fn matching_f1_and_ap_equal_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..50 {
        let (gts, preds) = toy_case(&mut rng);
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        let iou = full_iou_table(&preds, &gts, None);
        let best = brute_force_match(&scores, &iou, gts.len(), 0.5);

        let m = match_instances(&preds, &gts, &image(), Track::Footprint, IouKind::Mask, 0.5).unwrap();
        let mut from_fast = vec![None; preds.len()];
        for pair in &m.pairs {
            from_fast[pair.prediction] = Some(pair.ground_truth);
        }
        assert_eq!(from_fast, best, "trial {trial}");

        let tp = best.iter().filter(|a| a.is_some()).count();
        let expect = Counts { tp, fp: preds.len() - tp, fn_: gts.len() - tp };
        assert_eq!(m.counts(), expect);
        let (p, r, f1) = precision_recall_f1(expect);
        let bp = if preds.is_empty() { 0.0 } else { tp as f64 / preds.len() as f64 };
        let br = if gts.is_empty() { 0.0 } else { tp as f64 / gts.len() as f64 };
        let bf = if bp + br == 0.0 { 0.0 } else { 2.0 * bp * br / (bp + br) };
        assert_eq!((p, r), (bp, br));
        assert!((f1 - bf).abs() < 1e-12);

        let d = 1.0;
        let biou = full_iou_table(&preds, &gts, Some(d));
        let bbest = brute_force_match(&scores, &biou, gts.len(), 0.5);
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let tps: Vec<bool> = order.iter().map(|&p| bbest[p].is_some()).collect();
        let gt = Dataset::new(vec![image()], gts.clone(), Split::Unsplit).unwrap();
        let config = EvalConfig { boundary_d: Some(d), ..EvalConfig::default() };
        let report = evaluate_dataset(&preds, &gt, &config).unwrap();
        let expect_ap = 100.0 * brute_force_ap(&tps, gts.len());
        assert!((report.footprint.boundary_ap50 - expect_ap).abs() < 1e-9, "trial {trial}");
        assert!((average_precision_101(&tps, gts.len()) - brute_force_ap(&tps, gts.len())).abs() < 1e-12);
    }
}

#[test]
fn ap_matches_enumeration_on_random_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..500 {
        let n_gt = rng.random_range(0..6);
        let n = rng.random_range(0..8);
        let tp: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let hits = tp.iter().filter(|t| **t).count();
        if hits > n_gt {
            continue;
        }
        assert!((average_precision_101(&tp, n_gt) - brute_force_ap(&tp, n_gt)).abs() < 1e-12);
    }
}

fn scene(seed: u64, n: usize) -> Dataset {
    generate_scene(&SceneConfig {
        width: 512,
        height: 512,
        n_buildings: n,
        seed,
        ..SceneConfig::default()
    })
    .unwrap()
}

#[test]
fn roof_metrics_ignore_offsets() {
    let gt = scene(3, 60);
    let noise = NoiseConfig { vertex_jitter_sigma: 1.5, seed: 4, ..NoiseConfig::default() };
    let preds = perturb_predictions(&gt, &noise).unwrap();
    let mut moved = preds.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in &mut moved {
        let o = OffsetVector::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        p.offset = Some(o);
        p.footprint = p.roof.as_ref().unwrap().translate(o);
    }
    let a = evaluate_dataset(&preds, &gt, &EvalConfig::default()).unwrap();
    let b = evaluate_dataset(&moved, &gt, &EvalConfig::default()).unwrap();
    assert_eq!(a.roof, b.roof);
}

#[test]
fn ground_truth_offsets_make_tracks_agree_in_polygon_space() {
    // Heavy jitter puts many pairs near the threshold; only polygon IoU is
    // translation invariant, so only there is the agreement structural.
    let config = EvalConfig { iou_space: IouSpace::Polygon, ..EvalConfig::default() };
    let mut misses = 0;
    for seed in 0..5 {
        let gt = scene(60 + seed, 80);
        let noise = NoiseConfig { vertex_jitter_sigma: 4.0, seed: 70 + seed, ..NoiseConfig::default() };
        let r = evaluate_dataset(&perturb_predictions(&gt, &noise).unwrap(), &gt, &config).unwrap();
        assert_eq!((r.roof.tp, r.roof.fp, r.roof.fn_), (r.footprint.tp, r.footprint.fp, r.footprint.fn_));
        misses += r.roof.fn_;
    }
    assert!(misses > 0);
}

#[test]
fn raster_and_polygon_spaces_agree_on_clear_cases() {
    let gt = scene(8, 60);
    let noise = NoiseConfig { vertex_jitter_sigma: 2.5, offset_noise_sigma: 3.0, seed: 9, ..NoiseConfig::default() };
    let preds = perturb_predictions(&gt, &noise).unwrap();
    let raster = evaluate_dataset(&preds, &gt, &EvalConfig::default()).unwrap();
    let poly = evaluate_dataset(&preds, &gt, &EvalConfig { iou_space: IouSpace::Polygon, ..EvalConfig::default() }).unwrap();
    for t in [Track::Roof, Track::Footprint] {
        assert!(raster.track(t).tp.abs_diff(poly.track(t).tp) <= 2);
        assert_eq!(raster.track(t).boundary_ap50, poly.track(t).boundary_ap50);
    }
}

#[test]
fn polygon_matching_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    for _ in 0..50 {
        let (gts, preds) = toy_case(&mut rng);
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        let iou: Vec<Vec<f64>> = preds
            .iter()
            .map(|p| gts.iter().map(|g| polygon_iou(&p.footprint, &g.footprint)).collect())
            .collect();
        let best = brute_force_match(&scores, &iou, gts.len(), 0.5);
        let m = match_instances(&preds, &gts, &image(), Track::Footprint, IouKind::Polygon, 0.5).unwrap();
        let mut fast = vec![None; preds.len()];
        for pair in &m.pairs {
            fast[pair.prediction] = Some(pair.ground_truth);
        }
        assert_eq!(fast, best);
    }
}

#[test]
fn zeroed_offsets_lower_footprint_f1() {
    // 10 px offsets on 30 px squares.
    let gt = generate_scene(&SceneConfig {
        width: 512,
        height: 512,
        n_buildings: 40,
        height_range: (10.0 * 0.6 / 30f64.to_radians().tan(), 10.0 * 0.6 / 30f64.to_radians().tan()),
        size_range: (30.0, 30.0),
        azimuth: Some(0.7),
        seed: 8,
        ..SceneConfig::default()
    })
    .unwrap();
    let mean: f64 = gt.annotations().iter().map(|a| a.offset.norm()).sum::<f64>() / 40.0;
    assert!((mean - 10.0).abs() < 1e-9);
    let preds: Vec<PredictionInstance> = gt
        .annotations()
        .iter()
        .map(|a| PredictionInstance {
            id: a.id,
            image_id: a.image_id,
            footprint: a.roof.clone(),
            roof: Some(a.roof.clone()),
            offset: Some(OffsetVector::ZERO),
            score: 1.0,
        })
        .collect();
    let r = evaluate_dataset(&preds, &gt, &EvalConfig::default()).unwrap();
    assert!(r.footprint.f1 < r.roof.f1);
    assert_eq!(r.roof.f1, 100.0);
}

#[test]
fn tied_scores_are_deterministic_and_order_free_of_gt_permutation() {
    let gt = scene(9, 30);
    let noise = NoiseConfig { vertex_jitter_sigma: 2.0, spurious_rate: 4.0, score_model: ScoreModel::Uniform, seed: 10, ..NoiseConfig::default() };
    let preds = perturb_predictions(&gt, &noise).unwrap();
    let a = evaluate_dataset(&preds, &gt, &EvalConfig::default()).unwrap();
    assert_eq!(a, evaluate_dataset(&preds, &gt, &EvalConfig::default()).unwrap());
    let mut anns = gt.annotations().to_vec();
    anns.reverse();
    let shuffled = Dataset::new(gt.images().to_vec(), anns, Split::Unsplit).unwrap();
    let b = evaluate_dataset(&preds, &shuffled, &EvalConfig::default()).unwrap();
    assert_eq!(a.footprint.tp, b.footprint.tp);
    assert_eq!(a.roof.tp, b.roof.tp);
}

#[test]
fn perfect_predictions_have_unit_ap_for_any_scores() {
    let gt = scene(11, 25);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut preds = perturb_predictions(&gt, &NoiseConfig::default()).unwrap();
    for p in &mut preds {
        p.score = rng.random_range(0.0..1.0);
    }
    let r = evaluate_dataset(&preds, &gt, &EvalConfig::default()).unwrap();
    assert_eq!(r.roof.boundary_ap50, 100.0);
    assert_eq!(r.footprint.boundary_ap50, 100.0);
}

#[test]
fn epe_reports_only_footprint_true_positives() {
    let gt = scene(13, 20);
    let noise = NoiseConfig { offset_noise_sigma: 1.0, seed: 14, ..NoiseConfig::default() };
    let mut preds = perturb_predictions(&gt, &noise).unwrap();
    preds[0].offset = None;
    // A far-off footprint cannot be a true positive; its offset must not count.
    preds[1].footprint = preds[1].footprint.translate(OffsetVector::new(200.0, 0.0));
    let r = evaluate_dataset(&preds, &gt, &EvalConfig::default()).unwrap();
    assert_eq!(r.epe_count, r.footprint.tp - 1);
}

proptest! {
    #[test]
    fn f1_is_monotone(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        let base = Counts { tp, fp, fn_ };
        let (p0, _, f0) = precision_recall_f1(base);
        let (_, _, f_tp) = precision_recall_f1(Counts { tp: tp + 1, fp, fn_: fn_.saturating_sub(1) });
        let (_, _, f_tp_new) = precision_recall_f1(Counts { tp: tp + 1, fp, fn_ });
        let (p_fp, _, _) = precision_recall_f1(Counts { tp, fp: fp + 1, fn_ });
        prop_assert!(f_tp >= f0);
        prop_assert!(f_tp_new >= f0 || tp + fp + fn_ == 0 || f_tp_new >= f0 - 1e-12);
        prop_assert!(p_fp <= p0);
        for v in [precision_recall_f1(base).0, precision_recall_f1(base).1, f0] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn greedy_pairs_are_injective_and_above_threshold(
        table in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 4), 0..6),
        scores in proptest::collection::vec(0.0f64..1.0, 6),
    ) {
        let scores = &scores[..table.len()];
        let m = greedy_match(scores, &table, 4, 0.5);
        let mut seen = [false; 4];
        for pair in &m.pairs {
            prop_assert!(pair.iou >= 0.5);
            prop_assert!(!seen[pair.ground_truth]);
            seen[pair.ground_truth] = true;
        }
        prop_assert_eq!(m.pairs.len() + m.unmatched_predictions.len(), table.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_ground_truths.len(), 4);
    }
}
