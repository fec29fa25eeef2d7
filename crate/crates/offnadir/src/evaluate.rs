//! Dataset evaluation over a bounded worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use offnadir_core::eval::{aggregate, evaluate_image, group_by_image, EvalConfig, MetricsReport, PredictionInstance};
use offnadir_core::{BuildingAnnotation, Dataset};

/// Score descending, then image id, then prediction id. Applied before
/// evaluation so results do not depend on file order.
pub fn canonical_order(preds: &mut [PredictionInstance]) {
    preds.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.image_id.cmp(&b.image_id))
            .then(a.id.cmp(&b.id))
    });
}

/// Sorts `preds` canonically and evaluates every image on up to `jobs`
/// threads. Per-image results are reduced in dataset image order, so the
/// report is independent of `jobs`.
pub fn evaluate_predictions(
    preds: &mut [PredictionInstance],
    gt: &Dataset,
    config: &EvalConfig,
    jobs: usize,
) -> offnadir_core::Result<MetricsReport> {
    config.validate()?;
    canonical_order(preds);
    let preds: &[PredictionInstance] = preds;
    let tasks: Vec<(Vec<PredictionInstance>, Vec<usize>, Vec<BuildingAnnotation>)> = group_by_image(preds, gt)?
        .into_iter()
        .zip(gt.images())
        .map(|((group, ranks), image)| {
            let gts = gt.annotations_for(image.id).cloned().collect();
            (group.into_iter().cloned().collect(), ranks, gts)
        })
        .collect();
    let results: Vec<Mutex<Option<_>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some((p, ranks, gts)) = tasks.get(i) else {
            break;
        };
        let r = evaluate_image(p, ranks, gts, &gt.images()[i], config);
        *results[i].lock().expect("no worker panics while holding the lock") = Some(r);
    };
    let jobs = jobs.clamp(1, tasks.len().max(1));
    if jobs == 1 {
        work();
    } else {
        thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }
    let per_image = results
        .into_iter()
        .map(|m| m.into_inner().expect("workers joined").expect("every image evaluated"))
        .collect::<offnadir_core::Result<Vec<_>>>()?;
    Ok(aggregate(&per_image))
}
