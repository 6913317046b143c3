//! Instance segmentation metrics: Symmetric Best Dice, difference in count,
//! and average precision at IoU 0.5.

use crate::error::{Error, Result};
use crate::maps::{LabelMap, Mask};

/// One binary mask per instance, all over the same image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceSet {
    masks: Vec<Mask>,
    shape: (usize, usize),
}

impl InstanceSet {
    pub fn from_labels(labels: &LabelMap) -> Self {
        let (h, w) = (labels.height(), labels.width());
        let masks = labels
            .distinct_labels()
            .into_iter()
            .map(|l| {
                Mask::new(h, w, labels.as_slice().iter().map(|&v| v == l).collect())
                    .expect("shape taken from label map")
            })
            .collect();
        Self { masks, shape: (h, w) }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    fn check_same_image(&self, other: &InstanceSet) -> Result<()> {
        if self.shape != other.shape && !self.is_empty() && !other.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.shape.0, self.shape.1),
                found: format!("{}x{}", other.shape.0, other.shape.1),
            });
        }
        Ok(())
    }
}

/// `2|a∩b| / (|a| + |b|)`; two empty masks agree perfectly.
pub fn dice(a: &Mask, b: &Mask) -> Result<f64> {
    a.check_shape(b.height(), b.width())?;
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * a.intersection_count(b) as f64 / (na + nb) as f64)
}

fn iou(a: &Mask, b: &Mask) -> f64 {
    let inter = a.intersection_count(b);
    let union = a.count() + b.count() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean over the objects of `a` of their best Dice against any object of `b`.
pub fn best_dice(a: &InstanceSet, b: &InstanceSet) -> Result<f64> {
    a.check_same_image(b)?;
    if a.is_empty() {
        return Ok(if b.is_empty() { 1.0 } else { 0.0 });
    }
    let mut sum = 0.0;
    for ma in &a.masks {
        let mut best: f64 = 0.0;
        for mb in &b.masks {
            best = best.max(dice(ma, mb)?);
        }
        sum += best;
    }
    Ok(sum / a.len() as f64)
}

/// `min(BD(pred|gt), BD(gt|pred))`. Both empty scores 1, one empty scores 0.
pub fn symmetric_best_dice(pred: &InstanceSet, gt: &InstanceSet) -> Result<f64> {
    if pred.is_empty() && gt.is_empty() {
        return Ok(1.0);
    }
    if pred.is_empty() || gt.is_empty() {
        return Ok(0.0);
    }
    Ok(best_dice(pred, gt)?.min(best_dice(gt, pred)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountDifference {
    /// `|mean(pred_i − gt_i)|`
    pub abs_of_mean: f64,
    /// `mean(|pred_i − gt_i|)`
    pub mean_of_abs: f64,
}

pub fn dic(pred_counts: &[usize], gt_counts: &[usize]) -> Result<CountDifference> {
    if pred_counts.len() != gt_counts.len() {
        return Err(Error::InvalidInput(format!(
            "count lists differ in length: {} vs {}",
            pred_counts.len(),
            gt_counts.len()
        )));
    }
    if pred_counts.is_empty() {
        return Err(Error::InvalidInput("count lists are empty".into()));
    }
    let n = pred_counts.len() as f64;
    let diffs: Vec<f64> = pred_counts.iter().zip(gt_counts).map(|(&p, &g)| p as f64 - g as f64).collect();
    Ok(CountDifference {
        abs_of_mean: (diffs.iter().sum::<f64>() / n).abs(),
        mean_of_abs: diffs.iter().map(|d| d.abs()).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy one-to-one matching at IoU ≥ 0.5. Predictions are visited from
/// largest to smallest (ties by index) and take the unmatched ground-truth
/// object with the highest IoU.
pub fn match_at_iou50(pred: &InstanceSet, gt: &InstanceSet) -> Result<MatchCounts> {
    pred.check_same_image(gt)?;
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(pred.masks[i].count()));
    let mut taken = vec![false; gt.len()];
    let mut tp = 0;
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt.masks.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&pred.masks[i], g);
            if v >= 0.5 && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            tp += 1;
        }
    }
    Ok(MatchCounts { tp, fp: pred.len() - tp, fn_: gt.len() - tp })
}

/// `TP / (TP + FP + FN)` under [`match_at_iou50`]; 1 when both sets are empty.
pub fn ap50(pred: &InstanceSet, gt: &InstanceSet) -> Result<f64> {
    let m = match_at_iou50(pred, gt)?;
    let denom = m.tp + m.fp + m.fn_;
    Ok(if denom == 0 { 1.0 } else { m.tp as f64 / denom as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub sbd: f64,
    pub ap50: f64,
    pub pred_count: usize,
    pub gt_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub sbd: f64,
    pub dic: f64,
    pub dic_mean_abs: f64,
    pub ap50: f64,
    pub images: Vec<ImageScore>,
}

pub fn score_image(name: &str, pred: &LabelMap, gt: &LabelMap) -> Result<ImageScore> {
    let p = InstanceSet::from_labels(pred);
    let g = InstanceSet::from_labels(gt);
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", gt.height(), gt.width()),
            found: format!("{}x{}", pred.height(), pred.width()),
        });
    }
    Ok(ImageScore {
        name: name.to_string(),
        sbd: symmetric_best_dice(&p, &g)?,
        ap50: ap50(&p, &g)?,
        pred_count: p.len(),
        gt_count: g.len(),
    })
}

/// Averages per-image scores; `dic` follows the absolute-of-mean reading.
pub fn aggregate(images: Vec<ImageScore>) -> Result<MetricReport> {
    let pred: Vec<usize> = images.iter().map(|s| s.pred_count).collect();
    let gt: Vec<usize> = images.iter().map(|s| s.gt_count).collect();
    let d = dic(&pred, &gt)?;
    let n = images.len() as f64;
    Ok(MetricReport {
        sbd: images.iter().map(|s| s.sbd).sum::<f64>() / n,
        ap50: images.iter().map(|s| s.ap50).sum::<f64>() / n,
        dic: d.abs_of_mean,
        dic_mean_abs: d.mean_of_abs,
        images,
    })
}
