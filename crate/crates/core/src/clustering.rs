//! Turning embeddings into discrete instances.
//!
//! Everything here is built on one primitive: select the foreground pixels
//! whose embedding lies strictly within a bandwidth `b` of some point.
//! [`cluster_by_known_centers`] thresholds around given centers;
//! [`mean_shift_cluster`] seeds on an unlabeled pixel, re-thresholds around
//! the running mean until it settles, and labels the final selection.

use crate::error::{Error, Result};
use crate::loss::Norm;
use crate::maps::{EmbeddingMap, LabelMap, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedPolicy {
    /// First unassigned foreground pixel in row-major order.
    #[default]
    ScanOrder,
    /// Uniformly random unassigned pixel from a seeded generator.
    SeededRandom(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub bandwidth: f64,
    /// Clusters with fewer pixels are dissolved back to label 0.
    /// `None` means 0.5% of the foreground pixel count, at least 1.
    pub min_cluster_size: Option<usize>,
    pub max_shift_iters: usize,
    pub shift_tolerance: f64,
    pub seed_policy: SeedPolicy,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.5,
            min_cluster_size: None,
            max_shift_iters: 100,
            shift_tolerance: 1e-4,
            seed_policy: SeedPolicy::ScanOrder,
        }
    }
}

impl ClusterConfig {
    pub fn with_bandwidth(bandwidth: f64) -> Self {
        Self { bandwidth, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidConfig(format!("bandwidth must be > 0, got {}", self.bandwidth)));
        }
        if self.max_shift_iters == 0 {
            return Err(Error::InvalidConfig("max_shift_iters must be >= 1".into()));
        }
        if self.shift_tolerance.is_nan() || self.shift_tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!("shift_tolerance must be > 0, got {}", self.shift_tolerance)));
        }
        Ok(())
    }

    pub fn effective_min_size(&self, foreground: usize) -> usize {
        self.min_cluster_size.unwrap_or_else(|| ((foreground as f64 * 0.005).floor() as usize).max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// 1..K for clustered pixels, 0 for background and dissolved pixels.
    pub labels: LabelMap,
    /// Center of cluster `k + 1`.
    pub centers: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
}

impl ClusterAssignment {
    fn empty(height: usize, width: usize) -> Self {
        Self { labels: LabelMap::zeros(height, width), centers: Vec::new(), sizes: Vec::new() }
    }

    pub fn num_clusters(&self) -> usize {
        self.centers.len()
    }
}

fn check_inputs(emb: &EmbeddingMap, fg: &Mask) -> Result<()> {
    fg.check_shape(emb.height(), emb.width())
}

/// Foreground pixels whose embedding lies strictly within `b` of `center`.
pub fn threshold_around(emb: &EmbeddingMap, fg: &Mask, center: &[f64], b: f64, norm: Norm) -> Result<Mask> {
    check_inputs(emb, fg)?;
    if center.len() != emb.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}-dimensional center", emb.dims()),
            found: format!("{} components", center.len()),
        });
    }
    let values =
        fg.as_slice().iter().enumerate().map(|(p, &on)| on && norm.distance(emb.pixel(p), center) < b).collect();
    Mask::new(emb.height(), emb.width(), values)
}

/// Assigns each foreground pixel to the nearest center strictly within `b`;
/// ties go to the lowest center index. Centers that claim nothing are
/// dropped and the survivors renumbered 1..K in input order.
pub fn cluster_by_known_centers(
    emb: &EmbeddingMap,
    fg: &Mask,
    centers: &[Vec<f64>],
    b: f64,
    norm: Norm,
) -> Result<ClusterAssignment> {
    check_inputs(emb, fg)?;
    if let Some(bad) = centers.iter().find(|c| c.len() != emb.dims()) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}-dimensional centers", emb.dims()),
            found: format!("{} components", bad.len()),
        });
    }
    let mut raw = vec![usize::MAX; emb.num_pixels()];
    let mut sizes = vec![0usize; centers.len()];
    for (p, &on) in fg.as_slice().iter().enumerate() {
        if !on {
            continue;
        }
        let x = emb.pixel(p);
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in centers.iter().enumerate() {
            let d = norm.distance(x, c);
            if d < b && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        if let Some((k, _)) = best {
            raw[p] = k;
            sizes[k] += 1;
        }
    }
    let mut renumber = vec![0u32; centers.len()];
    let mut out = ClusterAssignment::empty(emb.height(), emb.width());
    for (k, &n) in sizes.iter().enumerate() {
        if n > 0 {
            out.centers.push(centers[k].clone());
            out.sizes.push(n);
            renumber[k] = out.centers.len() as u32;
        }
    }
    for (l, &k) in out.labels.as_mut_slice().iter_mut().zip(&raw) {
        if k != usize::MAX {
            *l = renumber[k];
        }
    }
    Ok(out)
}

fn mean_of(emb: &EmbeddingMap, selection: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; emb.dims()];
    for &p in selection {
        for (a, &x) in m.iter_mut().zip(emb.pixel(p)) {
            *a += x;
        }
    }
    let n = selection.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn select(emb: &EmbeddingMap, candidates: &[usize], center: &[f64], b: f64, norm: Norm) -> Vec<usize> {
    candidates.iter().copied().filter(|&p| norm.distance(emb.pixel(p), center) < b).collect()
}

/// Thresholds repeatedly around the running mean, starting at `start`.
/// Returns the last center thresholded around and its selection.
fn shift_to_mode(
    emb: &EmbeddingMap,
    candidates: &[usize],
    start: &[f64],
    config: &ClusterConfig,
    norm: Norm,
) -> (Vec<f64>, Vec<usize>) {
    let mut center = start.to_vec();
    let mut selection = select(emb, candidates, &center, config.bandwidth, norm);
    for _ in 1..config.max_shift_iters {
        if selection.is_empty() {
            break;
        }
        let mean = mean_of(emb, &selection);
        if norm.distance(&mean, &center) < config.shift_tolerance {
            break;
        }
        let next = select(emb, candidates, &mean, config.bandwidth, norm);
        if next.is_empty() {
            break;
        }
        center = mean;
        selection = next;
    }
    (center, selection)
}

/// Mean-shift style instance extraction.
///
/// Each round picks an unassigned foreground pixel, shifts a threshold
/// window from its embedding to a local mode and claims the unassigned
/// pixels inside it. Earlier clusters keep their pixels; a later window may
/// still cover them when computing its mean. A round that claims nothing
/// retires its seed pixel, so the loop runs at most once per foreground
/// pixel. Clusters below the minimum size are dissolved afterwards and the
/// remainder numbered 1..K in discovery order.
pub fn mean_shift_cluster(
    emb: &EmbeddingMap,
    fg: &Mask,
    config: &ClusterConfig,
    norm: Norm,
) -> Result<ClusterAssignment> {
    check_inputs(emb, fg)?;
    config.validate()?;
    let candidates: Vec<usize> = fg.as_slice().iter().enumerate().filter_map(|(p, &on)| on.then_some(p)).collect();
    let mut out = ClusterAssignment::empty(emb.height(), emb.width());
    if candidates.is_empty() {
        return Ok(out);
    }

    // raw[p]: 0 background, k + 1 for the k-th discovered cluster
    const UNASSIGNED: u32 = u32::MAX;
    const RETIRED: u32 = u32::MAX - 1;
    let mut raw = vec![0u32; emb.num_pixels()];
    for &p in &candidates {
        raw[p] = UNASSIGNED;
    }
    let mut open: Vec<usize> = candidates.clone();
    let mut rng = match config.seed_policy {
        SeedPolicy::SeededRandom(seed) => Some(crate::synthdata::rng_from_seed(seed)),
        SeedPolicy::ScanOrder => None,
    };
    let mut centers = Vec::new();
    let mut sizes = Vec::new();

    loop {
        open.retain(|&p| raw[p] == UNASSIGNED);
        if open.is_empty() {
            break;
        }
        let seed = match rng.as_mut() {
            Some(rng) => open[crate::synthdata::uniform_index(rng, open.len())],
            None => open[0],
        };
        let (center, selection) = shift_to_mode(emb, &candidates, emb.pixel(seed), config, norm);
        let id = centers.len() as u32 + 1;
        let mut claimed = 0usize;
        for &p in &selection {
            if raw[p] == UNASSIGNED {
                raw[p] = id;
                claimed += 1;
            }
        }
        if claimed == 0 {
            raw[seed] = RETIRED;
            continue;
        }
        centers.push(center);
        sizes.push(claimed);
    }

    let min_size = config.effective_min_size(candidates.len());
    let mut renumber = vec![0u32; centers.len()];
    for (k, (center, &n)) in centers.into_iter().zip(&sizes).enumerate() {
        if n >= min_size {
            out.centers.push(center);
            out.sizes.push(n);
            renumber[k] = out.centers.len() as u32;
        }
    }
    for (l, &r) in out.labels.as_mut_slice().iter_mut().zip(&raw) {
        *l = match r {
            0 | RETIRED | UNASSIGNED => 0,
            id => renumber[id as usize - 1],
        };
    }
    Ok(out)
}

/// Runs `mean_shift_cluster` separately inside each nonzero semantic class
/// and stacks the results, numbering clusters class by class.
pub fn mean_shift_per_class(
    emb: &EmbeddingMap,
    semantic: &LabelMap,
    config: &ClusterConfig,
    norm: Norm,
) -> Result<ClusterAssignment> {
    emb.check_labels(semantic)?;
    let mut out = ClusterAssignment::empty(emb.height(), emb.width());
    for class in semantic.distinct_labels() {
        let mask =
            Mask::new(semantic.height(), semantic.width(), semantic.as_slice().iter().map(|&s| s == class).collect())?;
        let part = mean_shift_cluster(emb, &mask, config, norm)?;
        let offset = out.centers.len() as u32;
        for (dst, &src) in out.labels.as_mut_slice().iter_mut().zip(part.labels.as_slice()) {
            if src != 0 {
                *dst = src + offset;
            }
        }
        out.centers.extend(part.centers);
        out.sizes.extend(part.sizes);
    }
    Ok(out)
}

/// Single pass without shifting: threshold once around each seed pixel's
/// own embedding. Baseline for the mean-shift variant.
pub fn threshold_cluster(
    emb: &EmbeddingMap,
    fg: &Mask,
    config: &ClusterConfig,
    norm: Norm,
) -> Result<ClusterAssignment> {
    let single = ClusterConfig { max_shift_iters: 1, ..*config };
    mean_shift_cluster(emb, fg, &single, norm)
}
