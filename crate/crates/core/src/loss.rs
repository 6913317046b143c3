//! Discriminative embedding loss and its analytical gradient.
//!
//! The loss has three parts, computed per image over the clusters defined by
//! the instance labels (label 0 is ignored):
//!
//! * variance: `1/C Σ_c 1/N_c Σ_i [‖μ_c − x_i‖ − δ_v]₊²`
//! * distance: `1/(C(C−1)) Σ_{a≠b} [2δ_d − ‖μ_a − μ_b‖]₊²` over ordered pairs,
//!   defined as 0 when there are fewer than two clusters
//! * regularization: `1/C Σ_c ‖μ_c‖`
//!
//! and the total is `α·var + β·dist + γ·reg`. Every reduction runs in `f64`
//! in a fixed order, so results are reproducible for a given input.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::maps::{EmbeddingMap, LabelMap, Mask};

/// Distance used by all three loss terms and by thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Norm {
    L1,
    #[default]
    L2,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    /// `‖a − b‖` without allocating.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }

    /// Writes a subgradient of `‖v‖` into `out`, given `n = ‖v‖`.
    /// At the origin the subgradient is zero for both norms.
    fn subgradient(self, v: &[f64], n: f64, out: &mut [f64]) {
        match self {
            Norm::L1 => {
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            Norm::L2 => {
                if n > 0.0 {
                    for (o, &x) in out.iter_mut().zip(v) {
                        *o = x / n;
                    }
                } else {
                    out.fill(0.0);
                }
            }
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::InvalidConfig(format!("unknown norm `{other}` (expected l1 or l2)"))),
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        })
    }
}

/// How per-class losses are combined in [`per_class_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassReduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub delta_v: f64,
    pub delta_d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub norm: Norm,
    pub class_reduction: ClassReduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            delta_v: 0.5,
            delta_d: 1.5,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.001,
            norm: Norm::L2,
            class_reduction: ClassReduction::Sum,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_v > 0.0 && self.delta_v.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta_v must be > 0, got {}", self.delta_v)));
        }
        if !(self.delta_d > 0.0 && self.delta_d.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta_d must be > 0, got {}", self.delta_d)));
        }
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Non-fatal problems with the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.delta_d <= self.delta_v {
            out.push(format!(
                "delta_d ({}) <= delta_v ({}): thresholding around cluster centers is no longer guaranteed to separate instances",
                self.delta_d, self.delta_v
            ));
        }
        out
    }
}

/// Means and sizes of the clusters present in a label map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterStats {
    pub labels: Vec<u32>,
    pub means: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

impl ClusterStats {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn index(&self) -> HashMap<u32, usize> {
        self.labels.iter().enumerate().map(|(i, &l)| (l, i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_var: f64,
    pub l_dist: f64,
    pub l_reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn weighted(l_var: f64, l_dist: f64, l_reg: f64, config: &LossConfig) -> Self {
        Self { l_var, l_dist, l_reg, total: config.alpha * l_var + config.beta * l_dist + config.gamma * l_reg }
    }

    fn accumulate(&mut self, other: &LossBreakdown) {
        self.l_var += other.l_var;
        self.l_dist += other.l_dist;
        self.l_reg += other.l_reg;
        self.total += other.total;
    }

    fn scale(&mut self, s: f64) {
        self.l_var *= s;
        self.l_dist *= s;
        self.l_reg *= s;
        self.total *= s;
    }
}

/// `∂total/∂x_i`, laid out exactly like the embedding map it was computed for.
pub type GradientMap = EmbeddingMap;

#[inline]
fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Cluster centers and sizes for every nonzero label.
pub fn cluster_means(emb: &EmbeddingMap, labels: &LabelMap) -> Result<ClusterStats> {
    emb.check_labels(labels)?;
    let dims = emb.dims();
    let ids = labels.distinct_labels();
    let index: HashMap<u32, usize> = ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut sums = vec![vec![0.0; dims]; ids.len()];
    let mut counts = vec![0usize; ids.len()];
    for (p, &l) in labels.as_slice().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = index[&l];
        counts[c] += 1;
        for (s, &x) in sums[c].iter_mut().zip(emb.pixel(p)) {
            *s += x;
        }
    }
    let means = sums.into_iter().zip(&counts).map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect()).collect();
    Ok(ClusterStats { labels: ids, means, counts })
}

/// Hinged pull of every labeled embedding towards its cluster center.
pub fn variance_term(
    emb: &EmbeddingMap,
    labels: &LabelMap,
    stats: &ClusterStats,
    delta_v: f64,
    norm: Norm,
) -> Result<f64> {
    emb.check_labels(labels)?;
    if stats.is_empty() {
        return Ok(0.0);
    }
    let index = stats.index();
    let mut per_cluster = vec![0.0; stats.len()];
    for (p, &l) in labels.as_slice().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c =
            *index.get(&l).ok_or_else(|| Error::InvalidInput(format!("label {l} missing from cluster statistics")))?;
        let h = hinge(norm.distance(&stats.means[c], emb.pixel(p)) - delta_v);
        per_cluster[c] += h * h;
    }
    let sum: f64 = per_cluster.iter().zip(&stats.counts).map(|(s, &n)| s / n as f64).sum();
    Ok(sum / stats.len() as f64)
}

/// Hinged push between every ordered pair of distinct cluster centers.
pub fn distance_term(stats: &ClusterStats, delta_d: f64, norm: Norm) -> f64 {
    let c = stats.len();
    if c <= 1 {
        return 0.0;
    }
    let mut sum = 0.0;
    for a in 0..c {
        for b in 0..c {
            if a == b {
                continue;
            }
            let h = hinge(2.0 * delta_d - norm.distance(&stats.means[a], &stats.means[b]));
            sum += h * h;
        }
    }
    sum / (c * (c - 1)) as f64
}

/// Mean norm of the cluster centers.
pub fn regularization_term(stats: &ClusterStats, norm: Norm) -> f64 {
    if stats.is_empty() {
        return 0.0;
    }
    stats.means.iter().map(|m| norm.of(m)).sum::<f64>() / stats.len() as f64
}

pub fn discriminative_loss(emb: &EmbeddingMap, labels: &LabelMap, config: &LossConfig) -> Result<LossBreakdown> {
    config.validate()?;
    let stats = cluster_means(emb, labels)?;
    let l_var = variance_term(emb, labels, &stats, config.delta_v, config.norm)?;
    let l_dist = distance_term(&stats, config.delta_d, config.norm);
    let l_reg = regularization_term(&stats, config.norm);
    Ok(LossBreakdown::weighted(l_var, l_dist, l_reg, config))
}

/// Loss value plus the exact gradient of `total` with respect to every
/// embedding, including the dependence of each center on its members.
/// Background pixels receive a zero gradient.
pub fn loss_backward(
    emb: &EmbeddingMap,
    labels: &LabelMap,
    config: &LossConfig,
) -> Result<(LossBreakdown, GradientMap)> {
    let mut grad = GradientMap::zeros(emb.height(), emb.width(), emb.dims());
    let breakdown = accumulate_backward(emb, labels, config, 1.0, &mut grad)?;
    Ok((breakdown, grad))
}

/// Adds `scale · ∂total/∂x` into `grad` and returns the unscaled breakdown.
fn accumulate_backward(
    emb: &EmbeddingMap,
    labels: &LabelMap,
    config: &LossConfig,
    scale: f64,
    grad: &mut GradientMap,
) -> Result<LossBreakdown> {
    config.validate()?;
    let stats = cluster_means(emb, labels)?;
    let l_var = variance_term(emb, labels, &stats, config.delta_v, config.norm)?;
    let l_dist = distance_term(&stats, config.delta_d, config.norm);
    let l_reg = regularization_term(&stats, config.norm);
    let breakdown = LossBreakdown::weighted(l_var, l_dist, l_reg, config);

    let c = stats.len();
    if c == 0 {
        return Ok(breakdown);
    }
    let dims = emb.dims();
    let cf = c as f64;
    let index = stats.index();
    let norm = config.norm;

    let mut diff = vec![0.0; dims];
    let mut unit = vec![0.0; dims];

    // Direct variance force on each member: coef_i · u_i, where
    // coef_i = α · 2[d_i − δ_v]₊ / (C · N_c). The same force, averaged,
    // acts on the center and is routed back to members below.
    let mut center_grad = vec![vec![0.0; dims]; c];
    let mut direct = vec![0.0; emb.as_slice().len()];
    for (p, &l) in labels.as_slice().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let k = index[&l];
        let x = emb.pixel(p);
        for ((d, &xi), &mu) in diff.iter_mut().zip(x).zip(&stats.means[k]) {
            *d = xi - mu;
        }
        let dist = norm.of(&diff);
        let h = hinge(dist - config.delta_v);
        if h <= 0.0 {
            continue;
        }
        norm.subgradient(&diff, dist, &mut unit);
        let coef = config.alpha * 2.0 * h / (cf * stats.counts[k] as f64);
        for (j, &u) in unit.iter().enumerate() {
            direct[p * dims + j] += coef * u;
            center_grad[k][j] -= coef * u;
        }
    }

    // Distance term: each unordered pair appears twice in the ordered sum.
    if c > 1 && config.beta != 0.0 {
        let pair_norm = (c * (c - 1)) as f64;
        for a in 0..c {
            for b in 0..c {
                if a == b {
                    continue;
                }
                for ((d, &ma), &mb) in diff.iter_mut().zip(&stats.means[a]).zip(&stats.means[b]) {
                    *d = ma - mb;
                }
                let dist = norm.of(&diff);
                let h = hinge(2.0 * config.delta_d - dist);
                if h <= 0.0 {
                    continue;
                }
                norm.subgradient(&diff, dist, &mut unit);
                let coef = config.beta * 2.0 * h / pair_norm;
                for (j, &u) in unit.iter().enumerate() {
                    center_grad[a][j] -= coef * u;
                    center_grad[b][j] += coef * u;
                }
            }
        }
    }

    if config.gamma != 0.0 {
        for (k, mu) in stats.means.iter().enumerate() {
            let n = norm.of(mu);
            norm.subgradient(mu, n, &mut unit);
            for (g, &u) in center_grad[k].iter_mut().zip(&unit) {
                *g += config.gamma * u / cf;
            }
        }
    }

    // ∂μ_c/∂x_i = I / N_c for members of c.
    for g in center_grad.iter_mut().zip(&stats.counts) {
        let (g, &n) = g;
        for v in g.iter_mut() {
            *v /= n as f64;
        }
    }
    let out = grad.as_mut_slice();
    for (p, &l) in labels.as_slice().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let k = index[&l];
        for j in 0..dims {
            out[p * dims + j] += scale * (direct[p * dims + j] + center_grad[k][j]);
        }
    }
    Ok(breakdown)
}

fn semantic_classes(emb: &EmbeddingMap, semantic: &LabelMap, instances: &LabelMap) -> Result<Vec<u32>> {
    emb.check_labels(semantic)?;
    emb.check_labels(instances)?;
    Ok(semantic.distinct_labels())
}

fn class_mask(semantic: &LabelMap, class: u32) -> Mask {
    Mask::new(semantic.height(), semantic.width(), semantic.as_slice().iter().map(|&s| s == class).collect())
        .expect("mask built from label map shape")
}

/// Runs the loss independently inside every nonzero semantic class, so
/// instances of different classes exert no forces on each other.
pub fn per_class_loss(
    emb: &EmbeddingMap,
    semantic: &LabelMap,
    instances: &LabelMap,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    let classes = semantic_classes(emb, semantic, instances)?;
    let mut total = LossBreakdown::default();
    for &class in &classes {
        let restricted = instances.restricted_to(&class_mask(semantic, class))?;
        total.accumulate(&discriminative_loss(emb, &restricted, config)?);
    }
    if config.class_reduction == ClassReduction::Mean && !classes.is_empty() {
        total.scale(1.0 / classes.len() as f64);
    }
    Ok(total)
}

pub fn per_class_loss_backward(
    emb: &EmbeddingMap,
    semantic: &LabelMap,
    instances: &LabelMap,
    config: &LossConfig,
) -> Result<(LossBreakdown, GradientMap)> {
    let classes = semantic_classes(emb, semantic, instances)?;
    let scale = match config.class_reduction {
        ClassReduction::Mean if !classes.is_empty() => 1.0 / classes.len() as f64,
        _ => 1.0,
    };
    let mut grad = GradientMap::zeros(emb.height(), emb.width(), emb.dims());
    let mut total = LossBreakdown::default();
    for &class in &classes {
        let restricted = instances.restricted_to(&class_mask(semantic, class))?;
        total.accumulate(&accumulate_backward(emb, &restricted, config, scale, &mut grad)?);
    }
    if scale != 1.0 {
        total.scale(scale);
    }
    Ok((total, grad))
}
