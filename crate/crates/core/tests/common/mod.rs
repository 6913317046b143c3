//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

use discseg::loss::{discriminative_loss, loss_backward, LossConfig, Norm};
use discseg::maps::{EmbeddingMap, LabelMap, Mask};
use discseg::metrics::{ap50, dic, dice, symmetric_best_dice, InstanceSet};
use discseg::toynet::{backward, forward, NetConfig, NetParams, Planes};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub struct TestRng(Xoshiro256PlusPlus);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn real(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.real()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.real() * n as f64) as usize).min(n - 1)
    }

    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.index(hi - lo + 1)
    }

    pub fn normal(&mut self) -> f64 {
        let u = 1.0 - self.real();
        let v = self.real();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    /// Uniform point in the open ball of the given radius.
    pub fn in_ball(&mut self, dims: usize, radius: f64) -> Vec<f64> {
        let dir: Vec<f64> = (0..dims).map(|_| self.normal()).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let r = radius * self.real().powf(1.0 / dims as f64);
        dir.into_iter().map(|v| v / len * r).collect()
    }

    /// Uniformly random orthogonal matrix (row-major), via Gram-Schmidt.
    pub fn orthogonal(&mut self, n: usize) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        while rows.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| self.normal()).collect();
            for r in &rows {
                let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
            }
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len > 1e-6 {
                rows.push(v.into_iter().map(|x| x / len).collect());
            }
        }
        rows
    }
}

/// Labels in `0..=clusters` with every cluster present at least once.
pub fn random_labels(rng: &mut TestRng, h: usize, w: usize, clusters: usize, background: f64) -> LabelMap {
    loop {
        let values: Vec<u32> =
            (0..h * w).map(|_| if rng.real() < background { 0 } else { 1 + rng.index(clusters) as u32 }).collect();
        let labels = LabelMap::from_vec(h, w, values).unwrap();
        if labels.num_instances() == clusters {
            return labels;
        }
    }
}

/// Gaussian embeddings around per-cluster offsets, so that both hinges are
/// active for some pixels and pairs.
pub fn random_fixture(rng: &mut TestRng, h: usize, w: usize, dims: usize, clusters: usize) -> (EmbeddingMap, LabelMap) {
    let labels = random_labels(rng, h, w, clusters, 0.15);
    let offsets: Vec<Vec<f64>> = (0..=clusters).map(|_| (0..dims).map(|_| 1.5 * rng.normal()).collect()).collect();
    let values: Vec<f64> =
        labels.as_slice().iter().flat_map(|&l| offsets[l as usize].clone()).map(|o| o + 0.6 * rng.normal()).collect();
    (EmbeddingMap::from_vec(h, w, dims, values).unwrap(), labels)
}

/// Smallest distance of any pixel-to-mean or mean-to-mean distance to a
/// hinge or norm kink, measured in embedding units.
pub fn kink_distance(emb: &EmbeddingMap, labels: &LabelMap, cfg: &LossConfig) -> f64 {
    let stats = discseg::loss::cluster_means(emb, labels).unwrap();
    let mut margin = f64::INFINITY;
    for (k, &l) in stats.labels.iter().enumerate() {
        let m = &stats.means[k];
        margin = margin.min(cfg.norm.of(m));
        for p in 0..emb.num_pixels() {
            if labels.as_slice()[p] == l {
                let d = cfg.norm.distance(emb.pixel(p), m);
                margin = margin.min((d - cfg.delta_v).abs()).min(d);
            }
        }
        for m2 in &stats.means[..k] {
            margin = margin.min((cfg.norm.distance(m, m2) - 2.0 * cfg.delta_d).abs());
        }
    }
    margin
}

pub struct GradCheck {
    /// Largest |analytic − numeric| / max(|analytic|, |numeric|) over all
    /// components whose magnitude exceeds the floor.
    pub max_rel: f64,
    /// Largest |analytic − numeric| over the remaining components.
    pub max_abs_small: f64,
}

/// Central differences of the total loss with step `h` for every embedding
/// component.
pub fn loss_grad_check(emb: &EmbeddingMap, labels: &LabelMap, cfg: &LossConfig, h: f64, floor: f64) -> GradCheck {
    let (_, analytic) = loss_backward(emb, labels, cfg).unwrap();
    let mut probe = emb.clone();
    let mut numeric = vec![0.0; emb.as_slice().len()];
    for (i, n) in numeric.iter_mut().enumerate() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = discriminative_loss(&probe, labels, cfg).unwrap().total;
        probe.as_mut_slice()[i] = orig - h;
        let down = discriminative_loss(&probe, labels, cfg).unwrap().total;
        probe.as_mut_slice()[i] = orig;
        *n = (up - down) / (2.0 * h);
    }
    compare(analytic.as_slice(), &numeric, floor)
}

pub fn compare(analytic: &[f64], numeric: &[f64], floor: f64) -> GradCheck {
    let mut out = GradCheck { max_rel: 0.0, max_abs_small: 0.0 };
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        if scale > floor {
            out.max_rel = out.max_rel.max((a - n).abs() / scale);
        } else {
            out.max_abs_small = out.max_abs_small.max((a - n).abs());
        }
    }
    out
}

/// Embeddings with zero variance and distance loss: every member strictly
/// inside `delta_v` of its exact cluster mean, means pairwise at least
/// `2 · delta_d` apart.
pub fn zero_loss_fixture(rng: &mut TestRng, delta_v: f64, delta_d: f64) -> (EmbeddingMap, LabelMap) {
    zero_loss_fixture_within(rng, delta_v, delta_d, delta_v)
}

/// Like [`zero_loss_fixture`] but with every member within `max_radius`
/// (at most `delta_v`) of its center.
pub fn zero_loss_fixture_within(
    rng: &mut TestRng,
    delta_v: f64,
    delta_d: f64,
    max_radius: f64,
) -> (EmbeddingMap, LabelMap) {
    let h = rng.int(6, 16);
    let w = rng.int(6, 16);
    let dims = rng.int(2, 4);
    let clusters = rng.int(1, 6).min(h * w / 4);
    let background = rng.range(0.0, 0.4);
    let labels = random_labels(rng, h, w, clusters, background);
    let spread = 2.0 * delta_d * (clusters as f64).powf(1.0 / dims as f64) * 2.0;
    let mut centers: Vec<Vec<f64>> = Vec::new();
    while centers.len() < clusters {
        let c: Vec<f64> = (0..dims).map(|_| rng.range(-spread, spread)).collect();
        if centers.iter().all(|o| Norm::L2.distance(o, &c) >= 2.0 * delta_d * 1.001) {
            centers.push(c);
        }
    }
    // members: uniform in a ball, then shifted so the mean is exactly the center
    let radius = max_radius * rng.range(0.3, 1.0);
    let mut offsets: Vec<Vec<f64>> = (0..h * w).map(|_| rng.in_ball(dims, radius)).collect();
    for k in 1..=clusters as u32 {
        let members: Vec<usize> = (0..h * w).filter(|&p| labels.as_slice()[p] == k).collect();
        let mut mean = vec![0.0; dims];
        for &p in &members {
            mean.iter_mut().zip(&offsets[p]).for_each(|(m, o)| *m += o / members.len() as f64);
        }
        for &p in &members {
            offsets[p].iter_mut().zip(&mean).for_each(|(o, m)| *o -= m);
        }
        let far = members.iter().map(|&p| offsets[p].iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let limit = max_radius.min(delta_v) * 0.999;
        if far > limit {
            for &p in &members {
                offsets[p].iter_mut().for_each(|o| *o *= limit / far);
            }
        }
    }
    let values: Vec<f64> = (0..h * w)
        .flat_map(|p| match labels.as_slice()[p] {
            0 => (0..dims).map(|_| rng.range(-spread, spread)).collect::<Vec<_>>(),
            l => centers[l as usize - 1].iter().zip(&offsets[p]).map(|(c, o)| c + o).collect(),
        })
        .collect();
    (EmbeddingMap::from_vec(h, w, dims, values).unwrap(), labels)
}

/// Whether two label maps describe the same partition up to renaming,
/// with background fixed.
pub fn same_partition(a: &LabelMap, b: &LabelMap) -> bool {
    use std::collections::HashMap;
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// A two-layer network, an 8×8 input and a 3-instance labeling, chosen so
/// that no hidden pre-activation and no loss hinge lies near its kink.
pub struct NetFixture {
    pub params: NetParams,
    pub input: Planes,
    pub labels: LabelMap,
}

/// Smallest absolute pre-activation of the first (rectified) layer.
pub fn first_layer_margin(params: &NetParams, input: &Planes) -> f64 {
    let c = params.config();
    let probe = NetConfig { num_layers: 1, out_dims: c.hidden_channels, ..*c };
    let single = NetParams::from_layers(&probe, vec![params.layers()[0].clone()]).unwrap();
    let (pre, _) = forward(&single, input).unwrap();
    pre.as_slice().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

pub fn net_fixture(seed: u64, cfg: &LossConfig) -> NetFixture {
    let mut rng = TestRng::new(seed);
    loop {
        let config = NetConfig {
            in_channels: 5,
            hidden_channels: 4,
            num_layers: 2,
            kernel_size: 3,
            out_dims: 3,
            weight_init_seed: rng.0.next_u64(),
            negative_slope: 0.1,
        };
        let mut params = NetParams::init(&config).unwrap();
        // larger weights spread the embeddings so that pull and push are
        // both active
        for layer in params.layers_mut() {
            layer.weight.iter_mut().for_each(|w| *w *= 2.0);
            layer.bias.iter_mut().for_each(|b| *b = rng.range(-0.2, 0.2));
        }
        let data: Vec<f64> = (0..5 * 64).map(|_| rng.range(-1.0, 1.0)).collect();
        let input = Planes::new(5, 8, 8, data).unwrap();
        let labels = random_labels(&mut rng, 8, 8, 3, 0.15);
        if first_layer_margin(&params, &input) < 1e-3 {
            continue;
        }
        let (emb, _) = forward(&params, &input).unwrap();
        if kink_distance(&emb, &labels, cfg) < 1e-3 {
            continue;
        }
        return NetFixture { params, input, labels };
    }
}

fn param(p: &mut NetParams, layer: usize, bias: bool, i: usize) -> &mut f64 {
    let l = &mut p.layers_mut()[layer];
    if bias {
        &mut l.bias[i]
    } else {
        &mut l.weight[i]
    }
}

/// Central differences of loss(net(input)) for every weight and bias.
pub fn net_grad_check(f: &NetFixture, cfg: &LossConfig, h: f64, floor: f64) -> GradCheck {
    let (emb, cache) = forward(&f.params, &f.input).unwrap();
    let (_, g) = loss_backward(&emb, &f.labels, cfg).unwrap();
    let grads = backward(&f.params, &cache, &g).unwrap();
    let analytic: Vec<f64> = grads.tensors().flat_map(|t| t.iter().copied()).collect();
    let total = |p: &NetParams| discriminative_loss(&forward(p, &f.input).unwrap().0, &f.labels, cfg).unwrap().total;
    let mut probe = f.params.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for li in 0..probe.layers().len() {
        for bias in [false, true] {
            let len = if bias { probe.layers()[li].bias.len() } else { probe.layers()[li].weight.len() };
            for i in 0..len {
                let orig = *param(&mut probe, li, bias, i);
                *param(&mut probe, li, bias, i) = orig + h;
                let up = total(&probe);
                *param(&mut probe, li, bias, i) = orig - h;
                let down = total(&probe);
                *param(&mut probe, li, bias, i) = orig;
                numeric.push((up - down) / (2.0 * h));
            }
        }
    }
    compare(&analytic, &numeric, floor)
}

fn row_mask(bits: &[u8]) -> Mask {
    Mask::new(1, bits.len(), bits.iter().map(|&b| b != 0).collect()).unwrap()
}

fn row_set(labels: &[u32]) -> InstanceSet {
    InstanceSet::from_labels(&LabelMap::from_vec(1, labels.len(), labels.to_vec()).unwrap())
}

/// Hand-computed metric fixtures: `(name, computed, expected)`. Each must
/// match exactly.
pub fn metric_oracles() -> Vec<(&'static str, f64, f64)> {
    let two = row_set(&[1, 1, 2, 2]);
    let none = row_set(&[0, 0, 0, 0]);
    vec![
        ("dice identical", dice(&row_mask(&[1, 1, 0, 0]), &row_mask(&[1, 1, 0, 0])).unwrap(), 1.0),
        ("dice disjoint", dice(&row_mask(&[1, 1, 0, 0]), &row_mask(&[0, 0, 1, 1])).unwrap(), 0.0),
        ("dice half overlap", dice(&row_mask(&[1, 1, 1, 1, 0, 0]), &row_mask(&[0, 0, 1, 1, 1, 1])).unwrap(), 0.5),
        ("dice both empty", dice(&row_mask(&[0, 0]), &row_mask(&[0, 0])).unwrap(), 1.0),
        ("sbd pred = gt", symmetric_best_dice(&two, &two).unwrap(), 1.0),
        ("sbd merged pair", symmetric_best_dice(&row_set(&[1, 1, 1, 1]), &two).unwrap(), 2.0 / 3.0),
        ("sbd empty pred", symmetric_best_dice(&none, &two).unwrap(), 0.0),
        ("dic identical", dic(&[3, 5], &[3, 5]).unwrap().abs_of_mean, 0.0),
        ("dic +1 -1", dic(&[4, 2], &[3, 3]).unwrap().abs_of_mean, 0.0),
        ("dic +1 -1 mean of abs", dic(&[4, 2], &[3, 3]).unwrap().mean_of_abs, 1.0),
        ("dic +2 +2", dic(&[5, 5], &[3, 3]).unwrap().abs_of_mean, 2.0),
        ("ap50 pred = gt", ap50(&two, &two).unwrap(), 1.0),
        ("ap50 no predictions", ap50(&none, &two).unwrap(), 0.0),
        ("ap50 one of two found", ap50(&row_set(&[1, 1, 0, 0]), &two).unwrap(), 0.5),
    ]
}

/// Relative difference, 0 when both are 0.
pub fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Random fixture: 2 to 7 pixels per side, 1 to 5 dims, 1 to 4 instances.
pub fn small_fixture(seed: u64) -> (EmbeddingMap, LabelMap) {
    let mut rng = TestRng::new(seed);
    let h = rng.int(2, 7);
    let w = rng.int(2, 7);
    let dims = rng.int(1, 5);
    let clusters = rng.int(1, 4).min(h * w);
    random_fixture(&mut rng, h, w, dims, clusters)
}
