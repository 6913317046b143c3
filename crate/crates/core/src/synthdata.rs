//! Synthetic scenes: scattered sticks with occlusions, and colored blobs.
//!
//! # Random stream
//!
//! All randomness comes from `Xoshiro256PlusPlus::seed_from_u64(seed)`
//! (state expanded with SplitMix64). Draws are derived from `next_u64`
//! only, so other implementations can reproduce a scene exactly:
//!
//! * real in `[0, 1)`: `(next_u64 >> 11) as f64 * 2^-53`
//! * index in `[0, n)`: `min(floor(real · n), n − 1)`
//! * integer in `[lo, hi]`: `lo + index(hi − lo + 1)`
//!
//! A sticks scene draws, in order: the stick count, the palette shuffle
//! (Fisher–Yates from the last slot down), then for each stick its center
//! x, center y and angle in `[0, π)`. Pixel `(x, y)` is covered by a stick
//! when its center `(x + 0.5, y + 0.5)` lies inside the rotated rectangle
//! (inclusive edges). Later sticks occlude earlier ones.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::maps::{LabelMap, Mask};

pub(crate) fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((uniform_f64(rng) * n as f64) as usize).min(n - 1)
}

fn uniform_inclusive(rng: &mut impl RngCore, lo: usize, hi: usize) -> usize {
    lo + uniform_index(rng, hi - lo + 1)
}

pub(crate) fn rng_from_seed(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Background gray level, `26 / 255`.
pub const BACKGROUND_LEVEL: u8 = 26;

/// RGB image, row-major `[y][x][channel]`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self { height, width, data }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{height}x{width}x3"),
                found: format!("{} values", data.len()),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channel-major copy, `[channel][y][x]`.
    pub fn to_planes(&self) -> Vec<f64> {
        let n = self.height * self.width;
        let mut out = vec![0.0; 3 * n];
        for p in 0..n {
            for c in 0..3 {
                out[c * n + p] = self.data[p * 3 + c];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: RgbImage,
    /// Visible instances, contiguous 1..K.
    pub instances: LabelMap,
    pub seed: u64,
}

pub type StickScene = Scene;

impl Scene {
    pub fn fg_mask(&self) -> Mask {
        self.instances.foreground()
    }

    pub fn num_instances(&self) -> usize {
        self.instances.num_instances()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SticksConfig {
    pub image_size: usize,
    pub stick_count_min: usize,
    pub stick_count_max: usize,
    pub stick_length: f64,
    pub stick_width: f64,
    pub seed: u64,
}

impl Default for SticksConfig {
    fn default() -> Self {
        Self { image_size: 64, stick_count_min: 2, stick_count_max: 6, stick_length: 40.0, stick_width: 5.0, seed: 0 }
    }
}

impl SticksConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::InvalidConfig("image_size must be >= 1".into()));
        }
        if self.stick_count_max < self.stick_count_min {
            return Err(Error::InvalidConfig(format!(
                "stick count range [{}, {}] is empty",
                self.stick_count_min, self.stick_count_max
            )));
        }
        let size = self.image_size as f64;
        if !(self.stick_length > 0.0 && self.stick_length <= size) {
            return Err(Error::InvalidConfig(format!(
                "stick_length must be in (0, {size}], got {}",
                self.stick_length
            )));
        }
        if !(self.stick_width > 0.0 && self.stick_width <= self.stick_length) {
            return Err(Error::InvalidConfig(format!(
                "stick_width must be in (0, stick_length], got {}",
                self.stick_width
            )));
        }
        Ok(())
    }
}

/// `n` fully saturated hues spaced evenly around the color wheel, quantized
/// to 8 bits so they survive a round trip through an 8-bit pixmap.
pub fn hue_palette(n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|i| {
            let h = i as f64 / n as f64 * 6.0;
            let sector = h.floor() as usize % 6;
            let f = h - h.floor();
            let (r, g, b) = match sector {
                0 => (1.0, f, 0.0),
                1 => (1.0 - f, 1.0, 0.0),
                2 => (0.0, 1.0, f),
                3 => (0.0, 1.0 - f, 1.0),
                4 => (f, 0.0, 1.0),
                _ => (1.0, 0.0, 1.0 - f),
            };
            [quantize(r), quantize(g), quantize(b)]
        })
        .collect()
}

fn quantize(v: f64) -> f64 {
    (v * 255.0).round() / 255.0
}

fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

fn background() -> [f64; 3] {
    let v = BACKGROUND_LEVEL as f64 / 255.0;
    [v, v, v]
}

/// Membership test in pixel coordinates and fill color.
type Shape = (Box<dyn Fn(f64, f64) -> bool>, [f64; 3]);

/// Paints shapes in order (later on top) and keeps only visible instances,
/// renumbered 1..K in drawing order.
fn render(size: usize, seed: u64, shapes: &[Shape]) -> Scene {
    let mut image = RgbImage::filled(size, size, background());
    let mut raw = LabelMap::zeros(size, size);
    for (k, (inside, color)) in shapes.iter().enumerate() {
        for y in 0..size {
            for x in 0..size {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    raw.set(y, x, k as u32 + 1);
                    image.set_pixel(y, x, *color);
                }
            }
        }
    }
    let mut visible = vec![false; shapes.len() + 1];
    for &l in raw.as_slice() {
        visible[l as usize] = true;
    }
    let mut renumber = vec![0u32; shapes.len() + 1];
    let mut next = 0;
    for k in 1..=shapes.len() {
        if visible[k] {
            next += 1;
            renumber[k] = next;
        }
    }
    for l in raw.as_mut_slice() {
        *l = renumber[*l as usize];
    }
    Scene { image, instances: raw, seed }
}

/// A single stick as drawn, before occlusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stick {
    pub cx: f64,
    pub cy: f64,
    pub angle: f64,
    pub color: [f64; 3],
}

impl Stick {
    pub fn covers(&self, px: f64, py: f64, length: f64, width: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = px - self.cx;
        let dy = py - self.cy;
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= length / 2.0 && across.abs() <= width / 2.0
    }
}

/// The sticks a scene would draw, in drawing order.
pub fn draw_sticks(config: &SticksConfig) -> Result<Vec<Stick>> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let count = uniform_inclusive(&mut rng, config.stick_count_min, config.stick_count_max);
    let mut palette = hue_palette(config.stick_count_max.max(1));
    shuffle(&mut rng, &mut palette);
    let size = config.image_size as f64;
    Ok((0..count)
        .map(|i| {
            let cx = uniform_f64(&mut rng) * size;
            let cy = uniform_f64(&mut rng) * size;
            let angle = uniform_f64(&mut rng) * std::f64::consts::PI;
            Stick { cx, cy, angle, color: palette[i % palette.len()] }
        })
        .collect())
}

pub fn generate_scene(config: &SticksConfig) -> Result<StickScene> {
    let sticks = draw_sticks(config)?;
    let (length, width) = (config.stick_length, config.stick_width);
    let shapes: Vec<Shape> = sticks
        .into_iter()
        .map(|s| {
            let f: Box<dyn Fn(f64, f64) -> bool> = Box::new(move |x, y| s.covers(x, y, length, width));
            (f, s.color)
        })
        .collect();
    Ok(render(config.image_size, config.seed, &shapes))
}

/// Filled disks with distinct colors; used for the single-image
/// convergence experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobsConfig {
    pub image_size: usize,
    pub count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub seed: u64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self { image_size: 48, count: 15, radius_min: 3.0, radius_max: 6.0, seed: 0 }
    }
}

/// Disk centers are drawn `x, y, radius` per blob after the palette shuffle.
pub fn generate_blobs(config: &BlobsConfig) -> Result<Scene> {
    if config.image_size == 0 || !(config.radius_min > 0.0 && config.radius_max >= config.radius_min) {
        return Err(Error::InvalidConfig(format!("invalid blob configuration {config:?}")));
    }
    let mut rng = rng_from_seed(config.seed);
    let mut palette = hue_palette(config.count.max(1));
    shuffle(&mut rng, &mut palette);
    let size = config.image_size as f64;
    let shapes: Vec<Shape> = (0..config.count)
        .map(|i| {
            let cx = uniform_f64(&mut rng) * size;
            let cy = uniform_f64(&mut rng) * size;
            let r = config.radius_min + uniform_f64(&mut rng) * (config.radius_max - config.radius_min);
            let f: Box<dyn Fn(f64, f64) -> bool> = Box::new(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r);
            (f, palette[i])
        })
        .collect();
    Ok(render(config.image_size, config.seed, &shapes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augment {
    FlipLR,
    /// Clockwise quarter turns.
    Rot90,
    Rot180,
    Rot270,
}

impl Augment {
    pub const ALL: [Augment; 4] = [Augment::FlipLR, Augment::Rot90, Augment::Rot180, Augment::Rot270];

    /// Source pixel for destination `(y, x)` in an `n`-wide square (or any
    /// width for flips).
    fn source(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Augment::FlipLR => (y, w - 1 - x),
            Augment::Rot90 => (h - 1 - x, y),
            Augment::Rot180 => (h - 1 - y, w - 1 - x),
            Augment::Rot270 => (x, w - 1 - y),
        }
    }
}

pub fn augment(scene: &Scene, op: Augment) -> Result<Scene> {
    let (h, w) = (scene.instances.height(), scene.instances.width());
    if op != Augment::FlipLR && h != w {
        return Err(Error::NonSquare { height: h, width: w });
    }
    let mut image = RgbImage::filled(h, w, [0.0; 3]);
    let mut instances = LabelMap::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = op.source(y, x, h, w);
            image.set_pixel(y, x, scene.image.pixel(sy, sx));
            instances.set(y, x, scene.instances.get(sy, sx));
        }
    }
    Ok(Scene { image, instances, seed: scene.seed })
}

fn axis(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

/// Two planes `[channel][y][x]`: channel 0 runs −1..1 left to right,
/// channel 1 top to bottom. A single-pixel axis maps to 0.
pub fn coordinate_maps(height: usize, width: usize) -> Vec<f64> {
    let xs = axis(width);
    let ys = axis(height);
    let mut out = Vec::with_capacity(2 * height * width);
    for _ in 0..height {
        out.extend_from_slice(&xs);
    }
    for &y in &ys {
        out.extend(std::iter::repeat_n(y, width));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> SticksConfig {
        SticksConfig { seed, ..SticksConfig::default() }
    }

    #[test]
    fn empty_range_gives_background() {
        let c = SticksConfig { stick_count_min: 0, stick_count_max: 0, ..cfg(5) };
        let s = generate_scene(&c).unwrap();
        assert_eq!(s.num_instances(), 0);
        let bg = BACKGROUND_LEVEL as f64 / 255.0;
        assert!(s.image.as_slice().iter().all(|&v| v == bg));
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_scene(&cfg(9)).unwrap(), generate_scene(&cfg(9)).unwrap());
        assert_ne!(generate_scene(&cfg(9)).unwrap(), generate_scene(&cfg(10)).unwrap());
    }

    #[test]
    fn labels_contiguous_and_bounded_over_many_seeds() {
        for seed in 0..1000 {
            let c = cfg(seed);
            let drawn = draw_sticks(&c).unwrap().len();
            let s = generate_scene(&c).unwrap();
            let labels = s.instances.distinct_labels();
            assert!(labels.len() <= drawn, "seed {seed}");
            assert_eq!(labels, (1..=labels.len() as u32).collect::<Vec<_>>(), "seed {seed}");
        }
    }

    #[test]
    fn later_sticks_own_overlaps() {
        for seed in 0..50 {
            let c = cfg(seed);
            let sticks = draw_sticks(&c).unwrap();
            let scene = generate_scene(&c).unwrap();
            // re-render each stick alone and check the topmost covering stick
            // is the visible one, by identity of colors and label ordering
            let n = c.image_size;
            for y in 0..n {
                for x in 0..n {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let top = sticks.iter().rposition(|s| s.covers(px, py, c.stick_length, c.stick_width));
                    match top {
                        None => assert_eq!(scene.instances.get(y, x), 0),
                        Some(k) => {
                            assert_ne!(scene.instances.get(y, x), 0);
                            assert_eq!(scene.image.pixel(y, x), sticks[k].color);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_config() {
        assert!(generate_scene(&SticksConfig { stick_count_min: 3, stick_count_max: 2, ..cfg(0) }).is_err());
        assert!(generate_scene(&SticksConfig { stick_length: 100.0, ..cfg(0) }).is_err());
    }

    #[test]
    fn flips_and_rotations_compose_to_identity() {
        let s = generate_scene(&cfg(3)).unwrap();
        let twice = augment(&augment(&s, Augment::FlipLR).unwrap(), Augment::FlipLR).unwrap();
        assert_eq!(twice, s);
        let mut r = s.clone();
        for _ in 0..4 {
            r = augment(&r, Augment::Rot90).unwrap();
        }
        assert_eq!(r, s);
        let a = augment(&augment(&s, Augment::Rot90).unwrap(), Augment::Rot270).unwrap();
        assert_eq!(a, s);
        let b = augment(&augment(&s, Augment::Rot90).unwrap(), Augment::Rot90).unwrap();
        assert_eq!(b, augment(&s, Augment::Rot180).unwrap());
    }

    #[test]
    fn rotation_of_non_square_fails() {
        let s = Scene { image: RgbImage::filled(2, 3, [0.0; 3]), instances: LabelMap::zeros(2, 3), seed: 0 };
        assert!(matches!(augment(&s, Augment::Rot90), Err(Error::NonSquare { .. })));
        assert!(augment(&s, Augment::FlipLR).is_ok());
    }

    #[test]
    fn rot90_is_clockwise() {
        let s = Scene {
            image: RgbImage::filled(2, 2, [0.0; 3]),
            instances: LabelMap::from_vec(2, 2, vec![1, 2, 3, 4]).unwrap(),
            seed: 0,
        };
        let r = augment(&s, Augment::Rot90).unwrap();
        assert_eq!(r.instances.as_slice(), &[3, 1, 4, 2]);
    }

    #[test]
    fn coordinate_map_values() {
        let m = coordinate_maps(3, 3);
        assert_eq!(&m[0..3], &[-1.0, 0.0, 1.0]);
        assert_eq!(&m[9..12], &[-1.0, -1.0, -1.0]);
        assert_eq!(&m[15..18], &[1.0, 1.0, 1.0]);
        assert_eq!(coordinate_maps(1, 1), vec![0.0, 0.0]);
        let (h, w) = (4, 7);
        let m = coordinate_maps(h, w);
        let n = h * w;
        for (y, x, ex, ey) in
            [(0, 0, -1.0, -1.0), (0, w - 1, 1.0, -1.0), (h - 1, 0, -1.0, 1.0), (h - 1, w - 1, 1.0, 1.0)]
        {
            assert_eq!(m[y * w + x], ex);
            assert_eq!(m[n + y * w + x], ey);
        }
    }

    #[test]
    fn random_stream_is_pinned() {
        let mut rng = rng_from_seed(0);
        assert_eq!(rng.next_u64(), 5987356902031041503);
        assert_eq!(rng.next_u64(), 7051070477665621255);
        assert_eq!(rng_from_seed(42).next_u64(), 15021278609987233951);
        let f = uniform_f64(&mut rng_from_seed(0));
        assert_eq!(f, (5987356902031041503u64 >> 11) as f64 / (1u64 << 53) as f64);
    }

    #[test]
    fn blobs_have_distinct_colors() {
        let s = generate_blobs(&BlobsConfig::default()).unwrap();
        assert!(s.num_instances() >= 10);
        let mut colors = std::collections::HashMap::new();
        for y in 0..s.instances.height() {
            for x in 0..s.instances.width() {
                let l = s.instances.get(y, x);
                if l != 0 {
                    let c = s.image.pixel(y, x).map(|v| (v * 255.0).round() as u8);
                    assert_eq!(*colors.entry(l).or_insert(c), c);
                }
            }
        }
    }
}
