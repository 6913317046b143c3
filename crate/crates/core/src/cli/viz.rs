//! Pixmaps for looking at embeddings and clusters.

use crate::clustering::ClusterAssignment;
use crate::maps::{EmbeddingMap, LabelMap, Mask};
use crate::synthdata::{hue_palette, RgbImage};

const CANVAS: usize = 256;
const BACKDROP: [f64; 3] = [0.08, 0.08, 0.08];
const UNCLUSTERED: [f64; 3] = [0.5, 0.5, 0.5];

fn color_of(label: u32, palette: &[[f64; 3]]) -> [f64; 3] {
    match label {
        0 => UNCLUSTERED,
        l => palette[(l as usize - 1) % palette.len()],
    }
}

/// Foreground embeddings plotted on their first two dimensions, colored by
/// cluster, with each center marked by a white cross.
pub fn scatter(emb: &EmbeddingMap, fg: &Mask, clusters: &ClusterAssignment) -> RgbImage {
    let mut canvas = RgbImage::filled(CANVAS, CANVAS, BACKDROP);
    let points: Vec<usize> = (0..emb.num_pixels()).filter(|&p| fg.as_slice()[p]).collect();
    if points.is_empty() {
        return canvas;
    }
    let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
    for &p in &points {
        for d in 0..2 {
            lo[d] = lo[d].min(emb.pixel(p)[d]);
            hi[d] = hi[d].max(emb.pixel(p)[d]);
        }
    }
    // one scale for both axes so distances are not distorted
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9) * 1.1;
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let to_canvas = |v: &[f64]| -> (usize, usize) {
        let f = |x: f64, m: f64| {
            (((x - m) / span + 0.5) * (CANVAS - 1) as f64).round().clamp(0.0, (CANVAS - 1) as f64) as usize
        };
        // second dimension grows upwards
        (CANVAS - 1 - f(v[1], mid[1]), f(v[0], mid[0]))
    };
    let palette = hue_palette(clusters.num_clusters().max(1));
    for &p in &points {
        let (y, x) = to_canvas(emb.pixel(p));
        canvas.set_pixel(y, x, color_of(clusters.labels.as_slice()[p], &palette));
    }
    for c in &clusters.centers {
        let (y, x) = to_canvas(c);
        for k in -3isize..=3 {
            for (yy, xx) in [(y as isize + k, x as isize), (y as isize, x as isize + k)] {
                if (0..CANVAS as isize).contains(&yy) && (0..CANVAS as isize).contains(&xx) {
                    canvas.set_pixel(yy as usize, xx as usize, [1.0, 1.0, 1.0]);
                }
            }
        }
    }
    canvas
}

/// The input image with every clustered pixel blended half-way toward its
/// cluster color.
pub fn overlay(image: &RgbImage, labels: &LabelMap) -> RgbImage {
    let palette = hue_palette(labels.distinct_labels().iter().filter(|&&l| l > 0).count().max(1));
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let l = labels.get(y, x);
            if l == 0 {
                continue;
            }
            let c = color_of(l, &palette);
            let p = image.pixel(y, x);
            out.set_pixel(y, x, [0.5 * (p[0] + c[0]), 0.5 * (p[1] + c[1]), 0.5 * (p[2] + c[2])]);
        }
    }
    out
}
