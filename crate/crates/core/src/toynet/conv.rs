//! Same-padded 2-D convolution on channel-major planes.
//!
//! Loops are ordered so the innermost loop walks a contiguous row segment;
//! out-of-image taps are skipped rather than padded.

/// Valid destination column range `[lo, hi)` for a tap at horizontal offset
/// `off` (source column = destination column + off).
#[inline]
fn span(width: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (width as isize - off).clamp(0, width as isize) as usize;
    (lo, hi.max(lo))
}

pub(crate) struct Geometry {
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl Geometry {
    fn plane(&self) -> usize {
        self.height * self.width
    }

    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }
}

/// `out[o] = bias[o] + Σ_c weight[o][c] ⋆ input[c]`
pub(crate) fn forward(
    g: &Geometry,
    input: &[f64],
    in_ch: usize,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
) -> Vec<f64> {
    let n = g.plane();
    let k = g.kernel;
    let pad = g.pad();
    let mut out = vec![0.0; out_ch * n];
    for o in 0..out_ch {
        let dst = &mut out[o * n..(o + 1) * n];
        dst.fill(bias[o]);
        for c in 0..in_ch {
            let src = &input[c * n..(c + 1) * n];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (ylo, yhi) = span(g.height, dy);
                for kx in 0..k {
                    let w = weight[((o * in_ch + c) * k + ky) * k + kx];
                    if w == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - pad;
                    let (xlo, xhi) = span(g.width, dx);
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let drow = &mut dst[y * g.width + xlo..y * g.width + xhi];
                        let sx = (xlo as isize + dx) as usize;
                        let srow = &src[sy * g.width + sx..sy * g.width + sx + (xhi - xlo)];
                        for (d, &s) in drow.iter_mut().zip(srow) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution given the upstream gradient `gout`.
/// Returns `(d_weight, d_bias, d_input)`; `d_input` is skipped when not needed.
pub(crate) fn backward(
    g: &Geometry,
    input: &[f64],
    in_ch: usize,
    weight: &[f64],
    out_ch: usize,
    gout: &[f64],
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let n = g.plane();
    let k = g.kernel;
    let pad = g.pad();
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; out_ch];
    let mut din = need_input_grad.then(|| vec![0.0; in_ch * n]);
    for o in 0..out_ch {
        let go = &gout[o * n..(o + 1) * n];
        db[o] = go.iter().sum();
        for c in 0..in_ch {
            let src = &input[c * n..(c + 1) * n];
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (ylo, yhi) = span(g.height, dy);
                for kx in 0..k {
                    let widx = ((o * in_ch + c) * k + ky) * k + kx;
                    let dx = kx as isize - pad;
                    let (xlo, xhi) = span(g.width, dx);
                    let sx = (xlo as isize + dx) as usize;
                    let len = xhi - xlo;
                    let mut acc = 0.0;
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let grow = &go[y * g.width + xlo..y * g.width + xhi];
                        let srow = &src[sy * g.width + sx..sy * g.width + sx + len];
                        acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    dw[widx] = acc;
                    if let Some(din) = din.as_mut() {
                        let w = weight[widx];
                        if w == 0.0 {
                            continue;
                        }
                        let dplane = &mut din[c * n..(c + 1) * n];
                        for y in ylo..yhi {
                            let sy = (y as isize + dy) as usize;
                            let grow = &go[y * g.width + xlo..y * g.width + xhi];
                            let drow = &mut dplane[sy * g.width + sx..sy * g.width + sx + len];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += w * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    (dw, db, din)
}
