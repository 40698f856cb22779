//! Procedural shape images: a two-colour gradient background with one to
//! three anti-aliased ellipses or rectangles.

use crate::rng::Rng;
use crate::tensor::Tensor;

/// Sub-samples per pixel side used for coverage anti-aliasing.
const SUPERSAMPLE: usize = 4;

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                dx * dx + dy * dy <= 1.0
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

fn color(rng: &mut Rng) -> [f64; 3] {
    [
        rng.uniform_range(-1.0, 1.0),
        rng.uniform_range(-1.0, 1.0),
        rng.uniform_range(-1.0, 1.0),
    ]
}

fn one_image(rng: &mut Rng, res: usize) -> Tensor {
    let top = color(rng);
    let bottom = color(rng);
    let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    let count = 1 + rng.below(3);
    let shapes: Vec<(Shape, [f64; 3])> = (0..count)
        .map(|_| {
            let shape = if rng.uniform() < 0.5 {
                Shape::Ellipse {
                    cx: rng.uniform_range(0.2, 0.8),
                    cy: rng.uniform_range(0.2, 0.8),
                    rx: rng.uniform_range(0.08, 0.3),
                    ry: rng.uniform_range(0.08, 0.3),
                }
            } else {
                let (cx, cy) = (rng.uniform_range(0.2, 0.8), rng.uniform_range(0.2, 0.8));
                let (hw, hh) = (rng.uniform_range(0.06, 0.25), rng.uniform_range(0.06, 0.25));
                Shape::Rect {
                    x0: cx - hw,
                    y0: cy - hh,
                    x1: cx + hw,
                    y1: cy + hh,
                }
            };
            (shape, color(rng))
        })
        .collect();

    let mut img = Tensor::zeros(&[3, res, res]);
    let plane = res * res;
    let inv = 1.0 / (res * SUPERSAMPLE) as f64;
    let data = img.data_mut();
    for py in 0..res {
        for px in 0..res {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = ((px * SUPERSAMPLE + sx) as f64 + 0.5) * inv;
                    let y = ((py * SUPERSAMPLE + sy) as f64 + 0.5) * inv;
                    let t = (0.5 + (x - 0.5) * dir_x + (y - 0.5) * dir_y).clamp(0.0, 1.0);
                    let mut c = [0.0; 3];
                    for ch in 0..3 {
                        c[ch] = top[ch] * (1.0 - t) + bottom[ch] * t;
                    }
                    // Later shapes paint over earlier ones.
                    for (shape, col) in &shapes {
                        if shape.contains(x, y) {
                            c = *col;
                        }
                    }
                    for ch in 0..3 {
                        acc[ch] += c[ch];
                    }
                }
            }
            let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for ch in 0..3 {
                data[ch * plane + py * res + px] = (acc[ch] / n).clamp(-1.0, 1.0);
            }
        }
    }
    img
}

/// `n` images `[3, R, R]` with values in [-1, 1], fully determined by `seed`.
pub fn sample_dataset(seed: u64, n: usize, resolution: usize) -> Vec<Tensor> {
    (0..n)
        .map(|i| {
            let mut rng = Rng::derive(seed, i as u64);
            one_image(&mut rng, resolution)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = sample_dataset(0, 2, 16);
        let b = sample_dataset(0, 2, 16);
        assert!(a.iter().zip(&b).all(|(x, y)| x.bit_eq(y)));
    }

    #[test]
    fn values_in_range() {
        for img in sample_dataset(3, 8, 32) {
            assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn seeds_differ() {
        let a = &sample_dataset(0, 1, 16)[0];
        let b = &sample_dataset(1, 1, 16)[0];
        assert_ne!(a.bit_hash(), b.bit_hash());
    }
}
