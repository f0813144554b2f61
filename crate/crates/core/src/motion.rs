//! Block-matching motion estimation, vector smoothing, and
//! motion-compensated frame synthesis.
//!
//! A vector `mv` of the block covering pixel `x` satisfies
//! `next(x) ≈ prev(x + mv)`: it points from the later frame into the earlier
//! one. Samples outside a frame clamp to its edge.

use rayon::prelude::*;

use crate::video::Frame;
use crate::{invalid, Result};

pub const DEFAULT_BLOCK: usize = 16;
pub const DEFAULT_SEARCH: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionField {
    pub block_size: usize,
    pub search_range: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    /// Row-major per block.
    pub vectors: Vec<(i32, i32)>,
    /// Sum of absolute differences at the chosen vector.
    pub costs: Vec<f64>,
}

impl MotionField {
    pub fn vector(&self, bx: usize, by: usize) -> (i32, i32) {
        self.vectors[by * self.grid_w + bx]
    }

    /// Vector of the block containing pixel `(x, y)`.
    #[inline]
    pub fn vector_at(&self, x: usize, y: usize) -> (i32, i32) {
        self.vector(x / self.block_size, y / self.block_size)
    }
}

/// SAD between the block of `next` at `(x0, y0, bw, bh)` and `prev` displaced by `mv`.
pub fn block_sad(prev: &Frame, next: &Frame, x0: usize, y0: usize, bw: usize, bh: usize, mv: (i32, i32)) -> f64 {
    let (w, h) = (prev.width() as isize, prev.height() as isize);
    let (px, py) = (x0 as isize + mv.0 as isize, y0 as isize + mv.1 as isize);
    let inside = px >= 0 && py >= 0 && px + bw as isize <= w && py + bh as isize <= h;
    let (pd, nd) = (prev.data(), next.data());
    let mut total = 0.0f64;
    for dy in 0..bh {
        let mut row = 0.0f32;
        let nrow = &nd[(y0 + dy) * w as usize + x0..][..bw];
        if inside {
            let prow = &pd[(py as usize + dy) * w as usize + px as usize..][..bw];
            for (a, b) in nrow.iter().zip(prow) {
                row += (a - b).abs();
            }
        } else {
            let sy = (py + dy as isize).clamp(0, h - 1) as usize;
            for (dx, a) in nrow.iter().enumerate() {
                let sx = (px + dx as isize).clamp(0, w - 1) as usize;
                row += (a - pd[sy * w as usize + sx]).abs();
            }
        }
        total += row as f64;
    }
    total
}

/// Candidate order: smaller `|u|₁` first, then raster order (`dy`, then `dx`).
pub fn search_order(range: usize) -> Vec<(i32, i32)> {
    let r = range as i32;
    let mut c: Vec<(i32, i32)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    c.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
    c
}

/// Exhaustive search over `[-R, R]²` for every block of `next`.
pub fn estimate_motion(prev: &Frame, next: &Frame, block_size: usize, search_range: usize) -> Result<MotionField> {
    if !prev.same_geometry(next) || prev.channels() != 1 {
        return invalid("motion estimation needs two single-channel frames of equal size");
    }
    if block_size < 4 || search_range < 1 {
        return invalid(format!(
            "block size {block_size} must be >= 4 and search range {search_range} >= 1"
        ));
    }
    let (w, h) = (next.width(), next.height());
    if w < block_size || h < block_size {
        return invalid(format!("{w}x{h} frame is smaller than one {block_size}px block"));
    }
    let (gw, gh) = (w.div_ceil(block_size), h.div_ceil(block_size));
    let order = search_order(search_range);
    let results: Vec<((i32, i32), f64)> = (0..gw * gh)
        .into_par_iter()
        .map(|b| {
            let (x0, y0) = ((b % gw) * block_size, (b / gw) * block_size);
            let (bw, bh) = (block_size.min(w - x0), block_size.min(h - y0));
            let mut best = (order[0], f64::INFINITY);
            for &mv in &order {
                let cost = block_sad(prev, next, x0, y0, bw, bh, mv);
                // Strict comparison keeps the earliest candidate on ties.
                if cost < best.1 {
                    best = (mv, cost);
                }
            }
            best
        })
        .collect();
    Ok(MotionField {
        block_size,
        search_range,
        grid_w: gw,
        grid_h: gh,
        vectors: results.iter().map(|r| r.0).collect(),
        costs: results.iter().map(|r| r.1).collect(),
    })
}

/// Lower median for even counts.
fn median(values: &mut [i32]) -> i32 {
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

/// Component-wise median over each block's 3×3 neighbourhood (clipped at
/// the grid edge). Costs are kept.
pub fn smooth_motion(field: &MotionField) -> MotionField {
    let (gw, gh) = (field.grid_w, field.grid_h);
    let mut out = field.clone();
    for by in 0..gh {
        for bx in 0..gw {
            let (mut xs, mut ys) = (Vec::with_capacity(9), Vec::with_capacity(9));
            for ny in by.saturating_sub(1)..(by + 2).min(gh) {
                for nx in bx.saturating_sub(1)..(bx + 2).min(gw) {
                    let v = field.vector(nx, ny);
                    xs.push(v.0);
                    ys.push(v.1);
                }
            }
            out.vectors[by * gw + bx] = (median(&mut xs), median(&mut ys));
        }
    }
    out
}

/// Frame at fractional position `1 - alpha` between `prev` and `next`:
/// `alpha·prev(x + u) + (1 - alpha)·next(x + v)` with `u = round((1 - alpha)·mv)`
/// and `v = u - mv`, so both taps follow the same straight trajectory.
pub fn mci_synthesize(prev: &Frame, next: &Frame, field: &MotionField, alpha: f64) -> Result<Frame> {
    if !prev.same_geometry(next) {
        return invalid("MCI frames differ in size");
    }
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha {alpha} is outside [0, 1]"));
    }
    let (w, h, ch) = (prev.width(), prev.height(), prev.channels());
    if field.grid_w != w.div_ceil(field.block_size) || field.grid_h != h.div_ceil(field.block_size) {
        return invalid(format!(
            "{}x{} motion grid does not cover a {w}x{h} frame",
            field.grid_w, field.grid_h
        ));
    }
    let a = alpha as f32;
    let mut data = vec![0.0f32; w * h * ch];
    data.par_chunks_mut(w * ch).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let mv = field.vector_at(x, y);
            let ux = ((1.0 - alpha) * mv.0 as f64).round() as isize;
            let uy = ((1.0 - alpha) * mv.1 as f64).round() as isize;
            let (vx, vy) = (ux - mv.0 as isize, uy - mv.1 as isize);
            let (xi, yi) = (x as isize, y as isize);
            for c in 0..ch {
                let p = prev.get_clamped(xi + ux, yi + uy, c);
                let n = next.get_clamped(xi + vx, yi + vy, c);
                row[x * ch + c] = a * p + (1.0 - a) * n;
            }
        }
    });
    Frame::new(w, h, ch, prev.index(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, shift: i32) -> Frame {
        let data = (0..h)
            .flat_map(|y| (0..w).map(move |x| (((x as i32 - shift) * 7 + (y as i32) * 13).rem_euclid(251)) as f32))
            .collect();
        Frame::new(w, h, 1, 0, data).unwrap()
    }

    #[test]
    fn identical_frames_give_zero_vectors() {
        let f = ramp(32, 32, 0);
        let m = estimate_motion(&f, &f, 8, 3).unwrap();
        assert!(m.vectors.iter().all(|&v| v == (0, 0)));
        assert!(m.costs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn translation_points_into_prev() {
        let prev = ramp(48, 48, 0);
        let next = ramp(48, 48, 2);
        let m = estimate_motion(&prev, &next, 16, 4).unwrap();
        assert_eq!(m.vector(1, 1), (-2, 0));
        assert_eq!(m.costs[4], 0.0);
    }

    #[test]
    fn shift_beyond_range_costs_something() {
        let prev = ramp(48, 48, 0);
        let next = ramp(48, 48, 6);
        let m = estimate_motion(&prev, &next, 16, 2).unwrap();
        assert!(m.costs[4] > 0.0);
        assert!(m.vector(1, 1).0.abs() <= 2);
    }

    #[test]
    fn search_order_prefers_short_vectors() {
        let o = search_order(1);
        assert_eq!(o[0], (0, 0));
        assert_eq!(&o[1..5], &[(0, -1), (-1, 0), (1, 0), (0, 1)]);
        assert_eq!(o.len(), 9);
    }

    #[test]
    fn smoothing_removes_outlier() {
        let mut f = MotionField {
            block_size: 8,
            search_range: 4,
            grid_w: 3,
            grid_h: 3,
            vectors: vec![(1, 2); 9],
            costs: vec![0.0; 9],
        };
        assert_eq!(smooth_motion(&f), f);
        f.vectors[4] = (-4, 4);
        assert_eq!(smooth_motion(&f).vectors[4], (1, 2));
        let single = MotionField {
            grid_w: 1,
            grid_h: 1,
            vectors: vec![(3, -1)],
            costs: vec![1.0],
            ..f
        };
        assert_eq!(smooth_motion(&single), single);
    }

    #[test]
    fn median_of_even_count_is_lower() {
        assert_eq!(median(&mut [4, 1, 3, 2]), 2);
    }

    #[test]
    fn alpha_one_returns_prev() {
        let prev = ramp(16, 16, 0);
        let next = ramp(16, 16, 3);
        let m = estimate_motion(&prev, &next, 8, 4).unwrap();
        let out = mci_synthesize(&prev, &next, &m, 1.0).unwrap();
        assert_eq!(out.data(), prev.data());
        let out = mci_synthesize(&prev, &next, &m, 0.0).unwrap();
        assert_eq!(out.data(), next.data());
        assert!(mci_synthesize(&prev, &next, &m, 1.5).is_err());
    }
}
