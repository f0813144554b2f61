//! Rendering a conversion plan into a forged video.

use std::collections::HashMap;

use crate::motion::{estimate_motion, mci_synthesize, smooth_motion, MotionField, DEFAULT_BLOCK, DEFAULT_SEARCH};
use crate::plan::{ConversionPlan, Scheme, SlotRole};
use crate::video::{luma, Frame, Video};
use crate::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpconvertOptions {
    pub block_size: usize,
    pub search_range: usize,
    /// Blend interpolated slots 50/50 regardless of position.
    pub fixed_blend: bool,
    /// Median-filter motion vectors before compensation.
    pub smooth: bool,
}

impl Default for UpconvertOptions {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK,
            search_range: DEFAULT_SEARCH,
            fixed_blend: false,
            smooth: true,
        }
    }
}

pub fn blend(prev: &Frame, next: &Frame, alpha: f64) -> Result<Frame> {
    if !prev.same_geometry(next) {
        return invalid("blended frames differ in size");
    }
    let a = alpha as f32;
    let data = prev
        .data()
        .iter()
        .zip(next.data())
        .map(|(&p, &n)| a * p + (1.0 - a) * n)
        .collect();
    Frame::new(prev.width(), prev.height(), prev.channels(), prev.index(), data)
}

/// Output video at the plan's rate plus the per-frame forged mask.
pub fn upconvert(video: &Video, plan: &ConversionPlan, opts: &UpconvertOptions) -> Result<(Video, Vec<bool>)> {
    if video.is_empty() {
        return invalid("cannot up-convert an empty video");
    }
    if video.fps() != plan.src_fps {
        return invalid(format!(
            "video is {} fps but the plan converts from {} fps",
            video.fps(),
            plan.src_fps
        ));
    }
    let src = video.frames();
    let n_out = plan.output_len(src.len());
    let mut fields: HashMap<usize, MotionField> = HashMap::new();
    let mut frames = Vec::with_capacity(n_out);
    let mut mask = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let role = plan.slot(k);
        let frame = match role {
            SlotRole::Original { src: i } | SlotRole::Duplicate { src: i } => src[i].clone(),
            SlotRole::Interpolated { prev, next, alpha } => {
                let alpha = if opts.fixed_blend { 0.5 } else { alpha };
                match plan.scheme {
                    Scheme::Mci => {
                        if !fields.contains_key(&prev) {
                            let raw = estimate_motion(
                                &luma(&src[prev])?,
                                &luma(&src[next])?,
                                opts.block_size,
                                opts.search_range,
                            )?;
                            let f = if opts.smooth { smooth_motion(&raw) } else { raw };
                            fields.clear();
                            fields.insert(prev, f);
                        }
                        mci_synthesize(&src[prev], &src[next], &fields[&prev], alpha)?
                    }
                    _ => blend(&src[prev], &src[next], alpha)?,
                }
            }
        };
        frames.push(frame);
        mask.push(role.is_forged());
    }
    Ok((Video::new(frames, plan.dst_fps)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::plan_conversion;
    use crate::video::Fps;

    fn fps(n: u32) -> Fps {
        Fps::integer(n).unwrap()
    }

    fn ramp_video(n: usize) -> Video {
        let frames = (0..n)
            .map(|k| {
                let data = (0..16 * 16).map(|i| ((i * 3 + k * 5) % 200) as f32).collect();
                Frame::new(16, 16, 1, k, data).unwrap()
            })
            .collect();
        Video::new(frames, fps(15)).unwrap()
    }

    #[test]
    fn nni_doubling_repeats_frames() {
        let v = ramp_video(6);
        let plan = plan_conversion(fps(15), fps(30), Scheme::Nni).unwrap();
        let (out, mask) = upconvert(&v, &plan, &UpconvertOptions::default()).unwrap();
        assert_eq!(out.len(), 11);
        assert_eq!(out.fps(), fps(30));
        for k in (0..10).step_by(2) {
            assert_eq!(out.frames()[k].data(), out.frames()[k + 1].data());
            assert!(!mask[k] && mask[k + 1]);
        }
    }

    #[test]
    fn bi_midpoint_is_pixel_mean() {
        let v = ramp_video(6);
        let plan = plan_conversion(fps(15), fps(30), Scheme::Bi).unwrap();
        let (out, _) = upconvert(&v, &plan, &UpconvertOptions::default()).unwrap();
        let (a, b, m) = (&v.frames()[1], &v.frames()[2], &out.frames()[3]);
        for i in 0..a.data().len() {
            assert_eq!(m.data()[i], 0.5 * a.data()[i] + 0.5 * b.data()[i]);
        }
    }

    #[test]
    fn rate_mismatch_rejected() {
        let v = ramp_video(6);
        let plan = plan_conversion(fps(20), fps(30), Scheme::Bi).unwrap();
        assert!(upconvert(&v, &plan, &UpconvertOptions::default()).is_err());
    }
}
