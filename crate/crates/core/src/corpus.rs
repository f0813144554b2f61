//! Synthetic original/forged video pairs.
//!
//! Each pair renders one scene twice: natively at the target rate (the
//! original) and at the source rate followed by up-conversion (the forgery).
//! Oscillating motion is rescaled by the rate ratio so both copies move the
//! same way in wall-clock time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::plan::{plan_conversion, Scheme};
use crate::synth::{add_noise, synth_video, Motion, Pattern, SynthSpec};
use crate::upconvert::{upconvert, UpconvertOptions};
use crate::video::{Fps, Video};
use crate::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub pairs: usize,
    pub width: usize,
    pub height: usize,
    /// Frames rendered at the source rate before up-conversion.
    pub source_frames: usize,
    pub schemes: Vec<Scheme>,
    pub fps_pairs: Vec<(Fps, Fps)>,
    pub noise_sigma: f64,
    pub seed: u64,
}

pub fn fps_pair(src: u32, dst: u32) -> (Fps, Fps) {
    (Fps::integer(src).expect("nonzero"), Fps::integer(dst).expect("nonzero"))
}

impl CorpusSpec {
    pub fn desk(pairs: usize, seed: u64) -> Self {
        Self {
            pairs,
            width: 96,
            height: 96,
            source_frames: 16,
            schemes: Scheme::ALL.to_vec(),
            fps_pairs: vec![fps_pair(15, 20), fps_pair(15, 30), fps_pair(25, 30)],
            noise_sigma: 4.0,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VideoPair {
    pub name: String,
    pub scheme: Scheme,
    pub src_fps: Fps,
    pub dst_fps: Fps,
    pub original: Video,
    pub forged: Video,
    /// Per frame of `forged`: whether it was synthesized or duplicated.
    pub forged_mask: Vec<bool>,
}

const PATTERNS: [Pattern; 3] = [
    Pattern::Checker { cell: 8 },
    Pattern::GradientBlobs,
    Pattern::TexturedNoise,
];

/// Pair `i` cycles through every (scheme, fps pair) combination; pattern and
/// motion are drawn from the corpus seed.
pub fn build_pair(spec: &CorpusSpec, i: usize) -> Result<VideoPair> {
    if spec.schemes.is_empty() || spec.fps_pairs.is_empty() {
        return invalid("corpus needs at least one scheme and one fps pair");
    }
    let scheme = spec.schemes[i % spec.schemes.len()];
    let (src, dst) = spec.fps_pairs[(i / spec.schemes.len()) % spec.fps_pairs.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64);
    let pattern = PATTERNS[rng.random_range(0..PATTERNS.len())];
    let amplitude = rng.random_range(2.0..10.0);
    let period = rng.random_range(8.0..24.0);
    let scene_seed = rng.random::<u64>();
    let noise_seed = rng.random::<u64>();

    let plan = plan_conversion(src, dst, scheme)?;
    let n_out = plan.output_len(spec.source_frames);
    let (l, s) = src.ratio_to(dst);
    let render = |fps: Fps, n_frames: usize, period: f64, noise_seed: u64| {
        let clean = synth_video(&SynthSpec {
            width: spec.width,
            height: spec.height,
            fps,
            n_frames,
            pattern,
            motion: Motion::Oscillate { amplitude, period },
            noise_sigma: 0.0,
            seed: scene_seed,
        })?;
        add_noise(&clean, spec.noise_sigma, noise_seed)
    };
    let source = render(src, spec.source_frames, period, noise_seed)?;
    let original = render(dst, n_out, period * l as f64 / s as f64, noise_seed.wrapping_add(1))?;
    let (forged, forged_mask) = upconvert(&source, &plan, &UpconvertOptions::default())?;
    Ok(VideoPair {
        name: format!("s{}-{i}-{scheme}-{src}to{dst}", spec.seed),
        scheme,
        src_fps: src,
        dst_fps: dst,
        original,
        forged: forged.quantized(),
        forged_mask,
    })
}

pub fn build_corpus(spec: &CorpusSpec) -> Result<Vec<VideoPair>> {
    (0..spec.pairs).into_par_iter().map(|i| build_pair(spec, i)).collect()
}

/// A video at `dst` fps whose frames `[start, end)` come from an up-converted
/// `src` render of the same scene; the rest is the native render. Returns the
/// video and its per-frame forged mask.
#[allow(clippy::too_many_arguments)]
pub fn spliced_video(
    width: usize,
    height: usize,
    n_frames: usize,
    (src, dst): (Fps, Fps),
    scheme: Scheme,
    segment: (usize, usize),
    noise_sigma: f64,
    seed: u64,
) -> Result<(Video, Vec<bool>)> {
    let (start, end) = segment;
    if start >= end || end > n_frames {
        return invalid(format!("segment {start}..{end} does not fit {n_frames} frames"));
    }
    let plan = plan_conversion(src, dst, scheme)?;
    let (l, s) = src.ratio_to(dst);
    let source_frames = ((n_frames - 1) as u64 * s).div_ceil(l) as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pattern = PATTERNS[rng.random_range(0..PATTERNS.len())];
    let amplitude = rng.random_range(2.0..10.0);
    let period = rng.random_range(8.0..24.0);
    let scene_seed = rng.random::<u64>();
    let render = |fps: Fps, n: usize, period: f64, noise_seed: u64| {
        let clean = synth_video(&SynthSpec {
            width,
            height,
            fps,
            n_frames: n.max(crate::WINDOW_FRAMES),
            pattern,
            motion: Motion::Oscillate { amplitude, period },
            noise_sigma: 0.0,
            seed: scene_seed,
        })?;
        add_noise(&clean, noise_sigma, noise_seed)
    };
    let native = render(dst, n_frames, period * l as f64 / s as f64, seed ^ 1)?;
    let source = render(src, source_frames, period, seed ^ 2)?;
    let (forged, forged_mask) = upconvert(&source, &plan, &UpconvertOptions::default())?;
    let forged = forged.quantized();
    let mut frames = Vec::with_capacity(n_frames);
    let mut mask = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        if (start..end).contains(&k) {
            frames.push(forged.frames()[k].clone());
            mask.push(forged_mask[k]);
        } else {
            frames.push(native.frames()[k].clone());
            mask.push(false);
        }
    }
    Ok((Video::new(frames, dst)?, mask))
}
