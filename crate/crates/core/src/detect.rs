//! Video-level detection by stack voting, and sliding-window localization.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fcdnet::FcdNet;
use crate::metrics::majority_vote;
use crate::preprocess::{extract_stack, sample_origins, InputKind, Label, ResidualStack, StackOrigin};
use crate::train::forged_probabilities;
use crate::video::FrameSource;
use crate::{Error, Result, WINDOW_FRAMES};

pub const DEFAULT_STACKS: usize = 9;
pub const DEFAULT_THRESHOLD: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectOptions {
    pub n_stacks: usize,
    /// A stack votes forged when its forged probability is at least this.
    pub threshold: f32,
    pub seed: u64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            n_stacks: DEFAULT_STACKS,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub origins: Vec<StackOrigin>,
    /// `[original, forged]` per stack.
    pub probs: Vec<[f32; 2]>,
    pub votes: Vec<Label>,
    pub decision: Label,
}

fn check_source(source: &dyn FrameSource, crop: usize) -> Result<(usize, usize)> {
    let n = source.frame_count();
    if n < WINDOW_FRAMES {
        return Err(Error::OutOfRange(format!(
            "video has {n} frames; detection needs at least {WINDOW_FRAMES}"
        )));
    }
    let (w, h) = source.frame_size()?;
    if w < crop || h < crop {
        return Err(Error::OutOfRange(format!(
            "{w}x{h} frames are smaller than the network's {crop}px crop"
        )));
    }
    Ok((w, h))
}

/// Samples `n_stacks` windows, classifies each, and takes the majority vote.
/// Reads exactly `6 × n_stacks` frames.
pub fn detect(net: &mut FcdNet<f32>, source: &dyn FrameSource, video_id: u64, opts: &DetectOptions) -> Result<Verdict> {
    let crop = net.config().crop_size;
    let size = check_source(source, crop)?;
    if !(0.0..=1.0).contains(&opts.threshold) {
        return Err(Error::Invalid(format!(
            "threshold {} is outside [0, 1]",
            opts.threshold
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let kind = InputKind::Residual5;
    let origins = sample_origins(
        source.frame_count(),
        size,
        crop,
        kind.frames_needed(),
        opts.n_stacks,
        video_id,
        &mut rng,
    )?;
    let stacks = origins
        .iter()
        .map(|&o| extract_stack(source, o, crop, kind, true))
        .collect::<Result<Vec<_>>>()?;
    verdict_from_stacks(net, &stacks, opts.threshold)
}

/// Classifies pre-extracted stacks and votes.
pub fn verdict_from_stacks(net: &mut FcdNet<f32>, stacks: &[ResidualStack], threshold: f32) -> Result<Verdict> {
    let refs: Vec<&ResidualStack> = stacks.iter().collect();
    let forged = forged_probabilities(net, &refs)?;
    let votes: Vec<Label> = forged
        .iter()
        .map(|&p| if p >= threshold { Label::Forged } else { Label::Original })
        .collect();
    Ok(Verdict {
        origins: stacks.iter().map(|s| s.origin).collect(),
        probs: forged.iter().map(|&p| [1.0 - p, p]).collect(),
        decision: majority_vote(&votes)?,
        votes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Localization {
    /// Forged probability of the window starting at each frame (N − 5 entries).
    pub window_scores: Vec<f32>,
    /// Per frame, the mean score of the windows covering it.
    pub frame_scores: Vec<f32>,
}

/// Scores every six-frame window (stride one) on the centre crop.
pub fn localize(net: &mut FcdNet<f32>, source: &dyn FrameSource, video_id: u64) -> Result<Localization> {
    let crop = net.config().crop_size;
    let (w, h) = check_source(source, crop)?;
    let n = source.frame_count();
    let (cx, cy) = ((w - crop) / 2, (h - crop) / 2);
    let kind = InputKind::Residual5;
    let mut window_scores = Vec::with_capacity(n - WINDOW_FRAMES + 1);
    // Extract in chunks so memory stays bounded on long videos.
    let starts: Vec<usize> = (0..=n - WINDOW_FRAMES).collect();
    for chunk in starts.chunks(crate::train::EVAL_BATCH) {
        let stacks = chunk
            .iter()
            .map(|&start| {
                let origin = StackOrigin {
                    video_id,
                    start,
                    crop_x: cx,
                    crop_y: cy,
                };
                extract_stack(source, origin, crop, kind, true)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ResidualStack> = stacks.iter().collect();
        window_scores.extend(forged_probabilities(net, &refs)?);
    }
    Ok(Localization {
        frame_scores: frame_scores(&window_scores, n),
        window_scores,
    })
}

/// Mean over the windows `[s, s + 5]` that contain each frame.
pub fn frame_scores(window_scores: &[f32], n_frames: usize) -> Vec<f32> {
    (0..n_frames)
        .map(|f| {
            let lo = f.saturating_sub(WINDOW_FRAMES - 1);
            let hi = f.min(window_scores.len().saturating_sub(1));
            if lo > hi {
                return f32::NAN;
            }
            let covering = &window_scores[lo..=hi];
            covering.iter().sum::<f32>() / covering.len() as f32
        })
        .collect()
}

impl Localization {
    pub fn frames_csv(&self) -> String {
        let mut s = String::from("frame,score\n");
        for (i, v) in self.frame_scores.iter().enumerate() {
            let _ = writeln!(s, "{i},{v:.6}");
        }
        s
    }

    pub fn windows_csv(&self) -> String {
        let mut s = String::from("window_start,score\n");
        for (i, v) in self.window_scores.iter().enumerate() {
            let _ = writeln!(s, "{i},{v:.6}");
        }
        s
    }

    /// Line plot of per-frame scores with a dashed threshold line. Frames
    /// flagged in `truth` are shaded.
    pub fn svg(&self, threshold: f32, truth: Option<&[bool]>) -> String {
        let (w, h, pad) = (800.0f64, 300.0f64, 40.0f64);
        let n = self.frame_scores.len().max(2);
        let x = |i: f64| pad + i * (w - 2.0 * pad) / (n - 1) as f64;
        let y = |v: f64| h - pad - v.clamp(0.0, 1.0) * (h - 2.0 * pad);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        if let Some(mask) = truth {
            let step = (w - 2.0 * pad) / (n - 1) as f64;
            for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{pad}" width="{step:.2}" height="{:.2}" fill="#f4cccc"/>"##,
                    x(i as f64) - step / 2.0,
                    h - 2.0 * pad
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<line x1="{pad}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
            y(threshold as f64),
            w - pad
        );
        let _ = writeln!(
            s,
            r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
            h - pad,
            w - pad
        );
        let _ = writeln!(
            s,
            r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
            h - pad
        );
        let points: Vec<String> = self
            .frame_scores
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i as f64), y(v as f64)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="crimson" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">frame</text>"#,
            w / 2.0,
            h - 8.0
        );
        let _ = writeln!(
            s,
            r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {0})" text-anchor="middle">forged score</text>"#,
            h / 2.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-size="10">{threshold}</text>"#,
            w - pad + 4.0,
            y(threshold as f64) + 3.0
        );
        s.push_str("</svg>\n");
        s
    }
}
