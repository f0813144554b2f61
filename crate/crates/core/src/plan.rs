//! Output-timeline scheduling for frame-rate up-conversion.
//!
//! With `dst / src = L / S` in lowest terms, output slot `k` sits at source
//! position `k·S/L`, and the pattern repeats every `L` output slots
//! (`S` source frames).

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;

use crate::video::Fps;
use crate::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Nearest-neighbour interpolation: repeat the temporally closest frame.
    Nni,
    /// Temporal blend of the two bracketing frames.
    Bi,
    /// Motion-compensated interpolation.
    Mci,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Nni, Scheme::Bi, Scheme::Mci];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Nni => "nni",
            Scheme::Bi => "bi",
            Scheme::Mci => "mci",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nni" => Ok(Scheme::Nni),
            "bi" => Ok(Scheme::Bi),
            "mci" => Ok(Scheme::Mci),
            _ => invalid(format!("unknown scheme `{s}` (nni, bi, mci)")),
        }
    }
}

/// What one output slot holds. Offsets are source-frame indices relative to
/// the first source frame of the slot's cycle; `alpha` weights `prev`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlotRole {
    Original { src: usize },
    Interpolated { prev: usize, next: usize, alpha: f64 },
    Duplicate { src: usize },
}

impl SlotRole {
    pub fn is_forged(&self) -> bool {
        !matches!(self, SlotRole::Original { .. })
    }

    fn shifted(self, by: isize) -> Self {
        let f = |i: usize| (i as isize + by) as usize;
        match self {
            SlotRole::Original { src } => SlotRole::Original { src: f(src) },
            SlotRole::Duplicate { src } => SlotRole::Duplicate { src: f(src) },
            SlotRole::Interpolated { prev, next, alpha } => SlotRole::Interpolated {
                prev: f(prev),
                next: f(next),
                alpha,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConversionPlan {
    pub src_fps: Fps,
    pub dst_fps: Fps,
    pub scheme: Scheme,
    /// Source frames per cycle (`S`).
    pub src_per_cycle: usize,
    /// Roles of the `L` slots of a steady-state cycle. The first cycle can
    /// differ for NNI when `L > 2S`; [`ConversionPlan::slot`] accounts for it.
    pub cycle: Vec<SlotRole>,
}

pub fn plan_conversion(src_fps: Fps, dst_fps: Fps, scheme: Scheme) -> Result<ConversionPlan> {
    let (l, s) = src_fps.ratio_to(dst_fps);
    if l <= s {
        return Err(Error::Unsupported(format!(
            "conversion {src_fps} -> {dst_fps} fps is not an up-conversion"
        )));
    }
    if l > 10_000 {
        return Err(Error::Unsupported(format!(
            "conversion {src_fps} -> {dst_fps} fps has a {l}-slot cycle"
        )));
    }
    let (l, s) = (l as usize, s as usize);
    let cycle = (l..2 * l)
        .map(|k| role_at(k, l, s, scheme).shifted(-(s as isize)))
        .collect();
    Ok(ConversionPlan {
        src_fps,
        dst_fps,
        scheme,
        src_per_cycle: s,
        cycle,
    })
}

/// Nearest source frame of slot `k`; an exact midpoint goes to the earlier one.
fn nearest(k: usize, l: usize, s: usize) -> usize {
    let (q, r) = (k * s).div_rem(&l);
    if 2 * r > l {
        q + 1
    } else {
        q
    }
}

fn role_at(k: usize, l: usize, s: usize, scheme: Scheme) -> SlotRole {
    let (q, r) = (k * s).div_rem(&l);
    match scheme {
        Scheme::Bi | Scheme::Mci if r != 0 => SlotRole::Interpolated {
            prev: q,
            next: q + 1,
            alpha: (l - r) as f64 / l as f64,
        },
        Scheme::Bi | Scheme::Mci => SlotRole::Original { src: q },
        Scheme::Nni => {
            // The first slot to show a source frame carries it; later slots
            // showing the same frame are repeats.
            let src = nearest(k, l, s);
            if k > 0 && nearest(k - 1, l, s) == src {
                SlotRole::Duplicate { src }
            } else {
                SlotRole::Original { src }
            }
        }
    }
}

impl ConversionPlan {
    pub fn cycle_len(&self) -> usize {
        self.cycle.len()
    }

    /// Forged slots per cycle over cycle length, in lowest terms.
    pub fn forged_fraction(&self) -> (usize, usize) {
        let forged = self.cycle.iter().filter(|r| r.is_forged()).count();
        let g = forged.gcd(&self.cycle.len()).max(1);
        (forged / g, self.cycle.len() / g)
    }

    /// Output frames produced from `n_src` source frames: every slot whose
    /// position does not pass the last source frame.
    pub fn output_len(&self, n_src: usize) -> usize {
        if n_src == 0 {
            return 0;
        }
        (n_src - 1) * self.cycle.len() / self.src_per_cycle + 1
    }

    /// Role of output slot `k` with absolute source indices.
    pub fn slot(&self, k: usize) -> SlotRole {
        let l = self.cycle.len();
        if k < l {
            return role_at(k, l, self.src_per_cycle, self.scheme);
        }
        let (c, i) = k.div_rem(&l);
        self.cycle[i].shifted((c * self.src_per_cycle) as isize)
    }
}
