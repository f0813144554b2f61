//! Solving the Block 3 channel widths for a target parameter count.
//!
//! Everything but the Block 3 widths is fixed by the architecture, so the
//! count is a quadratic in the last width once the others are chosen. The
//! solver enumerates non-decreasing prefixes and solves for the last entry.

use crate::fcdnet::{analytic_macs, analytic_param_count, Convention, NetConfig};
use crate::{invalid, Result};

pub const TARGET_PARAMS: usize = 218_010;
pub const PLAN_LEN: usize = 4;
pub const DOUBLING_PLAN: [usize; PLAN_LEN] = [60, 120, 240, 480];
pub const MIN_WIDTH: usize = 30;
pub const MAX_WIDTH: usize = 512;

/// Convention variants tabulated for a chosen plan.
pub const CONVENTIONS: [(&str, Convention); 4] = [
    (
        "bias-free conv, BN affine",
        Convention {
            conv_bias: false,
            bn_affine: true,
        },
    ),
    (
        "bias-free conv, no BN affine",
        Convention {
            conv_bias: false,
            bn_affine: false,
        },
    ),
    (
        "biased conv, BN affine",
        Convention {
            conv_bias: true,
            bn_affine: true,
        },
    ),
    (
        "biased conv, no BN affine",
        Convention {
            conv_bias: true,
            bn_affine: false,
        },
    ),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchSpace {
    /// Smallest allowed width; the plan must also be non-decreasing.
    pub min_width: usize,
    pub max_width: usize,
    /// Widths must be multiples of this.
    pub multiple: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            min_width: MIN_WIDTH,
            max_width: MAX_WIDTH,
            multiple: 1,
        }
    }
}

fn with_plan(base: &NetConfig, plan: &[usize]) -> NetConfig {
    NetConfig {
        block3_plan: plan.to_vec(),
        ..base.clone()
    }
}

/// Parameters of one Block 3 from `c` to `o` channels.
fn block3_params(c: usize, o: usize, conv: Convention) -> usize {
    let b = conv.conv_bias as usize;
    let bn = if conv.bn_affine { 2 * o } else { 0 };
    (c * o + b * o) + (9 * c + b * c) + (c * o + b * o) + 2 * bn
}

/// Block 4 plus the classifier at width `c`.
fn tail_params(c: usize, conv: Convention) -> usize {
    let b = conv.conv_bias as usize;
    let bn = if conv.bn_affine { 2 * c } else { 0 };
    (9 * c + b * c) + (c * c + b * c) + bn + 2 * c + 2
}

/// Everything before Block 3.
fn stem_params(base: &NetConfig, conv: Convention) -> usize {
    // Total with an empty plan is the stem plus a tail at block 2's width.
    let mut cfg = base.clone();
    cfg.block3_plan.clear();
    analytic_param_count(&cfg, conv) - tail_params(base.block2_channels, conv)
}

/// Parameter count of `plan` under `conv`, using the block formulas.
pub fn plan_params(base: &NetConfig, plan: &[usize], conv: Convention) -> usize {
    let mut total = stem_params(base, conv);
    let mut c = base.block2_channels;
    for &o in plan {
        total += block3_params(c, o, conv);
        c = o;
    }
    total + tail_params(c, conv)
}

/// Variance of `ln(c_i / c_{i-1})` with `c_0` the Block 2 width.
pub fn log_ratio_variance(c0: usize, plan: &[usize]) -> f64 {
    let mut prev = c0 as f64;
    let ratios: Vec<f64> = plan
        .iter()
        .map(|&c| {
            let r = (c as f64 / prev).ln();
            prev = c as f64;
            r
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len() as f64
}

/// Every plan in `space` that lands exactly on `target`, in lexicographic order.
pub fn exact_plans(base: &NetConfig, target: usize, space: SearchSpace, conv: Convention) -> Vec<[usize; PLAN_LEN]> {
    let mut out = Vec::new();
    search(base, target, space, conv, |plan, params| {
        if params == target {
            out.push(plan);
        }
    });
    out
}

/// Plan with the smallest `|params - target|`; ties go to the more
/// geometric plan, then the lexicographically smaller one.
pub fn closest_plan(
    base: &NetConfig,
    target: usize,
    space: SearchSpace,
    conv: Convention,
) -> Option<([usize; PLAN_LEN], usize)> {
    let c0 = base.block2_channels;
    let mut best: Option<([usize; PLAN_LEN], usize, usize, f64)> = None;
    search(base, target, space, conv, |plan, params| {
        let delta = params.abs_diff(target);
        let var = log_ratio_variance(c0, &plan);
        let better = match &best {
            None => true,
            Some((bp, _, bd, bv)) => delta.cmp(bd).then(var.total_cmp(bv)).then(plan.cmp(bp)).is_lt(),
        };
        if better {
            best = Some((plan, params, delta, var));
        }
    });
    best.map(|(p, n, _, _)| (p, n))
}

/// Walks prefixes `c1 <= c2 <= c3` and visits the one or two last widths
/// bracketing the target.
fn search<F: FnMut([usize; PLAN_LEN], usize)>(
    base: &NetConfig,
    target: usize,
    space: SearchSpace,
    conv: Convention,
    mut visit: F,
) {
    let m = space.multiple.max(1);
    let lo = space.min_width.div_ceil(m) * m;
    let lo = lo.max(m);
    let hi = space.max_width;
    if lo > hi {
        return;
    }
    let stem = stem_params(base, conv);
    let c0 = base.block2_channels;
    let widths: Vec<usize> = (lo..=hi).step_by(m).collect();
    for (i1, &c1) in widths.iter().enumerate() {
        let p1 = stem + block3_params(c0, c1, conv);
        for (i2, &c2) in widths.iter().enumerate().skip(i1) {
            let p2 = p1 + block3_params(c1, c2, conv);
            for (i3, &c3) in widths.iter().enumerate().skip(i2) {
                let p3 = p2 + block3_params(c2, c3, conv);
                let last = |c4: usize| p3 + block3_params(c3, c4, conv) + tail_params(c4, conv);
                // `last` is increasing in c4; find the first width not below target.
                let cands = &widths[i3..];
                let k = cands.partition_point(|&c4| last(c4) < target);
                if k > 0 {
                    let c = cands[k - 1];
                    visit([c1, c2, c3, c], last(c));
                }
                if k < cands.len() {
                    let c = cands[k];
                    visit([c1, c2, c3, c], last(c));
                }
                if k == 0 && last(c3) > target {
                    // Larger c3 only overshoots further.
                    break;
                }
            }
        }
    }
}

/// Picks the most geometric exact plan, then the lexicographically smallest.
pub fn select_plan(c0: usize, plans: &[[usize; PLAN_LEN]]) -> Option<[usize; PLAN_LEN]> {
    plans.iter().copied().min_by(|a, b| {
        log_ratio_variance(c0, a)
            .total_cmp(&log_ratio_variance(c0, b))
            .then(a.cmp(b))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanReport {
    pub target: usize,
    pub exact_count: usize,
    pub chosen: [usize; PLAN_LEN],
    pub chosen_params: usize,
    pub closest_multiple_of_30: ([usize; PLAN_LEN], usize),
    /// Chosen plan counted under each convention variant.
    pub conventions: Vec<(String, usize)>,
    /// Doubling plan from the Block 2 width, as an upper reference.
    pub doubling_plan: ([usize; PLAN_LEN], usize),
    pub macs_per_stack: u64,
    pub batch: usize,
    pub macs_per_batch: u64,
}

pub fn solve(base: &NetConfig, target: usize, batch: usize) -> Result<PlanReport> {
    let conv = Convention::BUILT;
    let plans = exact_plans(base, target, SearchSpace::default(), conv);
    let Some(chosen) = select_plan(base.block2_channels, &plans) else {
        return invalid(format!(
            "no non-decreasing plan with widths in [{MIN_WIDTH}, {MAX_WIDTH}] reaches {target} parameters"
        ));
    };
    let thirty = SearchSpace {
        multiple: 30,
        ..SearchSpace::default()
    };
    let closest = closest_plan(base, target, thirty, conv)
        .ok_or_else(|| crate::Error::Invalid("no multiple-of-30 plan in range".into()))?;
    let cfg = with_plan(base, &chosen);
    let macs = analytic_macs(&cfg);
    Ok(PlanReport {
        target,
        exact_count: plans.len(),
        chosen,
        chosen_params: plan_params(base, &chosen, conv),
        closest_multiple_of_30: closest,
        conventions: CONVENTIONS
            .iter()
            .map(|(name, c)| (name.to_string(), analytic_param_count(&cfg, *c)))
            .collect(),
        doubling_plan: (DOUBLING_PLAN, plan_params(base, &DOUBLING_PLAN, conv)),
        macs_per_stack: macs,
        batch,
        macs_per_batch: macs * batch as u64,
    })
}

impl PlanReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let plan = |p: &[usize]| p.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ");
        s.push_str(&format!("target parameters: {}\n", self.target));
        s.push_str(&format!(
            "exact plans (non-decreasing, widths in [{MIN_WIDTH}, {MAX_WIDTH}]): {}\n",
            self.exact_count
        ));
        s.push_str(&format!(
            "chosen block 3 plan: [{}] -> {} parameters\n",
            plan(&self.chosen),
            self.chosen_params
        ));
        let (p30, n30) = &self.closest_multiple_of_30;
        s.push_str(&format!(
            "closest multiple-of-30 plan: [{}] -> {} parameters ({:+})\n",
            plan(p30),
            n30,
            *n30 as i64 - self.target as i64
        ));
        let (pd, nd) = &self.doubling_plan;
        s.push_str(&format!("doubling plan: [{}] -> {} parameters\n", plan(pd), nd));
        s.push_str("counting conventions for the chosen plan:\n");
        for (name, n) in &self.conventions {
            s.push_str(&format!("  {name:<30} {n}\n"));
        }
        s.push_str(&format!("MACs per stack: {}\n", self.macs_per_stack));
        s.push_str(&format!("MACs per batch of {}: {}\n", self.batch, self.macs_per_batch));
        s
    }
}
