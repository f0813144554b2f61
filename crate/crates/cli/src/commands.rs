use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use serde::Serialize;

use frucforge_core::cache::{read_cache, write_cache};
use frucforge_core::channel_plan;
use frucforge_core::corpus::{build_corpus, CorpusSpec, VideoPair};
use frucforge_core::detect::{self as det, DetectOptions, DEFAULT_STACKS, DEFAULT_THRESHOLD};
use frucforge_core::fcdnet::{FcdNet, NetConfig};
use frucforge_core::metrics::{compute_metrics, MetricsReport};
use frucforge_core::preprocess::{video_id, InputKind, Label, ResidualStack};
use frucforge_core::synth::{synth_video, Motion, Pattern, SynthSpec};
use frucforge_core::train::{train as train_net, PairedDataset, TrainConfig};
use frucforge_core::upconvert::{upconvert, UpconvertOptions};
use frucforge_core::y4m::{read_y4m, write_y4m, ChromaMode};
use frucforge_core::{plan_conversion, Fps, Scheme, SlotRole, Video};
use frucforge_nn::checkpoint::Checkpoint;
use frucforge_nn::AdamConfig;

use crate::usage;

fn read_video(path: &Path, chroma: ChromaMode) -> Result<Video> {
    read_y4m(path, chroma).with_context(|| format!("reading {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "video".into(), |s| s.to_string_lossy().into_owned())
}

fn fps_tag(f: Fps) -> String {
    f.to_string().replace('/', "_")
}

fn parse_fps_pair(s: &str) -> std::result::Result<(Fps, Fps), String> {
    let (a, b) = s
        .split_once(':')
        .or_else(|| s.split_once("->"))
        .ok_or_else(|| format!("`{s}` is not SRC:DST"))?;
    let src: Fps = a.parse().map_err(|e| format!("{e}"))?;
    let dst: Fps = b.parse().map_err(|e| format!("{e}"))?;
    Ok((src, dst))
}

// ---------------------------------------------------------------- synth

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output Y4M file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    #[arg(long, default_value = "30")]
    pub fps: Fps,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    /// checker[:cell], gradient-blobs, textured-noise.
    #[arg(long, default_value = "textured-noise")]
    pub pattern: Pattern,
    /// static, translate:dx,dy, oscillate:amplitude,period.
    #[arg(long, default_value = "oscillate:5,20")]
    pub motion: Motion,
    /// Standard deviation of per-frame Gaussian noise.
    #[arg(long, default_value_t = 2.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let video = synth_video(&SynthSpec {
        width: a.width,
        height: a.height,
        fps: a.fps,
        n_frames: a.frames,
        pattern: a.pattern,
        motion: a.motion,
        noise_sigma: a.noise,
        seed: a.seed,
    })
    .map_err(|e| usage(e.to_string()))?;
    write_y4m(&video, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", a.out.display());
    Ok(())
}

// ---------------------------------------------------------------- forge

#[derive(Args, Debug)]
pub struct ForgeArgs {
    /// Source Y4M video.
    #[arg(long = "in", alias = "input", value_name = "Y4M")]
    pub input: PathBuf,
    /// Forged Y4M output.
    #[arg(long, value_name = "Y4M")]
    pub out: PathBuf,
    /// Forged-frame mask CSV; defaults to the output path with `.mask.csv`.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// nni, bi, or mci.
    #[arg(long)]
    pub scheme: Scheme,
    /// Source rate; defaults to the rate in the file header.
    #[arg(long)]
    pub src_fps: Option<Fps>,
    #[arg(long)]
    pub dst_fps: Fps,
    /// Motion estimation block size.
    #[arg(long, default_value_t = 16)]
    pub block: usize,
    /// Motion search range in pixels.
    #[arg(long, default_value_t = 7)]
    pub search: usize,
    /// Blend interpolated frames 50/50 regardless of position.
    #[arg(long)]
    pub fixed_blend: bool,
    /// Skip median smoothing of motion vectors.
    #[arg(long)]
    pub no_smooth: bool,
    /// Shell command run on the forged file; `{input}` and `{output}` are
    /// replaced by the forged path and `<out stem>.reencoded.y4m`.
    #[arg(long)]
    pub reencode_cmd: Option<String>,
}

pub fn forge(a: ForgeArgs) -> Result<()> {
    if a.block < 4 || a.search < 1 {
        return Err(usage("--block must be >= 4 and --search >= 1"));
    }
    let chroma = ChromaMode::Rgb;
    let mut video = read_video(&a.input, chroma)?;
    let src = a.src_fps.unwrap_or(video.fps());
    if src != video.fps() {
        video = Video::new(video.into_frames(), src)?;
    }
    let plan = plan_conversion(src, a.dst_fps, a.scheme).map_err(|e| usage(e.to_string()))?;
    let opts = UpconvertOptions {
        block_size: a.block,
        search_range: a.search,
        fixed_blend: a.fixed_blend,
        smooth: !a.no_smooth,
    };
    let (out, mask) = upconvert(&video, &plan, &opts)?;
    let out = out.quantized();
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let video_path = a.out.clone();
    write_y4m(&out, &video_path).with_context(|| format!("writing {}", video_path.display()))?;

    let mut csv = String::from("frame,forged,role,source\n");
    for (k, forged) in mask.iter().enumerate() {
        let (role, src_desc) = match plan.slot(k) {
            SlotRole::Original { src } => ("original", src.to_string()),
            SlotRole::Duplicate { src } => ("duplicate", src.to_string()),
            SlotRole::Interpolated { prev, next, alpha } => ("interpolated", format!("{prev}+{next}@{alpha:.6}")),
        };
        csv.push_str(&format!("{k},{},{role},{src_desc}\n", *forged as u8));
    }
    let mask_path = a.mask.clone().unwrap_or_else(|| video_path.with_extension("mask.csv"));
    write_file(&mask_path, csv)?;
    println!("{}", video_path.display());
    println!("{}", mask_path.display());

    if let Some(template) = &a.reencode_cmd {
        let reencoded = video_path.with_extension("reencoded.y4m");
        let cmd = template
            .replace("{input}", &video_path.to_string_lossy())
            .replace("{output}", &reencoded.to_string_lossy());
        let status = Process::new("sh")
            .arg("-c")
            .arg(&cmd)
            .status()
            .with_context(|| format!("running re-encode command `{cmd}`"))?;
        ensure!(status.success(), "re-encode command `{cmd}` exited with {status}");
        let back = read_video(&reencoded, chroma)?;
        ensure!(
            back.len() == out.len(),
            "re-encoded video has {} frames, forged video has {}",
            back.len(),
            out.len()
        );
        println!("{}", reencoded.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- dataset

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Output stack cache (.fcds).
    #[arg(long)]
    pub out: PathBuf,
    /// Original videos to forge; without any, a synthetic corpus is rendered.
    #[arg(long = "video", value_name = "Y4M")]
    pub videos: Vec<PathBuf>,
    /// Synthetic scenes to render.
    #[arg(long, default_value_t = 90)]
    pub pairs: usize,
    #[arg(long, default_value_t = 8)]
    pub stacks_per_pair: usize,
    #[arg(long, default_value_t = 64)]
    pub crop: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 96)]
    pub height: usize,
    /// Frames rendered at the source rate per synthetic scene.
    #[arg(long, default_value_t = 16)]
    pub source_frames: usize,
    #[arg(long, default_value_t = 4.0)]
    pub noise: f64,
    /// Input builder: 5-residual, 2-residual, 6-y, or 3-y.
    #[arg(long, default_value = "5-residual")]
    pub input_kind: InputKind,
    /// Keep raw 0..255 differences instead of dividing by 255.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, value_delimiter = ',', default_value = "nni,bi,mci")]
    pub schemes: Vec<Scheme>,
    /// Conversions as SRC:DST, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_fps_pair, default_value = "15:20,15:30,25:30")]
    pub fps_pairs: Vec<(Fps, Fps)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Source-rate copy of a video by taking the frame nearest each source
/// instant (earlier on ties).
fn decimate(video: &Video, src: Fps) -> Result<Video> {
    let (l, s) = src.ratio_to(video.fps());
    ensure!(l > s, "cannot decimate {} fps to {src} fps", video.fps());
    let frames: Vec<_> = (0..)
        .map(|i: u64| {
            let pos = i * l;
            (pos / s + u64::from(2 * (pos % s) > s)) as usize
        })
        .take_while(|&k| k < video.len())
        .map(|k| video.frames()[k].clone())
        .collect();
    Ok(Video::new(frames, src)?)
}

fn pairs_from_videos(a: &DatasetArgs) -> Result<Vec<VideoPair>> {
    let mut pairs = Vec::new();
    for path in &a.videos {
        let original = read_video(path, ChromaMode::Discard)?;
        let matching: Vec<_> = a.fps_pairs.iter().filter(|(_, d)| *d == original.fps()).collect();
        if matching.is_empty() {
            bail!(
                "{} is {} fps, which is not the target rate of any --fps-pairs entry",
                path.display(),
                original.fps()
            );
        }
        for &&(src, dst) in &matching {
            let source = decimate(&original, src)?;
            for &scheme in &a.schemes {
                let plan = plan_conversion(src, dst, scheme)?;
                let (forged, mask) = upconvert(&source, &plan, &UpconvertOptions::default())?;
                let n = forged.len().min(original.len());
                pairs.push(VideoPair {
                    name: format!("{}-{scheme}-{}to{}", path.display(), fps_tag(src), fps_tag(dst)),
                    scheme,
                    src_fps: src,
                    dst_fps: dst,
                    original: original.slice(0, n)?,
                    forged: forged.quantized().slice(0, n)?,
                    forged_mask: mask[..n].to_vec(),
                });
            }
        }
    }
    Ok(pairs)
}

pub fn dataset(a: DatasetArgs) -> Result<()> {
    if a.schemes.is_empty() || a.fps_pairs.is_empty() {
        return Err(usage("--schemes and --fps-pairs must not be empty"));
    }
    let pairs = if a.videos.is_empty() {
        let spec = CorpusSpec {
            pairs: a.pairs,
            width: a.width,
            height: a.height,
            source_frames: a.source_frames,
            schemes: a.schemes.clone(),
            fps_pairs: a.fps_pairs.clone(),
            noise_sigma: a.noise,
            seed: a.seed,
        };
        build_corpus(&spec)?
    } else {
        pairs_from_videos(&a)?
    };
    let data =
        PairedDataset::from_pairs_with(&pairs, a.stacks_per_pair, a.crop, a.input_kind, !a.no_normalize, a.seed)?;
    let interleaved: Vec<ResidualStack> = data
        .originals
        .into_iter()
        .zip(data.forged)
        .flat_map(|(o, f)| [o, f])
        .collect();
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_cache(&a.out, &interleaved).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", a.out.display());
    eprintln!("{} pairs from {} videos", interleaved.len() / 2, pairs.len());
    Ok(())
}

/// Splits an interleaved cache back into pairs, checking the pairing.
fn load_pairs(path: &Path) -> Result<PairedDataset> {
    let stacks = read_cache(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(!stacks.is_empty(), "{} holds no stacks", path.display());
    ensure!(
        stacks.len() % 2 == 0,
        "{} holds an odd number of stacks",
        path.display()
    );
    let mut data = PairedDataset::default();
    let mut it = stacks.into_iter();
    let mut i = 0;
    while let (Some(o), Some(f)) = (it.next(), it.next()) {
        ensure!(
            o.label == Some(Label::Original) && f.label == Some(Label::Forged) && o.origin == f.origin,
            "{}: stacks {} and {} are not an original/forged pair",
            path.display(),
            2 * i,
            2 * i + 1
        );
        data.originals.push(o);
        data.forged.push(f);
        i += 1;
    }
    Ok(data)
}

// ---------------------------------------------------------------- train

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training stack cache.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation cache used to keep the best epoch.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Network size: desk or full.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub block1_channels: Option<usize>,
    #[arg(long)]
    pub block2_channels: Option<usize>,
    #[arg(long)]
    pub block1_count: Option<usize>,
    #[arg(long)]
    pub block2_count: Option<usize>,
    /// Block 3 output widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub block3_plan: Option<Vec<usize>>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub weight_decay: f64,
    /// Disable rotation/flip augmentation.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn net_config(a: &TrainArgs, crop: usize) -> Result<NetConfig> {
    let mut cfg = match a.preset.as_str() {
        "desk" => NetConfig::desk(),
        "full" => NetConfig::full(),
        other => return Err(usage(format!("unknown preset `{other}` (desk, full)"))),
    };
    cfg.crop_size = crop;
    cfg.seed = a.seed;
    if let Some(v) = a.block1_channels {
        cfg.block1_channels = v;
    }
    if let Some(v) = a.block2_channels {
        cfg.block2_channels = v;
    }
    if let Some(v) = a.block1_count {
        cfg.block1_count = v;
    }
    if let Some(v) = a.block2_count {
        cfg.block2_count = v;
    }
    if let Some(v) = &a.block3_plan {
        cfg.block3_plan = v.clone();
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let train_set = load_pairs(&a.train)?;
    let val_set = a.val.as_deref().map(load_pairs).transpose()?;
    let (crop, kind) = (train_set.originals[0].crop, train_set.originals[0].kind);
    if let Some(v) = &val_set {
        ensure!(
            (v.originals[0].crop, v.originals[0].kind) == (crop, kind),
            "training and validation caches use different crops or input kinds"
        );
    }
    let mut cfg = net_config(&a, crop)?;
    if kind.planes() != cfg.input_planes {
        // Grouping follows the input planes when the widths allow it.
        cfg.input_planes = kind.planes();
        cfg.groups = if cfg.block1_channels % cfg.input_planes == 0 {
            cfg.input_planes
        } else {
            1
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
    }
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        adam: AdamConfig {
            lr: a.lr,
            weight_decay: a.weight_decay,
            ..AdamConfig::default()
        },
        augment: !a.no_augment,
        seed: a.seed,
    };
    if tc.batch_size < 2 || !tc.batch_size.is_multiple_of(2) {
        return Err(usage("--batch must be even and at least 2"));
    }
    let mut net = FcdNet::<f32>::build(&cfg)?;
    eprintln!("{} parameters, {} pairs", net.param_count(), train_set.len());
    let outcome = train_net(&mut net, &train_set, val_set.as_ref(), &tc, |s| match &s.val {
        Some(m) => eprintln!(
            "epoch {}: loss {:.4}, val accuracy {:.2}%, F1 {:.2}",
            s.epoch, s.train_loss, m.accuracy, m.f1
        ),
        None => eprintln!("epoch {}: loss {:.4}", s.epoch, s.train_loss),
    })?;
    create_dir(&a.out)?;
    let ck_path = a.out.join("model.fcdw");
    net.checkpoint()
        .save(&ck_path)
        .with_context(|| format!("writing {}", ck_path.display()))?;
    write_file(&a.out.join("metrics.csv"), outcome.loss_curve_csv())?;
    let mut manifest = format!(
        "checkpoint = {}\nkept_epoch = {}\n",
        ck_path.display(),
        outcome.best_epoch
    );
    for (k, v) in cfg.manifest() {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str(&format!(
        "epochs = {}\nbatch = {}\nlr = {}\nweight_decay = {}\naugment = {}\ntrain = {}\n",
        tc.epochs,
        tc.batch_size,
        tc.adam.lr,
        tc.adam.weight_decay,
        tc.augment,
        a.train.display()
    ));
    if let Some(v) = &a.val {
        manifest.push_str(&format!("val = {}\n", v.display()));
    }
    write_file(&a.out.join("run-manifest.txt"), manifest)?;
    println!("{}", ck_path.display());
    Ok(())
}

// ---------------------------------------------------------------- detect

fn load_net(path: &Path) -> Result<FcdNet<f32>> {
    let ck = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    FcdNet::from_checkpoint(&ck).with_context(|| format!("loading {}", path.display()))
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Y4M videos to classify.
    #[arg(required = true)]
    pub videos: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_STACKS)]
    pub stacks: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON-lines output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct StackRecord {
    start: usize,
    x: usize,
    y: usize,
    p_original: f32,
    p_forged: f32,
    vote: &'static str,
}

#[derive(Serialize)]
struct VerdictRecord {
    video: String,
    frames: usize,
    decision: &'static str,
    forged_votes: usize,
    stacks: Vec<StackRecord>,
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Original => "original",
        Label::Forged => "forged",
    }
}

fn check_detect_opts(stacks: usize, threshold: f32) -> Result<()> {
    if stacks == 0 {
        return Err(usage("--stacks must be at least 1"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(usage("--threshold must lie in [0, 1]"));
    }
    Ok(())
}

fn detect_one(net: &mut FcdNet<f32>, path: &Path, opts: &DetectOptions) -> Result<(VerdictRecord, Label)> {
    let video = read_video(path, ChromaMode::Discard)?;
    let name = path.display().to_string();
    let v = det::detect(net, &video, video_id(&name), opts).with_context(|| format!("detecting {name}"))?;
    let stacks = v
        .origins
        .iter()
        .zip(&v.probs)
        .zip(&v.votes)
        .map(|((o, p), &vote)| StackRecord {
            start: o.start,
            x: o.crop_x,
            y: o.crop_y,
            p_original: p[0],
            p_forged: p[1],
            vote: label_name(vote),
        })
        .collect();
    Ok((
        VerdictRecord {
            video: name,
            frames: video.len(),
            decision: label_name(v.decision),
            forged_votes: v.votes.iter().filter(|&&l| l == Label::Forged).count(),
            stacks,
        },
        v.decision,
    ))
}

pub fn detect(a: DetectArgs) -> Result<()> {
    check_detect_opts(a.stacks, a.threshold)?;
    let mut net = load_net(&a.checkpoint)?;
    let opts = DetectOptions {
        n_stacks: a.stacks,
        threshold: a.threshold,
        seed: a.seed,
    };
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    for path in &a.videos {
        let (record, _) = detect_one(&mut net, path, &opts)?;
        writeln!(out, "{}", serde_json::to_string(&record)?)?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- localize

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Y4M video to scan.
    pub video: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f32,
    /// Mask CSV from `forge`, shaded in the plot.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

fn read_mask(path: &Path) -> Result<Vec<bool>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "forged")
        .with_context(|| format!("{} has no `forged` column", path.display()))?;
    reader
        .records()
        .enumerate()
        .map(|(i, r)| {
            let r = r?;
            match r.get(col) {
                Some("1") => Ok(true),
                Some("0") => Ok(false),
                v => bail!("{}: row {} has forged value {v:?}", path.display(), i + 2),
            }
        })
        .collect()
}

pub fn localize(a: LocalizeArgs) -> Result<()> {
    let mut net = load_net(&a.checkpoint)?;
    let video = read_video(&a.video, ChromaMode::Discard)?;
    let mask = a.mask.as_deref().map(read_mask).transpose()?;
    if let Some(m) = &mask {
        ensure!(
            m.len() == video.len(),
            "mask has {} rows for {} frames",
            m.len(),
            video.len()
        );
    }
    let name = a.video.display().to_string();
    let loc = det::localize(&mut net, &video, video_id(&name)).with_context(|| format!("localizing {name}"))?;
    create_dir(&a.out)?;
    let base = stem(&a.video);
    let frames = a.out.join(format!("{base}.frames.csv"));
    let windows = a.out.join(format!("{base}.windows.csv"));
    let svg = a.out.join(format!("{base}.svg"));
    write_file(&frames, loc.frames_csv())?;
    write_file(&windows, loc.windows_csv())?;
    let plot = format!(
        "<!-- frucforge {} -->\n{}",
        env!("CARGO_PKG_VERSION"),
        loc.svg(a.threshold, mask.as_deref())
    );
    write_file(&svg, plot)?;
    for p in [frames, windows, svg] {
        println!("{}", p.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// CSV with `video` and `label` columns and an optional `predicted`
    /// column; labels are original/forged or 0/1.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Classify rows without a prediction using this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_STACKS)]
    pub stacks: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_label(s: &str) -> Option<Label> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "original" => Some(Label::Original),
        "1" | "forged" => Some(Label::Forged),
        _ => None,
    }
}

pub fn render_table(m: &MetricsReport) -> String {
    let f = |v: f64| {
        if v.is_nan() {
            "undefined".to_string()
        } else {
            format!("{v:.2}")
        }
    };
    let mut s = String::new();
    s.push_str(&format!(
        "TP {:>6}   FN {:>6}\nFP {:>6}   TN {:>6}\n",
        m.tp, m.fn_, m.fp, m.tn
    ));
    for (name, v) in [
        ("TNR", m.tnr),
        ("TPR", m.tpr),
        ("precision", m.precision),
        ("recall", m.recall),
        ("F1", m.f1),
        ("accuracy", m.accuracy),
    ] {
        s.push_str(&format!("{name:<10} {}\n", f(v)));
    }
    s
}

pub fn report(a: ReportArgs) -> Result<()> {
    check_detect_opts(a.stacks, a.threshold)?;
    let mut reader =
        csv::Reader::from_path(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let label_col = col("label").with_context(|| format!("{} has no `label` column", a.manifest.display()))?;
    let video_col = col("video");
    let pred_col = col("predicted");
    let mut net = a.checkpoint.as_deref().map(load_net).transpose()?;
    let opts = DetectOptions {
        n_stacks: a.stacks,
        threshold: a.threshold,
        seed: a.seed,
    };
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let (mut truth, mut predicted) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("").trim();
        let label = parse_label(field(label_col))
            .with_context(|| format!("{}:{row}: bad label `{}`", a.manifest.display(), field(label_col)))?;
        let pred = match pred_col.map(field).filter(|s| !s.is_empty()) {
            Some(p) => {
                parse_label(p).with_context(|| format!("{}:{row}: bad prediction `{p}`", a.manifest.display()))?
            }
            None => {
                let net = net.as_mut().with_context(|| {
                    format!(
                        "{}:{row}: no prediction and no --checkpoint to make one",
                        a.manifest.display()
                    )
                })?;
                let video = video_col
                    .map(field)
                    .filter(|s| !s.is_empty())
                    .with_context(|| format!("{}:{row}: no video path", a.manifest.display()))?;
                let path = base.join(video);
                detect_one(net, &path, &opts)?.1
            }
        };
        truth.push(label);
        predicted.push(pred);
    }
    let m = compute_metrics(&predicted, &truth).with_context(|| format!("scoring {}", a.manifest.display()))?;
    print!("{}", render_table(&m));
    if !m.undefined.is_empty() {
        println!("undefined (zero denominator): {}", m.undefined.join(", "));
    }
    if let Some(out) = &a.out {
        write_file(out, format!("{}\n{}\n", MetricsReport::CSV_HEADER, m.csv_row()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- plan

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long, default_value_t = channel_plan::TARGET_PARAMS)]
    pub target: usize,
    /// Batch size for the per-batch MAC figure.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn plan(a: PlanArgs) -> Result<()> {
    let report = channel_plan::solve(&NetConfig::full(), a.target, a.batch)?;
    let text = report.render();
    print!("{text}");
    if let Some(out) = &a.out {
        write_file(out, text)?;
    }
    Ok(())
}
