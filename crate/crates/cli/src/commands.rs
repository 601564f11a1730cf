use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use spermtrack::config::CalibrationConfig;
use spermtrack::error::Error;
use spermtrack::eval::{self, ApMode, EvalReport};
use spermtrack::ingest::{
    self, detect_blobs, group_by_frame, stack_file_name, stack_frames, write_stack_tiff, BlobDetectorParams,
    DetectionsByFrame,
};
use spermtrack::joiner::{join_phases, prune_short, JoinDecision, Phase};
use spermtrack::model::{Detection, Frame, FrameSize, Track};
use spermtrack::mot;
use spermtrack::motility::{self, MotilityReport, MotilitySummary};
use spermtrack::sot::{CorrelationFilterParams, HoldPosition};
use spermtrack::synth::{self, PerturbSpec, RandomScenario, ScenarioSpec};

use crate::settings::{Group, Settings};
use crate::CliError;

/// What a subcommand reports: JSON for `--json`, text otherwise.
pub struct Outcome {
    pub json: Value,
    pub text: String,
}

/// Fails with a "not found" error for any given input that does not exist,
/// before anything else is checked.
pub fn check_inputs(s: &Settings, names: &[&str]) -> Result<(), CliError> {
    for name in names {
        for p in s.paths(name) {
            if !p.exists() {
                return Err(Error::NotFound(p).into());
            }
        }
    }
    Ok(())
}

fn calibration(s: &Settings) -> Result<CalibrationConfig, CliError> {
    let cfg: CalibrationConfig = s.build(Group::Calibration)?;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn detector(s: &Settings) -> Result<(BlobDetectorParams, usize), CliError> {
    let params: BlobDetectorParams = s.build(Group::Detector)?;
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let n = s.int("stack_channels").unwrap_or(1);
    if n % 2 == 0 {
        return Err(CliError::Usage(format!("stack_channels must be odd, got {n}")));
    }
    Ok((params, n))
}

enum TrackerChoice {
    Correlation(CorrelationFilterParams),
    Hold,
}

fn tracker(s: &Settings) -> Result<TrackerChoice, CliError> {
    match s.get("tracker").unwrap_or("correlation") {
        "correlation" => {
            let p: CorrelationFilterParams = s.build(Group::Tracker)?;
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(TrackerChoice::Correlation(p))
        }
        "hold" => Ok(TrackerChoice::Hold),
        other => Err(CliError::Usage(format!("unknown tracker '{other}' (expected correlation or hold)"))),
    }
}

fn ap_mode(s: &Settings) -> Result<ApMode, CliError> {
    match s.get("ap_mode").unwrap_or("standard") {
        "standard" => Ok(ApMode::Standard),
        "literal_product" => Ok(ApMode::LiteralProduct),
        other => Err(CliError::Usage(format!(
            "unknown ap_mode '{other}' (expected standard or literal_product)"
        ))),
    }
}

fn min_score(s: &Settings) -> Result<f64, CliError> {
    let v = s.float("min_score");
    if !(0.0..=1.0).contains(&v) {
        return Err(CliError::Usage(format!("min_score must lie in [0, 1], got {v}")));
    }
    Ok(v)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn pct(fraction: f64) -> String {
    format!("{:6.2}%", 100.0 * fraction)
}

// Stages shared by the single-step subcommands and `pipeline`.

fn detect_video(frames: &[Frame], params: &BlobDetectorParams, n: usize) -> Result<Vec<Detection>, CliError> {
    let per_frame: Vec<Vec<Detection>> = (0..frames.len())
        .into_par_iter()
        .map(|i| {
            if n == 1 {
                detect_blobs(&frames[i], params)
            } else {
                detect_blobs(&stack_frames(frames, i, n)?, params)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(per_frame.into_iter().flatten().collect())
}

fn track_video(
    frames: &[Frame],
    detections: &DetectionsByFrame,
    min_score: f64,
    cfg: &CalibrationConfig,
    choice: &TrackerChoice,
) -> Result<(Vec<Track>, usize), CliError> {
    let mut dropped = 0;
    let kept: DetectionsByFrame = detections
        .iter()
        .map(|(&f, dets)| {
            let keep: Vec<Detection> = dets.iter().filter(|d| d.score >= min_score).copied().collect();
            dropped += dets.len() - keep.len();
            (f, keep)
        })
        .collect();
    let tracks = match choice {
        TrackerChoice::Correlation(p) => mot::run(frames, &kept, cfg, p)?,
        TrackerChoice::Hold => mot::run(frames, &kept, cfg, &HoldPosition)?,
    };
    Ok((tracks, dropped))
}

struct Joined {
    tracks: Vec<Track>,
    log: Vec<JoinDecision>,
    before: usize,
    pruned: usize,
}

fn join_tracks(tracks: Vec<Track>, cfg: &CalibrationConfig, size: FrameSize) -> Joined {
    let before = tracks.len();
    let (joined, log) = join_phases(tracks, cfg, size);
    let n = joined.len();
    let tracks = prune_short(joined, cfg);
    Joined {
        pruned: n - tracks.len(),
        tracks,
        log,
        before,
    }
}

fn join_json(j: &Joined) -> Value {
    let count = |p: Phase| j.log.iter().filter(|d| d.phase == p).count();
    json!({
        "tracks_in": j.before,
        "tracks_out": j.tracks.len(),
        "pruned": j.pruned,
        "joins": {
            "fragment": count(Phase::Fragment),
            "false_positive": count(Phase::FalsePositive),
            "gap": count(Phase::Gap),
            "border": count(Phase::Border),
        },
    })
}

fn analyze_tracks(tracks: &[Track], cfg: &CalibrationConfig) -> Result<(Vec<MotilityReport>, Vec<String>), CliError> {
    let mut reports = Vec::new();
    let mut warnings = Vec::new();
    for t in tracks {
        match motility::analyze(t, cfg) {
            Ok(r) => reports.push(r),
            Err(e @ Error::TrackTooShort { .. }) => warnings.push(format!("{e}; skipped")),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((reports, warnings))
}

fn summary_text(summary: &Option<MotilitySummary>) -> String {
    let Some(s) = summary else {
        return "no tracks with at least 2 points\n".into();
    };
    let m = &s.means;
    let c = &s.categories;
    let mut out = format!("tracks          {}\n", s.tracks);
    for (name, v) in [("VSL um/s", m.vsl_um_s), ("VCL um/s", m.vcl_um_s), ("VAP um/s", m.vap_um_s)] {
        out += &format!("{name:<15} {v:8.2}\n");
    }
    out += &format!("STR             {:7.2}%\nLIN             {:7.2}%\n", m.str_pct, m.lin_pct);
    for (name, k) in [
        ("immotile", c.immotile),
        ("slow", c.slow),
        ("medium", c.medium),
        ("rapid", c.rapid),
        ("progressive", c.progressive),
        ("non_progressive", c.non_progressive),
    ] {
        out += &format!("{name:<15} {:5} {}\n", k.count, pct(k.fraction));
    }
    out
}

fn metrics_text(m: &eval::Metrics) -> String {
    format!(
        "tp {}  fp {}  fn {}\nprecision {}\nrecall    {}\nf1        {}\naccuracy  {}\n",
        m.tp,
        m.fp,
        m.fn_,
        pct(m.precision),
        pct(m.recall),
        pct(m.f1),
        pct(m.accuracy)
    )
}

fn frame_size(s: &Settings, frames: Option<&[Frame]>) -> FrameSize {
    match frames.and_then(|f| f.first()) {
        Some(f) => f.size(),
        None => FrameSize::new(s.int("width").unwrap_or(768) as u32, s.int("height").unwrap_or(576) as u32),
    }
}

// Subcommands.

pub fn stack(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["frames"])?;
    let frames_dir = s.require("frames")?;
    let out = s.require("out")?;
    let n = s.int("stack_channels").unwrap_or(1);
    if n % 2 == 0 {
        return Err(CliError::Usage(format!("stack_channels must be odd, got {n}")));
    }
    let frames = ingest::load_sequence(&frames_dir)?;
    let centers: Vec<usize> = match s.int("center") {
        Some(c) if c >= frames.len() => {
            return Err(CliError::Usage(format!("center {c} outside a video of {} frames", frames.len())))
        }
        Some(c) => vec![c],
        None => (0..frames.len()).collect(),
    };
    create_dir(&out)?;
    let mut files = Vec::new();
    for c in centers {
        let name = stack_file_name(c);
        write_stack_tiff(out.join(&name), &stack_frames(&frames, c, n)?)?;
        files.push(name);
    }
    Ok(Outcome {
        text: format!("wrote {} stacks of {n} channels to {}\n", files.len(), out.display()),
        json: json!({ "channels": n, "files": files }),
    })
}

pub fn detect(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["frames"])?;
    let frames_dir = s.require("frames")?;
    let out = s.require("out")?;
    let (params, n) = detector(s)?;
    let frames = ingest::load_sequence(&frames_dir)?;
    let dets = detect_video(&frames, &params, n)?;
    ingest::write_detections(&out, &dets)?;
    Ok(Outcome {
        text: format!("{} detections over {} frames written to {}\n", dets.len(), frames.len(), out.display()),
        json: json!({ "frames": frames.len(), "detections": dets.len() }),
    })
}

pub fn track(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["detections", "frames"])?;
    let det_path = s.require("detections")?;
    let frames_dir = s.require("frames")?;
    let out = s.require("out")?;
    let cfg = calibration(s)?;
    let choice = tracker(s)?;
    let min = min_score(s)?;
    let detections = ingest::read_detections(&det_path)?;
    let frames = ingest::load_sequence(&frames_dir)?;
    let (tracks, dropped) = track_video(&frames, &detections, min, &cfg, &choice)?;
    mot::write_tracks(&out, &tracks)?;
    Ok(Outcome {
        text: format!(
            "{} tracks written to {} ({dropped} detections below min score {min})\n",
            tracks.len(),
            out.display()
        ),
        json: json!({ "tracks": tracks.len(), "detections_below_min_score": dropped }),
    })
}

pub fn join(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["tracks", "frames"])?;
    let tracks_path = s.require("tracks")?;
    let out = s.require("out")?;
    let cfg = calibration(s)?;
    let tracks = mot::read_tracks(&tracks_path)?;
    let frames = s.path("frames").map(ingest::load_sequence).transpose()?;
    let j = join_tracks(tracks, &cfg, frame_size(s, frames.as_deref()));
    mot::write_tracks(&out, &j.tracks)?;
    if let Some(p) = s.path("decisions") {
        write_json(&p, &j.log)?;
    }
    Ok(Outcome {
        text: format!(
            "{} fragments -> {} tracks ({} joins, {} pruned), written to {}\n",
            j.before,
            j.tracks.len(),
            j.log.len(),
            j.pruned,
            out.display()
        ),
        json: join_json(&j),
    })
}

pub fn eval_det(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["detections", "gt"])?;
    let det_path = s.require("detections")?;
    let gt_path = s.require("gt")?;
    let cfg = calibration(s)?;
    let mode = ap_mode(s)?;
    let flat = |g: DetectionsByFrame| g.into_values().flatten().collect::<Vec<_>>();
    let dets = flat(ingest::read_detections(&det_path)?);
    let gts = flat(ingest::read_detections(&gt_path)?);
    let report = EvalReport {
        detection: Some(eval::detection_report(&dets, &gts, &cfg, mode)),
        ..EvalReport::default()
    };
    if let Some(p) = s.path("out") {
        write_json(&p, &report)?;
    }
    let d = report.detection.as_ref().expect("set above");
    Ok(Outcome {
        text: metrics_text(&d.metrics) + &format!("AP        {}\n", pct(d.ap)),
        json: serde_json::to_value(&report).map_err(Error::from)?,
    })
}

pub fn eval_track(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["tracks", "gt"])?;
    let tracks_path = s.require("tracks")?;
    let gt_path = s.require("gt")?;
    let cfg = calibration(s)?;
    let est = mot::read_tracks(&tracks_path)?;
    let gt = mot::read_tracks(&gt_path)?;
    let r = eval::match_tracks(&est, &gt, &cfg);
    let report = EvalReport {
        detection: None,
        tracking: Some(r.metrics),
        matches: r.matches,
    };
    if let Some(p) = s.path("out") {
        write_json(&p, &report)?;
    }
    Ok(Outcome {
        text: metrics_text(&r.metrics),
        json: serde_json::to_value(&report).map_err(Error::from)?,
    })
}

pub fn motility_cmd(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["tracks"])?;
    let tracks_path = s.require("tracks")?;
    let out = s.require("out")?;
    let cfg = calibration(s)?;
    let tracks = mot::read_tracks(&tracks_path)?;
    let (reports, warnings) = analyze_tracks(&tracks, &cfg)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    motility::write_motility(&out, &reports)?;
    let summary = motility::summarize(&reports).ok();
    if let Some(p) = s.path("summary") {
        write_json(&p, &summary)?;
    }
    Ok(Outcome {
        text: summary_text(&summary),
        json: serde_json::to_value(&summary).map_err(Error::from)?,
    })
}

pub fn synth_cmd(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["scenario"])?;
    let out = s.require("out")?;
    let spec: ScenarioSpec = match s.path("scenario") {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                line: e.line() as u64,
                message: e.to_string(),
            })?
        }
        None => {
            let random: RandomScenario = s.build(Group::Synth)?;
            random.generate()?
        }
    };
    let mut perturbation: PerturbSpec = s.build(Group::Synth)?;
    perturbation.seed = spec.seed;
    perturbation.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let video = synth::synth_video(&spec)?;
    let dets = synth::perturb(&video.detections, &perturbation, spec.frame_size(), spec.frames)?;
    synth::write_scenario(&out, &spec, &video, &dets)?;
    Ok(Outcome {
        text: format!(
            "{} objects, {} frames, {} detections written to {}\n",
            spec.objects.len(),
            spec.frames,
            dets.len(),
            out.display()
        ),
        json: json!({
            "objects": spec.objects.len(),
            "frames": spec.frames,
            "gt_detections": video.detections.len(),
            "detections": dets.len(),
        }),
    })
}

/// Files written by `pipeline` into each video's output directory.
pub const PIPELINE_FILES: [&str; 6] = [
    "detections.csv",
    "tracks_raw.csv",
    "tracks.csv",
    "join_decisions.json",
    "motility.csv",
    "motility_summary.json",
];

fn pipeline_one(
    frames_dir: &Path,
    out: &Path,
    cfg: &CalibrationConfig,
    det: &(BlobDetectorParams, usize),
    choice: &TrackerChoice,
    min: f64,
) -> Result<Value, CliError> {
    let frames = ingest::load_sequence(frames_dir)?;
    create_dir(out)?;
    let dets = detect_video(&frames, &det.0, det.1)?;
    ingest::write_detections(out.join(PIPELINE_FILES[0]), &dets)?;
    let (raw, _) = track_video(&frames, &group_by_frame(dets.iter().copied()), min, cfg, choice)?;
    mot::write_tracks(out.join(PIPELINE_FILES[1]), &raw)?;
    let j = join_tracks(raw, cfg, frames[0].size());
    mot::write_tracks(out.join(PIPELINE_FILES[2]), &j.tracks)?;
    write_json(&out.join(PIPELINE_FILES[3]), &j.log)?;
    let (reports, warnings) = analyze_tracks(&j.tracks, cfg)?;
    for w in &warnings {
        eprintln!("warning: {}: {w}", frames_dir.display());
    }
    motility::write_motility(out.join(PIPELINE_FILES[4]), &reports)?;
    let summary = motility::summarize(&reports).ok();
    write_json(&out.join(PIPELINE_FILES[5]), &summary)?;
    Ok(json!({
        "video": frames_dir.display().to_string(),
        "out": out.display().to_string(),
        "detections": dets.len(),
        "join": join_json(&j),
        "motility": summary,
    }))
}

pub fn pipeline(s: &Settings) -> Result<Outcome, CliError> {
    check_inputs(s, &["frames"])?;
    let videos = s.paths("frames");
    if videos.is_empty() {
        return Err(CliError::Usage("missing required option --frames".into()));
    }
    let out = s.require("out")?;
    let cfg = calibration(s)?;
    let det = detector(s)?;
    let choice = tracker(s)?;
    let min = min_score(s)?;
    // One video writes straight into --out; several get a subdirectory each.
    let targets: Vec<(PathBuf, PathBuf)> = if videos.len() == 1 {
        vec![(videos[0].clone(), out.clone())]
    } else {
        let mut names: Vec<String> = Vec::new();
        videos
            .iter()
            .map(|v| {
                let base = v.file_name().map_or("video".into(), |n| n.to_string_lossy().into_owned());
                let mut name = base.clone();
                let mut k = 1;
                while names.contains(&name) {
                    k += 1;
                    name = format!("{base}_{k}");
                }
                names.push(name.clone());
                (v.clone(), out.join(name))
            })
            .collect()
    };
    let results: Vec<Value> = targets
        .par_iter()
        .map(|(v, o)| pipeline_one(v, o, &cfg, &det, &choice, min))
        .collect::<Result<_, _>>()?;
    let mut text = String::new();
    for r in &results {
        text += &format!(
            "{}: {} detections, {} tracks -> {}\n",
            r["video"].as_str().unwrap_or_default(),
            r["detections"],
            r["join"]["tracks_out"],
            r["out"].as_str().unwrap_or_default()
        );
    }
    Ok(Outcome {
        text,
        json: json!({ "videos": results }),
    })
}
