//! The work behind each subcommand, callable without the argument parser.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use tanet_core::config::ModelConfig;
use tanet_core::data::{binarize, derive_edge_gt, normalize, replicate_depth, synthetic_dataset};
use tanet_core::kernels::bilinear_resize;
use tanet_core::losses::LossBreakdown;
use tanet_core::metrics::{aggregate, evaluate_pair, MetricReport, SaliencyMapPair};
use tanet_core::model::{ParamCounts, TaNet};
use tanet_core::params::ParamStore;
use tanet_core::train::{train_toy, TrainConfig};
use tanet_core::Tensor;

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::image_io;
use crate::manifest::{ImageTiming, RunManifest};

/// A model with its weights, either loaded or freshly seeded.
pub struct Session {
    pub model: TaNet,
    pub params: ParamStore<f32>,
    pub checkpoint: Option<PathBuf>,
}

impl Session {
    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }
}

/// Build the model and load `checkpoint`, or seed weights from the config.
pub fn open(config: ModelConfig, checkpoint_path: Option<&Path>) -> Result<Session> {
    let model = TaNet::new(config)?;
    let params = match checkpoint_path {
        Some(path) => load_weights(&model, path)?,
        None => model.init_params(model.config.seed),
    };
    Ok(Session { model, params, checkpoint: checkpoint_path.map(Path::to_path_buf) })
}

pub fn load_weights(model: &TaNet, path: &Path) -> Result<ParamStore<f32>> {
    let mut store = checkpoint::read(path).map_err(|source| Error::Checkpoint { path: path.into(), source })?;
    model.check_params(&store)?;
    checkpoint::adopt_kinds(&mut store, &model.specs);
    Ok(store)
}

pub fn save_weights(params: &ParamStore<f32>, path: &Path) -> Result<()> {
    checkpoint::write(params, path).map_err(|source| Error::Checkpoint { path: path.into(), source })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

pub const SALIENCY_DIR: &str = "saliency";
pub const EDGE_DIR: &str = "edge";

#[derive(Clone, Debug)]
pub struct InferOutput {
    pub saliency: PathBuf,
    pub edge: PathBuf,
    pub manifest: RunManifest,
}

/// Predict one image pair and write `saliency/<stem>.png`, `edge/<stem>.png`
/// (both at the RGB file's resolution) and `manifest.json` under `out`.
pub fn run_infer(session: &Session, rgb: &Path, depth: &Path, out: &Path) -> Result<InferOutput> {
    let cfg = session.config();
    let start = Instant::now();
    let (rgb_t, depth_t, (oh, ow)) = image_io::load_inputs(rgb, depth, cfg.input_size)?;
    let pred = session
        .model
        .predict(&session.params, &normalize(&rgb_t), &normalize(&replicate_depth(&depth_t)?))?;
    let saliency = bilinear_resize(&pred.saliency_full, oh, ow)?;
    let edge = bilinear_resize(&pred.edge_full, oh, ow)?;

    for sub in [SALIENCY_DIR, EDGE_DIR] {
        create_dir(&out.join(sub))?;
    }
    let name = stem(rgb);
    let sal_path = out.join(SALIENCY_DIR).join(format!("{name}.png"));
    let edge_path = out.join(EDGE_DIR).join(format!("{name}.png"));
    image_io::save_gray(&sal_path, &saliency)?;
    image_io::save_gray(&edge_path, &edge)?;

    let mut manifest = RunManifest::new("infer", cfg, &session.model.count_params(), session.checkpoint.as_deref(), out);
    manifest.timing.push(ImageTiming { image: name, millis: start.elapsed().as_secs_f64() * 1e3 });
    manifest.write(out)?;
    Ok(InferOutput { saliency: sal_path, edge: edge_path, manifest })
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.insert(stem(&path), path);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub per_image: Vec<(String, MetricReport)>,
    pub aggregate: MetricReport,
    /// Files present on only one side, as paths.
    pub skipped: Vec<PathBuf>,
}

pub const PER_IMAGE_CSV: &str = "per_image.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const PR_CURVE_CSV: &str = "pr_curve.csv";

/// Read a prediction/ground-truth pair. A prediction whose size differs from
/// the mask is bilinearly resized to it first.
fn load_pair(pred: &Path, gt: &Path) -> Result<SaliencyMapPair> {
    let (gh, gw, g) = image_io::load_gray_u8(gt)?;
    let (ph, pw, p) = image_io::load_gray_u8(pred)?;
    if (ph, pw) == (gh, gw) {
        return Ok(SaliencyMapPair::from_u8(gh, gw, &p, &g)?);
    }
    let t = Tensor::from_vec([1, 1, ph, pw], p.iter().map(|&v| v as f64 / 255.0).collect())?;
    let resized = bilinear_resize(&t, gh, gw)?;
    Ok(SaliencyMapPair::new(gh, gw, resized.into_data(), g.iter().map(|&v| v >= 128).collect())?)
}

/// Score every prediction in `pred_dir` against the same-stem mask in
/// `gt_dir`. Files without a partner are reported and skipped.
pub fn run_eval(pred_dir: &Path, gt_dir: &Path, out: &Path) -> Result<EvalOutput> {
    let preds = list_images(pred_dir)?;
    let gts = list_images(gt_dir)?;
    let mut skipped: Vec<PathBuf> = preds.iter().filter(|(k, _)| !gts.contains_key(*k)).map(|(_, p)| p.clone()).collect();
    skipped.extend(gts.iter().filter(|(k, _)| !preds.contains_key(*k)).map(|(_, p)| p.clone()));
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> =
        preds.iter().filter_map(|(k, p)| gts.get(k).map(|g| (k, p, g))).collect();
    if pairs.is_empty() {
        return Err(Error::NoPairs(format!(
            "no matching prediction/ground-truth pairs between {} and {} ({} unmatched files)",
            pred_dir.display(),
            gt_dir.display(),
            skipped.len()
        )));
    }
    // Collected in name order so the reduction is independent of scheduling.
    let per_image: Vec<(String, MetricReport)> = pairs
        .par_iter()
        .map(|(name, p, g)| Ok(((*name).clone(), evaluate_pair(&load_pair(p, g)?))))
        .collect::<Result<_>>()?;
    let reports: Vec<MetricReport> = per_image.iter().map(|(_, r)| r.clone()).collect();
    let agg = aggregate(&reports)?;

    create_dir(out)?;
    let mut rows = String::from("image,f_beta_max,mae,s_measure\n");
    for (name, r) in &per_image {
        let _ = writeln!(rows, "{name},{},{},{}", r.f_beta_max, r.mae, r.s_measure);
    }
    write_text(&out.join(PER_IMAGE_CSV), &rows)?;
    let summary = format!(
        "images,f_beta_max,mae,s_measure\n{},{},{},{}\n",
        agg.images, agg.f_beta_max, agg.mae, agg.s_measure
    );
    write_text(&out.join(AGGREGATE_CSV), &summary)?;
    let mut pr = String::from("threshold,precision,recall\n");
    for (t, p) in agg.pr.iter().enumerate() {
        let _ = writeln!(pr, "{t},{},{}", p.precision, p.recall);
    }
    write_text(&out.join(PR_CURVE_CSV), &pr)?;
    Ok(EvalOutput { per_image, aggregate: agg, skipped })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------

pub fn format_counts(c: &ParamCounts) -> String {
    let mut s = String::new();
    for (label, n) in [
        ("rgb encoder", c.rgb),
        ("depth encoder", c.depth),
        ("fusion", c.cmffm),
        ("decoder", c.decoder),
        ("edge enhancement", c.eem),
        ("heads", c.heads),
        ("total", c.total),
        ("symmetric total", c.symmetric_total),
    ] {
        let _ = writeln!(s, "{label:<18}{n:>12}");
    }
    let _ = writeln!(s, "{:<18}{:>11.1}%", "reduction", 100.0 * c.reduction());
    let _ = writeln!(s, "{:<18}{:>11.1}%", "depth / rgb", 100.0 * c.depth as f64 / c.rgb.max(1) as f64);
    s
}

// ---------------------------------------------------------------------------
// train-toy
// ---------------------------------------------------------------------------

pub const TRACE_CSV: &str = "loss_trace.csv";
pub const CHECKPOINT_FILE: &str = "weights.tanet";

#[derive(Clone, Debug)]
pub struct ToyRun {
    pub trace: Vec<LossBreakdown>,
    pub params: ParamStore<f32>,
}

/// Train on `samples` synthetic images of `size`×`size`. When `out` is given
/// the loss trace, final weights and a manifest are written there.
pub fn run_train_toy(
    session: Session,
    samples: usize,
    size: usize,
    train: &TrainConfig,
    out: Option<&Path>,
) -> Result<ToyRun> {
    let Session { model, mut params, checkpoint } = session;
    let data = synthetic_dataset::<f32>(samples, size, model.config.seed);
    let trace = train_toy(&model, &mut params, &data, train)?;
    if let Some(out) = out {
        create_dir(out)?;
        let mut csv = String::from("step,total,edge,saliency\n");
        for (i, l) in trace.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{}", i + 1, l.total, l.edge, l.saliency);
        }
        write_text(&out.join(TRACE_CSV), &csv)?;
        save_weights(&params, &out.join(CHECKPOINT_FILE))?;
        RunManifest::new("train-toy", &model.config, &model.count_params(), checkpoint.as_deref(), out).write(out)?;
    }
    Ok(ToyRun { trace, params })
}

// ---------------------------------------------------------------------------
// derive-edges
// ---------------------------------------------------------------------------

/// Binarize each mask at 0.5, take its 3×3 morphological gradient and save it
/// as `<out>/<stem>.png`.
pub fn run_derive_edges(masks: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    masks
        .iter()
        .map(|m| {
            let edge = derive_edge_gt(&binarize(&image_io::load_gray(m)?))?;
            let path = out.join(format!("{}.png", stem(m)));
            image_io::save_gray(&path, &edge)?;
            Ok(path)
        })
        .collect()
}
