//! The `discseg` command line: `generate`, `train`, `infer` and `eval`.

mod viz;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::clustering::{cluster_by_known_centers, mean_shift_cluster};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{self, pnm};
use crate::loss::cluster_means;
use crate::maps::{LabelMap, Mask};
use crate::metrics::{aggregate, score_image, MetricReport};
use crate::synthdata::{generate_scene, SticksConfig};
use crate::toynet::{forward, network_input, train, NetParams, Sample};

#[derive(Debug, Parser)]
#[command(name = "discseg", version, about = "Instance segmentation with a discriminative embedding loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic stick scenes as image/label pairs.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes (default 1).
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the network on a generated dataset.
    Train {
        /// Directory of `.ppm` images with `.pgm` label maps.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// Adam learning rate (default 1e-4).
        #[arg(long)]
        lr: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Embed and cluster one image or every image of a directory.
    Infer {
        /// Checkpoint directory written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// A `.ppm` image or a directory of them.
        #[arg(long)]
        input: PathBuf,
        /// Foreground mask (any nonzero sample). Defaults to the label map
        /// next to each image, or the whole image if there is none.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Output directory; must differ from the input directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score predicted label maps against ground truth.
    Eval {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        /// Report directory; defaults to the prediction directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also cluster the stored embeddings around ground-truth centers.
        #[arg(long)]
        ablation: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// `key = value` configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene seed for `generate`, data-order seed for `train`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pull margin (default 0.5).
    #[arg(long)]
    pub delta_v: Option<f64>,
    /// Push margin (default 1.5).
    #[arg(long)]
    pub delta_d: Option<f64>,
    /// Weight of the pull term (default 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the push term (default 1).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the center-norm term (default 0.001).
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = ["l1", "l2"])]
    pub norm: Option<String>,
    /// Clustering radius; follows the pull margin unless given.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Clusters smaller than this are dropped (default 0.5% of the foreground).
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    /// Embedding dimension; `infer` checks it against the checkpoint.
    #[arg(long)]
    pub out_dims: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Write scatter and overlay pixmaps next to the predictions.
    #[arg(long)]
    pub viz: bool,
    /// Any other configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    fn run_config(&self, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set expects key=value, got {item:?}")))?;
            config.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("delta_v", self.delta_v.map(|v| v.to_string())),
            ("delta_d", self.delta_d.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("gamma", self.gamma.map(|v| v.to_string())),
            ("norm", self.norm.clone()),
            ("bandwidth", self.bandwidth.map(|v| v.to_string())),
            ("min_cluster_size", self.min_cluster_size.map(|v| v.to_string())),
            ("out_dims", self.out_dims.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
        ];
        for (k, v) in flags.iter().chain(extra) {
            if let Some(v) = v {
                config.set(k, v)?;
            }
        }
        config.validate()?;
        for w in config.loss.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(config)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { out, count, common } => {
            let config = common.run_config(&[("count", count.map(|c| c.to_string()))])?;
            cmd_generate(&config, &out)
        }
        Command::Train { data, out, lr, common } => {
            let config = common.run_config(&[("lr", lr.map(|v| v.to_string()))])?;
            cmd_train(&config, &data, &out)
        }
        Command::Infer { checkpoint, input, mask, out, common } => {
            let config = common.run_config(&[])?;
            let options = InferOptions { viz: common.viz, requested_dims: common.out_dims, mask };
            cmd_infer(&config, &checkpoint, &input, &out, &options)
        }
        Command::Eval { pred_dir, gt_dir, out, ablation, common } => {
            let config = common.run_config(&[])?;
            let out = out.unwrap_or_else(|| pred_dir.clone());
            cmd_eval(&config, &pred_dir, &gt_dir, &out, ablation).map(|_| ())
        }
    }
}

pub fn scene_name(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Scene `i` uses seed `seed + i`.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = String::from("# name seed instances\n");
    for i in 0..config.scene_count {
        let seed = config.sticks.seed.wrapping_add(i as u64);
        let scene = generate_scene(&SticksConfig { seed, ..config.sticks })?;
        let name = scene_name(i);
        pnm::write_ppm(&out.join(format!("{name}.ppm")), &scene.image)?;
        pnm::write_labels(&out.join(format!("{name}.pgm")), &scene.instances)?;
        manifest.push_str(&format!("{name} {seed} {}\n", scene.num_instances()));
    }
    io::write_atomic(&out.join("manifest.txt"), manifest.as_bytes())
}

/// Sorted stems of the files in `dir` with the given extension.
fn stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if !stem.starts_with('.') && !stem.contains('.') {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_dataset(dir: &Path) -> Result<Vec<(String, Sample)>> {
    stems(dir, "ppm")?
        .into_iter()
        .map(|stem| {
            let image = pnm::read_ppm(&dir.join(format!("{stem}.ppm")))?;
            let instances = pnm::read_labels(&dir.join(format!("{stem}.pgm")))?.relabeled_contiguous();
            if (instances.height(), instances.width()) != (image.height(), image.width()) {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{} labels for {stem}", image.height(), image.width()),
                    found: format!("{}x{}", instances.height(), instances.width()),
                });
            }
            let scene = crate::synthdata::Scene { image, instances, seed: 0 };
            Ok((stem, scene.into()))
        })
        .collect()
}

pub const TRACE_FILE: &str = "trace.txt";
pub const RUN_CONFIG_FILE: &str = "run.cfg";

pub fn cmd_train(config: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let dataset: Vec<Sample> = load_dataset(data)?.into_iter().map(|(_, s)| s).collect();
    if dataset.is_empty() {
        return Err(Error::InvalidInput(format!("no .ppm images in {}", data.display())));
    }
    let params = NetParams::init(&config.net)?;
    let outcome = train(params, &dataset, &config.loss, &config.train)?;
    io::save_checkpoint(out, &outcome.params, Some(&outcome.optimizer))?;
    let mut trace = String::from("# step l_var l_dist l_reg total\n");
    for (step, b) in outcome.trace.iter().enumerate() {
        trace.push_str(&format!("{step} {} {} {} {}\n", b.l_var, b.l_dist, b.l_reg, b.total));
    }
    io::write_atomic(&out.join(TRACE_FILE), trace.as_bytes())?;
    io::write_atomic(&out.join(RUN_CONFIG_FILE), config.to_text().as_bytes())?;
    if let Some(last) = outcome.trace.last() {
        eprintln!("trained {} steps on {} images, final loss {:.6}", outcome.trace.len(), dataset.len(), last.total);
    }
    Ok(())
}

fn same_dir(a: &Path, b: &Path) -> bool {
    let canon = |p: &Path| std::fs::canonicalize(if p.as_os_str().is_empty() { Path::new(".") } else { p });
    matches!((canon(a), canon(b)), (Ok(x), Ok(y)) if x == y)
}

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    pub viz: bool,
    /// Embedding dimension the caller expects, checked against the checkpoint.
    pub requested_dims: Option<usize>,
    pub mask: Option<PathBuf>,
}

fn read_mask(path: &Path) -> Result<Mask> {
    let labels = pnm::read_labels(path)?;
    Ok(labels.foreground())
}

pub fn cmd_infer(
    config: &RunConfig,
    checkpoint: &Path,
    input: &Path,
    out: &Path,
    options: &InferOptions,
) -> Result<()> {
    let params = io::load_params(checkpoint)?;
    let dims = params.config().out_dims;
    if let Some(requested) = options.requested_dims {
        if requested != dims {
            return Err(Error::ShapeMismatch {
                expected: format!("{requested}-dimensional embeddings"),
                found: format!("checkpoint produces {dims} dimensions"),
            });
        }
    }
    let jobs: Vec<(String, PathBuf, Option<PathBuf>)> = if input.is_dir() {
        stems(input, "ppm")?
            .into_iter()
            .map(|stem| {
                let labels = input.join(format!("{stem}.pgm"));
                let mask = options.mask.clone().or_else(|| labels.exists().then_some(labels));
                let image = input.join(format!("{stem}.ppm"));
                (stem, image, mask)
            })
            .collect()
    } else {
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidInput(format!("bad image path {}", input.display())))?
            .to_string();
        let sibling = input.with_extension("pgm");
        let mask = options.mask.clone().or_else(|| sibling.exists().then_some(sibling));
        vec![(stem, input.to_path_buf(), mask)]
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let source_dir = if input.is_dir() { input } else { input.parent().unwrap_or(Path::new(".")) };
    if same_dir(source_dir, out) {
        return Err(Error::InvalidInput(format!(
            "output directory {} would overwrite the input label maps",
            out.display()
        )));
    }
    for (stem, image_path, mask_path) in jobs {
        let image = pnm::read_ppm(&image_path)?;
        let fg = match &mask_path {
            Some(p) => read_mask(p)?,
            None => {
                eprintln!("warning: no foreground mask for {stem}, using the whole image");
                Mask::full(image.height(), image.width())
            }
        };
        let (emb, _) = forward(&params, &network_input(&image))?;
        let clusters = mean_shift_cluster(&emb, &fg, &config.cluster, config.loss.norm)?;
        pnm::write_labels(&out.join(format!("{stem}.pgm")), &clusters.labels)?;
        io::write_embedding(&out.join(format!("{stem}.emb.dseg")), &emb)?;
        if options.viz {
            let scatter_name =
                if dims == 2 { format!("{stem}.scatter.ppm") } else { format!("{stem}.scatter_dims0-1.ppm") };
            pnm::write_ppm(&out.join(scatter_name), &viz::scatter(&emb, &fg, &clusters))?;
            pnm::write_ppm(&out.join(format!("{stem}.overlay.ppm")), &viz::overlay(&image, &clusters.labels))?;
        }
    }
    Ok(())
}

/// Aggregate scores per clustering source: `mean_shift` from the predicted
/// label maps and, in ablation mode, `center_threshold` from the stored
/// embeddings thresholded around ground-truth instance means.
pub type EvalReports = Vec<(&'static str, MetricReport)>;

pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_KV: &str = "report.kv";

pub fn cmd_eval(config: &RunConfig, pred_dir: &Path, gt_dir: &Path, out: &Path, ablation: bool) -> Result<EvalReports> {
    let gt_stems = stems(gt_dir, "pgm")?;
    let pred_stems = stems(pred_dir, "pgm")?;
    let extra: Vec<&String> = pred_stems.iter().filter(|s| !gt_stems.contains(s)).collect();
    if !extra.is_empty() {
        let names: Vec<String> = extra.iter().map(|s| format!("{s}.pgm")).collect();
        return Err(Error::InvalidInput(format!("predictions without ground truth: {}", names.join(", "))));
    }
    if gt_stems.is_empty() {
        return Err(Error::InvalidInput(format!("no .pgm label maps in {}", gt_dir.display())));
    }
    let mut mean_shift = Vec::new();
    let mut centers = Vec::new();
    for stem in &gt_stems {
        let gt = pnm::read_labels(&gt_dir.join(format!("{stem}.pgm")))?;
        let pred = if pred_stems.contains(stem) {
            pnm::read_labels(&pred_dir.join(format!("{stem}.pgm")))?
        } else {
            eprintln!("warning: no prediction for {stem}, scoring it as empty");
            LabelMap::zeros(gt.height(), gt.width())
        };
        mean_shift.push(score_image(stem, &pred, &gt)?);
        if ablation {
            let emb = io::read_embedding(&pred_dir.join(format!("{stem}.emb.dseg")))?;
            let stats = cluster_means(&emb, &gt)?;
            let assigned = cluster_by_known_centers(
                &emb,
                &gt.foreground(),
                &stats.means,
                config.cluster.bandwidth,
                config.loss.norm,
            )?;
            centers.push(score_image(stem, &assigned.labels, &gt)?);
        }
    }
    let mut reports = EvalReports::new();
    reports.push(("mean_shift", aggregate(mean_shift)?));
    if ablation {
        reports.push(("center_threshold", aggregate(centers)?));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    io::write_atomic(&out.join(REPORT_TEXT), report_text(&reports).as_bytes())?;
    io::write_atomic(&out.join(REPORT_KV), report_kv(&reports).as_bytes())?;
    print!("{}", report_text(&reports));
    Ok(reports)
}

fn report_text(reports: &EvalReports) -> String {
    let mut s = String::new();
    for (source, r) in reports {
        s.push_str(&format!(
            "[{source}] images {}  SBD {:.4}  |DiC| {:.4}  mean |DiC| {:.4}  AP50 {:.4}\n",
            r.images.len(),
            r.sbd,
            r.dic,
            r.dic_mean_abs,
            r.ap50
        ));
        for i in &r.images {
            s.push_str(&format!(
                "  {:<16} SBD {:.4}  AP50 {:.4}  pred {:>3}  gt {:>3}\n",
                i.name, i.sbd, i.ap50, i.pred_count, i.gt_count
            ));
        }
    }
    s
}

fn report_kv(reports: &EvalReports) -> String {
    let mut s = String::new();
    for (source, r) in reports {
        s.push_str(&format!("{source}.images = {}\n", r.images.len()));
        s.push_str(&format!("{source}.sbd = {}\n", r.sbd));
        s.push_str(&format!("{source}.dic = {}\n", r.dic));
        s.push_str(&format!("{source}.dic_mean_abs = {}\n", r.dic_mean_abs));
        s.push_str(&format!("{source}.ap50 = {}\n", r.ap50));
        for i in &r.images {
            let p = format!("{source}.image.{}", i.name);
            s.push_str(&format!("{p}.sbd = {}\n", i.sbd));
            s.push_str(&format!("{p}.ap50 = {}\n", i.ap50));
            s.push_str(&format!("{p}.pred_count = {}\n", i.pred_count));
            s.push_str(&format!("{p}.gt_count = {}\n", i.gt_count));
        }
    }
    s
}
