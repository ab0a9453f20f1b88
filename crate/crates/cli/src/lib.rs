//! Command implementations behind the `flowforge` binary.
//!
//! Every command reads an ordered image or flow sequence from a directory and
//! writes its artifacts under an output directory. Work is mapped over pairs on
//! a rayon pool; results are collected in pair order and written sequentially,
//! so outputs do not depend on the worker count.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use flowforge::compensation::item_config;
use flowforge::selection::select_from_proxies;
use flowforge::storage::{load_flo, save_flo, ConfigEcho, PairReport};
use flowforge::synth::Scene;
use flowforge::trace::render_trajectories;
use flowforge::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: {source}")]
    Data {
        stage: &'static str,
        #[source]
        source: Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Data { stage, source })
    }
}

#[derive(Debug, Parser)]
#[command(name = "flowforge", version, about = "Optical-flow preprocessing for video sequences")]
pub struct Cli {
    /// Worker threads (0 picks one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dense flow for every consecutive frame pair.
    Flow {
        input_dir: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        lk: LkArgs,
    },
    /// Remove camera motion from a directory of flow files.
    Compensate {
        flow_dir: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        comp: CompensationArgs,
    },
    /// Score pairs by motion and write the selection manifest.
    Select {
        input_dir: PathBuf,
        manifest_out: PathBuf,
        #[command(flatten)]
        sel: SelectionArgs,
    },
    /// Encode flow files as RGB images.
    Encode {
        flow_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 64.0)]
        eta: f64,
    },
    /// Decode RGB images back to flow files.
    Decode {
        image_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 64.0)]
        eta: f64,
    },
    /// Select, compute flow, compensate and encode in one pass.
    Pipeline {
        input_dir: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        sel: SelectionArgs,
        #[command(flatten)]
        lk: LkArgs,
        #[command(flatten)]
        comp: CompensationArgs,
        #[arg(long, default_value_t = 64.0)]
        eta: f64,
        /// Compute flow for every pair, not only the selected ones.
        #[arg(long)]
        force_all_pairs: bool,
    },
    /// Trace grid points through a flow sequence.
    Trace {
        flow_dir: PathBuf,
        #[arg(long, default_value_t = 16)]
        stride: usize,
        /// Trajectory JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Optional PNG with trajectories drawn as polylines.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Background for the overlay (defaults to white).
        #[arg(long)]
        frame: Option<PathBuf>,
    },
    /// Print the (shift, row, col) position-ID table of a token layout.
    Ids {
        #[arg(long, default_value_t = 0)]
        text_len: usize,
        /// Patch grid of one frame as ROWSxCOLS; repeat in sequence order.
        #[arg(long = "frame", value_parser = parse_grid)]
        frames: Vec<(usize, usize)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled synthetic demo scene as PNG frames.
    Synth { out_dir: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct LkArgs {
    #[arg(long, default_value_t = LkConfig::full_resolution().window_radius)]
    pub window_radius: usize,
    #[arg(long, default_value_t = LkConfig::full_resolution().pyramid_levels)]
    pub pyramid_levels: usize,
    #[arg(long, default_value_t = LkConfig::full_resolution().iterations_per_level)]
    pub lk_iterations: usize,
    #[arg(long, default_value_t = LkConfig::full_resolution().min_eigenvalue)]
    pub min_eigenvalue: f32,
}

impl LkArgs {
    pub fn config(&self) -> LkConfig {
        LkConfig {
            window_radius: self.window_radius,
            pyramid_levels: self.pyramid_levels,
            iterations_per_level: self.lk_iterations,
            min_eigenvalue: self.min_eigenvalue,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    #[arg(long, default_value_t = 32)]
    pub proxy_size: usize,
    /// Percentage of largest proxy magnitudes summarised per pair.
    #[arg(long, default_value_t = 10.0)]
    pub top_k: f64,
    /// Motion threshold in pixels at the reference width.
    #[arg(long, default_value_t = 5.0)]
    pub motion_threshold: f64,
    #[arg(long, default_value_t = 256)]
    pub reference_width: usize,
}

impl SelectionArgs {
    pub fn config(&self) -> SelectionConfig {
        SelectionConfig {
            proxy_size: self.proxy_size,
            top_k_percent: self.top_k,
            threshold_px: self.motion_threshold,
            reference_width: self.reference_width,
            ..SelectionConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompensationArgs {
    #[arg(long, default_value_t = 5.0)]
    pub ransac_threshold: f64,
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise_threshold: f32,
    /// Keep sub-threshold residuals instead of zeroing them.
    #[arg(long)]
    pub no_noise_threshold: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CompensationArgs {
    pub fn config(&self) -> CompensationConfig {
        let mut cfg = CompensationConfig {
            stride: self.stride,
            noise_threshold: self.noise_threshold,
            thresholding_enabled: !self.no_noise_threshold,
            ..CompensationConfig::default()
        };
        cfg.ransac.reproj_threshold = self.ransac_threshold;
        cfg.ransac.seed = self.seed;
        cfg
    }
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("flowforge: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Flow { input_dir, out_dir, lk } => cmd_flow(&input_dir, &out_dir, &lk.config()),
        Command::Compensate { flow_dir, out_dir, comp } => cmd_compensate(&flow_dir, &out_dir, &comp.config()),
        Command::Select {
            input_dir,
            manifest_out,
            sel,
        } => cmd_select(&input_dir, &manifest_out, &sel.config()),
        Command::Encode { flow_dir, out_dir, eta } => cmd_encode(&flow_dir, &out_dir, &CodecConfig { eta }),
        Command::Decode { image_dir, out_dir, eta } => cmd_decode(&image_dir, &out_dir, &CodecConfig { eta }),
        Command::Pipeline {
            input_dir,
            out_dir,
            sel,
            lk,
            comp,
            eta,
            force_all_pairs,
        } => {
            let config = ConfigEcho {
                selection: sel.config(),
                lk_flow: lk.config(),
                compensation: comp.config(),
                codec: CodecConfig { eta },
                seed: comp.seed,
            };
            cmd_pipeline(&input_dir, &out_dir, &config, force_all_pairs)
        }
        Command::Trace {
            flow_dir,
            stride,
            out,
            overlay,
            frame,
        } => cmd_trace(&flow_dir, stride, &out, overlay.as_deref(), frame.as_deref()),
        Command::Ids { text_len, frames, out } => cmd_ids(text_len, frames, out.as_deref()),
        Command::Synth { out_dir } => cmd_synth(&out_dir),
    })
}

/// Files in `dir` with extension `ext` (case-insensitive), sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(ext));
        if matches && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub fn pair_file_name(pair: usize, ext: &str) -> String {
    format!("pair_{pair:06}.{ext}")
}

fn read_frames(dir: &Path, min: usize) -> Result<Vec<Frame>> {
    let files = list_files(dir, "png")?;
    if files.len() < min {
        return Err(Error::EmptyInput(format!(
            "{} holds {} frame(s), need at least {min}",
            dir.display(),
            files.len()
        )));
    }
    let frames = files
        .par_iter()
        .map(|p| read_image(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = frames.iter().position(|f| !f.same_dimensions(&frames[0])) {
        return Err(Error::IncompatiblePair {
            a_width: frames[0].width(),
            a_height: frames[0].height(),
            b_width: frames[i].width(),
            b_height: frames[i].height(),
        });
    }
    info!("read {} frames from {}", frames.len(), dir.display());
    Ok(frames)
}

/// Flow files of `dir` with their names, all of one size.
fn read_flows(dir: &Path) -> Result<Vec<(String, FlowField)>> {
    let files = list_files(dir, "flo")?;
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no .flo files in {}", dir.display())));
    }
    let flows = files
        .par_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            load_flo(p)
                .map(|f| (name.clone(), f))
                .map_err(|e| Error::Decode {
                    path: p.clone(),
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = &flows[0].1;
    if let Some(i) = flows.iter().position(|(_, f)| !f.same_dimensions(first)) {
        return Err(Error::InvalidFlow(format!(
            "{} is {}x{}, expected {}x{}",
            flows[i].0,
            flows[i].1.width(),
            flows[i].1.height(),
            first.width(),
            first.height()
        )));
    }
    Ok(flows)
}

fn pair_index(name: &str, fallback: usize) -> usize {
    name.strip_prefix("pair_")
        .and_then(|s| s.split('.').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(fallback)
}

fn grayscale_all(frames: &[Frame]) -> Vec<Frame> {
    frames.par_iter().map(to_grayscale).collect()
}

fn flows_for_pairs(gray: &[Frame], pairs: &[usize], lk: &LkConfig) -> Result<Vec<FlowField>> {
    pairs
        .par_iter()
        .map(|&t| lucas_kanade_dense(&gray[t], &gray[t + 1], lk).map(|f| f.with_pair(t, t + 1)))
        .collect()
}

pub fn cmd_flow(input_dir: &Path, out_dir: &Path, lk: &LkConfig) -> CliResult<()> {
    let frames = read_frames(input_dir, 2).stage("flow")?;
    lk.validate_for(frames[0].width(), frames[0].height()).stage("flow")?;
    let gray = grayscale_all(&frames);
    let pairs: Vec<usize> = (0..frames.len() - 1).collect();
    let flows = flows_for_pairs(&gray, &pairs, lk).stage("flow")?;
    create_dir(out_dir).stage("flow")?;
    for (t, f) in pairs.iter().zip(&flows) {
        save_flo(f, &out_dir.join(pair_file_name(*t, "flo"))).stage("flow")?;
    }
    info!("wrote {} flow files", flows.len());
    Ok(())
}

pub fn cmd_compensate(flow_dir: &Path, out_dir: &Path, cfg: &CompensationConfig) -> CliResult<()> {
    let flows = read_flows(flow_dir).stage("compensate")?;
    let (w, h) = (flows[0].1.width(), flows[0].1.height());
    cfg.validate_for(w, h).stage("compensate")?;
    let results = flows
        .par_iter()
        .enumerate()
        .map(|(i, (name, f))| compensate_flow(f, &item_config(cfg, pair_index(name, i))))
        .collect::<Result<Vec<_>>>()
        .stage("compensate")?;

    let config = ConfigEcho {
        compensation: *cfg,
        seed: cfg.ransac.seed,
        ..ConfigEcho::default()
    };
    let mut manifest = ManifestDocument::new("compensate", flow_dir.display().to_string(), flows.len() + 1, config);
    create_dir(out_dir).stage("compensate")?;
    for (i, ((name, _), (comp, report))) in flows.iter().zip(&results).enumerate() {
        save_flo(comp, &out_dir.join(name)).stage("compensate")?;
        manifest.compensation.push(PairReport::new(pair_index(name, i), name.clone(), report));
        debug!("{name}: valid={} inliers={}", report.valid, report.inlier_count);
    }
    write_manifest(&manifest, &out_dir.join("manifest.json")).stage("compensate")
}

pub fn cmd_select(input_dir: &Path, manifest_out: &Path, cfg: &SelectionConfig) -> CliResult<()> {
    let frames = read_frames(input_dir, 2).stage("select")?;
    let selection = select_pairs(&frames, cfg).stage("select")?;
    info!("selected {} of {} pairs", selection.selected.len(), frames.len() - 1);
    let config = ConfigEcho {
        selection: *cfg,
        ..ConfigEcho::default()
    };
    let manifest = ManifestDocument::new("select", input_dir.display().to_string(), frames.len(), config)
        .with_selection(selection);
    if let Some(parent) = manifest_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent).stage("select")?;
    }
    write_manifest(&manifest, manifest_out).stage("select")
}

pub fn cmd_encode(flow_dir: &Path, out_dir: &Path, cfg: &CodecConfig) -> CliResult<()> {
    cfg.validate().stage("encode")?;
    let flows = read_flows(flow_dir).stage("encode")?;
    let images = flows
        .par_iter()
        .map(|(_, f)| encode_flow(f, cfg))
        .collect::<Result<Vec<_>>>()
        .stage("encode")?;
    create_dir(out_dir).stage("encode")?;
    for ((name, _), img) in flows.iter().zip(&images) {
        write_image(img, &out_dir.join(Path::new(name).with_extension("png"))).stage("encode")?;
    }
    Ok(())
}

pub fn cmd_decode(image_dir: &Path, out_dir: &Path, cfg: &CodecConfig) -> CliResult<()> {
    cfg.validate().stage("decode")?;
    let files = list_files(image_dir, "png").stage("decode")?;
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no .png files in {}", image_dir.display()))).stage("decode");
    }
    let flows = files
        .par_iter()
        .map(|p| read_image(p).and_then(|img| decode_flow(&img, cfg)))
        .collect::<Result<Vec<_>>>()
        .stage("decode")?;
    create_dir(out_dir).stage("decode")?;
    for (p, f) in files.iter().zip(&flows) {
        let name = Path::new(p.file_name().unwrap()).with_extension("flo");
        save_flo(f, &out_dir.join(name)).stage("decode")?;
    }
    Ok(())
}

/// Writes `manifest.json` plus, for every processed pair, `flow/`, `relative/`
/// and `encoded/` entries under `out_dir`.
pub fn cmd_pipeline(input_dir: &Path, out_dir: &Path, config: &ConfigEcho, force_all_pairs: bool) -> CliResult<()> {
    let frames = read_frames(input_dir, 2).stage("read")?;
    let (w, h) = (frames[0].width(), frames[0].height());
    config.selection.validate().stage("select")?;
    config.lk_flow.validate_for(w, h).stage("flow")?;
    config.compensation.validate_for(w, h).stage("compensate")?;
    config.codec.validate().stage("encode")?;

    let proxies = selection::pair_proxies(&frames, &config.selection).stage("select")?;
    let selection = select_from_proxies(&proxies, w, &config.selection);
    let pairs: Vec<usize> = if force_all_pairs {
        (0..frames.len() - 1).collect()
    } else {
        selection.selected.clone()
    };
    info!("{} of {} pairs selected, processing {}", selection.selected.len(), proxies.len(), pairs.len());

    let gray = grayscale_all(&frames);
    let flows = flows_for_pairs(&gray, &pairs, &config.lk_flow).stage("flow")?;
    let compensated = flows
        .par_iter()
        .zip(&pairs)
        .map(|(f, &t)| compensate_flow(f, &item_config(&config.compensation, t)))
        .collect::<Result<Vec<_>>>()
        .stage("compensate")?;
    let encoded = compensated
        .par_iter()
        .map(|(f, _)| encode_flow(f, &config.codec))
        .collect::<Result<Vec<_>>>()
        .stage("encode")?;

    create_dir(out_dir).stage("write")?;
    let mut manifest = ManifestDocument::new("pipeline", input_dir.display().to_string(), frames.len(), config.clone())
        .with_selection(selection);
    if !pairs.is_empty() {
        for sub in ["flow", "relative", "encoded"] {
            create_dir(&out_dir.join(sub)).stage("write")?;
        }
    }
    for (i, &t) in pairs.iter().enumerate() {
        let name = pair_file_name(t, "flo");
        save_flo(&flows[i], &out_dir.join("flow").join(&name)).stage("write")?;
        save_flo(&compensated[i].0, &out_dir.join("relative").join(&name)).stage("write")?;
        write_image(&encoded[i], &out_dir.join("encoded").join(pair_file_name(t, "png"))).stage("write")?;
        manifest.compensation.push(PairReport::new(t, name, &compensated[i].1));
    }
    write_manifest(&manifest, &out_dir.join("manifest.json")).stage("write")
}

#[derive(Serialize)]
struct TraceDocument<'a> {
    stride: usize,
    flow_files: Vec<&'a str>,
    trajectories: Vec<Trajectory>,
}

pub fn cmd_trace(
    flow_dir: &Path,
    stride: usize,
    out: &Path,
    overlay: Option<&Path>,
    frame: Option<&Path>,
) -> CliResult<()> {
    if stride == 0 {
        return Err(CliError::Usage("--stride must be >= 1".into()));
    }
    let flows = read_flows(flow_dir).stage("trace")?;
    let (w, h) = (flows[0].1.width(), flows[0].1.height());
    let fields: Vec<FlowField> = flows.iter().map(|(_, f)| f.clone()).collect();
    let trajectories = trace_points(&fields, &grid_seeds(w, h, stride)).stage("trace")?;

    if let Some(overlay) = overlay {
        let background = match frame {
            Some(p) => read_image(p).stage("trace")?,
            None => Frame::filled(w, h, 3, 1.0).stage("trace")?,
        };
        if background.width() != w || background.height() != h {
            return Err(Error::IncompatiblePair {
                a_width: background.width(),
                a_height: background.height(),
                b_width: w,
                b_height: h,
            })
            .stage("trace");
        }
        write_image(&render_trajectories(&background, &trajectories, [1.0, 0.0, 0.0]), overlay).stage("trace")?;
    }

    let doc = TraceDocument {
        stride,
        flow_files: flows.iter().map(|(n, _)| n.as_str()).collect(),
        trajectories,
    };
    write_json(&doc, Some(out))
}

pub fn cmd_ids(text_len: usize, frames: Vec<(usize, usize)>, out: Option<&Path>) -> CliResult<()> {
    let layout = SequenceLayout::new(text_len, frames).map_err(|e| CliError::Usage(e.to_string()))?;
    let ids = assign_position_ids(&layout).stage("ids")?;
    write_json(&ids, out)
}

pub fn cmd_synth(out_dir: &Path) -> CliResult<()> {
    let scene = Scene::demo();
    let frames: Vec<Frame> = (0..scene.frame_count()).into_par_iter().map(|i| scene.render(i)).collect();
    create_dir(out_dir).stage("synth")?;
    for (i, f) in frames.iter().enumerate() {
        write_image(f, &out_dir.join(format!("frame_{i:06}.png"))).stage("synth")?;
    }
    Ok(())
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)).stage("write"),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
