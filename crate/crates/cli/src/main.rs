//! `haru`: command-line front end for the denoising pipeline.
//!
//! Exit codes: 0 on success, 1 for invalid input or flags, 2 for file system
//! failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use haru_core::metrics::{count_macs, evaluate_pairs, render_report, MetricsReport};
use haru_core::noise::{add_noise, NoiseParams};
use haru_core::patching::{build_patch_dataset, PatchingConfig};
use haru_core::segmentation::{segment_slice_stages, SegmentationConfig};
use haru_core::training::{
    denoise_volume, generate_phantom_volume, train, TrainConfig, TrainingData,
};
use haru_core::volume_io::{
    load_volume, read_manifest, read_png_gray, slice_volume, store_volume, write_manifest,
    write_mask_png, write_png16, CropRect, DatasetManifest, ManifestEntry, PatchRole, Plane, Split,
    Volume, VolumeFormat, VoxelType,
};
use haru_core::{HaruError, HaruNet, Image, NetworkConfig, Scalar};

const LOG_NAME: &str = "haru.log";

#[derive(Parser, Debug)]
#[command(name = "haru", version, about = "CBCT denoising pipeline")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic phantom volume.
    Phantom(PhantomArgs),
    /// Add simulated noise to every slice of a volume.
    SimulateNoise(NoiseArgs),
    /// Compute foreground masks for every slice of a volume.
    Segment(SegmentArgs),
    /// Build a paired noisy/clean patch dataset.
    Patchify(PatchifyArgs),
    /// Train a network on a patch manifest.
    Train(TrainArgs),
    /// Denoise a volume with a trained checkpoint.
    Denoise(DenoiseArgs),
    /// Score test images against references.
    Evaluate(EvaluateArgs),
    /// Count multiply-accumulates of one forward pass.
    Macs(MacsArgs),
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Volume size as DxHxW.
    #[arg(long, default_value = "8x256x256")]
    dims: Dims3,
    /// Output volume file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Volume file or directory of PNG slices.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for clean/, noisy/ and manifest.tsv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.04)]
    sigma_q: f64,
    #[arg(long, default_value_t = 0.02)]
    sigma_e: f64,
    /// Relative per-slice spread of both sigmas; 0 keeps them fixed.
    #[arg(long, default_value_t = 0.0)]
    sigma_jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep values outside [0, 1].
    #[arg(long)]
    no_clip: bool,
    #[arg(long, default_value = "axial")]
    plane: Plane,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    /// Volume file or directory of PNG slices.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Also write the k-means and dilated masks.
    #[arg(long)]
    save_stages: bool,
    #[arg(long, default_value = "axial")]
    plane: Plane,
}

#[derive(Args, Debug)]
struct PatchifyArgs {
    /// Volume files or PNG directories; repeat for several volumes.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.04)]
    noise_sigma_q: f64,
    #[arg(long, default_value_t = 0.02)]
    noise_sigma_e: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma_jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_clip: bool,
    #[arg(long, default_value_t = 256)]
    patch: usize,
    /// Train, validation and test fractions over volumes.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    split: SplitFractions,
    /// Comma-separated planes to slice.
    #[arg(long, default_value = "axial", value_delimiter = ',')]
    planes: Vec<Plane>,
    /// Crop applied to every slice, as x,y,width,height.
    #[arg(long)]
    crop: Option<CropRect>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `key = value` file with network and training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base settings before the config file is applied.
    #[arg(long, default_value = "default")]
    preset: Preset,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    precision: Option<Precision>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed of weight initialisation and batch shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Train the variant without attention blocks.
    #[arg(long)]
    ablate_attention: bool,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Settings the checkpoint was trained with; defaults to the
    /// `effective.cfg` next to the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    tile: usize,
    #[arg(long, default_value_t = 32)]
    overlap: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Reference volume or directory of PNG images.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Test volume or directory of PNG images.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    /// Row label in the report.
    #[arg(long, default_value = "model")]
    model: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MacsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    preset: Preset,
    /// Input shape as NxCxHxW.
    #[arg(long, default_value = "1x1x256x256")]
    input: Dims4,
    /// Print every layer, not just the total.
    #[arg(long)]
    layers: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Preset {
    Default,
    Tiny,
}

impl Preset {
    fn network(self) -> NetworkConfig {
        match self {
            Preset::Default => NetworkConfig::default(),
            Preset::Tiny => NetworkConfig::tiny(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum Precision {
    F32,
    F64,
}

impl Precision {
    fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Dims3(usize, usize, usize);

#[derive(Clone, Copy, Debug)]
struct Dims4(usize, usize, usize, usize);

fn parse_dims(s: &str, n: usize) -> Result<Vec<usize>, String> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("'{s}' is not a list of sizes separated by 'x'"))?;
    if parts.len() != n || parts.contains(&0) {
        return Err(format!("'{s}' must have {n} positive sizes"));
    }
    Ok(parts)
}

impl FromStr for Dims3 {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let d = parse_dims(s, 3)?;
        Ok(Dims3(d[0], d[1], d[2]))
    }
}

impl FromStr for Dims4 {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let d = parse_dims(s, 4)?;
        Ok(Dims4(d[0], d[1], d[2], d[3]))
    }
}

#[derive(Clone, Copy, Debug)]
struct SplitFractions([f64; 3]);

impl FromStr for SplitFractions {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("'{s}' is not three comma-separated fractions"))?;
        match v.as_slice() {
            &[a, b, c] => Ok(SplitFractions([a, b, c])),
            _ => Err(format!("'{s}' must have exactly three fractions")),
        }
    }
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<HaruError> for CliError {
    fn from(e: HaruError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Directory an output path lives in: itself for directories, else its parent.
fn out_dir(path: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        return path.to_path_buf();
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Appends one line describing this run, so it can be repeated exactly.
fn log_run(dir: &Path, threads: usize) -> CliResult {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let line = format!(
        "haru {} threads={} args: {}\n",
        env!("CARGO_PKG_VERSION"),
        threads,
        args.join(" ")
    );
    let path = dir.join(LOG_NAME);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| io_err(&path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))
}

fn load(path: &Path) -> CliResult<Volume> {
    if !path.exists() {
        return Err(CliError::Io(format!(
            "{}: no such file or directory",
            path.display()
        )));
    }
    Ok(load_volume(path, VolumeFormat::detect(path))?)
}

/// Network and training settings read from one `key = value` file.
struct RunConfig {
    network: NetworkConfig,
    training: TrainConfig,
    precision: Precision,
}

impl RunConfig {
    fn new(preset: Preset) -> Self {
        RunConfig {
            network: preset.network(),
            training: TrainConfig::default(),
            precision: Precision::F32,
        }
    }

    fn apply_text(&mut self, text: &str) -> CliResult {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| CliError::Invalid(format!("config line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "precision" {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    other => return Err(bad(format!("unknown precision '{other}'"))),
                };
            } else if !self.training.set(key, value).map_err(bad)? {
                self.network.set(key, value).map_err(bad)?;
            }
        }
        Ok(())
    }

    fn to_text(&self) -> String {
        format!(
            "# network\n{}# training\n{}precision = {}\n",
            self.network.to_text(),
            self.training.to_text(),
            self.precision.as_str()
        )
    }

    fn validate(&self) -> CliResult {
        self.network.validate()?;
        self.training.validate()?;
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Invalid(msg) | CliError::Io(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Invalid("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Phantom(a) => phantom(a, threads),
        Command::SimulateNoise(a) => simulate_noise(a, threads),
        Command::Segment(a) => segment(a, threads),
        Command::Patchify(a) => patchify(a, threads),
        Command::Train(a) => train_cmd(a, threads),
        Command::Denoise(a) => denoise(a, threads),
        Command::Evaluate(a) => evaluate(a, threads),
        Command::Macs(a) => macs(a),
    }
}

fn phantom(a: PhantomArgs, threads: usize) -> CliResult {
    let Dims3(d, h, w) = a.dims;
    let v = generate_phantom_volume(a.seed, (d, h, w))?;
    let dir = out_dir(&a.out, false);
    create_dir(&dir)?;
    store_volume(&v, &a.out, VoxelType::F32)?;
    log_run(&dir, threads)?;
    println!(
        "phantom seed {} ({d}x{h}x{w}) -> {}",
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn simulate_noise(a: NoiseArgs, threads: usize) -> CliResult {
    use rayon::prelude::*;
    let params =
        NoiseParams::new(a.sigma_q, a.sigma_e, a.seed, !a.no_clip)?.with_jitter(a.sigma_jitter)?;
    let v = load(&a.input)?;
    let slices = slice_volume(&v, a.plane, None)?;
    for sub in ["clean", "noisy"] {
        create_dir(&a.out.join(sub))?;
    }
    slices.par_iter().try_for_each(|s| -> CliResult {
        let name = format!("{}.png", s.id());
        write_png16(&a.out.join("clean").join(&name), &s.pixels)?;
        write_png16(
            &a.out.join("noisy").join(&name),
            &add_noise(s, &params).pixels,
        )?;
        Ok(())
    })?;
    let mut manifest = DatasetManifest::new(params, a.seed);
    for (i, s) in slices.iter().enumerate() {
        let (h, w) = s.pixels.dims();
        for (role, sub) in [(PatchRole::Noisy, "noisy"), (PatchRole::Clean, "clean")] {
            manifest.entries.push(ManifestEntry {
                path: format!("{sub}/{}.png", s.id()),
                role,
                pair_id: i as u64,
                split: Split::Test,
                volume_id: s.source_id.clone(),
                plane: s.plane,
                slice_index: s.index,
                x: 0,
                y: 0,
                width: w,
                height: h,
                overlap: false,
            });
        }
    }
    write_manifest(&manifest, &a.out.join("manifest.tsv"))?;
    log_run(&a.out, threads)?;
    println!(
        "{} slices, sigma_q {} sigma_e {} seed {} clip {} -> {}",
        slices.len(),
        a.sigma_q,
        a.sigma_e,
        a.seed,
        !a.no_clip,
        a.out.display()
    );
    Ok(())
}

fn segment(a: SegmentArgs, threads: usize) -> CliResult {
    use rayon::prelude::*;
    let v = load(&a.input)?;
    let slices = slice_volume(&v, a.plane, None)?;
    create_dir(&a.output)?;
    let cfg = SegmentationConfig::default();
    let counts = slices
        .par_iter()
        .map(|s| -> CliResult<usize> {
            let id = s.id();
            let st = segment_slice_stages(&s.pixels, &cfg)?;
            write_png16(&a.output.join(format!("{id}.png")), &s.pixels)?;
            write_mask_png(&a.output.join(format!("{id}_mf.png")), &st.mf.bits)?;
            if a.save_stages {
                write_mask_png(&a.output.join(format!("{id}_m0.png")), &st.m0.bits)?;
                write_mask_png(&a.output.join(format!("{id}_m1.png")), &st.m1.bits)?;
            }
            Ok(st.mf.count())
        })
        .collect::<CliResult<Vec<_>>>()?;
    log_run(&a.output, threads)?;
    let empty = counts.iter().filter(|&&c| c == 0).count();
    let total: usize = slices.iter().map(|s| s.pixels.as_slice().len()).sum();
    println!(
        "{} slices segmented ({} empty), foreground fraction {:.4} -> {}",
        slices.len(),
        empty,
        counts.iter().sum::<usize>() as f64 / total.max(1) as f64,
        a.output.display()
    );
    Ok(())
}

fn patchify(a: PatchifyArgs, threads: usize) -> CliResult {
    let noise = NoiseParams::new(a.noise_sigma_q, a.noise_sigma_e, a.seed, !a.no_clip)?
        .with_jitter(a.noise_sigma_jitter)?;
    let vols = a
        .input
        .iter()
        .map(|p| load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let cfg = PatchingConfig {
        patch: a.patch,
        planes: a.planes.clone(),
        crop: a.crop,
        split: a.split.0,
        split_seed: a.seed,
        segmentation: SegmentationConfig::default(),
    };
    let ds = build_patch_dataset(&vols, &cfg, &noise)?;
    create_dir(&a.out)?;
    ds.write_to(&a.out)?;
    log_run(&a.out, threads)?;
    let count = |s| ds.pairs_in(s).count();
    println!(
        "{} pairs (train {}, val {}, test {}), {} empty slices, patch {} -> {}",
        ds.pairs.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        ds.empty_slices,
        a.patch,
        a.out.join("manifest.tsv").display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs, threads: usize) -> CliResult {
    let mut cfg = RunConfig::new(a.preset);
    if let Some(path) = &a.config {
        cfg.apply_text(&read_text(path)?)?;
    }
    if let Some(p) = a.precision {
        cfg.precision = p;
    }
    if let Some(v) = a.lr {
        cfg.training.lr0 = v;
    }
    if let Some(v) = a.batch_size {
        cfg.training.batch_size = v;
    }
    if let Some(v) = a.epochs {
        cfg.training.max_epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.training.seed = v;
    }
    if a.ablate_attention {
        cfg.network.ablate_attention = true;
    }
    cfg.validate()?;
    let effective = cfg.to_text();
    print!("{effective}");

    let manifest = read_manifest(&a.manifest)?;
    let base = out_dir(&a.manifest, false);
    let data = TrainingData::from_manifest(&manifest, &base)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("effective.cfg"), &effective)?;
    match cfg.precision {
        Precision::F32 => train_with::<f32>(&cfg, &data, &a.out)?,
        Precision::F64 => train_with::<f64>(&cfg, &data, &a.out)?,
    }
    log_run(&a.out, threads)
}

fn train_with<T: Scalar>(cfg: &RunConfig, data: &TrainingData, out: &Path) -> CliResult {
    let mut net = HaruNet::<T>::new(cfg.network.clone(), cfg.training.seed)?;
    println!(
        "{} parameters, {} train / {} val pairs",
        net.num_parameters(),
        data.train.len(),
        data.val.len()
    );
    let mut stdout = std::io::stdout();
    let hist = train(&mut net, data, &cfg.training, &mut stdout)?;
    write_text(&out.join("history.csv"), &hist.to_csv())?;
    net.params.save_checkpoint(&out.join("model.ckpt"))?;
    println!(
        "stopped: {:?}; best epoch {:?}, val loss {:.6e} -> {}",
        hist.stop_reason,
        hist.best_epoch,
        hist.best_val_loss,
        out.join("model.ckpt").display()
    );
    Ok(())
}

fn denoise(a: DenoiseArgs, threads: usize) -> CliResult {
    let cfg_path = a
        .config
        .clone()
        .unwrap_or_else(|| out_dir(&a.ckpt, false).join("effective.cfg"));
    let mut cfg = RunConfig::new(Preset::Default);
    cfg.apply_text(&read_text(&cfg_path)?)?;
    cfg.validate()?;
    if a.overlap >= a.tile {
        return Err(CliError::Invalid(format!(
            "overlap {} must be smaller than tile {}",
            a.overlap, a.tile
        )));
    }
    let v = load(&a.volume)?;
    let out = match cfg.precision {
        Precision::F32 => denoise_with::<f32>(&cfg, &a, &v)?,
        Precision::F64 => denoise_with::<f64>(&cfg, &a, &v)?,
    };
    let dir = out_dir(&a.out, false);
    create_dir(&dir)?;
    store_volume(&out, &a.out, VoxelType::F32)?;
    log_run(&dir, threads)?;
    Ok(())
}

fn denoise_with<T: Scalar>(cfg: &RunConfig, a: &DenoiseArgs, v: &Volume) -> CliResult<Volume> {
    let mut net = HaruNet::<T>::new(cfg.network.clone(), 0)?;
    net.params.load_checkpoint(&a.ckpt)?;
    let started = Instant::now();
    let out = denoise_volume(&net, v, a.tile, a.overlap)?;
    let (d, h, w) = v.dims();
    println!(
        "denoised {d}x{h}x{w} in {:.2} s ({:.3} min/scan), tile {} overlap {} -> {}",
        started.elapsed().as_secs_f64(),
        out.elapsed.as_secs_f64() / 60.0,
        a.tile,
        a.overlap,
        a.out.display()
    );
    Ok(out.volume)
}

/// Named images from a PNG directory or the axial slices of a volume.
fn load_images(path: &Path) -> CliResult<Vec<(String, Image<f32>)>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        files
            .iter()
            .map(|p| {
                let name = p
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                Ok((name, read_png_gray(p)?))
            })
            .collect()
    } else {
        let v = load(path)?;
        Ok(slice_volume(&v, Plane::Axial, None)?
            .into_iter()
            .map(|s| (format!("{:04}", s.index), s.pixels))
            .collect())
    }
}

fn evaluate(a: EvaluateArgs, threads: usize) -> CliResult {
    if !(a.peak > 0.0 && a.peak.is_finite()) {
        return Err(CliError::Invalid(format!(
            "peak must be positive, got {}",
            a.peak
        )));
    }
    let refs = load_images(&a.reference)?;
    let tests = load_images(&a.test)?;
    let mut pairs = Vec::new();
    for (name, r) in refs {
        match tests.iter().find(|(n, _)| *n == name) {
            Some((_, t)) => pairs.push((name, r, t.clone())),
            None => {
                return Err(CliError::Invalid(format!(
                    "'{name}' has no counterpart in {}",
                    a.test.display()
                )))
            }
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Invalid("no images to compare".into()));
    }
    let report = evaluate_pairs(&a.model, &pairs, a.peak)?;
    let text = report_text(&report);
    print!("{text}");
    let dir = out_dir(&a.out, false);
    create_dir(&dir)?;
    write_text(&a.out, &text)?;
    log_run(&dir, threads)
}

fn report_text(report: &MetricsReport) -> String {
    let mut text = render_report(&[report.row()]);
    text.push_str("\nimage\tpsnr_db\tssim\tgmsd\n");
    for m in &report.images {
        let psnr = if m.psnr.infinite {
            "inf".to_string()
        } else {
            format!("{:.4}", m.psnr.db)
        };
        text.push_str(&format!(
            "{}\t{psnr}\t{:.6}\t{:.6}\n",
            m.name, m.ssim, m.gmsd
        ));
    }
    if report.infinite_count() > 0 {
        text.push_str(&format!(
            "{} identical image(s) excluded from mean PSNR\n",
            report.infinite_count()
        ));
    }
    text
}

fn macs(a: MacsArgs) -> CliResult {
    let mut cfg = RunConfig::new(a.preset);
    if let Some(path) = &a.config {
        cfg.apply_text(&read_text(path)?)?;
    }
    let Dims4(n, c, h, w) = a.input;
    let b = count_macs(&cfg.network, (n, c, h, w))?;
    if a.layers {
        for (layer, m) in &b.entries {
            println!("{layer}\t{m}");
        }
    }
    println!(
        "{:.3} GMACs ({} MACs) for {n}x{c}x{h}x{w}",
        b.total_gmacs(),
        b.total
    );
    Ok(())
}
