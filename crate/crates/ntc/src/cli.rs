//! The `ntc` command line.

use std::collections::hash_map::{Entry, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use ntc_core::metrics::{evaluate, DEFAULT_MIN_MIP_RES};
use ntc_core::profile::BUILTIN_NAMES;
use ntc_core::sampler::{decode_chain, decode_mip, Jitter, TexelDecoder};
use ntc_core::texture::build_mip_chain;
use ntc_core::trainer::{compress_with_progress, Phase};
use ntc_core::{CompressedTexture, FilterKind, Image, MipChain, Profile, SamplePoint, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::io::{load_texture_set, write_mip_pngs, write_png};
use crate::report::{info_text, storage_table, sweep_table, EvalReport, SweepRow};

/// Default step count of a full compression run.
pub const DEFAULT_STEPS: u64 = 250_000;

#[derive(Debug, Parser)]
#[command(name = "ntc", version, about = "Neural compression of material texture sets")]
pub struct Cli {
    /// Seed for training and stochastic sampling; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by the commands that train.
#[derive(Debug, Clone, clap::Args)]
pub struct TrainArgs {
    /// Texture set manifest (JSON list of {name, file}).
    #[arg(long)]
    pub manifest: PathBuf,
    /// One of ntc0.2, ntc0.5, ntc1.0, ntc2.25.
    #[arg(long)]
    pub profile: String,
    /// Training config JSON; every field is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noisy-phase step count; overrides the config file.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Divide the default 250k steps by this factor.
    #[arg(long, conflicts_with = "steps")]
    pub scale_steps: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a compressed representation and write an NTCC container.
    Compress {
        #[command(flatten)]
        train: TrainArgs,
        /// Output container path.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Decode mips to one PNG per texture per mip.
    Decompress {
        /// NTCC container.
        container: PathBuf,
        /// Decode only this mip.
        #[arg(long)]
        mip: Option<usize>,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compare a container against the texture set it was made from.
    Eval {
        /// NTCC container.
        container: PathBuf,
        /// Manifest of the original texture set.
        #[arg(long)]
        manifest: PathBuf,
        /// Smallest mip included in the metrics.
        #[arg(long, default_value_t = DEFAULT_MIN_MIP_RES)]
        min_mip_res: usize,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the header, feature levels and storage of a container.
    Info {
        /// NTCC container.
        container: PathBuf,
    },
    /// Compress channel prefixes of one texture set with a fixed profile.
    SweepChannels {
        #[command(flatten)]
        train: TrainArgs,
        /// Channel counts, e.g. 1,3,9.
        #[arg(long, value_delimiter = ',', required = true)]
        channels: Vec<usize>,
        /// Also write the rows as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Render a magnified crop with a texture filter and report convergence.
    FilterDemo {
        /// NTCC container.
        container: PathBuf,
        /// Texture filter.
        #[arg(long, value_enum)]
        kind: DemoKind,
        /// Stochastic frames averaged.
        #[arg(long, default_value_t = 256)]
        samples: u64,
        /// Level of detail sampled.
        #[arg(long, default_value_t = 0.0)]
        lod: f64,
        /// Crop size in texels of the sampled mip.
        #[arg(long, default_value_t = 16)]
        crop: usize,
        /// Output pixels per texel.
        #[arg(long, default_value_t = 8)]
        magnify: usize,
        /// Texture to render (default: the first).
        #[arg(long)]
        texture: Option<String>,
        /// Gaussian filter width in texels.
        #[arg(long, default_value_t = FilterKind::DEFAULT_GAUSSIAN_SIGMA)]
        sigma: f64,
        /// Output PNG.
        #[arg(long, short)]
        out: PathBuf,
        /// Convergence CSV (default: the PNG path with a .csv extension).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoKind {
    Nearest,
    Bilinear,
    Trilinear,
    StochasticBilinear,
    StochasticGaussian,
    StochasticTrilinear,
}

impl DemoKind {
    fn filter(self, sigma: f64) -> FilterKind {
        match self {
            DemoKind::Nearest => FilterKind::Nearest,
            DemoKind::Bilinear => FilterKind::Bilinear,
            DemoKind::Trilinear => FilterKind::Trilinear,
            DemoKind::StochasticBilinear => FilterKind::StochasticBilinear,
            DemoKind::StochasticGaussian => FilterKind::StochasticGaussian { sigma },
            DemoKind::StochasticTrilinear => FilterKind::StochasticTrilinear,
        }
    }
}

/// Result of a successful command: what to print and what was written.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutcome {
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Results go to stdout, diagnostics to stderr.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<CommandOutcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second call in one process keeps the first pool, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Compress { train, out } => cmd_compress(cli, train, out),
        Command::Decompress { container, mip, out } => cmd_decompress(container, *mip, out),
        Command::Eval {
            container,
            manifest,
            min_mip_res,
            json,
        } => cmd_eval(container, manifest, *min_mip_res, json.as_deref()),
        Command::Info { container } => cmd_info(container),
        Command::SweepChannels { train, channels, json } => cmd_sweep_channels(cli, train, channels, json.as_deref()),
        Command::FilterDemo {
            container,
            kind,
            samples,
            lod,
            crop,
            magnify,
            texture,
            sigma,
            out,
            csv,
        } => {
            let demo = FilterDemo {
                kind: kind.filter(*sigma),
                samples: *samples,
                lod: *lod,
                crop: *crop,
                magnify: *magnify,
                seed: cli.seed.unwrap_or(0),
            };
            let csv = csv.clone().unwrap_or_else(|| out.with_extension("csv"));
            cmd_filter_demo(container, &demo, texture.as_deref(), out, &csv)
        }
    }
}

pub fn parse_profile(name: &str) -> CliResult<Profile> {
    Profile::by_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown profile '{name}'; valid profiles: {}",
            BUILTIN_NAMES.join(", ")
        ))
    })
}

/// Config file, then `--steps`/`--scale-steps`, then `--seed`.
pub fn train_config(cli: &Cli, t: &TrainArgs) -> CliResult<TrainConfig> {
    let file = match &t.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut c = file.apply(TrainConfig::default())?;
    if let Some(s) = t.steps {
        c.steps = s;
    } else if let Some(k) = t.scale_steps {
        if k == 0 {
            return Err(CliError::Usage("--scale-steps must be at least 1".into()));
        }
        c.steps = DEFAULT_STEPS / k;
    }
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    Ok(c)
}

pub fn read_container(path: &Path) -> CliResult<CompressedTexture> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    CompressedTexture::deserialize(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

struct Progress {
    quiet: bool,
    every: u64,
    start: Instant,
    last_loss: f64,
    noisy: u64,
    frozen: u64,
}

impl Progress {
    fn new(quiet: bool, total: u64) -> Self {
        Self {
            quiet,
            every: (total / 20).max(1),
            start: Instant::now(),
            last_loss: f64::NAN,
            noisy: 0,
            frozen: 0,
        }
    }

    fn step(&mut self, r: &ntc_core::trainer::StepReport, total: u64) {
        self.last_loss = r.loss;
        match r.phase {
            Phase::Noisy => self.noisy += 1,
            Phase::Frozen => self.frozen += 1,
        }
        if !self.quiet && (r.step.is_multiple_of(self.every) || r.step + 1 == total) {
            eprintln!(
                "step {:>7}/{total}  {:<6}  lod {}  loss {:.4e}  lr {:.2e}/{:.2e}  {:.1}s",
                r.step + 1,
                r.phase.name(),
                r.lod,
                r.loss,
                r.lr_grids,
                r.lr_weights,
                self.start.elapsed().as_secs_f64()
            );
        }
    }
}

fn train(
    chain: &MipChain,
    profile: &Profile,
    config: &TrainConfig,
    quiet: bool,
) -> CliResult<(CompressedTexture, Progress)> {
    let total = config.total_steps();
    let mut progress = Progress::new(quiet, total);
    let ct = compress_with_progress(chain, profile, config, &mut |r| progress.step(r, total))?;
    Ok((ct, progress))
}

fn cmd_compress(cli: &Cli, t: &TrainArgs, out: &Path) -> CliResult<CommandOutcome> {
    let profile = parse_profile(&t.profile)?;
    let config = train_config(cli, t)?;
    let ts = load_texture_set(&t.manifest)?;
    let chain = build_mip_chain(&ts);
    let (ct, p) = train(&chain, &profile, &config, cli.quiet)?;
    let bytes = ct.serialize();
    fs::write(out, &bytes).map_err(|e| CliError::io(out, e))?;
    let mut summary = format!(
        "wrote {} ({} bytes)\nfinal loss    {:.6e}\nsteps         {} noisy + {} frozen\nelapsed       {:.1}s\n\n",
        out.display(),
        bytes.len(),
        p.last_loss,
        p.noisy,
        p.frozen,
        p.start.elapsed().as_secs_f64()
    );
    summary.push_str(&storage_table(&ct.storage_report()));
    Ok(CommandOutcome {
        summary,
        artifacts: vec![out.to_path_buf()],
    })
}

fn cmd_decompress(container: &Path, mip: Option<usize>, out: &Path) -> CliResult<CommandOutcome> {
    let ct = read_container(container)?;
    let mips: Vec<usize> = match mip {
        Some(m) if m >= ct.num_mips() => {
            return Err(CliError::Usage(format!(
                "--mip {m} out of range; the container has mips 0..={}",
                ct.num_mips() - 1
            )))
        }
        Some(m) => vec![m],
        None => (0..ct.num_mips()).collect(),
    };
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut artifacts = Vec::new();
    for m in mips {
        let img = decode_mip(&ct, m)?;
        artifacts.extend(write_mip_pngs(out, &ct.names, m, &img)?);
    }
    let mut summary = String::new();
    for a in &artifacts {
        let _ = writeln!(summary, "{}", a.display());
    }
    Ok(CommandOutcome { summary, artifacts })
}

/// Metrics of `ct` decoded against `reference`, with its storage.
pub fn eval_report(ct: &CompressedTexture, reference: &MipChain, min_mip_res: usize) -> CliResult<EvalReport> {
    let decoded = decode_chain(ct)?;
    let metrics = evaluate(reference, &decoded, min_mip_res)?;
    Ok(EvalReport::new(&metrics, &ct.storage_report(), min_mip_res))
}

fn cmd_eval(container: &Path, manifest: &Path, min_mip_res: usize, json: Option<&Path>) -> CliResult<CommandOutcome> {
    let ct = read_container(container)?;
    let ts = load_texture_set(manifest)?;
    if ts.width() != ct.width() || ts.channels() != ct.channels() {
        return Err(CliError::Data(format!(
            "manifest is {}x{} with {} channels, container is {}x{} with {} channels",
            ts.width(),
            ts.height(),
            ts.channels(),
            ct.width(),
            ct.width(),
            ct.channels()
        )));
    }
    let report = eval_report(&ct, &build_mip_chain(&ts), min_mip_res)?;
    let mut artifacts = Vec::new();
    if let Some(path) = json {
        fs::write(path, report.to_json()).map_err(|e| CliError::io(path, e))?;
        artifacts.push(path.to_path_buf());
    }
    let mut summary = report.to_table();
    summary.push('\n');
    summary.push_str(&storage_table(&ct.storage_report()));
    Ok(CommandOutcome { summary, artifacts })
}

fn cmd_info(container: &Path) -> CliResult<CommandOutcome> {
    let ct = read_container(container)?;
    Ok(CommandOutcome {
        summary: info_text(&ct),
        artifacts: Vec::new(),
    })
}

/// Compresses the first `c` channels of `ts` for every `c` in `channels`.
pub fn sweep_channels(
    ts: &ntc_core::TextureSet,
    profile: &Profile,
    config: &TrainConfig,
    channels: &[usize],
    quiet: bool,
) -> CliResult<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &c in channels {
        let subset = ts.channel_prefix(c).map_err(|e| CliError::Usage(e.to_string()))?;
        let chain = build_mip_chain(&subset);
        if !quiet {
            eprintln!("channels {c}");
        }
        let (ct, _) = train(&chain, profile, config, quiet)?;
        let report = eval_report(&ct, &chain, DEFAULT_MIN_MIP_RES)?;
        rows.push(SweepRow {
            channels: c,
            psnr_db: report.metrics.psnr_db,
            one_minus_ssim: report.metrics.one_minus_ssim,
            bppc: report.storage.bppc,
            total_bytes: report.storage.total_bytes,
        });
    }
    Ok(rows)
}

fn cmd_sweep_channels(cli: &Cli, t: &TrainArgs, channels: &[usize], json: Option<&Path>) -> CliResult<CommandOutcome> {
    let profile = parse_profile(&t.profile)?;
    let config = train_config(cli, t)?;
    let ts = load_texture_set(&t.manifest)?;
    let rows = sweep_channels(&ts, &profile, &config, channels, cli.quiet)?;
    let mut artifacts = Vec::new();
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&rows).expect("rows serialize");
        fs::write(path, text).map_err(|e| CliError::io(path, e))?;
        artifacts.push(path.to_path_buf());
    }
    Ok(CommandOutcome {
        summary: sweep_table(&rows),
        artifacts,
    })
}

/// Settings of a filter demo render.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDemo {
    pub kind: FilterKind,
    pub samples: u64,
    pub lod: f64,
    pub crop: usize,
    pub magnify: usize,
    pub seed: u64,
}

/// Error of the running average after `samples` frames, against the
/// deterministic filter the stochastic one converges to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub samples: u64,
    pub max_abs_error: f64,
    pub rmse: f64,
}

/// A rendered demo: `size²` pixels of all channels, plus convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoRender {
    pub image: Image,
    pub reference: Image,
    pub convergence: Vec<ConvergencePoint>,
}

fn checkpoints(n: u64) -> Vec<u64> {
    let mut v: Vec<u64> = std::iter::successors(Some(1u64), |&k| k.checked_mul(10))
        .take_while(|&k| k < n)
        .collect();
    v.push(n);
    v
}

/// `P(floor(t + sigma·Z) = k)` for integer `k`.
fn gaussian_cell_weight(k: i64, t: f64, sigma: f64) -> f64 {
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / (sigma * std::f64::consts::SQRT_2)));
    cdf(k as f64 + 1.0 - t) - cdf(k as f64 - t)
}

/// Expected value of a stochastic Gaussian lookup, summed exactly.
fn gaussian_expectation(mip_img: &Image, mode: ntc_core::AddressMode, tx: f64, ty: f64, sigma: f64, out: &mut [f64]) {
    let res = mip_img.width();
    let reach = (8.0 * sigma).ceil() as i64 + 1;
    let (cx, cy) = (tx.floor() as i64, ty.floor() as i64);
    out.iter_mut().for_each(|o| *o = 0.0);
    for ky in cy - reach..=cy + reach {
        let wy = gaussian_cell_weight(ky, ty, sigma);
        for kx in cx - reach..=cx + reach {
            let w = wy * gaussian_cell_weight(kx, tx, sigma);
            let texel = mip_img.texel(mode.resolve(kx, res), mode.resolve(ky, res));
            for (o, &v) in out.iter_mut().zip(texel) {
                *o += w * v as f64;
            }
        }
    }
}

/// Renders the crop centred in the mip nearest `lod`. Stochastic kinds
/// average `samples` frames drawn from a seeded stream; deterministic kinds
/// render once.
pub fn render_filter_demo(ct: &CompressedTexture, demo: &FilterDemo) -> CliResult<DemoRender> {
    if demo.crop == 0 || demo.magnify == 0 || demo.samples == 0 {
        return Err(CliError::Usage("crop, magnify and samples must be positive".into()));
    }
    if !demo.lod.is_finite() {
        return Err(CliError::Usage("lod must be finite".into()));
    }
    let last = ct.num_mips() - 1;
    let base_mip = (demo.lod.clamp(0.0, last as f64) + 0.5).floor() as usize;
    let res = ct.width() >> base_mip;
    let crop = demo.crop.min(res);
    let origin = (res - crop) / 2;
    let size = crop * demo.magnify;
    let c = ct.channels();
    let point = |px: usize, py: usize| {
        let to_uv = |p: usize| (origin as f64 + (p as f64 + 0.5) / demo.magnify as f64) / res as f64;
        SamplePoint::new(to_uv(px), to_uv(py), demo.lod)
    };

    let mut dec = TexelDecoder::new(ct);
    let mut mips: HashMap<usize, Image> = HashMap::new();
    let mut reference = vec![0.0f32; size * size * c];
    let deterministic = match demo.kind {
        FilterKind::StochasticBilinear => FilterKind::Bilinear,
        FilterKind::StochasticTrilinear => FilterKind::Trilinear,
        k => k,
    };
    if let FilterKind::StochasticGaussian { sigma } = demo.kind {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CliError::Usage(format!("gaussian sigma {sigma} must be positive")));
        }
        let img = mips.entry(base_mip).or_insert(decode_mip(ct, base_mip)?);
        let mut acc = vec![0.0f64; c];
        for py in 0..size {
            for px in 0..size {
                let p = point(px, py);
                gaussian_expectation(
                    img,
                    ct.model.address_mode,
                    p.u * res as f64,
                    p.v * res as f64,
                    sigma,
                    &mut acc,
                );
                for (o, a) in reference[(py * size + px) * c..][..c].iter_mut().zip(&acc) {
                    *o = *a as f32;
                }
            }
        }
    } else {
        for (i, texel) in reference.chunks_exact_mut(c).enumerate() {
            dec.sample::<ChaCha8Rng>(point(i % size, i / size), deterministic, None, texel)?;
        }
    }

    if !demo.kind.is_stochastic() {
        let image = Image::new(size, size, c, reference.clone())?;
        return Ok(DemoRender {
            reference: image.clone(),
            image,
            convergence: vec![ConvergencePoint {
                samples: 1,
                max_abs_error: 0.0,
                rmse: 0.0,
            }],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(demo.seed);
    let mut sum = vec![0.0f64; size * size * c];
    let mut convergence = Vec::new();
    let mut done = 0;
    for target in checkpoints(demo.samples) {
        while done < target {
            for (i, acc) in sum.chunks_exact_mut(c).enumerate() {
                let jitter = Jitter::draw(demo.kind, &mut rng);
                let (x, y, mip) = dec.jittered_texel(point(i % size, i / size), jitter);
                if let Entry::Vacant(e) = mips.entry(mip) {
                    e.insert(decode_mip(ct, mip)?);
                }
                for (a, &v) in acc.iter_mut().zip(mips[&mip].texel(x, y)) {
                    *a += v as f64;
                }
            }
            done += 1;
        }
        let (mut max, mut sq) = (0.0f64, 0.0f64);
        for (s, &r) in sum.iter().zip(&reference) {
            let e = (s / done as f64 - r as f64).abs();
            max = max.max(e);
            sq += e * e;
        }
        convergence.push(ConvergencePoint {
            samples: done,
            max_abs_error: max,
            rmse: (sq / sum.len() as f64).sqrt(),
        });
    }
    let data = sum.iter().map(|s| (s / done as f64) as f32).collect();
    Ok(DemoRender {
        image: Image::new(size, size, c, data)?,
        reference: Image::new(size, size, c, reference)?,
        convergence,
    })
}

pub fn convergence_csv(points: &[ConvergencePoint]) -> String {
    let mut s = String::from("samples,max_abs_error,rmse\n");
    for p in points {
        let _ = writeln!(s, "{},{:.9},{:.9}", p.samples, p.max_abs_error, p.rmse);
    }
    s
}

fn cmd_filter_demo(
    container: &Path,
    demo: &FilterDemo,
    texture: Option<&str>,
    out: &Path,
    csv: &Path,
) -> CliResult<CommandOutcome> {
    let ct = read_container(container)?;
    let span = match texture {
        Some(name) => ct
            .names
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| CliError::Usage(format!("no texture named '{name}'")))?,
        None => &ct.names[0],
    };
    let render = render_filter_demo(&ct, demo)?;
    let (start, len) = if span.len == 3 {
        (span.start, 3)
    } else {
        (span.start, 1)
    };
    write_png(out, &render.image, start, len)?;
    fs::write(csv, convergence_csv(&render.convergence)).map_err(|e| CliError::io(csv, e))?;
    let last = render.convergence.last().expect("at least one checkpoint");
    let summary = format!(
        "wrote {} and {}\n{} samples: max error {:.5}, rmse {:.5}\n",
        out.display(),
        csv.display(),
        last.samples,
        last.max_abs_error,
        last.rmse
    );
    Ok(CommandOutcome {
        summary,
        artifacts: vec![out.to_path_buf(), csv.to_path_buf()],
    })
}
