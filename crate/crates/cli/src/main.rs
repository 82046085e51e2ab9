//! Command-line front end. Every subcommand reads an optional flat `key = value` config file;
//! flags given on the command line override the matching keys.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparsereg::analysis::{estimate_rho, rli_falsify, RhoGrid};
use sparsereg::baselines::{euclidean_distance, gd_distance, tangent_distance};
use sparsereg::config::KeyValues;
use sparsereg::dictionary::{coherence, Dictionary, DictionaryConfig};
use sparsereg::error::Error;
use sparsereg::harness::{
    ball_field, ball_pair, run, run_classify, sweep_trends, synth_transformed, synthetic_object, ExperimentId, ExperimentSpec, Table,
    TransformRanges,
};
use sparsereg::imaging::{load_pgm, save_pgm, Image};
use sparsereg::registration::{register, RefinementConfig};
use sparsereg::sparse::{nmp, SparseApprox};

/// Environment variable naming the directory that holds the IDX digit files.
const DATA_ENV: &str = "SPARSEREG_DATA";

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "sparsereg", version, about = "Registration of images through sparse geometric expansions")]
struct Cli {
    /// Flat key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sparse approximation of a PGM image by non-negative matching pursuit.
    Approximate(ApproximateArgs),
    /// Registers two sparse approximations.
    Register(RegisterArgs),
    /// Distances between two PGM images.
    Distance(DistanceArgs),
    /// Nearest-neighbour classification of transformed digits.
    Classify(ClassifyArgs),
    /// Dictionary properties.
    Analyze(AnalyzeArgs),
    /// Procedural test images and random transformations of them.
    Synth(SynthArgs),
    /// Runs an experiment and writes its CSV table.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ApproximateArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Stop once the residual norm reaches this value.
    #[arg(long)]
    stop: Option<f64>,
    /// Atom CSV output (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reconstruction PGM output.
    #[arg(long)]
    recon: Option<PathBuf>,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    p: PathBuf,
    #[arg(long)]
    q: PathBuf,
    #[arg(long)]
    refine: bool,
    /// Per-candidate objective values.
    #[arg(long)]
    candidates: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistanceMethod {
    Euclid,
    Tangent,
    Gd,
    Sparse,
}

impl DistanceMethod {
    fn name(self) -> &'static str {
        match self {
            DistanceMethod::Euclid => "euclid",
            DistanceMethod::Tangent => "tangent",
            DistanceMethod::Gd => "gd",
            DistanceMethod::Sparse => "sparse",
        }
    }
}

#[derive(Args)]
struct DistanceArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Methods to evaluate; all when absent.
    #[arg(long, value_enum)]
    method: Vec<DistanceMethod>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    refine: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Directory with the IDX files; falls back to `data_dir` and then to the environment.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    train_per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 100 training and 100 test digits per class.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Property {
    Rho,
    Rli,
    Coherence,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    property: Property,
    /// Subset size for `rli`.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Atoms sampled for `coherence`.
    #[arg(long, default_value_t = 500)]
    max_atoms: usize,
    /// Skip the local ascent of the `rho` estimate.
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    Object,
    BallPair,
    BallField,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Object)]
    kind: SynthKind,
    /// Transform this image instead of generating one.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long, default_value_t = 75)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output PGM of the (generated or loaded) image.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of random transformations to write.
    #[arg(long, default_value_t = 0)]
    transforms: usize,
    /// Directory for the transformed copies and their parameters.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    max_translation: Option<f64>,
    #[arg(long)]
    scale_min: Option<f64>,
    #[arg(long)]
    scale_max: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// aniso_sweep, scale_step_sweep, transform_errors, distance_compare or classify.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated sparsities.
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// 100 trials per point (100 digits per class for classify).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Parse { .. } | Error::DimensionMismatch { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let kv = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::new(),
    };
    match cli.command {
        Command::Approximate(a) => approximate(kv, a),
        Command::Register(a) => register_cmd(kv, a),
        Command::Distance(a) => distance(kv, a),
        Command::Classify(a) => classify(kv, a),
        Command::Analyze(a) => analyze(kv, a),
        Command::Synth(a) => synth(kv, a),
        Command::Sweep(a) => sweep(kv, a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Dictionary from the config keys; the image size fills in `width`/`height` when absent.
fn dictionary_config(kv: &KeyValues, size: Option<(usize, usize)>) -> Result<DictionaryConfig> {
    let mut kv = kv.clone();
    match size {
        Some((w, h)) => {
            let cw: Option<usize> = kv.parsed("width")?;
            let ch: Option<usize> = kv.parsed("height")?;
            if cw.is_some_and(|v| v != w) || ch.is_some_and(|v| v != h) {
                return Err(Error::Config(format!("configured dictionary size does not match the {w}x{h} image")));
            }
            kv.set("width", w);
            kv.set("height", h);
        }
        None if !kv.contains("width") => {
            return Err(Error::Config("the dictionary needs 'width' (and optionally 'height') in the config".into()));
        }
        None => {}
    }
    DictionaryConfig::from_key_values(&kv)
}

fn sparsity(kv: &KeyValues, flag: Option<usize>) -> Result<usize> {
    let k = match flag {
        Some(k) => k,
        None => kv.parsed("k")?.unwrap_or(10),
    };
    if k == 0 {
        return Err(Error::Config("K must be positive".into()));
    }
    Ok(k)
}

fn approximate(kv: KeyValues, a: ApproximateArgs) -> Result<()> {
    let img = load_pgm(&a.image)?;
    let dict = Dictionary::new(dictionary_config(&kv, Some((img.width(), img.height())))?)?;
    let k = sparsity(&kv, a.k)?;
    let stop = match a.stop {
        Some(s) => s,
        None => kv.real("stop")?.unwrap_or(0.0),
    };
    let out = nmp(&img, k, &dict, stop)?;
    log::info!("{} atoms, residual norm {}", out.approx.len(), out.residual_norms.last().copied().unwrap_or(0.0));
    if let Some(path) = &a.recon {
        save_pgm(&out.approx.synthesize(), path)?;
    }
    emit(a.out.as_deref(), &out.approx.to_csv())
}

fn load_approx(path: &Path, cfg: &Arc<DictionaryConfig>) -> Result<SparseApprox> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    SparseApprox::from_csv(&text, Arc::clone(cfg)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn register_cmd(kv: KeyValues, a: RegisterArgs) -> Result<()> {
    let cfg = Arc::new(dictionary_config(&kv, None)?);
    let p = load_approx(&a.p, &cfg)?;
    let q = load_approx(&a.q, &cfg)?;
    let refine = a.refine || kv.parsed("refine")?.unwrap_or(false);
    let res = register(&p, &q, refine, &RefinementConfig::default())?;
    println!("eta_hat {}", res.eta_hat);
    println!("d_a {}", res.d_a);
    if res.refined {
        println!("eta_refined {}", res.eta_refined);
        println!("d_refined {}", res.d_refined);
    }
    if let Some(path) = &a.candidates {
        let mut text = String::from("i,j,pi,bx,by,a,theta,distance\n");
        for (c, v) in &res.candidates {
            text += &format!("{},{},{},{},{},{},{},{v}\n", c.i, c.j, c.pi, c.eta.b[0], c.eta.b[1], c.eta.a, c.eta.theta);
        }
        fs::write(path, text)?;
    }
    Ok(())
}

fn distance(kv: KeyValues, a: DistanceArgs) -> Result<()> {
    let i1 = load_pgm(&a.a)?;
    let i2 = load_pgm(&a.b)?;
    i1.same_shape(&i2)?;
    let cfg = dictionary_config(&kv, Some((i1.width(), i1.height())))?;
    let kind = cfg.kind;
    let rcfg = RefinementConfig::default();
    let methods = if a.method.is_empty() {
        vec![DistanceMethod::Euclid, DistanceMethod::Tangent, DistanceMethod::Gd, DistanceMethod::Sparse]
    } else {
        a.method
    };
    let mut text = String::from("method,distance\n");
    for m in methods {
        let d = match m {
            DistanceMethod::Euclid => euclidean_distance(&i1, &i2)?,
            DistanceMethod::Tangent => tangent_distance(&i1, &i2, kind, &rcfg)?.distance,
            DistanceMethod::Gd => gd_distance(&i1, &i2, kind, &rcfg)?.0,
            DistanceMethod::Sparse => {
                let dict = Dictionary::new(cfg.clone())?;
                let k = sparsity(&kv, a.k)?;
                let p = nmp(&i1, k, &dict, 0.0)?.approx;
                let q = nmp(&i2, k, &dict, 0.0)?.approx;
                let refine = a.refine || kv.parsed("refine")?.unwrap_or(false);
                let r = register(&p, &q, refine, &rcfg)?;
                if refine {
                    r.d_refined
                } else {
                    r.d_a
                }
            }
        };
        text += &format!("{},{d}\n", m.name());
    }
    emit(None, &text)
}

/// Resolves the data directory: flag, then config key, then environment.
fn data_dir(kv: &mut KeyValues, flag: Option<PathBuf>) {
    if let Some(d) = flag {
        kv.set("data_dir", d.display());
    } else if !kv.contains("data_dir") {
        if let Ok(d) = std::env::var(DATA_ENV) {
            kv.set("data_dir", d);
        }
    }
}

fn classify(mut kv: KeyValues, a: ClassifyArgs) -> Result<()> {
    kv.set("experiment", ExperimentId::Classify);
    data_dir(&mut kv, a.data_dir);
    if a.full_scale {
        kv.set("train_per_class", 100);
        kv.set("test_per_class", 100);
    }
    for (key, v) in [("k", a.k), ("train_per_class", a.train_per_class), ("test_per_class", a.test_per_class)] {
        if let Some(v) = v {
            kv.set(key, v);
        }
    }
    if let Some(s) = a.seed {
        kv.set("seed", s);
    }
    let spec = ExperimentSpec::from_key_values(&kv)?;
    if spec.data_dir.is_none() {
        return Err(Error::Config(format!("no data directory: pass --data-dir, set data_dir or {DATA_ENV}")));
    }
    let out = run_classify(&spec)?;
    emit(a.out.as_deref(), &out.table.to_csv())
}

fn analyze(kv: KeyValues, a: AnalyzeArgs) -> Result<()> {
    let cfg = dictionary_config(&kv, None)?;
    let text = match a.property {
        Property::Rho => {
            let est = estimate_rho(&cfg, &cfg.stabilizer()?, &RhoGrid::default(), !a.no_refine)?;
            format!(
                "rho,eta,eta_prime,pi,gamma,evaluated\n{},{},{},{},{},{}\n",
                est.rho, est.eta, est.eta_prime, est.pi, est.gamma, est.evaluated
            )
        }
        Property::Rli => {
            let atoms = Dictionary::new(cfg)?.atoms()?;
            let r = rli_falsify(&atoms, a.k, a.epsilon, a.alpha, a.trials, a.seed)?;
            let join = |v: Vec<String>| v.join(" ");
            format!(
                "k,epsilon,alpha,alpha_found,violated,premise_hits,trials,support,coefficients\n{},{},{},{},{},{},{},{},{}\n",
                r.k,
                r.epsilon,
                r.alpha,
                r.alpha_found,
                r.violated,
                r.premise_hits,
                r.trials,
                join(r.witness_support.iter().map(|s| s.to_string()).collect()),
                join(r.witness_coeffs.iter().map(|c| c.to_string()).collect()),
            )
        }
        Property::Coherence => {
            let dict = Dictionary::new(cfg)?;
            let n = dict.len().min(a.max_atoms);
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut idx = rand::seq::index::sample(&mut rng, dict.len(), n).into_vec();
            idx.sort_unstable();
            let atoms = idx.iter().map(|&i| dict.atom(i)).collect::<Result<Vec<_>>>()?;
            format!("atoms,sampled,coherence\n{},{},{}\n", dict.len(), n, coherence(&atoms)?)
        }
    };
    emit(a.out.as_deref(), &text)
}

fn synth(kv: KeyValues, a: SynthArgs) -> Result<()> {
    let img: Image = match &a.image {
        Some(p) => load_pgm(p)?,
        None => match a.kind {
            SynthKind::Object => synthetic_object(a.size, a.seed),
            SynthKind::BallPair => ball_pair(a.size, a.seed),
            SynthKind::BallField => ball_field(a.size, a.seed),
        },
    };
    if let Some(p) = &a.out {
        save_pgm(&img, p)?;
    }
    if a.transforms == 0 {
        return Ok(());
    }
    let dir = a.out_dir.ok_or_else(|| Error::Config("--out-dir is required with --transforms".into()))?;
    let half = img.width().min(img.height()) as f64 / 4.0;
    let pick = |flag: Option<f64>, key: &str, default: f64| -> Result<f64> {
        Ok(match flag {
            Some(v) => v,
            None => kv.real(key)?.unwrap_or(default),
        })
    };
    let ranges = TransformRanges::similarity(
        pick(a.max_translation, "max_translation", half)?,
        pick(a.scale_min, "transform_scale_min", 0.5)?,
        pick(a.scale_max, "transform_scale_max", 1.5)?,
    );
    fs::create_dir_all(&dir)?;
    let mut params = String::from("file,bx,by,a,theta\n");
    for (n, (warped, eta)) in synth_transformed(&img, a.transforms, &ranges, a.seed)?.into_iter().enumerate() {
        let name = format!("transformed_{n:04}.pgm");
        save_pgm(&warped, dir.join(&name))?;
        params += &format!("{name},{},{},{},{}\n", eta.b[0], eta.b[1], eta.a, eta.theta);
    }
    fs::write(dir.join("transforms.csv"), params)?;
    Ok(())
}

fn sweep(mut kv: KeyValues, a: SweepArgs) -> Result<()> {
    if let Some(e) = &a.experiment {
        kv.set("experiment", e);
    }
    let id: ExperimentId = kv.parsed("experiment")?.ok_or_else(|| Error::Config("no experiment: pass --experiment or set 'experiment'".into()))?;
    data_dir(&mut kv, a.data_dir);
    if a.full_scale {
        if id == ExperimentId::Classify {
            kv.set("train_per_class", 100);
            kv.set("test_per_class", 100);
        } else {
            kv.set("trials", 100);
        }
    }
    if let Some(v) = a.trials {
        kv.set("trials", v);
    }
    if let Some(v) = a.seed {
        kv.set("seed", v);
    }
    if let Some(v) = &a.k {
        kv.set("k", v);
    }
    if let Some(v) = &a.sweep {
        kv.set("sweep", v);
    }
    let spec = ExperimentSpec::from_key_values(&kv)?;
    let table: Table = run(&spec)?;
    if let Some((approx, reg)) = sweep_trends(&table) {
        eprintln!("spearman: approx_error {approx:+.3}, registration_error {reg:+.3}");
    }
    emit(a.out.as_deref(), &table.to_csv())
}
