use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use maxsive::attacks::{parse_pipeline, AttackDomain, ParamType, KINDS};
use maxsive::capacity::{CapacityQuery, CapacityReport, ElementDist, TABLE};
use maxsive::channel::{Channel, ChannelConfig, ChannelMode, DEFAULT_NOISY_SIGMA};
use maxsive::codec::{
    calibrate_threshold, identify_batch, read_registry, write_registry, CalibrationMethod, KeyFile, MasterSeed,
    ReplicationConfig, UserRegistry,
};
use maxsive::grid::LatentTensor;
use maxsive::harness::{
    candidates, embed, resolve_attacks, run_identification, run_verification_with_trials, score_histogram,
    verify_latent, ExperimentConfig,
};
use maxsive::io::{read_mxlt, write_mxlt};
use maxsive::template::{detect_angle_with_profile, profile_csv, TemplateConfig};

/// Training-free latent-noise watermarking with an X-template for RST recovery.
#[derive(Parser)]
#[command(name = "maxsive", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a key file, or a registry of users with --users.
    Keygen(KeygenArgs),
    /// Watermarked initial noise, or the generated latent for ddim channels.
    Embed(EmbedArgs),
    /// Apply an attack pipeline to a latent file.
    Attack(AttackArgs),
    /// Attack kinds and their parameters.
    Attacks {
        #[command(subcommand)]
        command: AttacksCommand,
    },
    /// Print the keyed score of a latent.
    Extract(DecodeArgs),
    /// Detection decision: exit 0 when detected, 2 when not.
    Verify(DecodeArgs),
    /// Attribute a latent to a registry user, or run an identification campaign with --users.
    Identify(IdentifyArgs),
    /// Score threshold for a payload length and target false-positive rate.
    Calibrate(CalibrateArgs),
    /// Source-entropy capacity in bits.
    Capacity(CapacityArgs),
    /// Verification campaign: TPR per attack row, CSV and JSON report.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum AttacksCommand {
    List,
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// identity, ddim or ddim-noisy.
    #[arg(long, default_value = "identity")]
    channel: ChannelMode,
    /// Channel noise; ddim-noisy defaults to 0.3.
    #[arg(long)]
    sigma: Option<f64>,
    /// Template strength.
    #[arg(long)]
    eta: Option<f64>,
    /// Skip the template entirely.
    #[arg(long)]
    no_template: bool,
}

impl ChannelArgs {
    fn channel_config(&self) -> ChannelConfig {
        match self.channel {
            ChannelMode::Identity => ChannelConfig { sigma: self.sigma.unwrap_or(0.0), ..ChannelConfig::identity() },
            ChannelMode::Ddim => ChannelConfig { sigma: self.sigma.unwrap_or(0.0), ..ChannelConfig::ddim_zero() },
            ChannelMode::DdimNoisy => ChannelConfig::ddim_noisy(self.sigma.unwrap_or(DEFAULT_NOISY_SIGMA)),
        }
    }

    fn template(&self) -> Option<TemplateConfig> {
        (!self.no_template).then(|| {
            let mut t = TemplateConfig::default();
            if let Some(eta) = self.eta {
                t.eta = eta;
            }
            t
        })
    }
}

#[derive(Args)]
struct KeygenArgs {
    /// 64 hex characters.
    #[arg(long, conflicts_with = "seed")]
    seed_hex: Option<String>,
    /// Expand a small integer into a master seed (or the registry seed base).
    #[arg(long)]
    seed: Option<u64>,
    /// Write a registry of this many users instead of a key file.
    #[arg(long)]
    users: Option<usize>,
    #[arg(long, default_value_t = 2)]
    f_hw: usize,
    #[arg(long, default_value_t = 1)]
    f_c: usize,
    /// Latent height and width.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    key: PathBuf,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    input: PathBuf,
    /// Inline pipeline, e.g. "rotate_crop_rescale(theta=45)|jpeg_proxy(q=50)".
    #[arg(long)]
    attacks: String,
    /// latent, pixel_proxy or pixel_proxy:N.
    #[arg(long, default_value = "latent")]
    domain: AttackDomain,
    /// Gaussian noise added after the attacks.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    input: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value_t = 1e-3)]
    fpr: f64,
    /// Write the angle-detection profile as CSV.
    #[arg(long)]
    dump_profile: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Latent to attribute; needs --registry.
    input: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value_t = 1e-3)]
    fpr: f64,
    #[arg(long, default_value_t = 2)]
    f_hw: usize,
    #[arg(long, default_value_t = 1)]
    f_c: usize,
    /// Run a campaign over this many synthetic users instead.
    #[arg(long, conflicts_with_all = ["input", "registry"])]
    users: Option<usize>,
    #[arg(long, default_value_t = 1)]
    images_per_user: usize,
    /// Inline pipeline applied to every campaign image.
    #[arg(long)]
    attacks: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the campaign report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Payload length.
    #[arg(long = "L", default_value_t = 4096)]
    len: usize,
    #[arg(long, default_value_t = 1e-3)]
    fpr: f64,
    /// Monte-Carlo null trials; analytic when absent.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long = "L", required_unless_present = "table")]
    len: Option<u64>,
    /// ber or normal.
    #[arg(long, default_value = "normal")]
    dist: ElementDist,
    /// Print every row of the published comparison table.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML campaign config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name, preset file, or inline pipeline.
    #[arg(long)]
    attacks: Option<String>,
    #[arg(long)]
    channel: Option<ChannelMode>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    fpr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    negatives: Option<usize>,
    /// Report stem: writes <out>.csv and <out>.json.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write <out>.hist with per-row score histograms.
    #[arg(long)]
    histogram: bool,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("MAXSIVE_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring MAXSIVE_THREADS={v:?}"),
        }
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Keygen(a) => keygen(a)?,
        Command::Embed(a) => embed_cmd(a)?,
        Command::Attack(a) => attack(a)?,
        Command::Attacks { command: AttacksCommand::List } => print!("{}", attacks_list()),
        Command::Extract(a) => {
            decode(&a, false)?;
        }
        Command::Verify(a) => {
            if !decode(&a, true)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Identify(a) => identify(a)?,
        Command::Calibrate(a) => {
            let method = match a.trials {
                Some(trials) => CalibrationMethod::MonteCarlo { trials, seed: a.seed },
                None => CalibrationMethod::Analytic,
            };
            println!("{:.6}", calibrate_threshold(a.len, a.fpr, method)?);
        }
        Command::Capacity(a) => capacity(a)?,
        Command::Bench(a) => bench(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn keygen(a: KeygenArgs) -> Result<()> {
    let replication = ReplicationConfig { f_hw: a.f_hw, f_c: a.f_c };
    if let Some(n) = a.users {
        if a.seed_hex.is_some() {
            bail!("--seed-hex makes a single key; use --seed for the registry seed base");
        }
        let registry = UserRegistry::synthetic(n, a.seed.unwrap_or(0));
        write_registry(&a.out, &registry)?;
        eprintln!("wrote {n} users to {}", a.out.display());
        return Ok(());
    }
    let seed = match (&a.seed_hex, a.seed) {
        (Some(hex), _) => MasterSeed::from_hex(hex)?,
        (None, Some(n)) => MasterSeed::from_u64(n),
        (None, None) => MasterSeed::random(),
    };
    let key = KeyFile::new(seed, replication, (a.size, a.size, a.channels))?;
    key.write(&a.out)?;
    eprintln!("wrote key to {}", a.out.display());
    Ok(())
}

fn read_key(path: &Path) -> Result<KeyFile> {
    KeyFile::read(path).with_context(|| format!("reading key {}", path.display()))
}

fn read_latent(path: &Path) -> Result<LatentTensor> {
    read_mxlt(path).with_context(|| format!("reading latent {}", path.display()))
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let key = read_key(&a.key)?;
    let e = embed(key.master_seed.clone(), &key.replication(), key.latent_shape())?;
    let template = a.channel.template();
    let channel = Channel::new(&a.channel.channel_config(), key.h, template.as_ref())?;
    write_mxlt(&a.out, &channel.generate(&e.z_t)?)?;
    Ok(())
}

fn attack(a: AttackArgs) -> Result<()> {
    let z = read_latent(&a.input)?;
    let pipeline = parse_pipeline(&a.attacks)?;
    let attacked = pipeline.apply(&z, a.domain)?;
    write_mxlt(&a.out, &maxsive::channel::add_noise(&attacked, a.sigma, a.seed))?;
    Ok(())
}

fn attacks_list() -> String {
    let mut out = String::new();
    for kind in KINDS {
        let params: Vec<String> = kind
            .params
            .iter()
            .map(|p| {
                let ty = match p.ty {
                    ParamType::Real => "real",
                    ParamType::Count => "int",
                    ParamType::Seed => "seed",
                };
                let default = p.default.map(|d| format!(" = {d}")).unwrap_or_default();
                format!("{}: {ty} in {}{default}", p.name, p.range)
            })
            .collect();
        out.push_str(&format!("{:<24} {}\n", kind.name, kind.summary));
        for p in params {
            out.push_str(&format!("    {p}\n"));
        }
    }
    out
}

/// Inverts the input through the channel and scores it; returns the decision.
fn decode(a: &DecodeArgs, decide: bool) -> Result<bool> {
    let key = read_key(&a.key)?;
    let z = read_latent(&a.input)?;
    if z.shape() != key.latent_shape() {
        bail!("latent shape {:?} does not match the key's {:?}", z.shape(), key.latent_shape());
    }
    let template = a.channel.template();
    let channel = Channel::new(&a.channel.channel_config(), key.h, template.as_ref())?;
    let received = channel.invert(&z)?;
    if let (Some(path), Some(t)) = (&a.dump_profile, &template) {
        let (_, profile) = detect_angle_with_profile(&received, t)?;
        std::fs::write(path, profile_csv(&profile))?;
    }
    let rep = key.replication();
    let e = embed(key.master_seed.clone(), &rep, key.latent_shape())?;
    let len = rep.payload_dims(key.latent_shape())?.len();
    let threshold = calibrate_threshold(len, a.fpr, CalibrationMethod::Analytic)?;
    let outcome = verify_latent(&received, &e.watermark, &e.keys, &rep, template.as_ref(), threshold)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&outcome)?);
    } else {
        println!("score {:.4}", outcome.score);
        if decide {
            println!("threshold {:.6}", outcome.threshold);
            println!("{}", if outcome.detected { "detected" } else { "not detected" });
        }
        if let Some(angle) = outcome.attack_angle {
            println!("rotation {angle:.1}");
        }
    }
    Ok(outcome.detected)
}

fn identify(a: IdentifyArgs) -> Result<()> {
    if let Some(users) = a.users {
        let mut cfg = ExperimentConfig {
            seed_base: a.seed,
            channel: a.channel.channel_config(),
            replication: ReplicationConfig { f_hw: a.f_hw, f_c: a.f_c },
            ..Default::default()
        };
        match a.channel.template() {
            Some(t) => cfg.template = t,
            None => cfg.use_template = false,
        }
        let pipeline = a.attacks.as_deref().map(parse_pipeline).transpose()?;
        let report = run_identification(&cfg, pipeline.as_ref(), users, a.images_per_user)?;
        println!(
            "accuracy {:.4} ({}/{}) in {:.1}s",
            report.accuracy, report.correct, report.images, report.seconds
        );
        if let Some(out) = &a.out {
            std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
        }
        return Ok(());
    }
    let (Some(input), Some(registry)) = (&a.input, &a.registry) else {
        bail!("identify needs an input latent and --registry, or --users for a campaign");
    };
    let registry = read_registry(registry).with_context(|| format!("reading registry {}", registry.display()))?;
    let z = read_latent(input)?;
    let template = a.channel.template();
    let channel = Channel::new(&a.channel.channel_config(), z.size(), template.as_ref())?;
    let received = channel.invert(&z)?;
    let rep = ReplicationConfig { f_hw: a.f_hw, f_c: a.f_c };
    let set = candidates(&received, template.as_ref())?.latents;
    let id = identify_batch(&[set], &registry, &rep)?[0];
    let threshold = calibrate_threshold(rep.payload_dims(z.shape())?.len(), a.fpr, CalibrationMethod::Analytic)?;
    println!("user {} score {:.4}{}", id.user_id, id.score, if id.score > threshold { "" } else { " (below threshold)" });
    Ok(())
}

fn capacity(a: CapacityArgs) -> Result<()> {
    if a.table {
        for row in &TABLE {
            let r = CapacityReport::from(row.query());
            println!("{:<18} {:>5} {:<3} {:.4}", row.method, r.len, row.dist.label(), r.bits);
        }
        return Ok(());
    }
    let len = a.len.context("--L is required")?;
    println!("{}", serde_json::to_string(&CapacityReport::from(CapacityQuery::new(len, a.dist)?))?);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(mode) = a.channel {
        let ddim = cfg.channel.ddim.clone();
        cfg.channel = match mode {
            ChannelMode::Identity => ChannelConfig::identity(),
            ChannelMode::Ddim => ChannelConfig::ddim_zero(),
            ChannelMode::DdimNoisy => ChannelConfig::ddim_noisy(DEFAULT_NOISY_SIGMA),
        };
        cfg.channel.ddim = ddim;
    }
    if let Some(s) = a.sigma {
        cfg.channel.sigma = s;
    }
    if let Some(eta) = a.eta {
        cfg.template.eta = eta;
    }
    if let Some(attacks) = a.attacks {
        cfg.attacks = attacks;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(f) = a.fpr {
        cfg.fpr = f;
    }
    if let Some(s) = a.seed {
        cfg.seed_base = s;
    }
    if let Some(n) = a.negatives {
        cfg.negatives = n;
    }
    cfg.validate()?;
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    // fail on a bad preset before any work is done
    resolve_attacks(&cfg.attacks)?;
    let (report, trials) = run_verification_with_trials(&cfg)?;
    print!("{}", report.summary());
    if let Some(out) = &a.out {
        report.write(out)?;
        if a.histogram {
            let hist: String = report
                .rows
                .iter()
                .zip(&trials)
                .map(|(row, recs)| {
                    let name = if row.params.is_empty() { "clean" } else { &row.params };
                    format!("# {name}\n{}\n\n", score_histogram(recs, 40))
                })
                .collect();
            std::fs::write(out.with_extension("hist"), hist)?;
        }
        eprintln!("wrote {}", out.with_extension("csv").display());
    }
    Ok(())
}
