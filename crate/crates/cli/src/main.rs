use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use semeq::equalizer::{equalize, TransformCodebook};
use semeq::gridworld::{Cell, Observation};
use semeq::harness::{
    episode_seed, episode_start, sweep_beta, sweep_snr, ExtReal, Strategy, SweepConfig, Wiring,
};
use semeq::language::OrthogonalTransform;
use semeq::mismatch::report;
use semeq::transport::build_codebook;
use semeq::{ChannelConfig, FitParams, GridConfig, Language, Policy, PolicyKind, QSource};

#[derive(Parser)]
#[command(
    name = "semeq",
    version,
    about = "Semantic channel equalization on a grid-world task"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Source language seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid size as WIDTHxHEIGHT.
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<(u32, u32)>,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON sweep configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fraction of source encoder entries moved to a wrong atom.
    #[arg(long, global = true)]
    perturb_encoder: Option<f64>,
    /// Equalization policy: sm, em, none or fixed:i,j.
    #[arg(long, global = true)]
    policy: Option<PolicyKind>,
    /// Value table for the em policy: decoder or oracle.
    #[arg(long, global = true)]
    q_source: Option<QSource>,
    /// Do not clip equalized symbols to the unit box.
    #[arg(long, global = true)]
    no_clip: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a language and write it as JSON.
    SynthLang {
        #[arg(long)]
        jitter: Option<f64>,
        /// Extra rotation (degrees) on top of the seeded transform.
        #[arg(long, allow_hyphen_values = true)]
        rotate_deg: Option<f64>,
    },
    /// Semantic and effectiveness mismatch between two languages.
    Metrics {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        /// Codebook JSON used with --policy (built on the fly when omitted).
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Write a per-observation breakdown CSV here.
        #[arg(long)]
        per_obs: Option<PathBuf>,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Fit the transformation codebook between two languages.
    Codebook {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Run one episode and print every step.
    Episode {
        #[command(flatten)]
        langs: LangArgs,
        #[arg(long, default_value = "target_grounded")]
        strategy: Strategy,
        #[arg(long, default_value = "inf", allow_hyphen_values = true)]
        snr: ExtReal,
        #[arg(long, default_value = "inf")]
        beta: ExtReal,
        /// Episode index; picks the start state and random stream.
        #[arg(long, default_value_t = 0)]
        episode: u64,
        /// Sweep point index the random stream belongs to.
        #[arg(long, default_value_t = 0)]
        point: u64,
        /// Start state as AGENT_COL,AGENT_ROW,TREASURE_COL,TREASURE_ROW.
        #[arg(long)]
        start: Option<String>,
    },
    /// Mean episode length per strategy over an SNR grid.
    SweepSnr {
        #[command(flatten)]
        sweep: SweepArgs,
        /// SNR grid in dB, comma separated; `inf` allowed.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<ExtReal>>,
        #[arg(long)]
        beta: Option<ExtReal>,
    },
    /// Mean episode length per strategy over a decoder inverse-temperature grid.
    SweepBeta {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Inverse-temperature grid, comma separated; `inf` allowed.
        #[arg(long, value_delimiter = ',')]
        beta: Option<Vec<ExtReal>>,
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<ExtReal>,
    },
}

#[derive(Args, Clone, Default)]
struct FitArgs {
    /// Absolute entropic regularization (default scales with the clouds).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_scale: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl FitArgs {
    fn apply(&self, p: &mut FitParams) {
        if self.epsilon.is_some() {
            p.epsilon = self.epsilon;
        }
        if let Some(v) = self.epsilon_scale {
            p.epsilon_scale = v;
        }
        if let Some(v) = self.ridge {
            p.ridge = v;
        }
        if let Some(v) = self.rounds {
            p.n_rounds = v;
        }
        if let Some(v) = self.max_iter {
            p.max_iter = v;
        }
    }
}

#[derive(Args, Clone)]
struct LangArgs {
    #[arg(long)]
    target_seed: Option<u64>,
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    jitter: Option<f64>,
    /// Make the target the source turned by this many degrees.
    #[arg(long, allow_hyphen_values = true)]
    rotate_deg: Option<f64>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    langs: LangArgs,
    /// Episodes per cell.
    #[arg(long)]
    episodes: Option<usize>,
    /// Strategies, comma separated.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in {s:?}"))?;
    let h = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in {s:?}"))?;
    Ok((w, h))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semeq: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the worker pool")?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::SynthLang { jitter, rotate_deg } => synth_lang(g, *jitter, *rotate_deg),
        Command::Metrics {
            src,
            tgt,
            codebook,
            per_obs,
            fit,
        } => metrics(g, src, tgt, codebook.as_deref(), per_obs.as_deref(), fit),
        Command::Codebook { src, tgt, fit } => {
            let (s, t) = (load_language(src)?, load_language(tgt)?);
            let mut params = FitParams::default();
            fit.apply(&mut params);
            let book = build_codebook(&s, &t, &params)?;
            emit(
                g.out.as_deref(),
                format!("{}\n", book.to_json()?).as_bytes(),
            )
        }
        Command::Episode {
            langs,
            strategy,
            snr,
            beta,
            episode,
            point,
            start,
        } => run_episode(
            g,
            langs,
            *strategy,
            *snr,
            *beta,
            *episode,
            *point,
            start.as_deref(),
        ),
        Command::SweepSnr { sweep, snr, beta } => {
            let mut cfg = sweep_config(g, sweep)?;
            if let Some(v) = snr {
                cfg.snr_grid = v.clone();
            }
            if let Some(b) = beta {
                cfg.beta = *b;
            }
            let table = sweep_snr(&cfg)?;
            emit(
                cfg.output_path.as_deref(),
                table.to_csv_string()?.as_bytes(),
            )
        }
        Command::SweepBeta { sweep, beta, snr } => {
            let mut cfg = sweep_config(g, sweep)?;
            if let Some(v) = beta {
                cfg.beta_grid = v.clone();
            }
            if let Some(s) = snr {
                cfg.snr_db = *s;
            }
            let table = sweep_beta(&cfg)?;
            emit(
                cfg.output_path.as_deref(),
                table.to_csv_string()?.as_bytes(),
            )
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_language(path: &Path) -> Result<Language> {
    Language::load(path).with_context(|| format!("reading language {}", path.display()))
}

fn grid_of(g: &Global, base: GridConfig) -> Result<GridConfig> {
    Ok(match g.grid {
        Some((w, h)) => GridConfig::new(w, h, base.max_steps)?,
        None => base,
    })
}

fn synth_lang(g: &Global, jitter: Option<f64>, rotate_deg: Option<f64>) -> Result<()> {
    let defaults = SweepConfig::default();
    let grid = grid_of(g, defaults.grid)?;
    let seed = g.seed.unwrap_or(defaults.source_seed);
    let mut transform = OrthogonalTransform::random(seed);
    if let Some(deg) = rotate_deg {
        transform.angle += deg.to_radians();
    }
    let mut lang =
        Language::synthesize_with(grid, seed, jitter.unwrap_or(defaults.jitter), transform)?;
    if let Some(p) = g.perturb_encoder {
        lang = lang.perturbed(p, seed)?;
    }
    emit(
        g.out.as_deref(),
        format!("{}\n", lang.to_json()?).as_bytes(),
    )
}

fn metrics(
    g: &Global,
    src: &Path,
    tgt: &Path,
    codebook: Option<&Path>,
    per_obs: Option<&Path>,
    fit: &FitArgs,
) -> Result<()> {
    let (s, t) = (load_language(src)?, load_language(tgt)?);
    let kind = g.policy.unwrap_or(PolicyKind::None);
    let rep = if kind == PolicyKind::None {
        report(&s, &t, per_obs.is_some())?
    } else {
        let book = match codebook {
            Some(path) => TransformCodebook::load(path, &s, &t)
                .with_context(|| format!("reading codebook {}", path.display()))?,
            None => {
                let mut params = FitParams::default();
                fit.apply(&mut params);
                build_codebook(&s, &t, &params)?
            }
        };
        let policy = Policy::build(kind, Some(&book), &s, &t, g.q_source.unwrap_or_default())?;
        report(&equalize(&s, &policy, !g.no_clip)?, &t, per_obs.is_some())?
    };
    if let (Some(path), Some(rows)) = (per_obs, &rep.per_observation) {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record([
            "agent_col",
            "agent_row",
            "treasure_col",
            "treasure_row",
            "source_atom",
            "target_atom",
            "interpreted_action",
            "q_ratio",
        ])?;
        for r in rows {
            let o = r.observation;
            w.write_record([
                o.agent.col.to_string(),
                o.agent.row.to_string(),
                o.treasure.col.to_string(),
                o.treasure.row.to_string(),
                r.source_atom.to_string(),
                r.target_atom.to_string(),
                r.interpreted_action.name().to_string(),
                r.q_ratio.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let summary = serde_json::json!({ "sm": rep.sm, "em": rep.em });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    emit(g.out.as_deref(), text.as_bytes())
}

/// Config file (or defaults) overridden by flags.
fn base_config(g: &Global, langs: &LangArgs) -> Result<SweepConfig> {
    let mut cfg = match &g.config {
        Some(path) => {
            SweepConfig::load(path).with_context(|| format!("reading config {}", path.display()))?
        }
        None => SweepConfig::default(),
    };
    cfg.grid = grid_of(g, cfg.grid)?;
    if let Some(v) = g.seed {
        cfg.source_seed = v;
    }
    if let Some(v) = langs.target_seed {
        cfg.target_seed = v;
    }
    if let Some(v) = langs.eval_seed {
        cfg.eval_seed = v;
    }
    if let Some(v) = langs.jitter {
        cfg.jitter = v;
    }
    if langs.rotate_deg.is_some() {
        cfg.target_rotation_deg = langs.rotate_deg;
    }
    if let Some(v) = g.perturb_encoder {
        cfg.perturb_encoder = v;
    }
    if let Some(v) = g.q_source {
        cfg.q_source = v;
    }
    if g.no_clip {
        cfg.clip = false;
    }
    if g.workers.is_some() {
        cfg.workers = g.workers;
    }
    if g.out.is_some() {
        cfg.output_path = g.out.clone();
    }
    langs.fit.apply(&mut cfg.fit);
    Ok(cfg)
}

fn sweep_config(g: &Global, args: &SweepArgs) -> Result<SweepConfig> {
    let mut cfg = base_config(g, &args.langs)?;
    if let Some(n) = args.episodes {
        cfg.episodes_per_point = n;
    }
    if let Some(s) = &args.strategies {
        cfg.strategies = s.clone();
    }
    if let Some(kind) = g.policy {
        cfg.strategies = vec![match kind {
            PolicyKind::SemanticRisk => Strategy::SmEqualized,
            PolicyKind::EffectivenessRisk => Strategy::EmEqualized,
            PolicyKind::None => Strategy::NoEqualization,
            PolicyKind::Fixed(..) => {
                bail!("fixed policies are only available to `episode` and `metrics`")
            }
        }];
    }
    Ok(cfg)
}

fn parse_start(s: &str, grid: &GridConfig) -> Result<Observation> {
    let v: Vec<i32> = s
        .split(',')
        .map(|p| p.trim().parse().with_context(|| format!("bad start {s:?}")))
        .collect::<Result<_>>()?;
    let [ac, ar, tc, tr] = v[..] else {
        bail!("start needs four integers, got {s:?}");
    };
    let obs = Observation::new(Cell::new(ac, ar), Cell::new(tc, tr));
    grid.check(&obs)?;
    Ok(obs)
}

#[allow(clippy::too_many_arguments)]
fn run_episode(
    g: &Global,
    langs: &LangArgs,
    strategy: Strategy,
    snr: ExtReal,
    beta: ExtReal,
    episode: u64,
    point: u64,
    start: Option<&str>,
) -> Result<()> {
    let mut cfg = base_config(g, langs)?;
    let custom = g.policy.filter(|k| *k != PolicyKind::None);
    cfg.strategies = vec![if custom.is_some() {
        Strategy::SmEqualized
    } else {
        strategy
    }];
    let setup = cfg.setup()?;
    let start = match start {
        Some(s) => parse_start(s, setup.grid())?,
        None => episode_start(setup.grid(), cfg.eval_seed, episode),
    };
    let channel = ChannelConfig::new(snr.value())?;
    let seed = episode_seed(cfg.eval_seed, point, episode);
    let (label, (length, success, steps)) = match custom {
        Some(kind) => {
            let policy = Policy::build(
                kind,
                setup.codebook(),
                setup.source(),
                setup.target(),
                cfg.q_source,
            )?;
            let eq = equalize(setup.source(), &policy, cfg.clip)?;
            let wiring = Wiring {
                symbols: eq.symbols(),
                decoder: setup.target(),
            };
            let label = match kind {
                PolicyKind::Fixed(i, j) => format!("fixed:{i},{j}"),
                PolicyKind::SemanticRisk => "sm".into(),
                _ => "em".into(),
            };
            (
                format!("policy {label}"),
                setup.trace_wired(wiring, start, &channel, beta.value(), seed)?,
            )
        }
        None => {
            let wiring = setup.wiring(strategy)?;
            (
                strategy.to_string(),
                setup.trace_wired(wiring, start, &channel, beta.value(), seed)?,
            )
        }
    };
    let mut text = String::new();
    text.push_str(&format!(
        "# {label} snr_db={snr} beta={beta} seed={seed} start {start}\n"
    ));
    for (k, s) in steps.iter().enumerate() {
        text.push_str(&format!(
            "{} {} sent=({}, {}) received=({}, {}) action={}\n",
            k + 1,
            s.observation,
            s.sent.x1,
            s.sent.x2,
            s.received.x1,
            s.received.x2,
            s.action.name()
        ));
    }
    text.push_str(&format!("length={length} success={success}\n"));
    emit(g.out.as_deref(), text.as_bytes())
}
