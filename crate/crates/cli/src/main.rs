use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use snlab_core::sweep::{apply_overrides, emit, parse_config, run_sweep, Kind, SweepConfig};

/// Saddle-node intermittency experiments for the quadratic family.
#[derive(Parser)]
#[command(name = "snlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bifurcation diagram over a native-parameter window.
    Bifurcation(BifurcationArgs),
    /// Frequency of visits to Ebar on a geometric gamma grid.
    Chi(GammaGrid),
    /// Ladder parameters gamma_l.
    Gammas(Rungs),
    /// Mather invariant on a phase grid.
    Mather(MatherArgs),
    /// Parameters where the critical orbit lands on a repelling periodic point.
    Misiurewicz(MisiurewiczArgs),
    /// Bounded recurrence over a theta window of one rung.
    #[command(name = "br-scan")]
    BrScan(ScanArgs),
    /// Empirical invariant measure.
    Measure(MeasureArgs),
    /// Periodic windows per rung.
    Windows(WindowArgs),
    /// Log-log fits of 1 - chi and mean laminar length against gamma.
    Scaling(GammaGrid),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workers: Option<String>,
    /// Output path, `-` for stdout.
    #[arg(long)]
    output: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Further `key=value` overrides.
    overrides: Vec<String>,
}

#[derive(Args)]
struct BifurcationArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mu_min: Option<String>,
    #[arg(long)]
    mu_max: Option<String>,
    #[arg(long)]
    columns: Option<String>,
    #[arg(long)]
    retained: Option<String>,
}

#[derive(Args)]
struct GammaGrid {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    gamma_min: Option<String>,
    #[arg(long)]
    gamma_max: Option<String>,
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    n: Option<String>,
}

#[derive(Args)]
struct Rungs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lmin: Option<String>,
    #[arg(long)]
    lmax: Option<String>,
}

#[derive(Args)]
struct MatherArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    jmax: Option<String>,
}

#[derive(Args)]
struct MisiurewiczArgs {
    #[command(flatten)]
    common: Common,
    /// Period of the repelling target.
    #[arg(long)]
    period: Option<String>,
    #[arg(long)]
    lmin: Option<String>,
    #[arg(long)]
    lmax: Option<String>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    l: Option<String>,
    /// Centre of the theta window.
    #[arg(long)]
    center: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    common: Common,
    /// base, induced or pushforward.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    bins: Option<String>,
}

#[derive(Args)]
struct WindowArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lmin: Option<String>,
    #[arg(long)]
    lmax: Option<String>,
    #[arg(long)]
    lstep: Option<String>,
    #[arg(long)]
    grid: Option<String>,
}

type Pairs = Vec<(&'static str, Option<String>)>;

fn split(cmd: Cmd) -> (Kind, Common, Pairs) {
    match cmd {
        Cmd::Bifurcation(a) => (
            Kind::Bifurcation,
            a.common,
            vec![
                ("mu_min", a.mu_min),
                ("mu_max", a.mu_max),
                ("columns", a.columns),
                ("retained", a.retained),
            ],
        ),
        Cmd::Chi(g) => grid(Kind::Chi, g),
        Cmd::Scaling(g) => grid(Kind::Scaling, g),
        Cmd::Gammas(a) => (Kind::Gammas, a.common, vec![("l_min", a.lmin), ("l_max", a.lmax)]),
        Cmd::Mather(a) => (Kind::Mather, a.common, vec![("mather_grid", a.grid), ("j_max", a.jmax)]),
        Cmd::Misiurewicz(a) => (
            Kind::Misiurewicz,
            a.common,
            vec![("target_period", a.period), ("l_min", a.lmin), ("l_max", a.lmax)],
        ),
        Cmd::BrScan(a) => (
            Kind::BrScan,
            a.common,
            vec![
                ("l", a.l),
                ("center", a.center),
                ("eps", a.eps),
                ("scan_grid", a.grid),
                ("alpha", a.alpha),
                ("delta", a.delta),
                ("horizon", a.horizon),
            ],
        ),
        Cmd::Measure(a) => (
            Kind::Measure,
            a.common,
            vec![("mode", a.mode), ("gamma", a.gamma), ("n", a.n), ("bins", a.bins)],
        ),
        Cmd::Windows(a) => (
            Kind::Windows,
            a.common,
            vec![
                ("l_min", a.lmin),
                ("l_max", a.lmax),
                ("l_step", a.lstep),
                ("window_grid", a.grid),
            ],
        ),
    }
}

fn grid(kind: Kind, g: GammaGrid) -> (Kind, Common, Pairs) {
    (
        kind,
        g.common,
        vec![
            ("gamma_min", g.gamma_min),
            ("gamma_max", g.gamma_max),
            ("points", g.points),
            ("n", g.n),
        ],
    )
}

enum Failure {
    Config(String),
    Run(anyhow::Error),
}

/// Config file (or defaults), then the subcommand's kind, then flags, then `key=value` overrides.
fn configure(kind: Kind, common: &Common, flags: Pairs) -> Result<SweepConfig, Failure> {
    let base = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| Failure::Config(e.to_string()))?
        }
        None => SweepConfig::default(),
    };
    let mut overrides = vec![("kind".to_string(), kind.name().to_string())];
    let named = [
        ("workers", common.workers.clone()),
        ("output", common.output.clone()),
        ("format", common.format.clone()),
        ("seed", common.seed.clone()),
    ];
    for (k, v) in named.into_iter().chain(flags) {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    }
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("override `{o}` is not of the form key=value")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    apply_overrides(base, &overrides).map_err(|e| Failure::Config(e.to_string()))
}

fn execute(cfg: &SweepConfig) -> anyhow::Result<()> {
    let result = run_sweep(cfg);
    let bytes = emit(&result, cfg.format);
    if cfg.output == "-" {
        std::io::stdout().write_all(&bytes).context("writing to stdout")?;
    } else {
        std::fs::write(&cfg.output, &bytes).with_context(|| format!("writing {}", cfg.output))?;
    }
    let mut err = std::io::stderr();
    for (k, v) in &result.summary {
        writeln!(err, "{k}: {}", v.text())?;
    }
    writeln!(
        err,
        "{} records, {} failed, config {}, {:.3} s",
        result.records.len(),
        result.failures(),
        &result.provenance.config_hash[..12],
        result.provenance.wall_time
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common, flags) = split(cli.cmd);
    let outcome = configure(kind, &common, flags).and_then(|cfg| execute(&cfg).map_err(Failure::Run));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error:\n{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
