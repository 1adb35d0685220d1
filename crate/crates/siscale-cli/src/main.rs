//! `siscale`: batch front-end. One config file describes one experiment;
//! results go to CSV/JSON files in the output directory and a one-line
//! digest goes to stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use siscale::binsim::{self, CodebookSpec, Rates, Summary};
use siscale::dsbs;
use siscale::gaussian::{self, GaussianChain};
use siscale::probcore::{format_sig, DistortionMeasure, JointSource, Matrix, SourceSpec};
use siscale::rateloss::{self, GapCertificate, MseInstance, MseSource};
use siscale::rdopt::{self, AuxChannel, OptimizerConfig};
use siscale::regions::{self, Instance, RegionGrid};
use siscale::{Error, Result};

/// Seed used when neither the config nor `--seed` gives one.
const DEFAULT_SEED: u64 = 20_060_118;

#[derive(Parser, Debug)]
#[command(name = "siscale", version, about = "Side-information scalable source coding toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Instance config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit the timestamp header line from CSV files.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Optimizer simplex grid resolution.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Optimizer random restarts.
    #[arg(long, global = true)]
    restarts: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Inner/outer frontiers and the perfect-scalability certificate.
    Region,
    /// Closed forms and region labels for the doubly symmetric binary source.
    Dsbs,
    /// Gaussian chain: stage rates, active set, covering grid.
    Gaussian,
    /// Squared-error rate-loss certificates.
    Rateloss,
    /// Nested-binning Monte Carlo simulation.
    Simulate,
}

struct Ctx {
    out: PathBuf,
    seed: Option<u64>,
    deterministic: bool,
    grid: Option<usize>,
    restarts: Option<usize>,
    stamp: String,
}

impl Ctx {
    fn optimizer(&self, base: Option<OptimizerConfig>) -> Result<OptimizerConfig> {
        let mut cfg = base.unwrap_or_default();
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(g) = self.grid {
            cfg.grid_resolution = g;
        }
        if let Some(r) = self.restarts {
            cfg.restarts = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, body).map_err(|e| Error::Resource(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_csv(&self, name: &str, body: &str) -> Result<PathBuf> {
        if self.deterministic {
            self.write(name, body)
        } else {
            self.write(name, &format!("{}{}", self.stamp, body))
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidDistribution(_) => "invalid_distribution",
        Error::ShapeMismatch(_) => "shape_mismatch",
        Error::Domain(_) => "domain",
        Error::Infeasible(_) => "infeasible",
        Error::Config(_) => "config",
        Error::Region { .. } => "region",
        Error::Resource(_) => "resource",
        Error::Parse(_) => "parse",
    }
}

/// Distortion pairs: explicit `points`, or the product of `d1` and `d2`.
struct Sweep {
    points: Vec<[f64; 2]>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Sweep {
    fn pairs(&self) -> Result<Vec<(f64, f64)>> {
        let mut v: Vec<(f64, f64)> = self.points.iter().map(|p| (p[0], p[1])).collect();
        for &a in &self.d1 {
            for &b in &self.d2 {
                v.push((a, b));
            }
        }
        if v.is_empty() {
            return Err(Error::Config("no distortion pairs: give `points` or both `d1` and `d2`".into()));
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------- region

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RegionConfig {
    source: SourceSpec,
    #[serde(default)]
    points: Vec<[f64; 2]>,
    #[serde(default)]
    d1: Vec<f64>,
    #[serde(default)]
    d2: Vec<f64>,
    /// Number of `r1` grid points per frontier.
    #[serde(default = "default_frontier_points")]
    frontier_points: usize,
    #[serde(default)]
    optimizer: Option<OptimizerConfig>,
    #[serde(default = "yes")]
    certificate: bool,
}

fn default_frontier_points() -> usize {
    9
}

fn yes() -> bool {
    true
}

fn run_region(ctx: &Ctx, path: &Path) -> Result<String> {
    let cfg: RegionConfig = read_config(path)?;
    cfg.source.validate()?;
    let src = cfg.source.source()?;
    let opt = ctx.optimizer(cfg.optimizer)?;
    let grid = RegionGrid::Auto(cfg.frontier_points);
    let pairs = Sweep { points: cfg.points.clone(), d1: cfg.d1.clone(), d2: cfg.d2.clone() }.pairs()?;
    let mut certs = String::from("index,D1,D2,certificate,r1,r2,wz1,wz2,support_condition\n");
    let mut corners = String::from("index,D1,D2,bound_tag,r1,r_sum\n");
    for (k, &(l1, l2)) in pairs.iter().enumerate() {
        let inst = Instance { src: &src, d1: &cfg.source.d1, d2: &cfg.source.d2, level1: l1, level2: l2 };
        let battery = regions::region_battery(&inst, &opt, &grid)?;
        let mut csv = String::from("r1,r_sum,bound_tag\n");
        for f in [&battery.inner_hat, &battery.inner, &battery.outer_out, &battery.outer_cap] {
            csv.push_str(f.to_csv().split_once('\n').map_or("", |x| x.1));
            if let Some(c) = f.corner() {
                corners.push_str(&format!(
                    "{k},{},{},{},{},{}\n",
                    format_sig(l1),
                    format_sig(l2),
                    f.tag.as_str(),
                    format_sig(c.r1),
                    format_sig(c.r_sum)
                ));
            }
        }
        ctx.write_csv(&format!("region_{k}.csv"), &csv)?;
        if cfg.certificate {
            let cert = regions::perfect_scalability_certificate(&inst, &opt)?;
            let row = match &cert {
                regions::Certificate::Certified { r1, r2, wz1, wz2, support_condition, .. } => {
                    [*r1, *r2, *wz1, *wz2].map(format_sig).join(",") + &format!(",{support_condition}")
                }
                regions::Certificate::Impossible { hb_rate, wz2, .. } => {
                    format!("nan,{},nan,{},nan", format_sig(*hb_rate), format_sig(*wz2))
                }
                regions::Certificate::Inconclusive { best_r1, best_r2, wz1, wz2, support_condition } => {
                    [*best_r1, *best_r2, *wz1, *wz2].map(format_sig).join(",") + &format!(",{support_condition}")
                }
            };
            certs.push_str(&format!("{k},{},{},{},{row}\n", format_sig(l1), format_sig(l2), cert.label()));
        }
    }
    ctx.write_csv("region_corners.csv", &corners)?;
    if cfg.certificate {
        ctx.write_csv("certificates.csv", &certs)?;
    }
    Ok(format!("region: {} distortion pairs, 4 frontiers each -> {}", pairs.len(), ctx.out.display()))
}

// ------------------------------------------------------------------ dsbs

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct DsbsConfig {
    p: f64,
    #[serde(default)]
    points: Vec<[f64; 2]>,
    #[serde(default)]
    d1: Vec<f64>,
    #[serde(default)]
    d2: Vec<f64>,
    /// Also write the region battery frontier for each pair.
    #[serde(default)]
    frontier: bool,
    #[serde(default = "default_frontier_points")]
    frontier_points: usize,
    #[serde(default)]
    optimizer: Option<OptimizerConfig>,
}

fn run_dsbs(ctx: &Ctx, path: &Path) -> Result<String> {
    let cfg: DsbsConfig = read_config(path)?;
    let pairs = Sweep { points: cfg.points.clone(), d1: cfg.d1.clone(), d2: cfg.d2.clone() }.pairs()?;
    let src = JointSource::dsbs(cfg.p)?;
    let ham = DistortionMeasure::hamming(2);
    let dc = dsbs::critical_distortion(cfg.p)?;
    let mut opt: Option<OptimizerConfig> = None;
    let mut csv = String::from("D1,D2,region,R_WZ,R_HB\n");
    for (k, &(l1, l2)) in pairs.iter().enumerate() {
        let region = dsbs::classify_region(cfg.p, l1, l2)?;
        let wz = dsbs::wz_dsbs(cfg.p, l1)?;
        let hb = if region == dsbs::DsbsRegion::ID {
            dsbs::hb_dsbs_region_id(cfg.p, l1, l2)?.rate
        } else {
            let o = match &opt {
                Some(o) => o.clone(),
                None => {
                    let o = ctx.optimizer(cfg.optimizer.clone())?;
                    opt = Some(o.clone());
                    o
                }
            };
            rdopt::heegard_berger_rate(&src, &ham, &ham, l1, l2, &o)?.rate
        };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_sig(l1),
            format_sig(l2),
            region.label(),
            format_sig(wz),
            format_sig(hb)
        ));
        if cfg.frontier {
            let o = ctx.optimizer(cfg.optimizer.clone())?;
            let inst = Instance { src: &src, d1: &ham, d2: &ham, level1: l1, level2: l2 };
            let b = regions::region_battery(&inst, &o, &RegionGrid::Auto(cfg.frontier_points))?;
            let mut f = String::from("r1,r_sum,bound_tag\n");
            for fr in [&b.inner_hat, &b.inner, &b.outer_out, &b.outer_cap] {
                f.push_str(fr.to_csv().split_once('\n').map_or("", |x| x.1));
            }
            ctx.write_csv(&format!("dsbs_frontier_{k}.csv"), &f)?;
        }
    }
    ctx.write_csv("dsbs.csv", &csv)?;
    Ok(format!("dsbs: p={} d_c={} {} pairs -> {}", format_sig(cfg.p), format_sig(dc), pairs.len(), ctx.out.display()))
}

// -------------------------------------------------------------- gaussian

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct GaussianConfig {
    var_x: f64,
    noise_increments: Vec<f64>,
    distortions: Vec<f64>,
    /// Service order; identity when omitted.
    #[serde(default)]
    order: Option<Vec<usize>>,
}

fn run_gaussian(ctx: &Ctx, path: &Path) -> Result<String> {
    let cfg: GaussianConfig = read_config(path)?;
    let chain = GaussianChain::new(cfg.var_x, cfg.noise_increments.clone())?;
    let d = &cfg.distortions;
    let order = cfg.order.clone().unwrap_or_else(|| (0..chain.len()).collect());
    let stages = gaussian::scalable_rates(&chain, d, &order)?;
    let (hb, active) = gaussian::hb_rate_gaussian(&chain, d)?;
    let report = gaussian::perfect_scalability_gaussian(&chain, d, &order)?;
    let grid = gaussian::cover_grid(&chain, d)?;

    let mut csv = String::from("stage,decoder,distortion,rate,cumulative,hb_prefix,wz_rate,perfectly_scalable\n");
    let mut cum = 0.0;
    for (s, (&k, &r)) in order.iter().zip(&stages).enumerate() {
        cum += r;
        let prefix = gaussian::hb_rate_prefix(&chain, d, &order[..=s])?;
        csv.push_str(&format!(
            "{s},{k},{},{},{},{},{},{}\n",
            format_sig(d[k]),
            format_sig(r),
            format_sig(cum),
            format_sig(prefix),
            format_sig(chain.wz_rate(k, d[k])?),
            report.stages[s]
        ));
    }
    ctx.write_csv("gaussian_stages.csv", &csv)?;
    let mut cells = String::from("rank,level,decoder_at_rank,rate\n");
    for (i, row) in grid.cells.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            cells.push_str(&format!("{i},{j},{},{}\n", grid.construction.decoder_at_rank(i), format_sig(*v)));
        }
    }
    ctx.write_csv("cover_grid.csv", &cells)?;
    ctx.write_json(
        "gaussian.json",
        &json!({
            "hb_rate": format_sig(hb),
            "active_set": active,
            "order": order,
            "stage_rates": stages.iter().map(|r| format_sig(*r)).collect::<Vec<_>>(),
            "perfectly_scalable": report.all(),
            "test_noise": grid.construction.test_noise.iter().map(|v| format_sig(*v)).collect::<Vec<_>>(),
        }),
    )?;
    Ok(format!(
        "gaussian: N={} R_HB={} active={:?} perfectly_scalable={} -> {}",
        chain.len(),
        format_sig(hb),
        active,
        report.all(),
        ctx.out.display()
    ))
}

// -------------------------------------------------------------- rateloss

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct RatelossConfig {
    #[serde(default)]
    instances: Vec<MseInstance>,
    /// Gaussian grid: every combination is evaluated.
    #[serde(default)]
    gaussian_grid: Option<GaussianGrid>,
    #[serde(default)]
    optimizer: Option<OptimizerConfig>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct GaussianGrid {
    var_x: Vec<f64>,
    noise1: Vec<f64>,
    /// `null` entries mean no side information at decoder two.
    noise2: Vec<Option<f64>>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn run_rateloss(ctx: &Ctx, path: &Path) -> Result<String> {
    let cfg: RatelossConfig = read_config(path)?;
    let mut instances = cfg.instances;
    if let Some(g) = &cfg.gaussian_grid {
        for &var_x in &g.var_x {
            for &noise1 in &g.noise1 {
                for &noise2 in &g.noise2 {
                    for &d1 in &g.d1 {
                        for &d2 in &g.d2 {
                            instances.push(MseInstance { source: MseSource::Gaussian { var_x, noise1, noise2 }, d1, d2 });
                        }
                    }
                }
            }
        }
    }
    if instances.is_empty() {
        return Err(Error::Config("no instances: give `instances` or `gaussian_grid`".into()));
    }
    let opt = ctx.optimizer(cfg.optimizer)?;
    let mut csv = format!("index,kind,var_x,noise1,noise2,quantization_mse,{}\n", GapCertificate::CSV_HEADER);
    let (mut max_r1, mut max_sum, mut ok) = (f64::NEG_INFINITY, f64::NEG_INFINITY, true);
    for (k, inst) in instances.iter().enumerate() {
        let cert = rateloss::gap_certificate(inst, &opt)?;
        let params = match &inst.source {
            MseSource::Gaussian { var_x, noise1, noise2 } => format!(
                "gaussian,{},{},{},nan",
                format_sig(*var_x),
                format_sig(*noise1),
                noise2.map_or("inf".to_string(), format_sig)
            ),
            MseSource::Quantized { quantization_mse, .. } => format!("quantized,nan,nan,nan,{}", format_sig(*quantization_mse)),
        };
        csv.push_str(&format!("{k},{params},{}\n", cert.csv_row(inst.d1, inst.d2)));
        max_r1 = max_r1.max(cert.gap_r1);
        max_sum = max_sum.max(cert.gap_sum);
        ok &= cert.within_budget;
    }
    ctx.write_csv("rateloss.csv", &csv)?;
    Ok(format!(
        "rateloss: {} instances max_gap_r1={} max_gap_sum={} within_budget={} -> {}",
        instances.len(),
        format_sig(max_r1),
        format_sig(max_sum),
        ok,
        ctx.out.display()
    ))
}

// -------------------------------------------------------------- simulate

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    px_y1: Matrix,
    py2_given_y1: Matrix,
    distortion1: DistortionMeasure,
    distortion2: DistortionMeasure,
    /// `(V, W1, W2)` channel with decoders `f1(w1, y1)` and `f2(w2, y2)`.
    aux: AuxChannel,
    blocklengths: Vec<usize>,
    trials: usize,
    #[serde(default = "default_delta")]
    delta: f64,
    /// Explicit rates; otherwise the conditions times `1 + margin`.
    #[serde(default)]
    rates: Option<Rates>,
    #[serde(default = "default_margin")]
    margin: f64,
    #[serde(default)]
    max_codewords: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
}

fn default_delta() -> f64 {
    binsim::DEFAULT_DELTA
}

fn default_margin() -> f64 {
    0.1
}

#[derive(Serialize)]
struct LabelledSummary<'a> {
    label: &'static str,
    #[serde(flatten)]
    summary: &'a Summary,
}

fn run_simulate(ctx: &Ctx, path: &Path) -> Result<String> {
    let cfg: SimulateConfig = read_config(path)?;
    let src = JointSource::new(cfg.px_y1.clone(), cfg.py2_given_y1.clone())?;
    let rates = match cfg.rates {
        Some(r) => r,
        None => binsim::rates_with_margin(&src, &cfg.aux, cfg.margin)?,
    };
    let check = binsim::rate_check(&src, &cfg.aux, &rates)?;
    let label = if check.guaranteed { "ok" } else { "margin-violated" };
    if !check.guaranteed {
        let failed: Vec<&str> = check.conditions.iter().filter(|c| !c.3).map(|c| c.0.as_str()).collect();
        eprintln!("warning: rate conditions violated: {}", failed.join("; "));
    }
    let seed = ctx.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let mut csv = format!("{}\n", Summary::CSV_HEADER);
    let mut last = f64::NAN;
    for &n in &cfg.blocklengths {
        let mut spec = CodebookSpec::new(n, cfg.delta, rates, binsim_seed(seed, n));
        if let Some(m) = cfg.max_codewords {
            spec.max_codewords = m;
        }
        let suite = binsim::build_codebooks(&spec, &src, &cfg.aux)?;
        let summary = binsim::run_trials(
            &suite,
            &src,
            &cfg.distortion1,
            &cfg.distortion2,
            cfg.trials,
            binsim_seed(seed ^ 0x5EED, n),
            &cfg.aux,
        )?;
        ctx.write_json(&format!("simulate_n{n}.json"), &LabelledSummary { label, summary: &summary })?;
        csv.push_str(&summary.csv_row());
        csv.push('\n');
        last = summary.error_frequency;
    }
    ctx.write_csv("simulate.csv", &csv)?;
    Ok(format!(
        "simulate: {} blocklengths x {} trials label={} last_error={} -> {}",
        cfg.blocklengths.len(),
        cfg.trials,
        label,
        format_sig(last),
        ctx.out.display()
    ))
}

/// Per-blocklength seed so each `n` has its own codebook.
fn binsim_seed(seed: u64, n: usize) -> u64 {
    siscale::rdopt::search::stream_seed(seed, n as u64)
}

fn run(cli: &Cli) -> Result<String> {
    let config = cli.config.as_deref().ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::Resource(format!("cannot create {}: {e}", cli.out.display())))?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let ctx = Ctx {
        out: cli.out.clone(),
        seed: cli.seed,
        deterministic: cli.deterministic,
        grid: cli.grid,
        restarts: cli.restarts,
        stamp: format!("# generated_unix={now}\n"),
    };
    match cli.command {
        Command::Region => run_region(&ctx, config),
        Command::Dsbs => run_dsbs(&ctx, config),
        Command::Gaussian => run_gaussian(&ctx, config),
        Command::Rateloss => run_rateloss(&ctx, config),
        Command::Simulate => run_simulate(&ctx, config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(digest) => {
            println!("{digest}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", json!({ "error": { "kind": error_kind(&e), "message": e.to_string() } }));
            ExitCode::from(2)
        }
    }
}
