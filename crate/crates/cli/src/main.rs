//! Command-line front end for the covering-number and dimension-profile
//! library.
//!
//! Every subcommand reads exact rational parameters, runs the corresponding
//! library pipeline, and writes a serialized report. Identical invocations
//! (including the seed) produce byte-identical output files: all arithmetic
//! is exact, sampling is driven by a seeded deterministic generator, and
//! execution is sequential. Exit status is 0 on success, 1 when a check
//! command finds a violated invariant, and 2 on usage or input errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use covdim::blocks::{block_cover_upper, lemma51_bound, BlockCoverReport, BlockSet};
use covdim::construction::{
    bookkeeping_product, psi_n, syndetic_check, verify_expansivity, Construction,
    ExpansivityReport, SyndeticReport,
};
use covdim::cover::{
    cover_number_exact, cover_number_greedy, separated_lower_bound, CoverConfig, CoverResult,
    FiniteMetricSpace,
};
use covdim::factor::ProjectionFactor;
use covdim::geometry::{Dyadic, DyadicVec, QGrid};
use covdim::numeric::{parse_rat, rat_to_string, Rat};
use covdim::profile::{
    conditional_profile, profile_s, rate_estimate, ProfileTable, RateEstimate, SystemSpec,
};
use covdim::waist::{
    builtin_map, waist_check_cover, waist_check_measure, GridMap, WaistCoverReport,
    WaistMeasureReport, BUILTIN_MAPS,
};
use covdim::word::window_linf_dist;

#[derive(Parser)]
#[command(
    name = "covdim",
    version,
    about = "Certified covering numbers, dimension profiles, waist checks, \
             and subshift construction reports"
)]
struct Cli {
    /// Read the whole run configuration from a JSON file instead of flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write the report to this file; print to stdout when omitted.
    #[arg(long, short = 'o', global = true, value_name = "FILE")]
    output: Option<PathBuf>,

    /// Report format. csv applies to profile tables only.
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,

    /// Seed for sampling operations (the verify subcommand's random pairs).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Upper bound on worker threads. The pipelines are sequential by
    /// design so results never depend on this cap; any value >= 1 works.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    #[command(subcommand)]
    command: Option<CommandSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CheckKind {
    Measure,
    Cover,
    Both,
}

/// One complete run request: a subcommand plus the shared plumbing fields.
/// This is also the schema of `--config` files.
#[derive(Serialize, Deserialize)]
struct RunConfig {
    #[serde(flatten)]
    command: CommandSpec,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    format: Option<OutFormat>,
    #[serde(default = "default_threads")]
    threads: u64,
}

fn default_threads() -> u64 {
    1
}

fn default_verify_q() -> u32 {
    3
}

fn default_verify_samples() -> u32 {
    200
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum CommandSpec {
    /// Certified covering bounds for a finite point set under the sup metric.
    Cover {
        /// JSON file: an array of points, each an array of dyadic rational
        /// coordinate strings inside [0, 1].
        #[arg(long, value_name = "FILE")]
        points: PathBuf,
        /// Covering scale, an exact rational string such as 1/4.
        #[arg(long)]
        eps: String,
        /// Point-count cap for the exact branch-and-bound solver.
        #[arg(long)]
        #[serde(default)]
        cap: Option<usize>,
    },
    /// Finite-scale profile of a quantized system: certified log-count
    /// brackets per (horizon, scale) cell.
    Profile {
        /// System family: fullshift or singleton.
        #[arg(long)]
        system: String,
        /// Coordinate dimension of the symbol cube.
        #[arg(long)]
        a: u32,
        /// Resolution: symbols live on the axis grid of step 2^-q.
        #[arg(long)]
        q: u32,
        /// Comma-separated scales, each a dyadic rational like 1/2.
        #[arg(long)]
        eps: String,
        /// Horizons: a comma list (1,2,8) or an inclusive range (1..16).
        #[arg(long = "N", value_name = "SPEC")]
        #[serde(rename = "N")]
        horizons: String,
        /// Append certified rate brackets per scale (needs >= 2 horizons).
        #[arg(long)]
        #[serde(default)]
        rate: bool,
    },
    /// Conditional profile of the coordinate projection factor: worst-fiber
    /// log-count brackets per (horizon, scale) cell.
    Conditional {
        /// Domain symbol dimension.
        #[arg(long)]
        a: u32,
        /// Retained coordinate count (b < a are projected away).
        #[arg(long)]
        b: u32,
        /// Resolution: symbols live on the axis grid of step 2^-q.
        #[arg(long)]
        q: u32,
        /// Fiber-ball radius, a dyadic rational string.
        #[arg(long)]
        delta: String,
        /// Comma-separated scales, each a dyadic rational like 1/4.
        #[arg(long)]
        eps: String,
        /// Horizons: a comma list (1,2,8) or an inclusive range (1..16).
        #[arg(long = "N", value_name = "SPEC")]
        #[serde(rename = "N")]
        horizons: String,
        /// Append certified rate brackets per scale (needs >= 2 horizons).
        #[arg(long)]
        #[serde(default)]
        rate: bool,
    },
    /// Waist checks for a grid map: fiber neighborhood measure and
    /// separated-family cardinality against the closed-form thresholds.
    Waist {
        /// Built-in map name (proj_2_1, identity_2, saddle_2_1, ...) or a
        /// path to a grid-map JSON file.
        #[arg(long)]
        map: String,
        /// Resolution for built-in maps; file-based maps carry their own.
        #[arg(long)]
        #[serde(default)]
        q: Option<u32>,
        /// Comma-separated neighborhood radii, dyadic rationals in (0, 1/2).
        #[arg(long)]
        r: String,
        /// Which check to run; both when omitted.
        #[arg(long, value_enum)]
        #[serde(default)]
        check: Option<CheckKind>,
    },
    /// Block-system covering bound: the closed-form phase-decomposition
    /// formula, optionally compared against a direct greedy cover.
    Block {
        /// Path to a block-set JSON file (kind explicit or box).
        #[arg(long, value_name = "FILE")]
        #[serde(default)]
        set: Option<PathBuf>,
        /// Closed-form mode: certified cover count of the block set.
        #[arg(long)]
        #[serde(default)]
        count: Option<u64>,
        /// Closed-form mode: block length N.
        #[arg(long = "block-len")]
        #[serde(default)]
        block_len: Option<u32>,
        /// Orbit-segment horizon L.
        #[arg(long = "L")]
        #[serde(rename = "L")]
        horizon: u64,
        /// Covering scale, an exact rational string.
        #[arg(long)]
        eps: String,
        /// Also run a direct greedy cover on sampled phase words.
        #[arg(long)]
        #[serde(default)]
        direct: bool,
    },
    /// Build the level tower of the minimal-subshift construction and
    /// report its exact bookkeeping.
    Construct {
        /// Symbol cube dimension.
        #[arg(long)]
        a: u32,
        /// Target density ratio, an exact rational in [0, a).
        #[arg(long)]
        s: String,
        /// Number of levels to build.
        #[arg(long)]
        depth: u32,
    },
    /// Build a construction and run its verification suite: transition
    /// arithmetic, expansivity on the quantized grid, recurrence gaps, and
    /// sampled window isometry.
    Verify {
        /// Symbol cube dimension.
        #[arg(long)]
        a: u32,
        /// Target density ratio, an exact rational in [0, a).
        #[arg(long)]
        s: String,
        /// Number of levels to build.
        #[arg(long)]
        depth: u32,
        /// Grid resolution for the exhaustive expansivity pair sweep.
        #[arg(long, default_value_t = 3)]
        #[serde(default = "default_verify_q")]
        q: u32,
        /// Random pair count per level for the window-isometry check.
        #[arg(long, default_value_t = 200)]
        #[serde(default = "default_verify_samples")]
        samples: u32,
    },
}

/// A finished run: the rendered artifact, its verdict, and any violated
/// invariants (identifier plus a minimal witness each).
struct Report {
    rendered: String,
    summary: String,
    failures: Vec<String>,
    pass: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let config = if let Some(path) = &cli.config {
        if cli.command.is_some() {
            bail!("--config replaces the subcommand; pass one or the other");
        }
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut file_config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))?;
        // Explicit flags override the file's plumbing fields.
        if let Some(output) = cli.output {
            file_config.output = Some(output);
        }
        if let Some(format) = cli.format {
            file_config.format = Some(format);
        }
        if let Some(seed) = cli.seed {
            file_config.seed = seed;
        }
        if let Some(threads) = cli.threads {
            file_config.threads = threads;
        }
        file_config
    } else {
        let command = cli
            .command
            .ok_or_else(|| anyhow!("missing subcommand; run with --help for the list"))?;
        RunConfig {
            command,
            seed: cli.seed.unwrap_or(0),
            output: cli.output,
            format: cli.format,
            threads: cli.threads.unwrap_or(1),
        }
    };
    if config.threads < 1 {
        bail!("--threads must be at least 1");
    }
    let format = config.format.unwrap_or(OutFormat::Json);
    let report = dispatch(&config.command, config.seed, format)?;
    deliver(report, &config.output)
}

fn dispatch(command: &CommandSpec, seed: u64, format: OutFormat) -> Result<Report> {
    match command {
        CommandSpec::Cover { points, eps, cap } => {
            require_json(format, "cover")?;
            cmd_cover(points, eps, *cap)
        }
        CommandSpec::Profile {
            system,
            a,
            q,
            eps,
            horizons,
            rate,
        } => cmd_profile(system, *a, *q, eps, horizons, *rate, format),
        CommandSpec::Conditional {
            a,
            b,
            q,
            delta,
            eps,
            horizons,
            rate,
        } => cmd_conditional(*a, *b, *q, delta, eps, horizons, *rate, format),
        CommandSpec::Waist { map, q, r, check } => {
            require_json(format, "waist")?;
            cmd_waist(map, *q, r, check.unwrap_or(CheckKind::Both))
        }
        CommandSpec::Block {
            set,
            count,
            block_len,
            horizon,
            eps,
            direct,
        } => {
            require_json(format, "block")?;
            cmd_block(set.as_deref(), *count, *block_len, *horizon, eps, *direct)
        }
        CommandSpec::Construct { a, s, depth } => {
            require_json(format, "construct")?;
            cmd_construct(*a, s, *depth)
        }
        CommandSpec::Verify {
            a,
            s,
            depth,
            q,
            samples,
        } => {
            require_json(format, "verify")?;
            cmd_verify(*a, s, *depth, *q, *samples, seed)
        }
    }
}

fn deliver(report: Report, output: &Option<PathBuf>) -> Result<u8> {
    for line in &report.failures {
        println!("FAIL {line}");
    }
    match output {
        Some(path) => {
            fs::write(path, report.rendered.as_bytes())
                .with_context(|| format!("writing report to {}", path.display()))?;
            println!("{} -> {}", report.summary, path.display());
        }
        None => print!("{}", report.rendered),
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn require_json(format: OutFormat, command: &str) -> Result<()> {
    if format != OutFormat::Json {
        bail!("the {command} subcommand reports JSON only; drop --format csv");
    }
    Ok(())
}

fn render_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn parse_rational(label: &str, text: &str) -> Result<Rat> {
    parse_rat(text.trim()).map_err(|e| anyhow!("{label}: {e}"))
}

fn parse_dyadic(label: &str, text: &str) -> Result<Dyadic> {
    let r = parse_rational(label, text)?;
    Dyadic::from_rat(&r).map_err(|e| anyhow!("{label}: {e}"))
}

fn parse_dyadic_list(label: &str, text: &str) -> Result<Vec<Dyadic>> {
    let items: Vec<Dyadic> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_dyadic(label, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("{label}: expected at least one value");
    }
    Ok(items)
}

const HORIZON_SPAN_CAP: u32 = 4096;

fn parse_horizons(text: &str) -> Result<Vec<u32>> {
    let spec = text.trim();
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u32 = lo.trim().parse().context("horizon range start")?;
        let hi: u32 = hi.trim().parse().context("horizon range end")?;
        if lo == 0 || hi < lo {
            bail!("horizon range must satisfy 1 <= start <= end, got {spec}");
        }
        if hi - lo >= HORIZON_SPAN_CAP {
            bail!("horizon range spans more than {HORIZON_SPAN_CAP} values");
        }
        return Ok((lo..=hi).collect());
    }
    let items: Vec<u32> = spec
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<u32>().context("horizon list entry"))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("expected at least one horizon");
    }
    Ok(items)
}

#[derive(Serialize)]
struct CoverArtifact {
    points: usize,
    eps: String,
    exact_cap: usize,
    separated: CoverResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<CoverResult>,
    greedy: CoverResult,
}

fn cmd_cover(points_path: &std::path::Path, eps_text: &str, cap: Option<usize>) -> Result<Report> {
    let text = fs::read_to_string(points_path)
        .with_context(|| format!("reading point file {}", points_path.display()))?;
    let raw: Vec<Vec<String>> = serde_json::from_str(&text)
        .with_context(|| format!("parsing point file {}", points_path.display()))?;
    let mut points = Vec::with_capacity(raw.len());
    for (i, coords) in raw.iter().enumerate() {
        let parsed: Vec<Dyadic> = coords
            .iter()
            .map(|c| parse_dyadic(&format!("point {i}"), c))
            .collect::<Result<_>>()?;
        points.push(DyadicVec::new(parsed));
    }
    let eps = parse_rational("--eps", eps_text)?;
    let space = FiniteMetricSpace::from_points_linf(&points)?;
    let config = match cap {
        Some(c) => CoverConfig::with_cap(c),
        None => CoverConfig::default(),
    };
    let separated = separated_lower_bound(&space, &eps, &config)?;
    let greedy = cover_number_greedy(&space, &eps)?;
    let exact = if space.len() <= config.exact_cap {
        Some(cover_number_exact(&space, &eps, &config)?)
    } else {
        None
    };
    let artifact = CoverArtifact {
        points: space.len(),
        eps: rat_to_string(&eps),
        exact_cap: config.exact_cap,
        separated,
        exact,
        greedy,
    };
    Ok(Report {
        rendered: render_json(&artifact)?,
        summary: format!("cover ({} points, eps {})", artifact.points, artifact.eps),
        failures: Vec::new(),
        pass: true,
    })
}

#[derive(Serialize)]
struct ProfileArtifact {
    table: ProfileTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    rates: Option<Vec<RateEstimate>>,
}

fn table_report(
    table: ProfileTable,
    epss: &[Dyadic],
    rate: bool,
    format: OutFormat,
    summary: String,
) -> Result<Report> {
    if format == OutFormat::Csv {
        if rate {
            bail!("--rate reports JSON only; drop --format csv");
        }
        return Ok(Report {
            rendered: table.to_csv(),
            summary,
            failures: Vec::new(),
            pass: true,
        });
    }
    let rates = if rate {
        let mut out = Vec::with_capacity(epss.len());
        for eps in epss {
            out.push(rate_estimate(&table, eps)?);
        }
        Some(out)
    } else {
        None
    };
    let artifact = ProfileArtifact { table, rates };
    Ok(Report {
        rendered: render_json(&artifact)?,
        summary,
        failures: Vec::new(),
        pass: true,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_profile(
    system: &str,
    a: u32,
    q: u32,
    eps_text: &str,
    horizons_text: &str,
    rate: bool,
    format: OutFormat,
) -> Result<Report> {
    let spec = match system.to_ascii_lowercase().as_str() {
        "fullshift" | "full-shift" => SystemSpec::FullShift { a, q },
        "singleton" => SystemSpec::Singleton { a },
        other => bail!("unknown system {other:?}; expected fullshift or singleton"),
    };
    let epss = parse_dyadic_list("--eps", eps_text)?;
    let ns = parse_horizons(horizons_text)?;
    let table = profile_s(&spec, &ns, &epss, &CoverConfig::default())?;
    let summary = format!("profile {system} (a={a}, q={q}, {} cells)", table.rows.len());
    table_report(table, &epss, rate, format, summary)
}

#[allow(clippy::too_many_arguments)]
fn cmd_conditional(
    a: u32,
    b: u32,
    q: u32,
    delta_text: &str,
    eps_text: &str,
    horizons_text: &str,
    rate: bool,
    format: OutFormat,
) -> Result<Report> {
    let map = ProjectionFactor::new(a, b)?;
    let delta = parse_dyadic("--delta", delta_text)?;
    let epss = parse_dyadic_list("--eps", eps_text)?;
    let ns = parse_horizons(horizons_text)?;
    let table = conditional_profile(&map, q, &delta, &ns, &epss)?;
    let summary = format!(
        "conditional projection {a}->{b} (q={q}, delta={delta}, {} cells)",
        table.rows.len()
    );
    table_report(table, &epss, rate, format, summary)
}

#[derive(Serialize)]
struct WaistArtifact {
    map: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    measure: Option<WaistMeasureReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cover: Option<WaistCoverReport>,
    pass: bool,
}

fn cmd_waist(map_name: &str, q: Option<u32>, r_text: &str, check: CheckKind) -> Result<Report> {
    let map = if BUILTIN_MAPS.contains(&map_name) {
        builtin_map(map_name, q.unwrap_or(4))?
    } else {
        if q.is_some() {
            bail!("--q applies to built-in maps only; file-based maps carry their resolution");
        }
        let text = fs::read_to_string(map_name)
            .with_context(|| format!("reading map file {map_name}"))?;
        serde_json::from_str::<GridMap>(&text)
            .with_context(|| format!("parsing map file {map_name}"))?
    };
    let radii = parse_dyadic_list("--r", r_text)?;

    let measure = if matches!(check, CheckKind::Measure | CheckKind::Both) {
        Some(waist_check_measure(&map, &radii)?)
    } else {
        None
    };
    let cover = if matches!(check, CheckKind::Cover | CheckKind::Both) {
        Some(waist_check_cover(&map, &radii)?)
    } else {
        None
    };

    let mut failures = Vec::new();
    if let Some(m) = &measure {
        for row in m.rows.iter().filter(|row| !row.pass) {
            failures.push(format!(
                "waist.measure map={map_name} r={} ratio_upper={} (needs >= 1)",
                row.r,
                rat_to_string(&row.ratio_upper)
            ));
        }
    }
    if let Some(c) = &cover {
        for row in c.rows.iter().filter(|row| !row.pass) {
            failures.push(format!(
                "waist.cover map={map_name} r={} separated={} required={}",
                row.r,
                row.separated_count,
                rat_to_string(&row.required)
            ));
        }
    }
    let pass = measure.as_ref().is_none_or(|m| m.pass)
        && cover.as_ref().is_none_or(|c| c.pass);
    let artifact = WaistArtifact {
        map: map_name.to_string(),
        measure,
        cover,
        pass,
    };
    Ok(Report {
        rendered: render_json(&artifact)?,
        summary: format!(
            "waist {map_name}: {}",
            if pass { "PASS" } else { "FAIL" }
        ),
        failures,
        pass,
    })
}

#[derive(Serialize)]
struct BlockFormulaArtifact {
    #[serde(rename = "N")]
    block_len: u32,
    #[serde(rename = "L")]
    horizon: u64,
    count: String,
    eps: String,
    formula: String,
}

fn cmd_block(
    set: Option<&std::path::Path>,
    count: Option<u64>,
    block_len: Option<u32>,
    horizon: u64,
    eps_text: &str,
    direct: bool,
) -> Result<Report> {
    let eps = parse_rational("--eps", eps_text)?;
    match (set, count) {
        (Some(path), None) => {
            if block_len.is_some() {
                bail!("--block-len belongs to the closed-form mode; the set file fixes N");
            }
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading block-set file {}", path.display()))?;
            let k: BlockSet = serde_json::from_str(&text)
                .with_context(|| format!("parsing block-set file {}", path.display()))?;
            let report: BlockCoverReport =
                block_cover_upper(&k, horizon, &eps, &CoverConfig::default(), direct)?;
            let summary = format!(
                "block set {} (N={}, L={horizon}): formula {}",
                path.display(),
                report.n,
                report.formula
            );
            Ok(Report {
                rendered: render_json(&report)?,
                summary,
                failures: Vec::new(),
                pass: true,
            })
        }
        (None, Some(c)) => {
            let n = block_len
                .ok_or_else(|| anyhow!("closed-form mode needs --block-len alongside --count"))?;
            if direct {
                bail!("--direct needs a block-set file; the closed-form mode has no blocks");
            }
            let formula = lemma51_bound(&BigUint::from(c), n, horizon, &eps)?;
            let artifact = BlockFormulaArtifact {
                block_len: n,
                horizon,
                count: c.to_string(),
                eps: rat_to_string(&eps),
                formula: formula.to_string(),
            };
            Ok(Report {
                summary: format!("block formula (N={n}, L={horizon}): {}", artifact.formula),
                rendered: render_json(&artifact)?,
                failures: Vec::new(),
                pass: true,
            })
        }
        _ => bail!("pass exactly one of --set FILE or --count C with --block-len N"),
    }
}

fn cmd_construct(a: u32, s_text: &str, depth: u32) -> Result<Report> {
    let target = parse_rational("--s", s_text)?;
    let c = Construction::build(a, &target, depth)?;
    let summary = format!(
        "construct a={a} depth={depth}: achieved ratio {}",
        rat_to_string(&c.achieved_ratio)
    );
    Ok(Report {
        rendered: render_json(&c)?,
        summary,
        failures: Vec::new(),
        pass: true,
    })
}

#[derive(Serialize)]
struct IsometryWitness {
    x: Vec<String>,
    y: Vec<String>,
    window_dist: String,
    input_dist: String,
}

#[derive(Serialize)]
struct IsometryLevel {
    level: u32,
    horizon: u64,
    samples: u32,
    mismatches: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_mismatch: Option<IsometryWitness>,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyArtifact {
    a: u32,
    s_target: String,
    depth: u32,
    q: u32,
    seed: u64,
    samples: u32,
    achieved_ratio: String,
    recursion_ok: bool,
    density_ok: bool,
    expansivity: ExpansivityReport,
    syndetic: Vec<SyndeticReport>,
    isometry: Vec<IsometryLevel>,
    pass: bool,
}

const VERIFY_PAIR_CAP: u128 = 10_000;

fn cmd_verify(a: u32, s_text: &str, depth: u32, q: u32, samples: u32, seed: u64) -> Result<Report> {
    let target = parse_rational("--s", s_text)?;
    let c = Construction::build(a, &target, depth)?;
    let mut failures = Vec::new();

    let mut recursion_ok = true;
    for n in 1..depth {
        let lv = c.level(n)?;
        let nx = c.level(n + 1)?;
        let (p, qn) = match (lv.p, lv.q) {
            (Some(p), Some(qn)) => (p, qn),
            _ => bail!("level {n} is missing its transition budgets"),
        };
        if nx.block_len != p * lv.block_len || nx.free_slots != (p - qn) * lv.free_slots {
            recursion_ok = false;
            failures.push(format!(
                "verify.recursion level={n} N'={} M'={} p={p} q={qn} N={} M={}",
                nx.block_len, nx.free_slots, lv.block_len, lv.free_slots
            ));
        }
    }

    let mut density_ok = true;
    let mut expected = Rat::from_integer(a.into());
    for n in 1..=depth {
        let lv = c.level(n)?;
        if Rat::from_integer(a.into()) * lv.density() != expected {
            density_ok = false;
            failures.push(format!(
                "verify.density level={n} a*M/N={} expected={}",
                rat_to_string(&(Rat::from_integer(a.into()) * lv.density())),
                rat_to_string(&expected)
            ));
        }
        if let Some(r) = &lv.r {
            expected *= Rat::from_integer(1.into()) - r;
        }
    }
    if c.achieved_ratio != bookkeeping_product(&c)? || c.achieved_ratio < target {
        density_ok = false;
        failures.push(format!(
            "verify.density achieved={} target={}",
            rat_to_string(&c.achieved_ratio),
            rat_to_string(&target)
        ));
    }

    let grid = QGrid::new(a, q)?;
    let point_count = grid
        .points_total()
        .ok_or_else(|| anyhow!("quantized grid size overflows"))?;
    let pair_count = point_count
        .checked_mul(point_count)
        .ok_or_else(|| anyhow!("quantized pair count overflows"))?;
    if pair_count > VERIFY_PAIR_CAP {
        bail!(
            "expansivity sweep needs {pair_count} pairs at q={q}, above the cap \
             {VERIFY_PAIR_CAP}; lower --q"
        );
    }
    let points = covdim::geometry::enumerate_grid(&grid, VERIFY_PAIR_CAP as u64)?;
    let mut pairs = Vec::with_capacity(points.len() * points.len());
    for x in &points {
        for y in &points {
            pairs.push((x.coords().to_vec(), y.coords().to_vec()));
        }
    }
    let expansivity = verify_expansivity(&c, 1, &pairs)?;
    if !expansivity.pass {
        let witness = expansivity
            .violations
            .first()
            .map(|v| serde_json::to_string(v).unwrap_or_default())
            .unwrap_or_default();
        failures.push(format!("verify.expansivity level=1 witness={witness}"));
    }

    let mut syndetic = Vec::new();
    for n in 1..depth {
        let report = syndetic_check(&c, n, depth)?;
        if !report.pass {
            failures.push(format!(
                "verify.syndetic level={n} worst_error={} tolerance={}",
                rat_to_string(&report.worst_error),
                rat_to_string(&report.tolerance)
            ));
        }
        syndetic.push(report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut isometry = Vec::new();
    for n in 1..=depth {
        let lv = c.level(n)?;
        let dim = (a as u64 * lv.free_slots) as usize;
        let horizon = lv.block_len;
        let mut mismatches = 0usize;
        let mut first_mismatch = None;
        for _ in 0..samples {
            let x: Vec<Dyadic> = (0..dim)
                .map(|_| Dyadic::new(rng.gen_range(0..=64), 6))
                .collect::<covdim::Result<_>>()?;
            let y: Vec<Dyadic> = (0..dim)
                .map(|_| Dyadic::new(rng.gen_range(0..=64), 6))
                .collect::<covdim::Result<_>>()?;
            let wx = psi_n(&c, n, &x, depth)?;
            let wy = psi_n(&c, n, &y, depth)?;
            let window = window_linf_dist(&wx, &wy, 0, horizon as i64 - 1)?;
            let mut direct = Rat::from_integer(0.into());
            for i in 0..dim {
                direct = direct.max(x[i].abs_diff(&y[i])?.value());
            }
            if window.value() != direct {
                mismatches += 1;
                if first_mismatch.is_none() {
                    first_mismatch = Some(IsometryWitness {
                        x: x.iter().map(Dyadic::to_string).collect(),
                        y: y.iter().map(Dyadic::to_string).collect(),
                        window_dist: window.to_string(),
                        input_dist: rat_to_string(&direct),
                    });
                }
            }
        }
        let pass = mismatches == 0;
        if !pass {
            failures.push(format!(
                "verify.isometry level={n} mismatches={mismatches} of {samples}"
            ));
        }
        isometry.push(IsometryLevel {
            level: n,
            horizon,
            samples,
            mismatches,
            first_mismatch,
            pass,
        });
    }

    let pass = recursion_ok
        && density_ok
        && expansivity.pass
        && syndetic.iter().all(|r| r.pass)
        && isometry.iter().all(|r| r.pass);
    let artifact = VerifyArtifact {
        a,
        s_target: rat_to_string(&target),
        depth,
        q,
        seed,
        samples,
        achieved_ratio: rat_to_string(&c.achieved_ratio),
        recursion_ok,
        density_ok,
        expansivity,
        syndetic,
        isometry,
        pass,
    };
    Ok(Report {
        rendered: render_json(&artifact)?,
        summary: format!(
            "verify a={a} depth={depth}: {}",
            if pass { "PASS" } else { "FAIL" }
        ),
        failures,
        pass,
    })
}
