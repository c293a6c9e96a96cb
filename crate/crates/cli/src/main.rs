use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use condwalk::excursions::{AnnulusSpec, ChainConfig, ChainMode, ChainSampler};
use condwalk::experiments::{
    kochen_stone_bound, run_big_holes, run_recurrence, run_uniform_law, BigHolesParams, Family, RecurrenceParams, RegionG,
    UniformLawParams, DEFAULT_SEED,
};
use condwalk::hitting::{
    ball_domain, cond_exit_before_inner, cond_hit_before_exit, cond_never_hit_disk, excursion_hit_prob_with,
    prob_hit_other_site, prob_return_same_site, psi_min, psi_n, solve_hitting_exact, srw_hit_before_exit,
    two_target_split,
};
use condwalk::kernel::format_sig17;
use condwalk::par::Execution;
use condwalk::walk::{sample_path, Acceleration, NoObserver, StoppingSpec, WalkKind, Walker};
use condwalk::{Error, LatticePoint, PotentialKernel, RandomSource, VERSION};

/// Directory in which kernel tables are cached as CSV.
const CACHE_ENV: &str = "CONDWALK_KERNEL_CACHE";

/// Largest table built implicitly by `kernel`; farther points use the asymptotic expansion.
const KERNEL_AUTO_LIMIT: f64 = 4096.0;

#[derive(Parser, Debug)]
#[command(name = "condwalk", version, about = "Planar random walk conditioned to avoid the origin")]
struct Cli {
    /// Master seed: an unsigned integer or `random`.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED.to_string())]
    seed: String,
    /// Worker threads for experiments.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Radius of the exact kernel table used by formulas, samplers and experiments.
    #[arg(long, global = true, default_value_t = 256.0)]
    kernel_radius: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Potential kernel value a(x, y).
    Kernel {
        #[arg(long, allow_hyphen_values = true)]
        x: i64,
        #[arg(long, allow_hyphen_values = true)]
        y: i64,
        /// Table radius (defaults to just beyond the point).
        #[arg(long)]
        radius: Option<f64>,
        /// Print only the value.
        #[arg(long)]
        plain: bool,
        /// Also write the whole table as CSV.
        #[arg(long)]
        table_out: Option<PathBuf>,
    },
    /// Closed-form hitting probabilities.
    Prob {
        #[command(subcommand)]
        formula: Formula,
        /// Print only the value.
        #[arg(long, global = true)]
        plain: bool,
    },
    /// Sample walks and excursion chains.
    #[command(subcommand)]
    Sample(SampleCommand),
    /// Run an experiment; exits with 2 when a threshold is violated.
    #[command(subcommand)]
    Exp(ExpCommand),
    /// Exact linear-solve oracle.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Kochen–Stone ratio from probability files.
    KochenStone {
        /// Probabilities separated by commas, spaces or newlines.
        #[arg(long)]
        p_file: PathBuf,
        /// Matrix rows, one per line.
        #[arg(long)]
        pjoint_file: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct PointArgs {
    #[arg(long, allow_hyphen_values = true)]
    x: i64,
    #[arg(long, allow_hyphen_values = true)]
    y: i64,
}

impl PointArgs {
    fn point(self) -> LatticePoint {
        LatticePoint::new(self.x, self.y)
    }
}

#[derive(Subcommand, Debug)]
enum Formula {
    /// Return probability 1 - 1/(2a(x)).
    Return(PointArgs),
    /// Probability of ever hitting the target.
    Hit {
        #[command(flatten)]
        from: PointArgs,
        /// Target site `X,Y`.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
    },
    /// Simple walk: hit the target before leaving B(R).
    SrwAnnulus {
        #[command(flatten)]
        from: PointArgs,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long)]
        radius: f64,
    },
    /// Leave B(R) before entering B(r).
    ExitInner {
        #[command(flatten)]
        from: PointArgs,
        #[arg(long)]
        inner: f64,
        #[arg(long)]
        radius: f64,
    },
    /// Never enter B(r).
    NeverHitDisk {
        #[command(flatten)]
        from: PointArgs,
        #[arg(long)]
        inner: f64,
    },
    /// Hit the target before leaving B(R); with `--n` the excursion annulus of scale n is used.
    ExcursionHit {
        #[command(flatten)]
        from: PointArgs,
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long, required_unless_present = "radius")]
        n: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        m0: f64,
    },
    /// Per-excursion escape probability.
    Psi {
        #[arg(long)]
        n: f64,
    },
    /// Split hitting probabilities into first-hit probabilities.
    TwoSplit {
        #[arg(long)]
        h1: f64,
        #[arg(long)]
        h2: f64,
        #[arg(long)]
        q12: f64,
        #[arg(long)]
        q21: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Simple,
    Conditioned,
}

impl From<KindArg> for WalkKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Simple => WalkKind::Simple,
            KindArg::Conditioned => WalkKind::Conditioned,
        }
    }
}

#[derive(Subcommand, Debug)]
enum SampleCommand {
    /// One walk until it exits B(R) or hits the target.
    Walk {
        #[command(flatten)]
        from: PointArgs,
        #[arg(long, value_enum, default_value_t = KindArg::Conditioned)]
        kind: KindArg,
        #[arg(long)]
        exit: f64,
        #[arg(long, allow_hyphen_values = true)]
        target: Option<String>,
        /// Step-by-step simulation without jumps.
        #[arg(long)]
        naive: bool,
        #[arg(long)]
        step_cap: Option<u64>,
        /// Record the path as CSV (implies --naive).
        #[arg(long)]
        path_out: Option<PathBuf>,
    },
    /// One excursion chain between B(n ln n) and B(n ln^2 n).
    Chain {
        #[arg(long)]
        n: f64,
        /// `direct`, `geometric-count` or `fixed:K`.
        #[arg(long, default_value = "direct")]
        mode: String,
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        x: i64,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        y: i64,
        /// Per-excursion records as JSON lines.
        #[arg(long)]
        jsonl_out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum ExpCommand {
    /// Law of the unvisited fraction of a target set.
    UniformLaw {
        #[arg(long)]
        n: f64,
        #[arg(long)]
        samples: usize,
        /// `circle:r`, `annulus:r1,r2` or `points:FILE`.
        #[arg(long)]
        set: String,
        #[arg(long, default_value_t = 1.0)]
        m0: f64,
        #[arg(long, default_value = "direct")]
        mode: String,
        #[arg(long)]
        naive: bool,
        #[arg(long, default_value_t = 0.20)]
        ks_threshold: f64,
        /// Empirical CDF of V as CSV.
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Avoidance and escape frequencies for scaled copies of a region.
    BigHoles {
        /// Shapes separated by `;`: `box:x0,y0,x1,y1`, `disk:cx,cy,r`, `sector:r_in,r_out,t0,t1`.
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        #[arg(long, default_value_t = 0.1)]
        c3: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        levels: Vec<u32>,
        #[arg(long)]
        samples: usize,
    },
    /// Per-scale hit frequencies of an infinite set, or visit counts of a finite one.
    Recurrence {
        /// `axis` or a finite set spec.
        #[arg(long, default_value = "axis")]
        family: String,
        #[arg(long, default_value_t = 8)]
        scales: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        radius_cap: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Absorption probabilities in B(R): targets versus the boundary.
    Solve {
        #[arg(long)]
        radius: f64,
        #[arg(long, value_enum, default_value_t = KindArg::Conditioned)]
        kind: KindArg,
        /// Target sites `X,Y;X,Y`.
        #[arg(long, allow_hyphen_values = true)]
        targets: String,
        /// Query site.
        #[arg(long, allow_hyphen_values = true)]
        x: Option<i64>,
        #[arg(long, allow_hyphen_values = true)]
        y: Option<i64>,
        /// All probabilities as CSV.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> anyhow::Result<LatticePoint> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("expected X,Y, got '{s}'"))?;
    Ok(LatticePoint::new(a.trim().parse()?, b.trim().parse()?))
}

fn parse_seed(s: &str) -> anyhow::Result<u64> {
    if s == "random" {
        let t = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH)?;
        return Ok(condwalk::rng::mix64(t.as_nanos() as u64));
    }
    s.parse().with_context(|| format!("seed must be an unsigned integer or 'random', got '{s}'"))
}

fn load_kernel(radius: f64) -> anyhow::Result<PotentialKernel> {
    let Ok(dir) = std::env::var(CACHE_ENV) else {
        return Ok(PotentialKernel::build(radius)?);
    };
    let path = Path::new(&dir).join(format!("kernel-{}.csv", radius.floor() as u64));
    if let Ok(file) = std::fs::File::open(&path) {
        if let Ok(k) = PotentialKernel::read_csv(std::io::BufReader::new(file)) {
            return Ok(k);
        }
    }
    let k = PotentialKernel::build(radius)?;
    std::fs::create_dir_all(&dir).ok();
    if let Ok(file) = std::fs::File::create(&path) {
        k.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(k)
}

fn read_numbers(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("bad number '{t}'")))
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => {
            let mut so = std::io::stdout().lock();
            match writeln!(so, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn stamped<T: Serialize>(v: &T) -> anyhow::Result<Value> {
    let mut v = serde_json::to_value(v)?;
    if let Value::Object(m) = &mut v {
        m.insert("version".into(), json!(VERSION));
    }
    Ok(v)
}

fn prob_json(id: &str, value: f64, error_bound: f64) -> Value {
    json!({ "formula": id, "value": value, "error_bound": error_bound, "version": VERSION })
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let out = cli.out.as_deref();
    let exec = Execution::threads(cli.threads);
    match cli.command {
        Command::Kernel { x, y, radius, plain, table_out } => {
            let p = LatticePoint::new(x, y);
            let r = radius.unwrap_or_else(|| (p.norm().ceil() + 1.0).clamp(16.0, KERNEL_AUTO_LIMIT));
            let k = load_kernel(r)?;
            let v = k.get(p);
            if let Some(path) = table_out {
                k.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
            }
            if plain {
                emit(out, &format_sig17(v.value))?;
            } else {
                let j = json!({ "x": x, "y": y, "a": v.value, "error_bound": v.error_bound, "exact": v.exact, "version": VERSION });
                emit(out, &serde_json::to_string_pretty(&j)?)?;
            }
        }
        Command::Prob { formula, plain } => {
            let k = load_kernel(cli.kernel_radius)?;
            let j = match formula {
                Formula::Return(a) => prob_json("return", prob_return_same_site(&k, a.point())?, 0.0),
                Formula::Hit { from, target } => prob_json("hit", prob_hit_other_site(&k, from.point(), parse_point(&target)?)?, 0.0),
                Formula::SrwAnnulus { from, target, radius } => {
                    let p = srw_hit_before_exit(&k, from.point(), parse_point(&target)?, radius)?;
                    prob_json("srw-annulus", p.value, p.error_bound)
                }
                Formula::ExitInner { from, inner, radius } => {
                    let p = cond_exit_before_inner(&k, from.point(), inner, radius)?;
                    prob_json("exit-inner", p.value, p.error_bound)
                }
                Formula::NeverHitDisk { from, inner } => {
                    let p = cond_never_hit_disk(&k, from.point(), inner)?;
                    prob_json("never-hit-disk", p.value, p.error_bound)
                }
                Formula::ExcursionHit { from, target, n, radius, m0 } => {
                    let t = parse_point(&target)?;
                    let p = match (n, radius) {
                        (Some(n), _) => excursion_hit_prob_with(&k, from.point(), t, n, m0)?,
                        (None, Some(r)) => cond_hit_before_exit(&k, from.point(), t, r)?,
                        (None, None) => bail!("--n or --radius is required"),
                    };
                    prob_json("excursion-hit", p.value, p.error_bound)
                }
                Formula::Psi { n } => {
                    let p = psi_n(n)?;
                    let m = psi_min(&k, n)?;
                    let mut j = prob_json("psi", p.value, p.error_bound);
                    j["minimum_over_shell"] = json!({ "value": m.value, "error_bound": m.error_bound });
                    j
                }
                Formula::TwoSplit { h1, h2, q12, q21 } => {
                    let s = two_target_split(h1, h2, q12, q21)?;
                    json!({ "formula": "two-split", "p1": s.p1, "p2": s.p2, "version": VERSION })
                }
            };
            if plain {
                let v = j.get("value").or_else(|| j.get("p1")).cloned().unwrap_or(Value::Null);
                let mut text = v.to_string();
                if let Some(p2) = j.get("p2") {
                    text = format!("{text} {p2}");
                }
                emit(out, &text)?;
            } else {
                emit(out, &serde_json::to_string_pretty(&j)?)?;
            }
        }
        Command::Sample(cmd) => {
            let seed = parse_seed(&cli.seed)?;
            let k = load_kernel(cli.kernel_radius)?;
            let mut rng = RandomSource::new(seed, 0);
            match cmd {
                SampleCommand::Walk { from, kind, exit, target, naive, step_cap, path_out } => {
                    let mut stop = StoppingSpec::exit(exit);
                    if let Some(t) = target {
                        stop = stop.with_target_site(parse_point(&t)?);
                    }
                    if let Some(c) = step_cap {
                        stop = stop.with_step_cap(c);
                    }
                    let j = if let Some(path) = path_out {
                        let tr = sample_path(&k, from.point(), &stop, kind.into(), &mut rng)?;
                        tr.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
                        json!({ "start": tr.start, "end": tr.end(), "reason": tr.stop_reason, "steps": tr.steps.len(), "jumps": 0 })
                    } else {
                        let accel = if naive { Acceleration::Naive } else { Acceleration::FAST };
                        let o = Walker::new(&k, kind.into(), accel).run(from.point(), &stop, &mut rng, &mut NoObserver)?;
                        json!({ "start": from.point(), "end": o.end, "reason": o.reason, "steps": o.steps, "jumps": o.jumps })
                    };
                    let mut j = j;
                    j["seed"] = json!(seed);
                    j["version"] = json!(VERSION);
                    emit(out, &serde_json::to_string_pretty(&j)?)?;
                }
                SampleCommand::Chain { n, mode, x, y, jsonl_out } => {
                    let mode: ChainMode = mode.parse()?;
                    let sampler = ChainSampler::new(&k, AnnulusSpec::new(n)?, ChainConfig { mode, ..Default::default() })?;
                    let chain = sampler.sample(LatticePoint::new(x, y), &mut rng, &mut NoObserver)?;
                    if let Some(path) = jsonl_out {
                        chain.write_jsonl(std::io::BufWriter::new(std::fs::File::create(path)?))?;
                    }
                    let mut j = stamped(&chain)?;
                    j["seed"] = json!(seed);
                    emit(out, &serde_json::to_string_pretty(&j)?)?;
                }
            }
        }
        Command::Exp(cmd) => {
            let seed = parse_seed(&cli.seed)?;
            let k = load_kernel(cli.kernel_radius)?;
            let (text, passed) = match cmd {
                ExpCommand::UniformLaw { n, samples, set, m0, mode, naive, ks_threshold, curve_out } => {
                    let mut p = UniformLawParams::new(n, set.parse()?, samples);
                    p.m0 = m0;
                    p.mode = mode.parse()?;
                    p.ks_threshold = ks_threshold;
                    if naive {
                        p.accel = Acceleration::Naive;
                    }
                    let run = run_uniform_law(&k, &p, seed, exec)?;
                    if let Some(path) = curve_out {
                        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
                        writeln!(w, "s,F")?;
                        for [s, f] in &run.summary.cdf {
                            writeln!(w, "{s},{f}")?;
                        }
                    }
                    (run.to_json()?, run.passed())
                }
                ExpCommand::BigHoles { region, c3, levels, samples } => {
                    let g = RegionG::parse(&region, c3)?;
                    let run = run_big_holes(&k, &BigHolesParams::new(g, levels, samples), seed, exec)?;
                    (run.to_json()?, run.passed())
                }
                ExpCommand::Recurrence { family, scales, samples, radius_cap } => {
                    let fam: Family = family.parse()?;
                    let mut p = RecurrenceParams::new(fam, scales, samples);
                    if let Some(c) = radius_cap {
                        p.radius_cap = c;
                    }
                    let run = run_recurrence(&k, &p, seed, exec)?;
                    (run.to_json()?, run.passed())
                }
            };
            emit(out, &text)?;
            if !passed {
                return Ok(2);
            }
        }
        Command::Oracle(OracleCommand::Solve { radius, kind, targets, x, y, csv_out }) => {
            let k = load_kernel(cli.kernel_radius.max(radius + 1.0))?;
            let targets: Vec<LatticePoint> =
                targets.split(';').filter(|t| !t.trim().is_empty()).map(parse_point).collect::<anyhow::Result<_>>()?;
            let mut exclude: std::collections::HashSet<LatticePoint> = targets.iter().copied().collect();
            let kind: WalkKind = kind.into();
            if kind == WalkKind::Conditioned {
                exclude.insert(LatticePoint::ORIGIN);
            }
            let (interior, boundary) = ball_domain(radius, &exclude);
            let boundary: Vec<LatticePoint> = boundary.into_iter().filter(|p| !exclude.contains(p)).collect();
            let sol = solve_hitting_exact(&k, &interior, &[targets.clone(), boundary], kind)?;
            if let Some(path) = csv_out {
                let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
                writeln!(w, "x,y,p_target,p_exit")?;
                for &p in &sol.sites {
                    let (a, b) = (sol.probability(p, 0).unwrap(), sol.probability(p, 1).unwrap());
                    writeln!(w, "{},{},{a},{b}", p.x, p.y)?;
                }
            }
            let mut j = json!({ "radius": radius, "kind": kind, "targets": targets, "sites": sol.sites.len(), "version": VERSION });
            if let (Some(x), Some(y)) = (x, y) {
                let q = LatticePoint::new(x, y);
                let pt = sol.probability(q, 0).ok_or_else(|| anyhow!("{q} is not an interior site of the domain"))?;
                j["query"] = json!({ "site": q, "p_target": pt, "p_exit": sol.probability(q, 1) });
            }
            emit(out, &serde_json::to_string_pretty(&j)?)?;
        }
        Command::KochenStone { p_file, pjoint_file } => {
            let p = read_numbers(&std::fs::read_to_string(&p_file)?)?;
            let rows: Vec<Vec<f64>> = std::fs::read_to_string(&pjoint_file)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(read_numbers)
                .collect::<anyhow::Result<_>>()?;
            let b = kochen_stone_bound(&p, &rows)?;
            emit(out, &serde_json::to_string_pretty(&json!({ "bound": b, "events": p.len(), "version": VERSION }))?)?;
        }
    }
    Ok(0)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Resource(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
