//! `gmspp`: instance generation, solving, bounds, y-checks, MPS export and
//! the benchmark harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 guard
//! violation (oracle size limit, y-check node limit).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gmspp_core::bench::{self, BenchRow};
use gmspp_core::bendm::{self, master_with_cuts, Method, Packing, SolveConfig, SolveError, SolveReport};
use gmspp_core::cuts::{CutStage, CUT_LOG_HEADER};
use gmspp_core::formulations::{build_bigm, build_master, inject_lower_bound, lp_bigm_bound, lp_pc_bound};
use gmspp_core::instance::{
    format_rational, generate_gmspp, load_instance, parse_spp, rational_to_decimal, save_instance, CostScheme,
    Instance,
};
use gmspp_core::mip::{to_f64, write_mps, MipStatus};
use gmspp_core::normal_positions::NormalPositionTable;
use gmspp_core::oracle::{self, OracleError};
use gmspp_core::ycheck::{oracle_ycheck, ycheck, PruneConfig, Verdict, YCheckError, YCheckInstance};

#[derive(Parser)]
#[command(name = "gmspp", version, about = "Exact solvers for the cost-weighted multiple strip packing problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive multi-strip instances from SPP base files
    Generate {
        /// SPP file or directory of SPP files
        input: PathBuf,
        /// Output directory for instance JSON files
        #[arg(long)]
        out: PathBuf,
        /// Strip counts
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        m: Vec<usize>,
        /// Cost schemes (prop, econ, disecon)
        #[arg(long, value_delimiter = ',', default_value = "prop,econ,disecon")]
        schemes: Vec<CostScheme>,
    },
    /// Solve one instance
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "bendm")]
        method: SolveMethod,
        #[command(flatten)]
        budget: Budget,
        /// Strongest cut stage for BendM
        #[arg(long, value_enum, default_value = "lifted")]
        cuts: CutArg,
        /// Write the solution JSON here
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Write the report JSON here instead of stdout
        #[arg(long)]
        report: Option<PathBuf>,
        /// BendM only: write the master plus all cuts of the run as MPS
        #[arg(long)]
        export_master: Option<PathBuf>,
    },
    /// LP relaxation bounds of both formulations
    Lpbound { instance: PathBuf },
    /// Decide whether x-placed items fit under a height
    Ycheck {
        /// Placement JSON: {"W", "H", "items": [{"j", "p", "w", "h"}]}
        placement: PathBuf,
        /// Pruning toggles as a bit mask: 1 column-load, 2 area, 4 free-space, 8 symmetry, 16 dominance
        #[arg(long, default_value_t = 31, value_parser = clap::value_parser!(u8).range(0..32))]
        prune_mask: u8,
        /// Skip width lifting and strip shrinking
        #[arg(long)]
        no_preprocessing: bool,
        #[arg(long)]
        node_limit: Option<u64>,
        /// Use the brute-force reference check (at most 8 items)
        #[arg(long)]
        oracle: bool,
    },
    /// Write a formulation as fixed-format MPS
    Export {
        instance: PathBuf,
        #[arg(long, value_enum)]
        formulation: Formulation,
        /// Output file; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run methods over a directory of instances and write a CSV
    Bench {
        /// Directory of instance JSON files
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "bigm,bigm-le,bendm")]
        methods: Vec<Method>,
        #[command(flatten)]
        budget: Budget,
        #[arg(long, value_enum, default_value = "lifted")]
        cuts: CutArg,
        /// CSV output; the cut log goes next to it as `<stem>.cuts.csv`
        #[arg(long)]
        out: PathBuf,
        /// Parallel worker slots
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Box-plot summaries (obj, lb, gap per method) from a bench CSV
    Plot {
        csv: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(clap::Args, Clone, Copy)]
struct Budget {
    /// Wall-clock seconds per method and instance
    #[arg(long, default_value_t = 900.0)]
    time_limit: f64,
    /// Run without a time limit
    #[arg(long, conflicts_with = "time_limit")]
    no_time_limit: bool,
    #[arg(long)]
    node_limit: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveMethod {
    Bigm,
    BigmLe,
    Bendm,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum CutArg {
    Standard,
    Combinatorial,
    Lifted,
}

impl From<CutArg> for CutStage {
    fn from(c: CutArg) -> Self {
        match c {
            CutArg::Standard => CutStage::Standard,
            CutArg::Combinatorial => CutStage::Combinatorial,
            CutArg::Lifted => CutStage::Lifted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Formulation {
    Bigm,
    BigmLe,
    Master,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
    Guard(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::YCheck(YCheckError::NodeLimit(_)) => Failure::Guard(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<YCheckError> for Failure {
    fn from(e: YCheckError) -> Self {
        match e {
            YCheckError::NodeLimit(_) | YCheckError::TooManyItems { .. } => Failure::Guard(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::TooLarge { .. } => Failure::Guard(e.to_string()),
            OracleError::YCheck(y) => y.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate { input, out, m, schemes } => generate(&input, &out, &m, &schemes),
        Command::Solve { instance, method, budget, cuts, solution, report, export_master } => {
            solve(&instance, method, budget, cuts, solution.as_deref(), report.as_deref(), export_master.as_deref())
        }
        Command::Lpbound { instance } => lpbound(&instance),
        Command::Ycheck { placement, prune_mask, no_preprocessing, node_limit, oracle } => {
            run_ycheck(&placement, prune_mask, no_preprocessing, node_limit, oracle)
        }
        Command::Export { instance, formulation, out } => export(&instance, formulation, out.as_deref()),
        Command::Bench { dir, methods, budget, cuts, out, jobs } => run_bench(&dir, &methods, budget, cuts, &out, jobs),
        Command::Plot { csv, out_dir } => plot(&csv, &out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Guard(msg)) => {
            eprintln!("guard: {msg}");
            ExitCode::from(3)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load(path: &Path) -> anyhow::Result<Instance> {
    load_instance(&read(path)?).with_context(|| format!("invalid instance {}", path.display()))
}

fn solve_config(budget: Budget, cuts: CutArg) -> Result<SolveConfig, Failure> {
    let time_limit = if budget.no_time_limit {
        None
    } else if budget.time_limit.is_finite() && budget.time_limit > 0.0 {
        Some(Duration::from_secs_f64(budget.time_limit))
    } else {
        return Err(Failure::Usage(format!("--time-limit must be positive, got {}", budget.time_limit)));
    };
    Ok(SolveConfig { time_limit, node_limit: budget.node_limit, cut_stage: cuts.into(), ..SolveConfig::default() })
}

/// Files directly inside `dir`, sorted by name; `ext` filters by extension.
fn list_files(dir: &Path, ext: Option<&str>) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot read directory {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && ext.is_none_or(|e| path.extension().is_some_and(|x| x == e)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn generate(input: &Path, out: &Path, ms: &[usize], schemes: &[CostScheme]) -> CmdResult {
    if let Some(m) = ms.iter().find(|&&m| m != 2 && m != 3) {
        return Err(Failure::Usage(format!("--m accepts 2 or 3, got {m}")));
    }
    let files = if input.is_dir() { list_files(input, None)? } else { vec![input.to_path_buf()] };
    for file in files {
        let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let base = parse_spp(&name, &read(&file)?).with_context(|| format!("invalid SPP file {}", file.display()))?;
        for &m in ms {
            for &scheme in schemes {
                let inst = generate_gmspp(&base, m, scheme).map_err(anyhow::Error::from)?;
                let path = out.join(format!("{}.json", inst.name));
                write(&path, &save_instance(&inst))?;
                print_stdout(&format!("{}\n", path.display()));
            }
        }
    }
    Ok(())
}

fn solution_text(p: &Packing) -> String {
    serde_json::to_string_pretty(&p.to_solution()).expect("solution serializes") + "\n"
}

fn report_json(inst: &Instance, rep: &SolveReport) -> Value {
    let obj = rep.objective();
    json!({
        "instance": inst.name,
        "method": rep.method.tag(),
        "status": format!("{:?}", rep.status),
        "objective": obj.map(|o| format_rational(&o)),
        "objective_decimal": obj.map(|o| rational_to_decimal(&o, 6)),
        "lower_bound": rep.lower_bound.is_finite().then_some(rep.lower_bound),
        "gap_pct": rep.gap().map(|g| format!("{:.1}", 100.0 * g)),
        "time_s": rep.elapsed.as_secs_f64(),
        "nodes": rep.nodes,
        "cuts": {
            "standard": rep.cut_counts.standard,
            "combinatorial": rep.cut_counts.combinatorial,
            "lifted": rep.cut_counts.lifted,
        },
        "ycheck_calls": rep.ycheck_calls,
        "ycheck_time_s": rep.ycheck_time.as_secs_f64(),
    })
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn print_stdout(text: &str) {
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: {e}");
        }
    }
}

fn emit(report: &Value, path: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match path {
        Some(p) => write(p, &(text + "\n")),
        None => {
            print_stdout(&(text + "\n"));
            Ok(())
        }
    }
}

fn solve(
    path: &Path,
    method: SolveMethod,
    budget: Budget,
    cuts: CutArg,
    solution: Option<&Path>,
    report: Option<&Path>,
    export_master: Option<&Path>,
) -> CmdResult {
    let inst = load(path)?;
    let cfg = solve_config(budget, cuts)?;
    if export_master.is_some() && method != SolveMethod::Bendm {
        return Err(Failure::Usage("--export-master needs --method bendm".into()));
    }
    if method == SolveMethod::Oracle {
        let start = Instant::now();
        let res = oracle::solve_exact(&inst)?;
        if let Some(p) = solution {
            write(p, &solution_text(&res.packing))?;
        }
        let obj = to_f64(res.objective);
        let rep = json!({
            "instance": inst.name,
            "method": "oracle",
            "status": "Optimal",
            "objective": format_rational(&res.objective),
            "objective_decimal": rational_to_decimal(&res.objective, 6),
            "lower_bound": obj,
            "gap_pct": "0.0",
            "time_s": start.elapsed().as_secs_f64(),
        });
        return Ok(emit(&rep, report)?);
    }
    let method = match method {
        SolveMethod::Bigm => Method::BigM,
        SolveMethod::BigmLe => Method::BigMLe,
        _ => Method::BendM,
    };
    let rep = bendm::solve(method, &inst, &cfg)?;
    if let (Some(p), Some(packing)) = (solution, &rep.packing) {
        write(p, &solution_text(packing))?;
    }
    if let Some(p) = export_master {
        write(p, &write_mps(&master_with_cuts(&inst, &rep.cuts)))?;
    }
    emit(&report_json(&inst, &rep), report)?;
    if rep.status == MipStatus::Infeasible {
        return Err(Failure::Runtime(anyhow!("no packing found")));
    }
    Ok(())
}

fn lpbound(path: &Path) -> CmdResult {
    let inst = load(path)?;
    let t = Instant::now();
    let bigm = lp_bigm_bound(&inst).map_err(anyhow::Error::from)?;
    let bigm_time = t.elapsed();
    let t = Instant::now();
    let table = NormalPositionTable::build(&inst);
    let pc = lp_pc_bound(&inst, &table).map_err(anyhow::Error::from)?;
    let pc_time = t.elapsed();
    let out = json!({
        "instance": inst.name,
        "lp_bigm": bigm,
        "lp_bigm_time_s": bigm_time.as_secs_f64(),
        "lp_pc": format_rational(&pc),
        "lp_pc_decimal": rational_to_decimal(&pc, 6),
        "lp_pc_time_s": pc_time.as_secs_f64(),
    });
    Ok(emit(&out, None)?)
}

fn run_ycheck(path: &Path, mask: u8, no_preprocessing: bool, node_limit: Option<u64>, use_oracle: bool) -> CmdResult {
    let parsed: YCheckInstance =
        serde_json::from_str(&read(path)?).with_context(|| format!("invalid placement {}", path.display()))?;
    let yc = YCheckInstance::new(parsed.width, parsed.height, parsed.items)?;
    let (verdict, nodes) = if use_oracle {
        (oracle_ycheck(&yc)?, None)
    } else {
        let mut cfg = PruneConfig::from_mask(mask).with_preprocessing(!no_preprocessing);
        if let Some(limit) = node_limit {
            cfg.node_limit = Some(limit);
        }
        let res = ycheck(&yc, &cfg)?;
        (res.verdict, Some(res.stats.nodes))
    };
    let out = match verdict {
        Verdict::Feasible(ys) => json!({
            "verdict": "feasible",
            "witness": ys.iter().map(|(j, y)| json!({"j": j, "y": y})).collect::<Vec<_>>(),
            "nodes": nodes,
        }),
        Verdict::Infeasible => json!({ "verdict": "infeasible", "nodes": nodes }),
    };
    Ok(emit(&out, None)?)
}

fn export(path: &Path, formulation: Formulation, out: Option<&Path>) -> CmdResult {
    let inst = load(path)?;
    let model = match formulation {
        Formulation::Bigm => build_bigm(&inst).0,
        Formulation::BigmLe => {
            let table = NormalPositionTable::build(&inst);
            let lb = lp_pc_bound(&inst, &table).map_err(anyhow::Error::from)?;
            inject_lower_bound(&build_bigm(&inst).0, lb)
        }
        Formulation::Master => build_master(&inst, &NormalPositionTable::build(&inst)).0,
    };
    let text = write_mps(&model);
    match out {
        Some(p) => write(p, &text)?,
        None => print_stdout(&text),
    }
    Ok(())
}

/// Row for a run that ended in an error; the message goes to stderr.
fn failed_row(inst: &Instance, method: Method, elapsed: Duration) -> BenchRow {
    BenchRow {
        instance: inst.name.clone(),
        m: inst.n_strips(),
        cost: bench::cost_tag(&inst.name),
        method: method.tag().to_string(),
        obj: String::new(),
        lb: String::new(),
        gap_pct: String::new(),
        time_s: format!("{:.2}", elapsed.as_secs_f64()),
        nodes: 0,
        cuts_std: 0,
        cuts_comb: 0,
        cuts_lift: 0,
        ycheck_calls: 0,
        ycheck_time_s: "0.000".into(),
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bench".into());
    out.with_file_name(format!("{stem}.cuts.csv"))
}

fn run_bench(dir: &Path, methods: &[Method], budget: Budget, cuts: CutArg, out: &Path, jobs: usize) -> CmdResult {
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let cfg = solve_config(budget, cuts)?;
    let instances = list_files(dir, Some("json"))?
        .iter()
        .map(|p| load(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if instances.is_empty() {
        return Err(Failure::Runtime(anyhow!("no instance JSON files in {}", dir.display())));
    }
    let tasks: Vec<(usize, Method)> =
        (0..instances.len()).flat_map(|k| methods.iter().map(move |&m| (k, m))).collect();
    let results: Mutex<Vec<Option<(BenchRow, Vec<String>)>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    let failures = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(tasks.len()) {
            s.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(k, method)) = tasks.get(t) else { break };
                let inst = &instances[k];
                let start = Instant::now();
                let entry = match bendm::solve(method, inst, &cfg) {
                    Ok(rep) => {
                        let log = rep
                            .cuts
                            .iter()
                            .map(|c| format!("{},{},{}", inst.name, method.tag(), c.log_line()))
                            .collect();
                        eprintln!(
                            "{} {} {:?} obj {} in {:.1}s",
                            inst.name,
                            method.tag(),
                            rep.status,
                            rep.objective().map_or("-".into(), |o| rational_to_decimal(&o, 6)),
                            rep.elapsed.as_secs_f64()
                        );
                        (BenchRow::from_report(inst, &rep), log)
                    }
                    Err(e) => {
                        eprintln!("{} {} failed: {e}", inst.name, method.tag());
                        failures.fetch_add(1, Ordering::SeqCst);
                        (failed_row(inst, method, start.elapsed()), Vec::new())
                    }
                };
                results.lock().expect("no worker panicked")[t] = Some(entry);
            });
        }
    });
    let results = results.into_inner().expect("no worker panicked");
    let mut rows = Vec::with_capacity(results.len());
    let mut log = vec![format!("instance,method,{CUT_LOG_HEADER}")];
    for (row, lines) in results.into_iter().flatten() {
        rows.push(row);
        log.extend(lines);
    }
    let mut csv = Vec::new();
    bench::write_csv(&rows, &mut csv).map_err(anyhow::Error::from)?;
    write(out, &String::from_utf8(csv).map_err(anyhow::Error::from)?)?;
    write(&sidecar_path(out), &(log.join("\n") + "\n"))?;
    match failures.into_inner() {
        0 => Ok(()),
        n => Err(Failure::Runtime(anyhow!("{n} run(s) failed; see stderr"))),
    }
}

fn plot(csv: &Path, out_dir: &Path) -> CmdResult {
    let file = fs::File::open(csv).with_context(|| format!("cannot read {}", csv.display()))?;
    let rows = bench::read_csv(file).with_context(|| format!("invalid bench CSV {}", csv.display()))?;
    for (name, svg) in bench::summary_plots(&rows) {
        let path = out_dir.join(format!("{name}.svg"));
        write(&path, &svg)?;
        print_stdout(&format!("{}\n", path.display()));
    }
    Ok(())
}
