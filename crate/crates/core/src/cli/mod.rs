//! Command-line front end: `run`, `compare`, `report` and `mesh`.
//!
//! Settings merge in the order defaults, then `--config` file, then flags.

pub mod config;
pub mod report;
pub mod run;
pub mod snapshot;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::mesh::MeshError;

pub use config::{format_workers, parse_workers, InitialKind, MeshShape, Mode, PhysicsKind, RunConfig, KEYS};
pub use run::{rank_path, run, session_config, write_artifacts, write_summary, RunOutcome};
pub use snapshot::{compare, rel_diff, Comparison, Snapshot};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("run failed: {0}")]
    Run(String),
    #[error("numerical blow-up: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ltsflow", version, about = "Local time stepping finite-volume solver on a task runtime", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate in reference, tasks or dist mode and write artifacts.
    Run(RunArgs),
    /// Largest per-cell relative difference between two snapshots.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Summary tables from worker-state traces.
    Report {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write the configured mesh to a file.
    Mesh {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration in file format and exit.
    #[arg(long)]
    pub print_config: bool,
    #[arg(long, value_name = "reference|tasks|dist")]
    pub mode: Option<String>,
    #[arg(long, value_name = "line|square")]
    pub mesh: Option<String>,
    #[arg(long, value_name = "N")]
    pub resolution: Option<String>,
    #[arg(long, value_name = "periodic|transmissive")]
    pub boundary: Option<String>,
    /// Refined rectangles "x0,y0,x1,y1,scale[;...]".
    #[arg(long)]
    pub refine: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub mesh_file: Option<String>,
    #[arg(long, value_name = "advection|burgers")]
    pub physics: Option<String>,
    #[arg(long, value_name = "X[,Y]")]
    pub velocity: Option<String>,
    #[arg(long)]
    pub dt_cap: Option<String>,
    #[arg(long)]
    pub first_order: bool,
    #[arg(long, value_name = "sine|gaussian|step")]
    pub initial: Option<String>,
    #[arg(long, value_name = "T")]
    pub theta_max: Option<String>,
    #[arg(long, value_name = "N")]
    pub iterations: Option<String>,
    /// CEs per rank.
    #[arg(long, value_name = "N")]
    pub ces: Option<String>,
    #[arg(long, value_name = "WxS[,WxS...]")]
    pub workers: Option<String>,
    #[arg(long, value_name = "fifo|prio")]
    pub scheduler: Option<String>,
    #[arg(long)]
    pub no_pack: bool,
    #[arg(long)]
    pub no_large_packs: bool,
    #[arg(long)]
    pub p_max: Option<String>,
    #[arg(long, value_name = "R")]
    pub ranks: Option<String>,
    #[arg(long, value_name = "loopback|socket")]
    pub transport: Option<String>,
    #[arg(long, value_name = "K")]
    pub rank_id: Option<String>,
    #[arg(long, value_name = "HOST:PORT")]
    pub listen: Option<String>,
    /// Addresses of all ranks in rank order, comma separated.
    #[arg(long)]
    pub peers: Option<String>,
    #[arg(long)]
    pub comm_timeout_s: Option<String>,
    #[arg(long, value_name = "N")]
    pub repartition_every: Option<String>,
    #[arg(long)]
    pub probe_period_ms: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub snapshot: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub trace: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub ready: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub summary: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub levels: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub dag: Option<String>,
}

impl RunArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        let flag = |b: bool| b.then(|| "true".to_string());
        vec![
            ("mode", self.mode.clone()),
            ("mesh", self.mesh.clone()),
            ("resolution", self.resolution.clone()),
            ("boundary", self.boundary.clone()),
            ("refine", self.refine.clone()),
            ("mesh-file", self.mesh_file.clone()),
            ("physics", self.physics.clone()),
            ("velocity", self.velocity.clone()),
            ("dt-cap", self.dt_cap.clone()),
            ("first-order", flag(self.first_order)),
            ("initial", self.initial.clone()),
            ("theta-max", self.theta_max.clone()),
            ("iterations", self.iterations.clone()),
            ("ces", self.ces.clone()),
            ("workers", self.workers.clone()),
            ("scheduler", self.scheduler.clone()),
            ("no-pack", flag(self.no_pack)),
            ("no-large-packs", flag(self.no_large_packs)),
            ("p-max", self.p_max.clone()),
            ("ranks", self.ranks.clone()),
            ("transport", self.transport.clone()),
            ("rank-id", self.rank_id.clone()),
            ("listen", self.listen.clone()),
            ("peers", self.peers.clone()),
            ("comm-timeout-s", self.comm_timeout_s.clone()),
            ("repartition-every", self.repartition_every.clone()),
            ("probe-period-ms", self.probe_period_ms.clone()),
            ("snapshot", self.snapshot.clone()),
            ("trace", self.trace.clone()),
            ("ready", self.ready.clone()),
            ("summary", self.summary.clone()),
            ("levels", self.levels.clone()),
            ("dag", self.dag.clone()),
        ]
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            cfg.apply_file_str(&text)?;
        }
        for (k, v) in self.pairs() {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn print_outcome(o: &RunOutcome) {
    let mut line = format!("mode={:?} cells={} elapsed_s={:.3}", o.mode, o.n_cells, o.elapsed.as_secs_f64()).to_lowercase();
    if let Some(d) = o.mass_drift() {
        line += &format!(" mass_drift={d:.3e}");
    }
    if let Some(m) = o.level_maps.last() {
        line += &format!(" theta={}", m.theta);
    }
    for r in &o.ranks {
        let (el, ins): (u64, u64) = r.iterations.iter().fold((0, 0), |a, i| (a.0 + i.stats.elementary_tasks, a.1 + i.stats.inserted_tasks));
        let theta = r.iterations.last().map_or(0, |i| i.stats.theta);
        line += &format!(" rank{}:theta={theta},ces={},elementary={el},inserted={ins}", r.rank, r.n_ces);
    }
    println!("{line}");
}

fn report_cmd(traces: &[PathBuf], out_dir: &Path) -> Result<(), CliError> {
    let mut sums = Vec::new();
    for p in traces {
        let f = File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        let recs = crate::runtime::read_trace(BufReader::new(f)).map_err(|e| CliError::Format(format!("{}: {e}", p.display())))?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        sums.push(report::summarize(&name, &recs));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    type Writer = fn(&mut BufWriter<File>, &[report::TraceSummary]) -> std::io::Result<()>;
    let tables: [(&str, Writer); 4] = [
        ("workers.csv", report::write_workers),
        ("gantt.csv", report::write_gantt),
        ("ready.csv", report::write_ready),
        ("comparison.csv", report::write_comparison),
    ];
    for (name, write) in tables {
        let path = out_dir.join(name);
        let mut f = File::create(&path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        write(&mut f, &sums).and_then(|_| f.flush()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    for s in &sums {
        println!(
            "{}: workers={} executing_s={:.6} sleeping_s={:.6} overhead_s={:.6}",
            s.name,
            s.workers.len(),
            s.total(|w| w.executing),
            s.total(|w| w.sleeping),
            s.total(|w| w.overhead)
        );
    }
    Ok(())
}

fn read_snapshot(p: &Path) -> Result<Snapshot, CliError> {
    let f = File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    Snapshot::read(BufReader::new(f))
}

/// Runs one command; `Ok(false)` means a comparison failed.
pub fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            if args.print_config {
                cfg.validate()?;
                print!("{}", cfg.to_file_string());
                return Ok(true);
            }
            let o = run::run(&cfg)?;
            write_artifacts(&cfg, &o)?;
            print_outcome(&o);
            Ok(true)
        }
        Command::Compare { a, b, tolerance } => {
            let c = compare(&read_snapshot(&a)?, &read_snapshot(&b)?, tolerance)?;
            println!(
                "max_rel_diff={:.6e} cell={} tolerance={:e} {}",
                c.max_rel_diff,
                c.cell,
                c.tolerance,
                if c.pass { "PASS" } else { "FAIL" }
            );
            Ok(c.pass)
        }
        Command::Report { traces, out_dir } => report_cmd(&traces, &out_dir).map(|_| true),
        Command::Mesh { run, out } => {
            let mesh = run.resolve()?.build_mesh()?;
            let f = File::create(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
            crate::mesh::write_mesh(&mesh, BufWriter::new(f))?;
            println!("cells={} faces={} fingerprint={:#018x}", mesh.n_cells(), mesh.n_faces(), mesh.fingerprint());
            Ok(true)
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("ltsflow: {e}");
            e.exit_code()
        }
    }
}

pub fn main_from_env() -> i32 {
    main_with(std::env::args_os())
}
