//! Run orchestration and artifact export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::adaptive::{cost_shares, reference_integrate, write_level_rows, LevelMap, LEVEL_CSV_HEADER};
use crate::dist::{run_in_process, run_session, CommEngine, RankReport, SessionConfig, TcpTransport};
use crate::mesh::Mesh;
use crate::runtime::{write_trace, RuntimeConfig};
use crate::taskgen::{write_dag_row, TaskGenConfig, DAG_CSV_HEADER};

use super::config::{Mode, RunConfig};
use super::snapshot::Snapshot;
use super::CliError;

/// Everything a run produced, before it is written out.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub mode: Mode,
    pub n_cells: usize,
    /// Final state; `None` on a socket rank other than 0.
    pub snapshot: Option<Snapshot>,
    pub initial_mass: f64,
    /// Level maps of the reference run, one per iteration.
    pub level_maps: Vec<LevelMap>,
    /// One report per rank in this process (tasks and dist modes).
    pub ranks: Vec<RankReport>,
    pub elapsed: Duration,
}

impl RunOutcome {
    /// Relative change of Σ W between the initial and the final state.
    pub fn mass_drift(&self) -> Option<f64> {
        let s = self.snapshot.as_ref()?;
        let m: f64 = s.extensive.iter().sum();
        Some(((m - self.initial_mass) / self.initial_mass.abs().max(f64::MIN_POSITIVE)).abs())
    }
}

pub fn session_config(cfg: &RunConfig) -> SessionConfig {
    let mut runtime = RuntimeConfig::new(cfg.workers.clone(), cfg.scheduler);
    runtime.trace = cfg.trace.is_some();
    runtime.probe_period = cfg.probe_period();
    runtime.available_lanes = runtime.available_lanes.max(cfg.workers.iter().sum());
    SessionConfig {
        physics: cfg.physics(),
        taskgen: TaskGenConfig {
            packing: !cfg.no_pack,
            large_packs: !cfg.no_large_packs,
            p_max: cfg.p_max,
            theta_max: cfg.theta_max,
        },
        runtime,
        ces_per_rank: cfg.ces,
        iterations: cfg.iterations,
        repartition_every: (cfg.repartition_every > 0).then_some(cfg.repartition_every),
        comm_timeout: Duration::from_secs_f64(cfg.comm_timeout_s),
    }
}

fn snapshot_of(mesh: &Mesh, extensive: Vec<f64>, iteration: u64) -> Snapshot {
    let intensive = extensive.iter().zip(&mesh.cells).map(|(b, c)| b / c.volume).collect();
    Snapshot { fingerprint: mesh.fingerprint(), iteration, extensive, intensive }
}

fn parse_addr(s: &str) -> Result<SocketAddr, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("bad socket address {s:?}")))
}

/// Runs the configured mode; fails on a non-finite final state.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let mesh = Arc::new(cfg.build_mesh()?);
    let initial = cfg.initial_values(&mesh);
    let initial_mass: f64 = initial.iter().zip(&mesh.cells).map(|(w, c)| w * c.volume).sum();
    let start = Instant::now();
    let mut out = RunOutcome {
        mode: cfg.mode,
        n_cells: mesh.n_cells(),
        snapshot: None,
        initial_mass,
        level_maps: Vec::new(),
        ranks: Vec::new(),
        elapsed: Duration::ZERO,
    };
    let final_state = match cfg.mode {
        Mode::Reference => {
            let r = reference_integrate(&mesh, &cfg.physics(), &initial, cfg.theta_max, cfg.iterations).map_err(run_err)?;
            out.level_maps = r.level_maps;
            Some(r.state.extensive())
        }
        Mode::Tasks => {
            let r = run_session(Arc::clone(&mesh), &initial, &session_config(cfg), None).map_err(run_err)?;
            let s = r.snapshot.clone();
            out.ranks.push(r);
            s
        }
        Mode::Dist => match cfg.rank_id {
            None => {
                let reports = run_in_process(Arc::clone(&mesh), &initial, &session_config(cfg), cfg.ranks, cfg.transport).map_err(run_err)?;
                let s = reports.first().and_then(|r| r.snapshot.clone());
                out.ranks = reports;
                s
            }
            Some(rank) => {
                let listen = parse_addr(cfg.listen.as_deref().unwrap_or_default())?;
                let peers = cfg.peers.iter().map(|p| parse_addr(p)).collect::<Result<Vec<_>, _>>()?;
                let timeout = Duration::from_secs_f64(cfg.comm_timeout_s);
                let t = TcpTransport::connect(rank, listen, &peers, timeout).map_err(run_err)?;
                let engine = Arc::new(CommEngine::new(Arc::new(t), timeout));
                let r = run_session(Arc::clone(&mesh), &initial, &session_config(cfg), Some(engine)).map_err(run_err)?;
                let s = r.snapshot.clone();
                out.ranks.push(r);
                s
            }
        },
    };
    out.elapsed = start.elapsed();
    if let Some(big_w) = final_state {
        if let Some(i) = big_w.iter().position(|v| !v.is_finite()) {
            return Err(CliError::Numerical(format!("cell {i} is {} after {} iterations", big_w[i], cfg.iterations)));
        }
        out.snapshot = Some(snapshot_of(&mesh, big_w, cfg.iterations));
    }
    Ok(out)
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// `trace.jsonl` becomes `trace.rank1.jsonl`.
pub fn rank_path(path: &Path, rank: u32) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.rank{rank}.{}", ext.to_string_lossy()),
        None => format!("{stem}.rank{rank}"),
    };
    path.with_file_name(name)
}

pub const SUMMARY_CSV_HEADER: &str = "iteration,rank,theta,elapsed_s,executing_s,sleeping_s,overhead_s,identity_error_max,elementary_tasks,inserted_tasks,cell_shares_pct,cost_shares_pct,cost_ratio";
pub const READY_CSV_HEADER: &str = "rank,t_s,ready";

fn shares(counts: &[u64], theta: u8) -> (Vec<f64>, Vec<f64>, f64) {
    let n: u64 = counts.iter().sum();
    let cells: Vec<f64> = counts.iter().map(|&c| 100.0 * c as f64 / n.max(1) as f64).collect();
    let cost = cost_shares(&cells, theta);
    let ratio = crate::adaptive::cost_ratio_from_shares(&cells, theta);
    (cells, cost, ratio)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(";")
}

/// One row per iteration and rank; time columns are empty in reference
/// mode.
pub fn write_summary<W: Write>(out: &mut W, o: &RunOutcome) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for (it, map) in o.level_maps.iter().enumerate() {
        let (cells, cost, ratio) = shares(&map.counts(), map.theta);
        writeln!(out, "{it},0,{},,,,,,0,0,{},{},{ratio:.6}", map.theta, join(&cells), join(&cost))?;
    }
    for r in &o.ranks {
        for rep in &r.iterations {
            let s = &rep.stats;
            let sum = |f: fn(&crate::runtime::WorkerProfile) -> Duration| rep.profiles.iter().map(|p| f(p).as_secs_f64()).sum::<f64>();
            let ident = rep.profiles.iter().map(|p| p.identity_error()).fold(0.0, f64::max);
            let counts = &s.level_counts[..=(s.theta as usize).min(s.level_counts.len().saturating_sub(1))];
            let (cells, cost, ratio) = shares(counts, s.theta);
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{ident:.3e},{},{},{},{},{ratio:.6}",
                s.iteration,
                r.rank,
                s.theta,
                s.elapsed.as_secs_f64(),
                sum(|p| p.executing),
                sum(|p| p.sleeping),
                sum(|p| p.overhead),
                s.elementary_tasks,
                s.inserted_tasks,
                join(&cells),
                join(&cost)
            )?;
        }
    }
    Ok(())
}

/// Writes every artifact named in the configuration.
pub fn write_artifacts(cfg: &RunConfig, o: &RunOutcome) -> Result<(), CliError> {
    if let (Some(p), Some(s)) = (&cfg.snapshot, &o.snapshot) {
        s.write(create(p)?).map_err(io(p))?;
    }
    if let Some(p) = &cfg.trace {
        let per_rank = cfg.mode == Mode::Dist;
        for r in &o.ranks {
            let path = if per_rank { rank_path(p, r.rank) } else { p.clone() };
            let mut f = create(&path)?;
            write_trace(&mut f, &r.trace).and_then(|_| f.flush()).map_err(io(&path))?;
        }
    }
    if let Some(p) = &cfg.ready {
        let mut f = create(p)?;
        let mut w = || -> std::io::Result<()> {
            writeln!(f, "{READY_CSV_HEADER}")?;
            for r in &o.ranks {
                for (t, n) in &r.ready {
                    writeln!(f, "{},{t:.6},{n}", r.rank)?;
                }
            }
            f.flush()
        };
        w().map_err(io(p))?;
    }
    if let Some(p) = &cfg.summary {
        let mut f = create(p)?;
        write_summary(&mut f, o).and_then(|_| f.flush()).map_err(io(p))?;
    }
    if let Some(p) = &cfg.levels {
        let mut f = create(p)?;
        let mut w = || -> std::io::Result<()> {
            writeln!(f, "{LEVEL_CSV_HEADER}")?;
            for (it, m) in o.level_maps.iter().enumerate() {
                write_level_rows(&mut f, it as u64, m)?;
            }
            if let Some(r) = o.ranks.first() {
                for rep in &r.iterations {
                    write_level_rows(&mut f, rep.stats.iteration, &rep.stats.level_map_summary())?;
                }
            }
            f.flush()
        };
        w().map_err(io(p))?;
    }
    if let Some(p) = &cfg.dag {
        let mut f = create(p)?;
        let mut w = || -> std::io::Result<()> {
            writeln!(f, "rank,{DAG_CSV_HEADER}")?;
            for r in &o.ranks {
                for rep in &r.iterations {
                    write!(f, "{},", r.rank)?;
                    write_dag_row(&mut f, r.n_ces, &rep.stats)?;
                }
            }
            f.flush()
        };
        w().map_err(io(p))?;
    }
    Ok(())
}
