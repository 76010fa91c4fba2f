//! Run configuration and its flat `key = value` file format.
//!
//! Keys are the long flag names without dashes prefix, one per line; `#`
//! starts a comment. [`RunConfig::to_file_string`] writes every key, so a
//! written file reads back to an identical configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use crate::dist::TransportKind;
use crate::mesh::{BoundaryKind, Mesh, MeshSpec, RefineRegion};
use crate::numerics::{FluxModel, Physics};
use crate::runtime::SchedulerKind;

use super::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Reference,
    Tasks,
    Dist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshShape {
    Line,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhysicsKind {
    Advection,
    Burgers,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialKind {
    Sine,
    Gaussian,
    Step,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub mesh: MeshShape,
    pub resolution: usize,
    pub boundary: BoundaryKind,
    pub refine: Vec<RefineRegion>,
    /// Read the mesh from this file instead of generating it.
    pub mesh_file: Option<PathBuf>,
    pub physics: PhysicsKind,
    /// Advection velocity, or the Burgers direction.
    pub velocity: [f64; 2],
    pub dt_cap: f64,
    pub first_order: bool,
    pub initial: InitialKind,
    pub theta_max: u8,
    pub iterations: u64,
    /// CEs per rank.
    pub ces: usize,
    /// Lane count of each worker.
    pub workers: Vec<usize>,
    pub scheduler: SchedulerKind,
    pub no_pack: bool,
    pub no_large_packs: bool,
    pub p_max: u32,
    pub ranks: u32,
    pub transport: TransportKind,
    /// Run only this rank (socket transport across processes).
    pub rank_id: Option<u32>,
    pub listen: Option<String>,
    pub peers: Vec<String>,
    pub comm_timeout_s: f64,
    pub repartition_every: u64,
    pub probe_period_ms: f64,
    pub snapshot: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub ready: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub levels: Option<PathBuf>,
    pub dag: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tasks,
            mesh: MeshShape::Square,
            resolution: 16,
            boundary: BoundaryKind::Periodic,
            refine: Vec::new(),
            mesh_file: None,
            physics: PhysicsKind::Advection,
            velocity: [1.0, 0.5],
            dt_cap: 1.0,
            first_order: false,
            initial: InitialKind::Sine,
            theta_max: 3,
            iterations: 10,
            ces: 8,
            workers: vec![1; 4],
            scheduler: SchedulerKind::Prio,
            no_pack: false,
            no_large_packs: false,
            p_max: 4,
            ranks: 1,
            transport: TransportKind::Loopback,
            rank_id: None,
            listen: None,
            peers: Vec::new(),
            comm_timeout_s: 120.0,
            repartition_every: 0,
            probe_period_ms: 1.0,
            snapshot: None,
            trace: None,
            ready: None,
            summary: None,
            levels: None,
            dag: None,
        }
    }
}

/// Every configuration key, in file order.
pub const KEYS: &[&str] = &[
    "mode",
    "mesh",
    "resolution",
    "boundary",
    "refine",
    "mesh-file",
    "physics",
    "velocity",
    "dt-cap",
    "first-order",
    "initial",
    "theta-max",
    "iterations",
    "ces",
    "workers",
    "scheduler",
    "no-pack",
    "no-large-packs",
    "p-max",
    "ranks",
    "transport",
    "rank-id",
    "listen",
    "peers",
    "comm-timeout-s",
    "repartition-every",
    "probe-period-ms",
    "snapshot",
    "trace",
    "ready",
    "summary",
    "levels",
    "dag",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Usage(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn parse_vec2(key: &str, v: &str) -> Result<[f64; 2], CliError> {
    let parts: Vec<f64> = v.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_, _>>()?;
    match parts[..] {
        [x] => Ok([x, 0.0]),
        [x, y] => Ok([x, y]),
        _ => Err(CliError::Usage(format!("{key}: expected X or X,Y"))),
    }
}

/// `"WxS[,WxS...]"`: W workers of S lanes each.
pub fn parse_workers(v: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in v.split(',') {
        let (w, s) = part
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| CliError::Usage(format!("workers: {part:?} is not of the form WxS")))?;
        let (w, s): (usize, usize) = (parse_num("workers", w)?, parse_num("workers", s)?);
        if w == 0 || s == 0 {
            return Err(CliError::Usage(format!("workers: {part:?} has a zero count")));
        }
        out.extend(std::iter::repeat_n(s, w));
    }
    Ok(out)
}

pub fn format_workers(lanes: &[usize]) -> String {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &s in lanes {
        match runs.last_mut() {
            Some((w, t)) if *t == s => *w += 1,
            _ => runs.push((1, s)),
        }
    }
    runs.iter().map(|(w, s)| format!("{w}x{s}")).collect::<Vec<_>>().join(",")
}

fn parse_refine(v: &str) -> Result<Vec<RefineRegion>, CliError> {
    let mut out = Vec::new();
    for part in v.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let f: Vec<&str> = part.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(CliError::Usage(format!("refine: {part:?} is not x0,y0,x1,y1,scale")));
        }
        out.push(RefineRegion {
            lo: [parse_num("refine", f[0])?, parse_num("refine", f[1])?],
            hi: [parse_num("refine", f[2])?, parse_num("refine", f[3])?],
            scale: parse_num("refine", f[4])?,
        });
    }
    Ok(out)
}

fn format_refine(r: &[RefineRegion]) -> String {
    r.iter().map(|r| format!("{},{},{},{},{}", r.lo[0], r.lo[1], r.hi[0], r.hi[1], r.scale)).collect::<Vec<_>>().join(";")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let v = v.trim();
        match key {
            "mode" => {
                self.mode = match v {
                    "reference" => Mode::Reference,
                    "tasks" => Mode::Tasks,
                    "dist" => Mode::Dist,
                    _ => return Err(CliError::Usage(format!("mode: expected reference, tasks or dist, got {v:?}"))),
                }
            }
            "mesh" => {
                self.mesh = match v {
                    "line" => MeshShape::Line,
                    "square" => MeshShape::Square,
                    _ => return Err(CliError::Usage(format!("mesh: expected line or square, got {v:?}"))),
                }
            }
            "resolution" => self.resolution = parse_num(key, v)?,
            "boundary" => {
                self.boundary = match v {
                    "periodic" => BoundaryKind::Periodic,
                    "transmissive" => BoundaryKind::Transmissive,
                    _ => return Err(CliError::Usage(format!("boundary: expected periodic or transmissive, got {v:?}"))),
                }
            }
            "refine" => self.refine = parse_refine(v)?,
            "mesh-file" => self.mesh_file = opt_path(v),
            "physics" => {
                self.physics = match v {
                    "advection" => PhysicsKind::Advection,
                    "burgers" => PhysicsKind::Burgers,
                    _ => return Err(CliError::Usage(format!("physics: expected advection or burgers, got {v:?}"))),
                }
            }
            "velocity" => self.velocity = parse_vec2(key, v)?,
            "dt-cap" => self.dt_cap = parse_num(key, v)?,
            "first-order" => self.first_order = parse_bool(key, v)?,
            "initial" => {
                self.initial = match v {
                    "sine" => InitialKind::Sine,
                    "gaussian" => InitialKind::Gaussian,
                    "step" => InitialKind::Step,
                    _ => return Err(CliError::Usage(format!("initial: expected sine, gaussian or step, got {v:?}"))),
                }
            }
            "theta-max" => self.theta_max = parse_num(key, v)?,
            "iterations" => self.iterations = parse_num(key, v)?,
            "ces" => self.ces = parse_num(key, v)?,
            "workers" => self.workers = parse_workers(v)?,
            "scheduler" => self.scheduler = v.parse().map_err(CliError::Usage)?,
            "no-pack" => self.no_pack = parse_bool(key, v)?,
            "no-large-packs" => self.no_large_packs = parse_bool(key, v)?,
            "p-max" => self.p_max = parse_num(key, v)?,
            "ranks" => self.ranks = parse_num(key, v)?,
            "transport" => self.transport = v.parse().map_err(CliError::Usage)?,
            "rank-id" => self.rank_id = if v.is_empty() { None } else { Some(parse_num(key, v)?) },
            "listen" => self.listen = (!v.is_empty()).then(|| v.to_string()),
            "peers" => self.peers = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
            "comm-timeout-s" => self.comm_timeout_s = parse_num(key, v)?,
            "repartition-every" => self.repartition_every = parse_num(key, v)?,
            "probe-period-ms" => self.probe_period_ms = parse_num(key, v)?,
            "snapshot" => self.snapshot = opt_path(v),
            "trace" => self.trace = opt_path(v),
            "ready" => self.ready = opt_path(v),
            "summary" => self.summary = opt_path(v),
            "levels" => self.levels = opt_path(v),
            "dag" => self.dag = opt_path(v),
            _ => return Err(CliError::Usage(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "mode" => match self.mode {
                Mode::Reference => "reference",
                Mode::Tasks => "tasks",
                Mode::Dist => "dist",
            }
            .into(),
            "mesh" => match self.mesh {
                MeshShape::Line => "line",
                MeshShape::Square => "square",
            }
            .into(),
            "resolution" => self.resolution.to_string(),
            "boundary" => match self.boundary {
                BoundaryKind::Periodic => "periodic",
                BoundaryKind::Transmissive => "transmissive",
            }
            .into(),
            "refine" => format_refine(&self.refine),
            "mesh-file" => path_str(&self.mesh_file),
            "physics" => match self.physics {
                PhysicsKind::Advection => "advection",
                PhysicsKind::Burgers => "burgers",
            }
            .into(),
            "velocity" => format!("{},{}", self.velocity[0], self.velocity[1]),
            "dt-cap" => self.dt_cap.to_string(),
            "first-order" => self.first_order.to_string(),
            "initial" => match self.initial {
                InitialKind::Sine => "sine",
                InitialKind::Gaussian => "gaussian",
                InitialKind::Step => "step",
            }
            .into(),
            "theta-max" => self.theta_max.to_string(),
            "iterations" => self.iterations.to_string(),
            "ces" => self.ces.to_string(),
            "workers" => format_workers(&self.workers),
            "scheduler" => self.scheduler.to_string(),
            "no-pack" => self.no_pack.to_string(),
            "no-large-packs" => self.no_large_packs.to_string(),
            "p-max" => self.p_max.to_string(),
            "ranks" => self.ranks.to_string(),
            "transport" => self.transport.to_string(),
            "rank-id" => self.rank_id.map(|r| r.to_string()).unwrap_or_default(),
            "listen" => self.listen.clone().unwrap_or_default(),
            "peers" => self.peers.join(","),
            "comm-timeout-s" => self.comm_timeout_s.to_string(),
            "repartition-every" => self.repartition_every.to_string(),
            "probe-period-ms" => self.probe_period_ms.to_string(),
            "snapshot" => path_str(&self.snapshot),
            "trace" => path_str(&self.trace),
            "ready" => path_str(&self.ready),
            "summary" => path_str(&self.summary),
            "levels" => path_str(&self.levels),
            "dag" => path_str(&self.dag),
            _ => return None,
        })
    }

    /// Applies the lines of a configuration file on top of `self`.
    pub fn apply_file_str(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| CliError::Usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file_str(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        c.apply_file_str(text)?;
        Ok(c)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("known key"));
        }
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.mesh_file.is_none() && self.resolution == 0 {
            return bad("resolution must be >= 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.theta_max > 12 {
            return bad(format!("theta-max {} is above 12", self.theta_max));
        }
        if !(self.dt_cap > 0.0) {
            return bad("dt-cap must be positive".into());
        }
        if self.mode != Mode::Reference {
            if self.ces == 0 {
                return bad("ces must be >= 1".into());
            }
            if self.workers.is_empty() {
                return bad("workers must name at least one worker".into());
            }
            if self.probe_period_ms < 0.0 {
                return bad("probe-period-ms must be >= 0".into());
            }
        }
        match self.mode {
            Mode::Dist => {
                if self.ranks == 0 {
                    return bad("ranks must be >= 1".into());
                }
                if let Some(r) = self.rank_id {
                    if self.transport != TransportKind::Socket {
                        return bad("rank-id requires the socket transport".into());
                    }
                    if r >= self.ranks {
                        return bad(format!("rank-id {r} is not below ranks {}", self.ranks));
                    }
                    if self.listen.is_none() || self.peers.len() != self.ranks as usize {
                        return bad("a single socket rank needs listen and one peer address per rank".into());
                    }
                }
            }
            Mode::Tasks | Mode::Reference => {
                if self.ranks != 1 || self.rank_id.is_some() {
                    return bad("ranks and rank-id apply to dist mode only".into());
                }
            }
        }
        Ok(())
    }

    pub fn mesh_spec(&self) -> MeshSpec {
        let mut s = match self.mesh {
            MeshShape::Line => MeshSpec::line(self.resolution, self.boundary),
            MeshShape::Square => MeshSpec::square(self.resolution, self.boundary),
        };
        s.regions = self.refine.clone();
        s
    }

    pub fn build_mesh(&self) -> Result<Mesh, CliError> {
        match &self.mesh_file {
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Ok(crate::mesh::read_mesh(std::io::BufReader::new(f))?)
            }
            None => Ok(crate::mesh::generate_mesh(&self.mesh_spec())?),
        }
    }

    pub fn physics(&self) -> Physics {
        let model = match self.physics {
            PhysicsKind::Advection => FluxModel::Advection { velocity: self.velocity },
            PhysicsKind::Burgers => FluxModel::Burgers { direction: self.velocity },
        };
        Physics { model, dt_cap: self.dt_cap, first_order: self.first_order }
    }

    pub fn initial_values(&self, mesh: &Mesh) -> Vec<f64> {
        use std::f64::consts::PI;
        mesh.cells
            .iter()
            .map(|c| {
                let [x, y] = c.centroid;
                match self.initial {
                    InitialKind::Sine => 1.0 + 0.5 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos(),
                    InitialKind::Gaussian => {
                        let r2 = (x - 0.5).powi(2) + if mesh.dim == 2 { (y - 0.5).powi(2) } else { 0.0 };
                        0.1 + (-50.0 * r2).exp()
                    }
                    InitialKind::Step => {
                        if x < 0.5 {
                            1.0
                        } else {
                            0.5
                        }
                    }
                }
            })
            .collect()
    }

    pub fn probe_period(&self) -> Option<Duration> {
        (self.probe_period_ms > 0.0).then(|| Duration::from_secs_f64(self.probe_period_ms / 1000.0))
    }
}
