//! Experiment drivers behind the command-line binary: state-space censuses,
//! saturation scans, single runs, benchmark sweeps, exhaustive oracles, and
//! path-transform traces.
//!
//! Every command reads its block of one JSON experiment config, validates it
//! before any compute, and stamps its artifacts with a hash of the effective
//! block so results can be traced back to the exact settings that produced
//! them. Sweeps persist one JSON file per instance and resume from them when
//! rerun with an unchanged config.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::duality;
use crate::dynamics::EvolveConfig;
use crate::error::{Error, Result};
use crate::graph::{random_instance, FlowConfig, FlowNetwork, InstanceFamily};
use crate::graph::{CommoditySpec, ProblemInstance, ProblemKind};
use crate::hilbert::{self, Basis, ResourceCaps};
use crate::invalid_arg;
use crate::operators::MixerKind;
use crate::prep::{self, PrepStrategy};
use crate::qaoa::{self, AarConfig, RunConfig, RunResult};

/// SHA-256 of the canonical JSON form of a config block.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialization cannot fail");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn family_tag(family: &InstanceFamily) -> String {
    match family {
        InstanceFamily::TriangleSssp { triangles } => format!("triangle_{triangles}"),
        InstanceFamily::GridEdp {
            rows,
            cols,
            commodities,
        } => format!("grid_{rows}x{cols}_k{commodities}"),
    }
}

/// One JSON file with a block per subcommand; unknown blocks are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub caps: ResourceCaps,
    pub census: CensusConfig,
    pub satscan: SatscanConfig,
    pub run: RunCmdConfig,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
    pub transform: TransformConfig,
}

/// Reads the experiment config, or the defaults when no file is given.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let cfg = serde_json::from_str(&text)
                .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
            Ok(cfg)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Census,
    Satscan,
    Run,
    Sweep,
    Oracle,
    Transform,
}

/// Points the invoked command's root seed somewhere else.
pub fn apply_seed(cfg: &mut ExperimentConfig, command: CommandKind, seed: u64) {
    match command {
        CommandKind::Census => {
            for entry in &mut cfg.census.entries {
                entry.seed = seed;
            }
        }
        CommandKind::Satscan => cfg.satscan.instance_seed = seed,
        CommandKind::Run => cfg.run.instance_seed = seed,
        CommandKind::Sweep => cfg.sweep.seed = seed,
        CommandKind::Oracle => cfg.oracle.instance_seed = seed,
        CommandKind::Transform => cfg.transform.seed = seed,
    }
}

/// A `--cap` override, parsed from `full=N` or `feasible=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapOverride {
    Full(usize),
    Feasible(usize),
}

impl std::str::FromStr for CapOverride {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
        let n: usize = value
            .parse()
            .map_err(|e| format!("bad cap value {value:?}: {e}"))?;
        match key {
            "full" => Ok(CapOverride::Full(n)),
            "feasible" => Ok(CapOverride::Feasible(n)),
            other => Err(format!("unknown cap {other:?}, expected full or feasible")),
        }
    }
}

pub fn apply_caps(caps: &mut ResourceCaps, overrides: &[CapOverride]) {
    for o in overrides {
        match *o {
            CapOverride::Full(n) => caps.full_amplitudes = n,
            CapOverride::Feasible(n) => caps.feasible_states = n,
        }
    }
}

// ---------------------------------------------------------------------------
// census

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CensusEntry {
    pub family: InstanceFamily,
    pub seed: u64,
}

impl Default for CensusEntry {
    fn default() -> Self {
        CensusEntry {
            family: InstanceFamily::TriangleSssp { triangles: 2 },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CensusConfig {
    pub entries: Vec<CensusEntry>,
    /// Also count feasible states that carry isolated circulation loops.
    pub with_loops: bool,
}

impl Default for CensusConfig {
    fn default() -> Self {
        let entries = (2..=4)
            .map(|triangles| CensusEntry {
                family: InstanceFamily::TriangleSssp { triangles },
                seed: 0,
            })
            .collect();
        CensusConfig {
            entries,
            with_loops: false,
        }
    }
}

impl CensusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Validation("census needs at least one entry".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct CensusOutcome {
    pub csv_path: PathBuf,
    pub rows_written: usize,
    /// First resource-cap failure; rows before it are on disk.
    pub error: Option<Error>,
}

pub fn cmd_census(cfg: &CensusConfig, caps: &ResourceCaps, out_dir: &Path) -> Result<CensusOutcome> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let mut csv = format!("# config {hash}\n");
    csv.push_str("graph,total_states,feasible_states,fraction");
    if cfg.with_loops {
        csv.push_str(",feasible_with_loops,fraction_with_loops");
    }
    csv.push('\n');

    let mut rows_written = 0;
    let mut first_error = None;
    for entry in &cfg.entries {
        let row = random_instance(entry.family, entry.seed)
            .and_then(|inst| hilbert::census(&inst, caps));
        match row {
            Ok(row) => {
                csv.push_str(&format!(
                    "{},{},{},{:.6e}",
                    row.graph, row.total_states, row.feasible_states, row.fraction
                ));
                if cfg.with_loops {
                    csv.push_str(&format!(
                        ",{},{:.6e}",
                        row.feasible_with_loops, row.fraction_with_loops
                    ));
                }
                csv.push('\n');
                rows_written += 1;
            }
            Err(e) => {
                csv.push_str(&format!(
                    "# error {}: {e}\n",
                    entry.family.label(entry.seed)
                ));
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    let csv_path = out_dir.join("census.csv");
    write_text(&csv_path, &csv)?;
    Ok(CensusOutcome {
        csv_path,
        rows_written,
        error: first_error,
    })
}

// ---------------------------------------------------------------------------
// satscan

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SatscanConfig {
    pub family: InstanceFamily,
    pub instance_seed: u64,
    pub commodity: usize,
    /// Scan the loopless space under the restricted mixer instead of the
    /// with-loops space under the plain one.
    pub restricted: bool,
    pub scan: prep::ScanConfig,
    pub evolve: EvolveConfig,
}

impl Default for SatscanConfig {
    fn default() -> Self {
        SatscanConfig {
            family: InstanceFamily::GridEdp {
                rows: 4,
                cols: 4,
                commodities: 1,
            },
            instance_seed: 0,
            commodity: 0,
            restricted: true,
            scan: prep::ScanConfig::default(),
            evolve: EvolveConfig::default(),
        }
    }
}

impl SatscanConfig {
    pub fn validate(&self) -> Result<()> {
        self.scan.validate()?;
        self.evolve.validate()?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct SatscanSummary {
    pub config_hash: String,
    pub instance: String,
    pub commodity: usize,
    pub restricted: bool,
    pub instance_seed: u64,
    pub scan_seed: u64,
    pub t_sat: Option<f64>,
    pub detected: bool,
    pub ground_state_ipr: f64,
    pub uniform_ipr_floor: f64,
    pub saturated_ipr: Option<f64>,
}

#[derive(Debug)]
pub struct SatscanOutcome {
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub summary: SatscanSummary,
}

pub fn cmd_satscan(
    cfg: &SatscanConfig,
    caps: &ResourceCaps,
    out_dir: &Path,
) -> Result<SatscanOutcome> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let inst = random_instance(cfg.family, cfg.instance_seed).map_err(|e| e.in_stage("instance"))?;
    let scan = prep::saturation_scan(&inst, cfg.commodity, cfg.restricted, &cfg.scan, &cfg.evolve, caps)
        .map_err(|e| e.in_stage("scan"))?;

    let mut csv = format!("# config {hash}\nt,ipr,flow_entropy\n");
    for ((t, ipr), s) in scan.times.iter().zip(&scan.ipr).zip(&scan.flow_entropy) {
        csv.push_str(&format!("{t},{ipr:.12e},{s:.12e}\n"));
    }
    let csv_path = out_dir.join("satscan.csv");
    write_text(&csv_path, &csv)?;

    let summary = SatscanSummary {
        config_hash: hash,
        instance: inst.label().to_string(),
        commodity: cfg.commodity,
        restricted: cfg.restricted,
        instance_seed: cfg.instance_seed,
        scan_seed: cfg.scan.seed,
        t_sat: scan.t_sat,
        detected: scan.detected,
        ground_state_ipr: scan.ground_state_ipr,
        uniform_ipr_floor: scan.uniform_ipr_floor,
        saturated_ipr: scan.saturated_ipr,
    };
    let json_path = out_dir.join("satscan.json");
    write_text(&json_path, &serde_json::to_string_pretty(&summary)?)?;
    Ok(SatscanOutcome {
        csv_path,
        json_path,
        summary,
    })
}

// ---------------------------------------------------------------------------
// run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunCmdConfig {
    pub family: InstanceFamily,
    pub instance_seed: u64,
    pub settings: RunConfig,
}

impl Default for RunCmdConfig {
    fn default() -> Self {
        RunCmdConfig {
            family: InstanceFamily::TriangleSssp { triangles: 2 },
            instance_seed: 0,
            settings: RunConfig::default(),
        }
    }
}

impl RunCmdConfig {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()
    }
}

#[derive(Debug, Serialize)]
pub struct RunArtifact {
    pub config_hash: String,
    pub family: InstanceFamily,
    pub instance_seed: u64,
    pub result: RunResult,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub json_path: PathBuf,
    pub artifact: RunArtifact,
}

pub fn cmd_run(cfg: &RunCmdConfig, caps: &ResourceCaps, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate().map_err(|e| e.in_stage("validate"))?;
    let hash = config_hash(cfg);
    let inst = random_instance(cfg.family, cfg.instance_seed).map_err(|e| e.in_stage("instance"))?;
    let result = qaoa::optimize(&inst, &cfg.settings, caps).map_err(|e| e.in_stage("optimize"))?;
    let artifact = RunArtifact {
        config_hash: hash,
        family: cfg.family,
        instance_seed: cfg.instance_seed,
        result,
    };
    let json_path = out_dir.join("run.json");
    write_text(&json_path, &serde_json::to_string_pretty(&artifact)?)
        .map_err(|e| e.in_stage("write"))?;
    Ok(RunOutcome {
        json_path,
        artifact,
    })
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub families: Vec<InstanceFamily>,
    pub mixers: Vec<MixerKind>,
    pub ps: Vec<usize>,
    pub preps: Vec<PrepStrategy>,
    /// Soft-constraint weights; only x-mixer cells are sensitive to them.
    /// The robustness study runs `[0.5, 1.0, 2.0, 4.0]`.
    pub penalty_deltas: Vec<f64>,
    /// Instances per cell; instance seeds are `seed..seed + instances`.
    pub instances: u64,
    pub seed: u64,
    /// Per-run settings; the cell axes overwrite its mixer, rounds, prep,
    /// and penalty fields.
    pub base: RunConfig,
    pub aar: AarConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            families: (2..=4)
                .map(|triangles| InstanceFamily::TriangleSssp { triangles })
                .collect(),
            mixers: vec![MixerKind::X, MixerKind::Qed, MixerKind::Rqed],
            ps: vec![1],
            preps: vec![PrepStrategy::UniformFeasible],
            penalty_deltas: vec![1.0],
            instances: 20,
            seed: 0,
            base: RunConfig::default(),
            aar: AarConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty()
            || self.mixers.is_empty()
            || self.ps.is_empty()
            || self.preps.is_empty()
            || self.penalty_deltas.is_empty()
        {
            return Err(Error::Validation("every sweep axis needs at least one entry".into()));
        }
        if self.instances == 0 {
            return Err(Error::Validation("sweep needs at least one instance per cell".into()));
        }
        for &d in &self.penalty_deltas {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Validation(format!("penalty weight {d} must be non-negative")));
            }
        }
        self.base.validate()?;
        self.aar.validate()?;
        for &p in &self.ps {
            let probe = RunConfig { p, ..self.base.clone() };
            probe.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SweepCell {
    index: usize,
    tag: String,
    family: InstanceFamily,
    run: RunConfig,
}

fn sweep_cells(cfg: &SweepConfig) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for family in &cfg.families {
        for mixer in &cfg.mixers {
            for &p in &cfg.ps {
                for (prep_idx, prep) in cfg.preps.iter().enumerate() {
                    for (delta_idx, &delta) in cfg.penalty_deltas.iter().enumerate() {
                        let run = RunConfig {
                            mixer: *mixer,
                            p,
                            prep: prep.clone(),
                            penalty_delta: delta,
                            ..cfg.base.clone()
                        };
                        cells.push(SweepCell {
                            index: cells.len(),
                            tag: format!(
                                "{}_{}_p{}_q{}_d{}",
                                family_tag(family),
                                mixer.as_str(),
                                p,
                                prep_idx,
                                delta_idx
                            ),
                            family: *family,
                            run,
                        });
                    }
                }
            }
        }
    }
    cells
}

/// One persisted instance result inside a sweep.
#[derive(Debug, Serialize, Deserialize)]
struct SweepRecord {
    config_hash: String,
    cell: String,
    family: InstanceFamily,
    instance_seed: u64,
    mixer: String,
    p: usize,
    prep: String,
    penalty_delta: f64,
    optimizer_seed: u64,
    sample_seed: u64,
    approximation_ratio: f64,
    projected_cost: f64,
    feasible_mass: f64,
    degenerate_cost_range: bool,
    de_evals: u64,
    bfgs_evals: u64,
    stalled: bool,
    wall_ms: u64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub runs_csv: PathBuf,
    pub aar_csv: PathBuf,
    pub results_dir: PathBuf,
    pub completed: usize,
    pub resumed: usize,
    pub failed: usize,
}

pub fn cmd_sweep(cfg: &SweepConfig, caps: &ResourceCaps, out_dir: &Path) -> Result<SweepOutcome> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let results_dir = out_dir.join(format!("sweep_{}", &hash[..16]));
    fs::create_dir_all(&results_dir)?;

    let cells = sweep_cells(cfg);
    let tasks: Vec<(usize, u64)> = cells
        .iter()
        .flat_map(|cell| (cfg.seed..cfg.seed + cfg.instances).map(move |s| (cell.index, s)))
        .collect();

    enum TaskOutcome {
        Done { record: SweepRecord, resumed: bool },
        Failed { cell: usize, seed: u64, message: String },
    }
    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());

    let outcomes: Vec<(usize, TaskOutcome)> = tasks
        .par_iter()
        .enumerate()
        .map(|(task_idx, &(cell_idx, instance_seed))| {
            let cell = &cells[cell_idx];
            let path = results_dir.join(format!("{}_s{}.json", cell.tag, instance_seed));
            if path.exists() {
                let loaded: Result<SweepRecord> = fs::read_to_string(&path)
                    .map_err(Error::from)
                    .and_then(|text| serde_json::from_str(&text).map_err(Error::from));
                match loaded {
                    Ok(record) if record.config_hash == hash => {
                        return (task_idx, TaskOutcome::Done { record, resumed: true });
                    }
                    Ok(record) => {
                        let message = format!(
                            "resume file {} was produced by config {}, current is {hash}",
                            path.display(),
                            record.config_hash
                        );
                        failures.lock().unwrap().push(message.clone());
                        return (task_idx, TaskOutcome::Failed {
                            cell: cell_idx,
                            seed: instance_seed,
                            message,
                        });
                    }
                    Err(e) => {
                        let message = format!("unreadable resume file {}: {e}", path.display());
                        failures.lock().unwrap().push(message.clone());
                        return (task_idx, TaskOutcome::Failed {
                            cell: cell_idx,
                            seed: instance_seed,
                            message,
                        });
                    }
                }
            }
            let per_instance = qaoa::instance_run_config(&cell.run, instance_seed);
            let outcome = random_instance(cell.family, instance_seed)
                .and_then(|inst| qaoa::optimize(&inst, &per_instance, caps));
            match outcome {
                Ok(result) => {
                    let record = SweepRecord {
                        config_hash: hash.clone(),
                        cell: cell.tag.clone(),
                        family: cell.family,
                        instance_seed,
                        mixer: result.mixer.to_string(),
                        p: result.p,
                        prep: result.prep.to_string(),
                        penalty_delta: cell.run.penalty_delta,
                        optimizer_seed: per_instance.optimizer.seed,
                        sample_seed: per_instance.sample_seed,
                        approximation_ratio: result.approximation_ratio,
                        projected_cost: result.projected_cost,
                        feasible_mass: result.feasible_mass,
                        degenerate_cost_range: result.degenerate_cost_range,
                        de_evals: result.de_evals,
                        bfgs_evals: result.bfgs_evals,
                        stalled: result.stalled,
                        wall_ms: result.wall_ms,
                    };
                    if let Err(e) = serde_json::to_string_pretty(&record)
                        .map_err(Error::from)
                        .and_then(|text| write_text(&path, &text))
                    {
                        let message = format!("could not persist {}: {e}", path.display());
                        failures.lock().unwrap().push(message.clone());
                        return (task_idx, TaskOutcome::Failed {
                            cell: cell_idx,
                            seed: instance_seed,
                            message,
                        });
                    }
                    (task_idx, TaskOutcome::Done { record, resumed: false })
                }
                Err(e) => {
                    let message = format!("{} seed {instance_seed}: {e}", cell.tag);
                    failures.lock().unwrap().push(message.clone());
                    (task_idx, TaskOutcome::Failed {
                        cell: cell_idx,
                        seed: instance_seed,
                        message,
                    })
                }
            }
        })
        .collect();

    let mut ordered = outcomes;
    ordered.sort_by_key(|&(task_idx, _)| task_idx);

    let mut runs_csv = format!("# config {hash}\n");
    runs_csv.push_str(
        "cell,family,instance_seed,mixer,p,prep,penalty_delta,optimizer_seed,sample_seed,\
         approximation_ratio,projected_cost,feasible_mass,degenerate,de_evals,bfgs_evals,stalled,wall_ms\n",
    );
    let mut per_cell_ars: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let mut per_cell_failures: Vec<usize> = vec![0; cells.len()];
    let mut completed = 0;
    let mut resumed = 0;
    for (_, outcome) in &ordered {
        match outcome {
            TaskOutcome::Done { record, resumed: was_resumed } => {
                let cell_idx = cells
                    .iter()
                    .position(|c| c.tag == record.cell)
                    .expect("record names a current cell");
                per_cell_ars[cell_idx].push(record.approximation_ratio);
                completed += 1;
                if *was_resumed {
                    resumed += 1;
                }
                runs_csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{:.12e},{:.12e},{:.12e},{},{},{},{},{}\n",
                    record.cell,
                    family_tag(&record.family),
                    record.instance_seed,
                    record.mixer,
                    record.p,
                    record.prep,
                    record.penalty_delta,
                    record.optimizer_seed,
                    record.sample_seed,
                    record.approximation_ratio,
                    record.projected_cost,
                    record.feasible_mass,
                    record.degenerate_cost_range,
                    record.de_evals,
                    record.bfgs_evals,
                    record.stalled,
                    record.wall_ms,
                ));
            }
            TaskOutcome::Failed { cell, seed, message } => {
                per_cell_failures[*cell] += 1;
                runs_csv.push_str(&format!(
                    "# error {} seed {seed}: {}\n",
                    cells[*cell].tag,
                    message.replace('\n', " ")
                ));
            }
        }
    }

    let mut aar_csv = format!("# config {hash}\n");
    aar_csv.push_str(
        "cell,family,mixer,p,prep,penalty_delta,root_seed,instances,completed,failures,\
         aar,ci_low,ci_high\n",
    );
    for cell in &cells {
        let ars = &per_cell_ars[cell.index];
        let (mean, lo, hi) = if ars.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            qaoa::bootstrap_mean_ci(ars, &cfg.aar)
        };
        aar_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.12e},{:.12e},{:.12e}\n",
            cell.tag,
            family_tag(&cell.family),
            cell.run.mixer.as_str(),
            cell.run.p,
            cell.run.prep.as_str(),
            cell.run.penalty_delta,
            cfg.seed,
            cfg.instances,
            ars.len(),
            per_cell_failures[cell.index],
            mean,
            lo,
            hi,
        ));
    }

    let runs_path = out_dir.join("sweep_runs.csv");
    let aar_path = out_dir.join("sweep_aar.csv");
    write_text(&runs_path, &runs_csv)?;
    write_text(&aar_path, &aar_csv)?;
    Ok(SweepOutcome {
        runs_csv: runs_path,
        aar_csv: aar_path,
        results_dir,
        completed,
        resumed,
        failed: failures.into_inner().unwrap().len(),
    })
}

// ---------------------------------------------------------------------------
// oracle

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub family: InstanceFamily,
    pub instance_seed: u64,
    /// Also list every loopless feasible configuration with its cost.
    pub dump_states: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            family: InstanceFamily::TriangleSssp { triangles: 2 },
            instance_seed: 0,
            dump_states: true,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct OracleState {
    pub flows: String,
    pub cost: f64,
}

#[derive(Debug, Serialize)]
pub struct OracleArtifact {
    pub config_hash: String,
    pub instance: String,
    pub instance_seed: u64,
    pub feasible_states: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub argmin: String,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<OracleState>>,
}

#[derive(Debug)]
pub struct OracleOutcome {
    pub json_path: PathBuf,
    pub artifact: OracleArtifact,
}

pub fn cmd_oracle(cfg: &OracleConfig, caps: &ResourceCaps, out_dir: &Path) -> Result<OracleOutcome> {
    let hash = config_hash(cfg);
    let inst = random_instance(cfg.family, cfg.instance_seed).map_err(|e| e.in_stage("instance"))?;
    let bounds = qaoa::cost_bounds(&inst, caps).map_err(|e| e.in_stage("enumerate"))?;
    let basis = Basis::feasible(&inst, true, caps).map_err(|e| e.in_stage("enumerate"))?;
    let states = cfg.dump_states.then(|| {
        (0..basis.dim())
            .map(|i| {
                let cfg = basis.config(i);
                OracleState {
                    flows: qaoa::flow_string(&cfg),
                    cost: inst.classical_cost(&cfg),
                }
            })
            .collect()
    });
    let artifact = OracleArtifact {
        config_hash: hash,
        instance: inst.label().to_string(),
        instance_seed: cfg.instance_seed,
        feasible_states: basis.dim(),
        c_min: bounds.c_min,
        c_max: bounds.c_max,
        argmin: bounds.argmin,
        degenerate: bounds.degenerate,
        states,
    };
    let json_path = out_dir.join("oracle.json");
    write_text(&json_path, &serde_json::to_string_pretty(&artifact)?)?;
    Ok(OracleOutcome {
        json_path,
        artifact,
    })
}

// ---------------------------------------------------------------------------
// transform

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    pub rows: usize,
    pub cols: usize,
    /// Explicit corner-to-corner vertex walks; leave both empty to draw two
    /// random paths from `seed` instead.
    pub path_a: Vec<usize>,
    pub path_b: Vec<usize>,
    pub seed: u64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            rows: 3,
            cols: 3,
            path_a: Vec::new(),
            path_b: Vec::new(),
            seed: 0,
        }
    }
}

impl TransformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Validation("transform needs a grid of at least 2x2".into()));
        }
        if self.path_a.is_empty() != self.path_b.is_empty() {
            return Err(Error::Validation(
                "give both explicit paths or neither".into(),
            ));
        }
        Ok(())
    }
}

fn walk_config(net: &FlowNetwork, vertices: &[usize]) -> Result<FlowConfig> {
    if vertices.len() < 2 {
        return Err(invalid_arg!("a path needs at least two vertices"));
    }
    let mut cfg = FlowConfig::zero(1, net.n_edges());
    for pair in vertices.windows(2) {
        let (e, sign) = net
            .edge_between(pair[0], pair[1])
            .ok_or_else(|| invalid_arg!("no edge between {} and {}", pair[0], pair[1]))?;
        if cfg.get(0, e) != 0 {
            return Err(invalid_arg!("walk reuses the edge between {} and {}", pair[0], pair[1]));
        }
        cfg.set(0, e, sign as i32);
    }
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct TransformArtifact {
    pub config_hash: String,
    pub rows: usize,
    pub cols: usize,
    pub source: usize,
    pub sink: usize,
    pub heights: Vec<i64>,
    pub max_height: i64,
    pub total_ops: u64,
    pub trace: Vec<duality::LoopOp>,
}

#[derive(Debug)]
pub struct TransformOutcome {
    pub json_path: PathBuf,
    pub artifact: TransformArtifact,
}

pub fn cmd_transform(cfg: &TransformConfig, out_dir: &Path) -> Result<TransformOutcome> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let net = FlowNetwork::grid(cfg.rows, cfg.cols)?;
    let (p1, p2) = if cfg.path_a.is_empty() {
        let (s, t) = net.terminals().unwrap();
        let inst = ProblemInstance::new(
            net.clone(),
            ProblemKind::Sssp,
            vec![CommoditySpec::unit(s, t)],
        )?;
        let a = crate::graph::seed_path(&inst, 0, cfg.seed)?;
        let b = crate::graph::seed_path(&inst, 0, cfg.seed.wrapping_add(1))?;
        (
            FlowConfig::single(a.commodity_flows(0).to_vec()),
            FlowConfig::single(b.commodity_flows(0).to_vec()),
        )
    } else {
        (walk_config(&net, &cfg.path_a)?, walk_config(&net, &cfg.path_b)?)
    };
    let (source, sink) = duality::simple_path_endpoints(&net, &p1)?;
    let field = duality::dual_heights(&net, &p1, &p2)?;
    let trace = duality::path_transform(&net, &p1, &p2)?;
    let artifact = TransformArtifact {
        config_hash: hash,
        rows: cfg.rows,
        cols: cfg.cols,
        source,
        sink,
        max_height: field.max_abs(),
        total_ops: field.total_ops(),
        heights: field.heights,
        trace,
    };
    let json_path = out_dir.join("transform.json");
    write_text(&json_path, &serde_json::to_string_pretty(&artifact)?)?;
    Ok(TransformOutcome {
        json_path,
        artifact,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim;
    use tempfile::TempDir;

    fn cheap_optimizer() -> optim::OptimizerConfig {
        optim::OptimizerConfig {
            de_population: 8,
            de_max_iters: 15,
            bfgs_max_iters: 10,
            ..optim::OptimizerConfig::default()
        }
    }

    #[test]
    fn census_reproduces_the_frozen_triangle_counts() {
        let dir = TempDir::new().unwrap();
        let cfg = CensusConfig::default();
        let outcome = cmd_census(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
        assert!(outcome.error.is_none());
        assert_eq!(outcome.rows_written, 3);
        let text = fs::read_to_string(&outcome.csv_path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config "));
        assert_eq!(
            lines.next().unwrap(),
            "graph,total_states,feasible_states,fraction"
        );
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].contains(",729,3,"));
        assert!(rows[1].contains(",2187,4,"));
        assert!(rows[2].contains(",6561,8,"));
    }

    #[test]
    fn census_with_loops_appends_the_extra_columns() {
        let dir = TempDir::new().unwrap();
        let cfg = CensusConfig {
            with_loops: true,
            ..CensusConfig::default()
        };
        let outcome = cmd_census(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
        let text = fs::read_to_string(&outcome.csv_path).unwrap();
        assert!(text.contains("fraction,feasible_with_loops,fraction_with_loops"));
        assert!(text.lines().nth(2).unwrap().contains(",729,3,"));
        assert!(text.lines().nth(2).unwrap().ends_with(",5,6.858711e-3"));
    }

    #[test]
    fn census_keeps_partial_output_when_a_row_exceeds_the_cap() {
        let dir = TempDir::new().unwrap();
        let cfg = CensusConfig {
            entries: vec![
                CensusEntry {
                    family: InstanceFamily::TriangleSssp { triangles: 2 },
                    seed: 0,
                },
                CensusEntry {
                    family: InstanceFamily::GridEdp {
                        rows: 4,
                        cols: 4,
                        commodities: 2,
                    },
                    seed: 0,
                },
            ],
            with_loops: false,
        };
        let caps = ResourceCaps {
            full_amplitudes: 1000,
            feasible_states: 1000,
        };
        let outcome = cmd_census(&cfg, &caps, dir.path()).unwrap();
        assert_eq!(outcome.rows_written, 1);
        let err = outcome.error.unwrap();
        assert_eq!(err.exit_code(), 3);
        let text = fs::read_to_string(&outcome.csv_path).unwrap();
        assert!(text.contains(",729,3,"));
        assert!(text.contains("# error grid_4x4_k2_seed0:"));
    }

    #[test]
    fn satscan_artifacts_stay_in_step() {
        let dir = TempDir::new().unwrap();
        let cfg = SatscanConfig {
            family: InstanceFamily::GridEdp {
                rows: 3,
                cols: 3,
                commodities: 1,
            },
            scan: prep::ScanConfig {
                t_max: 6.0,
                ..prep::ScanConfig::default()
            },
            ..SatscanConfig::default()
        };
        let outcome = cmd_satscan(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
        let csv = fs::read_to_string(&outcome.csv_path).unwrap();
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(rows.len(), 25);
        let first: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(first[0], "0");
        assert!((first[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);

        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&outcome.json_path).unwrap()).unwrap();
        assert_eq!(json["config_hash"], config_hash(&cfg));
        let floor = json["uniform_ipr_floor"].as_f64().unwrap();
        assert!(floor > 0.0 && floor < 1.0);
        assert_eq!(json["instance_seed"], 0);
    }

    #[test]
    fn run_artifacts_are_reproducible_apart_from_wall_time() {
        let cfg = RunCmdConfig {
            settings: RunConfig {
                shots: 128,
                optimizer: cheap_optimizer(),
                ..RunConfig::default()
            },
            ..RunCmdConfig::default()
        };
        let read = |dir: &TempDir| {
            let outcome = cmd_run(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
            let mut v: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(outcome.json_path).unwrap()).unwrap();
            v["result"]["wall_ms"] = 0.into();
            v
        };
        let a = TempDir::new().unwrap();
        let b = TempDir::new().unwrap();
        assert_eq!(read(&a), read(&b));
    }

    fn tiny_sweep() -> SweepConfig {
        SweepConfig {
            families: vec![InstanceFamily::TriangleSssp { triangles: 2 }],
            mixers: vec![MixerKind::Rqed],
            ps: vec![1],
            preps: vec![PrepStrategy::UniformFeasible],
            penalty_deltas: vec![1.0],
            instances: 2,
            seed: 40,
            base: RunConfig {
                shots: 64,
                optimizer: cheap_optimizer(),
                ..RunConfig::default()
            },
            aar: AarConfig {
                resamples: 200,
                ..AarConfig::default()
            },
        }
    }

    #[test]
    fn sweep_writes_both_tables_and_resumes_cleanly() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_sweep();
        let first = cmd_sweep(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
        assert_eq!(first.completed, 2);
        assert_eq!(first.resumed, 0);
        assert_eq!(first.failed, 0);
        let runs_a = fs::read_to_string(&first.runs_csv).unwrap();
        let aar_a = fs::read_to_string(&first.aar_csv).unwrap();
        assert_eq!(runs_a.lines().count(), 4);
        assert_eq!(aar_a.lines().count(), 3);
        let data_row = runs_a.lines().nth(2).unwrap();
        assert!(data_row.starts_with("triangle_2_rqed_p1_q0_d0,triangle_2,40,rqed,1,uniform_feasible,1,"));

        let second = cmd_sweep(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
        assert_eq!(second.resumed, 2);
        assert_eq!(second.failed, 0);
        let runs_b = fs::read_to_string(&second.runs_csv).unwrap();
        let aar_b = fs::read_to_string(&second.aar_csv).unwrap();
        assert_eq!(runs_a, runs_b);
        assert_eq!(aar_a, aar_b);
    }

    #[test]
    fn sweep_rejects_resume_files_from_another_config() {
        let dir = TempDir::new().unwrap();
        let cfg = tiny_sweep();
        let results_dir = dir
            .path()
            .join(format!("sweep_{}", &config_hash(&cfg)[..16]));
        fs::create_dir_all(&results_dir).unwrap();
        let stale = results_dir.join("triangle_2_rqed_p1_q0_d0_s40.json");
        let record = serde_json::json!({
            "config_hash": "0000", "cell": "triangle_2_rqed_p1_q0_d0",
            "family": {"family": "triangle_sssp", "triangles": 2},
            "instance_seed": 40, "mixer": "rqed", "p": 1,
            "prep": "uniform_feasible", "penalty_delta": 1.0,
            "optimizer_seed": 0, "sample_seed": 0,
            "approximation_ratio": 0.5, "projected_cost": 0.5,
            "feasible_mass": 1.0, "degenerate_cost_range": false,
            "de_evals": 1, "bfgs_evals": 0, "stalled": false, "wall_ms": 1
        });
        fs::write(&stale, serde_json::to_string(&record).unwrap()).unwrap();

        let outcome = cmd_sweep(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
        assert_eq!(outcome.failed, 1);
        assert_eq!(outcome.completed, 1);
        let runs = fs::read_to_string(&outcome.runs_csv).unwrap();
        assert!(runs.contains("# error"));
        assert!(runs.contains("was produced by config 0000"));

        // and the aar table reports the hole
        let aar = fs::read_to_string(&outcome.aar_csv).unwrap();
        let row = aar.lines().nth(2).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[8], "1");
        assert_eq!(fields[9], "1");
    }

    #[test]
    fn oracle_dumps_the_exhaustive_path_table() {
        let dir = TempDir::new().unwrap();
        let cfg = OracleConfig::default();
        let outcome = cmd_oracle(&cfg, &ResourceCaps::default(), dir.path()).unwrap();
        let a = &outcome.artifact;
        assert_eq!(a.feasible_states, 3);
        let states = a.states.as_ref().unwrap();
        assert_eq!(states.len(), 3);
        let min = states.iter().map(|s| s.cost).fold(f64::MAX, f64::min);
        let max = states.iter().map(|s| s.cost).fold(f64::MIN, f64::max);
        assert_eq!(min, a.c_min);
        assert_eq!(max, a.c_max);
        assert!(states.iter().any(|s| s.flows == a.argmin && s.cost == a.c_min));
        assert!(!a.degenerate);
    }

    #[test]
    fn transform_trace_reports_the_disjoint_boundary_pair() {
        let dir = TempDir::new().unwrap();
        let cfg = TransformConfig {
            path_a: vec![0, 1, 2, 5, 8],
            path_b: vec![0, 3, 6, 7, 8],
            ..TransformConfig::default()
        };
        let outcome = cmd_transform(&cfg, dir.path()).unwrap();
        let a = &outcome.artifact;
        assert_eq!((a.source, a.sink), (0, 8));
        assert_eq!(a.max_height, 1);
        assert_eq!(a.total_ops, 4);
        assert_eq!(a.trace.len(), 4);
        let json = fs::read_to_string(&outcome.json_path).unwrap();
        assert!(json.contains("\"face_id\""));
    }

    #[test]
    fn transform_draws_seed_paths_when_none_are_given() {
        let dir = TempDir::new().unwrap();
        let cfg = TransformConfig::default();
        let outcome = cmd_transform(&cfg, dir.path()).unwrap();
        assert_eq!(
            (outcome.artifact.source, outcome.artifact.sink),
            (0, 8)
        );
        assert_eq!(outcome.artifact.total_ops, outcome.artifact.trace.len() as u64);
    }

    #[test]
    fn experiment_config_rejects_unknown_blocks_and_keys() {
        assert!(load_config(None).is_ok());
        let parse = |text: &str| serde_json::from_str::<ExperimentConfig>(text);
        assert!(parse("{}").is_ok());
        assert!(parse("{\"census\":{\"with_loops\":true}}").is_ok());
        assert!(parse("{\"censuss\":{}}").is_err());
        assert!(parse("{\"census\":{\"entries\":[],\"bogus\":1}}").is_err());
        assert!(parse("{\"sweep\":{\"instances\":0}}").unwrap().sweep.validate().is_err());
    }

    #[test]
    fn overrides_reach_the_right_fields() {
        let mut cfg = ExperimentConfig::default();
        apply_seed(&mut cfg, CommandKind::Sweep, 99);
        assert_eq!(cfg.sweep.seed, 99);
        apply_seed(&mut cfg, CommandKind::Satscan, 7);
        assert_eq!(cfg.satscan.instance_seed, 7);
        apply_seed(&mut cfg, CommandKind::Census, 5);
        assert!(cfg.census.entries.iter().all(|e| e.seed == 5));

        let mut caps = ResourceCaps::default();
        let overrides = [
            "full=12345".parse::<CapOverride>().unwrap(),
            "feasible=99".parse::<CapOverride>().unwrap(),
        ];
        apply_caps(&mut caps, &overrides);
        assert_eq!(caps.full_amplitudes, 12345);
        assert_eq!(caps.feasible_states, 99);
        assert!("bogus=1".parse::<CapOverride>().is_err());
        assert!("full=abc".parse::<CapOverride>().is_err());
    }

    #[test]
    fn config_hash_tracks_content_not_identity() {
        let a = CensusConfig::default();
        let mut b = CensusConfig::default();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.with_loops = true;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
