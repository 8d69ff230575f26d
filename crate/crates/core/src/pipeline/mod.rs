//! Stage orchestration: config in, artifact directory out.
//!
//! Six stages form the pipeline - simulate, capture, merge, infer, detect,
//! metrics. Each reads its inputs from the output directory (never from
//! memory), writes its artifacts, and regenerates `manifest.json`, so
//! running `run` once is byte-identical to running the stages one at a time.
//!
//! Seed discipline: the master seed (config `seed`, overridable on the CLI)
//! never feeds an RNG directly. The simulator gets `master + 1`, sniffer j
//! gets `master + 100 + j`, and pair p (in sorted pair order) gets
//! `master + 1000 + p`, all wrapping. Component streams stay decoupled: a
//! different sniffer count cannot shift what the simulator draws.

pub mod config;
mod manifest;

pub use config::{parse_config, ConfigError, FieldError, ScenarioConfig, SnifferDecl, TrainSettings};
pub use manifest::{sha256_hex, write_manifest, Manifest, ManifestFile};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{build_report, deferral_probabilities, DetectorError, PairInference};
use crate::hmm::{baum_welch, pair_template_model, HmmError, TrainConfig};
use crate::io;
use crate::metrics::{time_series, MetricsError};
use crate::sim::{run_simulation, NodeId, SimConfig, SimError, SimOutput};
use crate::sniffer::{
    capture, extract_observations, merge_traces, CapturedTrace, MergedTrace, SnifferConfig,
    SnifferError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing input file {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        source: io::FormatError,
    },
    #[error("--pair: {0}")]
    BadPairFilter(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sniffer(#[from] SnifferError),
    #[error("training pair ({x}, {y}): {source}")]
    Train {
        x: NodeId,
        y: NodeId,
        source: HmmError,
    },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    /// CLI exit code: 1 for config or input validation problems, 2 for
    /// runtime or numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::MissingInput(_)
            | PipelineError::Format { .. }
            | PipelineError::BadPairFilter(_) => 1,
            _ => 2,
        }
    }
}

/// Where a stage reads and writes, plus the provenance recorded in the
/// manifest.
#[derive(Debug, Clone)]
pub struct StageCtx {
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub config_sha256: String,
}

/// Read and validate the config, prepare the output directory, resolve the
/// master seed.
pub fn load(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(ScenarioConfig, StageCtx), PipelineError> {
    let bytes = match std::fs::read(config_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(PipelineError::MissingInput(config_path.to_path_buf()));
        }
        Err(e) => {
            return Err(PipelineError::Io {
                path: config_path.to_path_buf(),
                source: e,
            });
        }
    };
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| PipelineError::Config(ConfigError::Encoding(e.to_string())))?;
    let cfg = parse_config(text)?;
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;
    let ctx = StageCtx {
        out_dir: out_dir.to_path_buf(),
        master_seed: seed_override.unwrap_or(cfg.seed),
        config_sha256: sha256_hex(&bytes),
    };
    Ok((cfg, ctx))
}

fn read_input(path: &Path) -> Result<String, PipelineError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(PipelineError::MissingInput(path.to_path_buf()))
        }
        Err(e) => Err(PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        }),
    }
}

fn write_output(path: &Path, content: &str) -> Result<(), PipelineError> {
    std::fs::write(path, content).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn format_err(path: &Path) -> impl FnOnce(io::FormatError) -> PipelineError + '_ {
    move |source| PipelineError::Format {
        path: path.to_path_buf(),
        source,
    }
}

fn finish(ctx: &StageCtx) -> Result<(), PipelineError> {
    write_manifest(&ctx.out_dir, &ctx.config_sha256, ctx.master_seed).map_err(|e| {
        PipelineError::Io {
            path: ctx.out_dir.join("manifest.json"),
            source: e,
        }
    })?;
    Ok(())
}

fn sim_seed(master: u64) -> u64 {
    master.wrapping_add(1)
}

fn sniffer_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(100).wrapping_add(index as u64)
}

fn pair_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(1000).wrapping_add(index as u64)
}

/// Run the simulator and write `transmissions.csv` and `deliveries.csv`.
pub fn stage_simulate(cfg: &ScenarioConfig, ctx: &StageCtx) -> Result<SimOutput, PipelineError> {
    let sim_cfg = SimConfig {
        total_slots: cfg.total_slots,
        packet_len: cfg.packet_len,
        packet_bytes: cfg.packet_bytes,
        seed: sim_seed(ctx.master_seed),
    };
    let output = run_simulation(&cfg.topology, &cfg.nodes, &sim_cfg)?;
    write_output(
        &ctx.out_dir.join("transmissions.csv"),
        &io::write_transmissions_csv(&output.transmissions),
    )?;
    write_output(
        &ctx.out_dir.join("deliveries.csv"),
        &io::write_deliveries_csv(&output.deliveries),
    )?;
    finish(ctx)?;
    Ok(output)
}

/// Reconstruct the on-air view from `transmissions.csv`.
fn load_sim_output(cfg: &ScenarioConfig, ctx: &StageCtx) -> Result<SimOutput, PipelineError> {
    let path = ctx.out_dir.join("transmissions.csv");
    let text = read_input(&path)?;
    let transmissions = io::parse_transmissions_csv(&text).map_err(format_err(&path))?;
    Ok(SimOutput {
        total_slots: cfg.total_slots,
        packet_bytes: cfg.packet_bytes,
        transmissions,
        deferral_events: Vec::new(),
        deliveries: Vec::new(),
    })
}

/// Capture one lossy trace per configured sniffer.
pub fn stage_capture(cfg: &ScenarioConfig, ctx: &StageCtx) -> Result<(), PipelineError> {
    let output = load_sim_output(cfg, ctx)?;
    for (j, decl) in cfg.sniffers.iter().enumerate() {
        let trace = capture(
            &output,
            &SnifferConfig {
                id: decl.id.clone(),
                coverage: decl.coverage.clone(),
                loss: decl.loss,
                seed: sniffer_seed(ctx.master_seed, j),
            },
        )?;
        write_output(
            &ctx.out_dir.join(format!("sniffer_{}.csv", decl.id)),
            &io::write_trace_csv(&trace),
        )?;
    }
    finish(ctx)
}

/// Merge all sniffer traces into `merged.csv`.
pub fn stage_merge(cfg: &ScenarioConfig, ctx: &StageCtx) -> Result<(), PipelineError> {
    let mut traces = Vec::with_capacity(cfg.sniffers.len());
    for decl in &cfg.sniffers {
        let path = ctx.out_dir.join(format!("sniffer_{}.csv", decl.id));
        let text = read_input(&path)?;
        let (found_id, records) = io::parse_trace_csv(&text).map_err(format_err(&path))?;
        if let Some(found_id) = found_id {
            if found_id != decl.id {
                return Err(PipelineError::Format {
                    path,
                    source: io::FormatError::Csv {
                        line: 2,
                        msg: format!("trace is for sniffer {found_id:?}, expected {:?}", decl.id),
                    },
                });
            }
        }
        traces.push(CapturedTrace {
            sniffer_id: decl.id.clone(),
            total_slots: cfg.total_slots,
            records,
        });
    }
    let merged = if traces.is_empty() {
        MergedTrace {
            total_slots: cfg.total_slots,
            records: Vec::new(),
        }
    } else {
        merge_traces(&traces)?
    };
    write_output(&ctx.out_dir.join("merged.csv"), &io::write_merged_csv(&merged))?;
    finish(ctx)
}

/// Scored side of `pairs.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub x: String,
    pub y: String,
    pub d_x: f64,
    pub d_y: f64,
    pub eta: f64,
    pub log_likelihood: f64,
    pub evidence_slots: f64,
}

/// Pair whose contention mass fell below the evidence floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub x: String,
    pub y: String,
    pub evidence_slots: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsFile {
    pub pairs: Vec<PairEntry>,
    pub skipped: Vec<SkippedPair>,
}

impl PairsFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("pairs serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// All unordered sender pairs, lexicographically ordered within and across
/// pairs. This is the pair universe the pipeline scores.
pub fn sender_pairs(cfg: &ScenarioConfig) -> Vec<(NodeId, NodeId)> {
    let mut senders: Vec<NodeId> = cfg.topology.links.iter().map(|l| l.sender.clone()).collect();
    senders.sort();
    senders.dedup();
    let mut pairs = Vec::new();
    for i in 0..senders.len() {
        for j in i + 1..senders.len() {
            pairs.push((senders[i].clone(), senders[j].clone()));
        }
    }
    pairs
}

/// Extract observations and train a pair model for every sender pair (or
/// just `pair_filter`), writing per-pair artifacts and `pairs.json`.
pub fn stage_infer(
    cfg: &ScenarioConfig,
    ctx: &StageCtx,
    pair_filter: Option<(NodeId, NodeId)>,
) -> Result<(), PipelineError> {
    let path = ctx.out_dir.join("merged.csv");
    let text = read_input(&path)?;
    let merged = io::parse_merged_csv(&text, cfg.total_slots).map_err(format_err(&path))?;

    let universe = sender_pairs(cfg);
    let selected: Vec<(usize, (NodeId, NodeId))> = match &pair_filter {
        None => universe.into_iter().enumerate().collect(),
        Some((a, b)) => {
            let want = if a < b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            match universe.iter().position(|p| *p == want) {
                Some(idx) => vec![(idx, want)],
                None => {
                    return Err(PipelineError::BadPairFilter(format!(
                        "({}, {}) is not a sender pair of this scenario",
                        want.0, want.1
                    )));
                }
            }
        }
    };

    struct PairArtifacts {
        x: NodeId,
        y: NodeId,
        obs_csv: String,
        meta_json: String,
        model_json: String,
        scored: Result<PairEntry, SkippedPair>,
    }

    let (first_slot, last_slot) = cfg.window;
    let results: Vec<PairArtifacts> = selected
        .par_iter()
        .map(|(index, (x, y))| -> Result<PairArtifacts, PipelineError> {
            let obs = extract_observations(&merged, x, y, first_slot, last_slot)?;
            let seed = pair_seed(ctx.master_seed, *index);
            let template = pair_template_model(cfg.train.epsilon, seed).map_err(|source| {
                PipelineError::Train {
                    x: x.clone(),
                    y: y.clone(),
                    source,
                }
            })?;
            let train_cfg = TrainConfig {
                max_iters: cfg.train.max_iters,
                tol: cfg.train.tol,
                restarts: cfg.train.restarts,
                freeze_emissions: cfg.train.freeze_emissions,
                seed,
            };
            let result =
                baum_welch(&template, &obs.indices(), &train_cfg).map_err(|source| {
                    PipelineError::Train {
                        x: x.clone(),
                        y: y.clone(),
                        source,
                    }
                })?;
            let scored = match deferral_probabilities(&result, cfg.detector.min_evidence_slots) {
                Ok((d_x, d_y)) => Ok(PairEntry {
                    x: x.to_string(),
                    y: y.to_string(),
                    d_x,
                    d_y,
                    eta: crate::detector::asymmetry(d_x, d_y),
                    log_likelihood: result.log_likelihood,
                    evidence_slots: crate::detector::evidence_slots(&result)?,
                }),
                Err(DetectorError::InsufficientEvidence { evidence_slots }) => Err(SkippedPair {
                    x: x.to_string(),
                    y: y.to_string(),
                    evidence_slots,
                    reason: "insufficient evidence".to_string(),
                }),
                Err(other) => return Err(other.into()),
            };
            Ok(PairArtifacts {
                x: x.clone(),
                y: y.clone(),
                obs_csv: io::write_observations_csv(&obs),
                meta_json: io::ObservationMeta::of(&obs).to_json(),
                model_json: result.model.to_json(),
                scored,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut pairs_file = PairsFile {
        pairs: Vec::new(),
        skipped: Vec::new(),
    };
    for art in results {
        let stem = format!("{}_{}", art.x, art.y);
        write_output(&ctx.out_dir.join(format!("obs_{stem}.csv")), &art.obs_csv)?;
        write_output(&ctx.out_dir.join(format!("obs_{stem}.json")), &art.meta_json)?;
        write_output(&ctx.out_dir.join(format!("model_{stem}.json")), &art.model_json)?;
        match art.scored {
            Ok(entry) => pairs_file.pairs.push(entry),
            Err(skip) => pairs_file.skipped.push(skip),
        }
    }
    write_output(&ctx.out_dir.join("pairs.json"), &pairs_file.to_json())?;
    finish(ctx)
}

/// Aggregate `pairs.json` into `report.json`.
pub fn stage_detect(
    cfg: &ScenarioConfig,
    ctx: &StageCtx,
    tau_selfish: Option<f64>,
    tau_witness: Option<f64>,
) -> Result<(), PipelineError> {
    let path = ctx.out_dir.join("pairs.json");
    let text = read_input(&path)?;
    let pairs_file = PairsFile::from_json(&text).map_err(|e| PipelineError::Format {
        path: path.clone(),
        source: io::FormatError::Json(e.to_string()),
    })?;
    let mut inferences = Vec::with_capacity(pairs_file.pairs.len());
    for p in &pairs_file.pairs {
        let x = NodeId::new(p.x.clone())?;
        let y = NodeId::new(p.y.clone())?;
        inferences.push(
            PairInference::new(x, y, p.d_x, p.d_y, p.log_likelihood, p.evidence_slots)?,
        );
    }
    let mut detector = cfg.detector.clone();
    if let Some(v) = tau_selfish {
        detector.tau_selfish = v;
    }
    if let Some(v) = tau_witness {
        detector.tau_witness = v;
    }
    let report = build_report(&inferences, &detector)?;
    write_output(&ctx.out_dir.join("report.json"), &report.to_json())?;
    finish(ctx)
}

/// Bucket `deliveries.csv` into `series.csv`.
pub fn stage_metrics(
    cfg: &ScenarioConfig,
    ctx: &StageCtx,
    bucket_override: Option<u64>,
) -> Result<(), PipelineError> {
    let path = ctx.out_dir.join("deliveries.csv");
    let text = read_input(&path)?;
    let deliveries = io::parse_deliveries_csv(&text).map_err(format_err(&path))?;
    let output = SimOutput {
        total_slots: cfg.total_slots,
        packet_bytes: cfg.packet_bytes,
        transmissions: Vec::new(),
        deferral_events: Vec::new(),
        deliveries,
    };
    let bucket_slots = bucket_override.unwrap_or(cfg.bucket_slots);
    let series = time_series(&output, bucket_slots, cfg.slot_seconds)?;
    write_output(&ctx.out_dir.join("series.csv"), &io::write_series_csv(&series))?;
    finish(ctx)
}

/// The whole pipeline, stage by stage, through the same file hand-offs the
/// individual subcommands use.
pub fn run_pipeline(cfg: &ScenarioConfig, ctx: &StageCtx) -> Result<(), PipelineError> {
    stage_simulate(cfg, ctx)?;
    stage_capture(cfg, ctx)?;
    stage_merge(cfg, ctx)?;
    stage_infer(cfg, ctx, None)?;
    stage_detect(cfg, ctx, None, None)?;
    stage_metrics(cfg, ctx, None)?;
    Ok(())
}
