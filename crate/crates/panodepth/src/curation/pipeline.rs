//! Manifest-driven multi-stage orchestration with idempotent reruns.
//!
//! A pipeline is an ordered list of stages. Each stage consumes input
//! manifests (external files or earlier stage outputs), applies its
//! configured operations in the fixed order *label → score → select → mix*,
//! and persists `manifest.jsonl` plus a `manifest.meta.json` carrying the
//! resolved config hash and the output content hash. A rerun skips a stage
//! when no earlier stage re-executed and both hashes still match, so
//! corrupting one intermediate manifest re-executes that stage and
//! everything downstream, nothing upstream.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

use super::manifest::{Provenance, SampleManifest};
use super::stages::{
    concat_manifests, invoke_labeler, mix_datasets, score_samples, select_top_k, CommandTemplate,
};

/// The three stage roles of the curation pipeline.
pub const STAGE_NAMES: [&str; 3] = [
    "scene-invariant-labeler",
    "realism-invariant-labeler",
    "dap",
];

/// Top-level pipeline document (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub pipeline: PipelineSettings,
    #[serde(rename = "stage")]
    pub stages: Vec<StageConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    /// Bounded process-level parallelism for labeler batches.
    pub workers: usize,
    /// Run log path; defaults to `run_log.jsonl` next to the first stage.
    pub run_log: Option<PathBuf>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            workers: 1,
            run_log: None,
        }
    }
}

/// One stage: inputs, the operations it runs, and where outputs go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    /// One of [`STAGE_NAMES`].
    pub name: String,
    pub output_dir: PathBuf,
    pub inputs: Vec<StageInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeler: Option<LabelerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select: Option<SelectConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<MixConfig>,
}

/// Either an external manifest file or a previous stage's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelerConfig {
    /// Must contain `{input_list_path}` and `{output_dir}`.
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    /// Must contain `{pair_list_path}`.
    pub command: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub k_indoor: usize,
    pub k_outdoor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    pub seed: u64,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config {
            field: "pipeline".into(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config {
                field: "stage".into(),
                msg: "pipeline has no stages".into(),
            });
        }
        let mut names = std::collections::HashSet::new();
        for (i, s) in self.stages.iter().enumerate() {
            if !STAGE_NAMES.contains(&s.name.as_str()) {
                return Err(Error::Config {
                    field: format!("stage[{i}].name"),
                    msg: format!("`{}` is not one of {STAGE_NAMES:?}", s.name),
                });
            }
            if !names.insert(s.name.clone()) {
                return Err(Error::Config {
                    field: format!("stage[{i}].name"),
                    msg: format!("duplicate stage name `{}`", s.name),
                });
            }
            if s.inputs.is_empty() {
                return Err(Error::Config {
                    field: format!("stage[{i}].inputs"),
                    msg: "stage needs at least one input".into(),
                });
            }
            for (j, inp) in s.inputs.iter().enumerate() {
                if inp.manifest.is_some() == inp.stage.is_some() {
                    return Err(Error::Config {
                        field: format!("stage[{i}].inputs[{j}]"),
                        msg: "set exactly one of `manifest` or `stage`".into(),
                    });
                }
                if let Some(ref name) = inp.stage {
                    if !self.stages[..i].iter().any(|p| &p.name == name) {
                        return Err(Error::Config {
                            field: format!("stage[{i}].inputs[{j}].stage"),
                            msg: format!("`{name}` is not an earlier stage"),
                        });
                    }
                }
                if !(inp.weight.is_finite() && inp.weight >= 0.0) {
                    return Err(Error::Config {
                        field: format!("stage[{i}].inputs[{j}].weight"),
                        msg: format!("weight {} must be ≥ 0", inp.weight),
                    });
                }
            }
            if s.mix.is_some() && (s.labeler.is_some() || s.scorer.is_some() || s.select.is_some())
            {
                return Err(Error::Config {
                    field: format!("stage[{i}].mix"),
                    msg: "mix is a dedicated step; combine it with labeler/scorer/select \
                          by splitting stages"
                        .into(),
                });
            }
            if s.mix.is_none() && s.inputs.iter().any(|inp| inp.weight != 1.0) {
                return Err(Error::Config {
                    field: format!("stage[{i}].inputs"),
                    msg: "non-unit input weights require a mix step".into(),
                });
            }
            if let Some(ref l) = s.labeler {
                CommandTemplate::new(&l.command)
                    .require_placeholders(&["input_list_path", "output_dir"])?;
            }
            if let Some(ref sc) = s.scorer {
                CommandTemplate::new(&sc.command).require_placeholders(&["pair_list_path"])?;
            }
        }
        Ok(())
    }
}

/// Structured record of one run, written as JSON lines.
struct RunLog {
    file: Option<fs::File>,
    seq: u64,
}

impl RunLog {
    fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(RunLog {
            file: Some(fs::File::create(path)?),
            seq: 0,
        })
    }

    fn event(&mut self, stage: &str, event: &str, detail: serde_json::Value) {
        self.seq += 1;
        if let Some(f) = self.file.as_mut() {
            let line = serde_json::json!({
                "seq": self.seq,
                "stage": stage,
                "event": event,
                "detail": detail,
            });
            let _ = writeln!(f, "{line}");
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StageMeta {
    stage: String,
    config_hash: String,
    output_hash: String,
    n_records: usize,
    inputs: Vec<serde_json::Value>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Output of one executed (or skipped) stage.
#[derive(Debug)]
pub struct StageOutput {
    pub name: String,
    pub manifest: SampleManifest,
    pub manifest_path: PathBuf,
    pub skipped: bool,
}

/// Runs all stages in order; relative paths resolve against `base_dir`.
///
/// Fails on the first stage error, naming the stage. Reruns with unchanged
/// configs, fixtures, and seeds produce byte-identical manifests and skip
/// completed stages.
pub fn run_pipeline(cfg: &PipelineConfig, base_dir: &Path) -> Result<Vec<StageOutput>> {
    cfg.validate()?;
    let log_path = cfg
        .pipeline
        .run_log
        .as_ref()
        .map(|p| resolve(base_dir, p))
        .unwrap_or_else(|| base_dir.join("run_log.jsonl"));
    let mut log = RunLog::create(&log_path)?;
    log.event(
        "",
        "pipeline_started",
        serde_json::json!({"stages": cfg.stages.len()}),
    );

    let mut outputs: Vec<StageOutput> = Vec::new();
    let mut upstream_ran = false;
    for stage in &cfg.stages {
        let out = run_stage(stage, cfg, base_dir, &outputs, upstream_ran, &mut log).map_err(
            |e| match e {
                Error::Stage { .. } => e,
                other => Error::Stage {
                    stage: stage.name.clone(),
                    msg: other.to_string(),
                },
            },
        )?;
        upstream_ran |= !out.skipped;
        outputs.push(out);
    }
    log.event("", "pipeline_completed", serde_json::json!({}));
    Ok(outputs)
}

fn run_stage(
    stage: &StageConfig,
    cfg: &PipelineConfig,
    base_dir: &Path,
    done: &[StageOutput],
    upstream_ran: bool,
    log: &mut RunLog,
) -> Result<StageOutput> {
    let out_dir = resolve(base_dir, &stage.output_dir);
    let manifest_path = out_dir.join("manifest.jsonl");
    let meta_path = out_dir.join("manifest.meta.json");

    // Resolve inputs to (manifest, weight, description) and hash their bytes.
    let mut inputs: Vec<(SampleManifest, f64)> = Vec::new();
    let mut input_meta = Vec::new();
    let mut hasher_inputs = Vec::new();
    for inp in &stage.inputs {
        let (manifest, desc) = match (&inp.manifest, &inp.stage) {
            (Some(path), None) => {
                let full = resolve(base_dir, path);
                let m = SampleManifest::load(&full)?;
                (
                    m,
                    serde_json::json!({"manifest": path, "weight": inp.weight}),
                )
            }
            (None, Some(name)) => {
                let prev = done
                    .iter()
                    .find(|o| &o.name == name)
                    .ok_or_else(|| Error::invalid(format!("stage `{name}` has not run")))?;
                (
                    prev.manifest.clone(),
                    serde_json::json!({"stage": name, "weight": inp.weight}),
                )
            }
            _ => unreachable!("validated"),
        };
        hasher_inputs.push(sha256_hex(manifest.to_jsonl().as_bytes()));
        input_meta.push(desc);
        inputs.push((manifest, inp.weight));
    }

    // The stage identity: its resolved config plus its inputs' content.
    let config_hash = sha256_hex(
        serde_json::json!({
            "stage": stage,
            "inputs": hasher_inputs,
        })
        .to_string()
        .as_bytes(),
    );

    if !upstream_ran {
        if let (Ok(meta_text), Ok(out_bytes)) =
            (fs::read_to_string(&meta_path), fs::read(&manifest_path))
        {
            if let Ok(meta) = serde_json::from_str::<StageMeta>(&meta_text) {
                if meta.config_hash == config_hash && meta.output_hash == sha256_hex(&out_bytes) {
                    info!("stage `{}` skipped: outputs up to date", stage.name);
                    log.event(&stage.name, "stage_skipped", serde_json::json!({}));
                    let manifest = SampleManifest::parse_jsonl(
                        &String::from_utf8_lossy(&out_bytes),
                        &manifest_path,
                    )?
                    .with_provenance(Provenance {
                        stage: stage.name.clone(),
                        config_hash,
                    });
                    return Ok(StageOutput {
                        name: stage.name.clone(),
                        manifest,
                        manifest_path,
                        skipped: true,
                    });
                }
            }
        }
    }

    info!("stage `{}` started", stage.name);
    log.event(&stage.name, "stage_started", serde_json::json!({}));
    fs::create_dir_all(&out_dir)?;

    let mut working = if let Some(mix) = &stage.mix {
        mix_datasets(&inputs, mix.seed)?
    } else {
        concat_manifests(&inputs.iter().map(|(m, _)| m.clone()).collect::<Vec<_>>())?
    };

    if let Some(labeler) = &stage.labeler {
        let (labeled, skipped) = invoke_labeler(
            &working,
            &CommandTemplate::new(&labeler.command),
            &out_dir.join("work"),
            &out_dir.join("depth"),
            labeler.batch_size,
            cfg.pipeline.workers,
            &stage.name,
        )?;
        if !skipped.is_empty() {
            warn!(
                "stage `{}`: labeler produced no output for {} samples",
                stage.name,
                skipped.len()
            );
            log.event(
                &stage.name,
                "samples_skipped",
                serde_json::json!({"count": skipped.len(), "ids": skipped}),
            );
        }
        working = labeled;
    }

    if let Some(scorer) = &stage.scorer {
        working = score_samples(
            &working,
            &CommandTemplate::new(&scorer.command),
            &out_dir.join("work"),
            &stage.name,
        )?;
    }

    if let Some(select) = &stage.select {
        let (selected, warnings) = select_top_k(&working, select.k_indoor, select.k_outdoor)?;
        for w in warnings {
            warn!("stage `{}`: {w}", stage.name);
            log.event(&stage.name, "select_warning", serde_json::json!({"msg": w}));
        }
        working = selected;
    }

    let provenance = Provenance {
        stage: stage.name.clone(),
        config_hash: config_hash.clone(),
    };
    let records = working
        .records()
        .iter()
        .map(|r| {
            let mut rec = r.clone();
            rec.stage_tag = stage.name.clone();
            rec
        })
        .collect();
    let manifest = SampleManifest::from_ordered(records, provenance)?;

    manifest.save(&manifest_path)?;
    let output_hash = sha256_hex(manifest.to_jsonl().as_bytes());
    let meta = StageMeta {
        stage: stage.name.clone(),
        config_hash,
        output_hash,
        n_records: manifest.len(),
        inputs: input_meta,
    };
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    log.event(
        &stage.name,
        "stage_completed",
        serde_json::json!({"records": manifest.len()}),
    );
    Ok(StageOutput {
        name: stage.name.clone(),
        manifest,
        manifest_path,
        skipped: false,
    })
}
