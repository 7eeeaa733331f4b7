//! The four curation operations: external labeling, external scoring,
//! per-domain top-k selection, and weighted deterministic mixing.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use super::manifest::{Domain, Provenance, SampleManifest, SampleRecord};

/// External process invocation with `{placeholder}` substitution.
///
/// The template is split on whitespace and each token has its placeholders
/// substituted, so paths with spaces are not supported (by design: templates
/// come from config files and fixtures).
///
/// Documented placeholders:
/// - `{input_list_path}` — file with one `<id>\t<image_path>` line per sample
///   (labeler contract; the labeler must write `<id>.pfm` into the output
///   directory),
/// - `{output_dir}` — directory the labeler writes depth files into,
/// - `{pair_list_path}` — file with one `<image_path>\t<depth_path>` line per
///   sample (scorer contract; the scorer prints one decimal score per line,
///   in input order, to stdout).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTemplate {
    template: String,
}

impl CommandTemplate {
    pub fn new(template: impl Into<String>) -> Self {
        CommandTemplate {
            template: template.into(),
        }
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    /// Requires every named placeholder to appear in the template.
    pub fn require_placeholders(&self, names: &[&str]) -> Result<()> {
        for n in names {
            let token = format!("{{{n}}}");
            if !self.template.contains(&token) {
                return Err(Error::Config {
                    field: "command".into(),
                    msg: format!("template `{}` is missing {token}", self.template),
                });
            }
        }
        Ok(())
    }

    fn resolve(&self, substitutions: &[(&str, &Path)]) -> Vec<String> {
        self.template
            .split_whitespace()
            .map(|tok| {
                let mut t = tok.to_string();
                for (name, value) in substitutions {
                    t = t.replace(&format!("{{{name}}}"), &value.to_string_lossy());
                }
                t
            })
            .collect()
    }
}

/// Runs a resolved command, failing with its captured output on nonzero exit.
fn run_command(argv: &[String], stage: &str) -> Result<std::process::Output> {
    if argv.is_empty() {
        return Err(Error::Config {
            field: "command".into(),
            msg: "empty command template".into(),
        });
    }
    let output = Command::new(&argv[0])
        .args(&argv[1..])
        .output()
        .map_err(|e| Error::Stage {
            stage: stage.to_string(),
            msg: format!("failed to launch `{}`: {e}", argv.join(" ")),
        })?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(Error::Stage {
            stage: stage.to_string(),
            msg: format!(
                "`{}` exited with {}: {}",
                argv.join(" "),
                output.status,
                stderr.trim()
            ),
        });
    }
    Ok(output)
}

/// Runs the external predictor over the manifest and fills `depth_path`.
///
/// Samples are written to list files (`<id>\t<image_path>` per line) in
/// `work_dir`, in batches of `batch_size`; the predictor must write
/// `<id>.pfm` into `depth_dir`. Samples whose output file is missing
/// afterwards are dropped; their ids are returned for logging. An empty
/// manifest launches no process.
pub fn invoke_labeler(
    manifest: &SampleManifest,
    command: &CommandTemplate,
    work_dir: &Path,
    depth_dir: &Path,
    batch_size: Option<usize>,
    workers: usize,
    stage: &str,
) -> Result<(SampleManifest, Vec<String>)> {
    command.require_placeholders(&["input_list_path", "output_dir"])?;
    if manifest.is_empty() {
        return Ok((
            SampleManifest::from_ordered(Vec::new(), manifest.provenance().clone())?,
            Vec::new(),
        ));
    }
    fs::create_dir_all(work_dir)?;
    fs::create_dir_all(depth_dir)?;

    let batch = batch_size.unwrap_or(manifest.len()).max(1);
    let batches: Vec<(usize, &[SampleRecord])> =
        manifest.records().chunks(batch).enumerate().collect();
    let queue = Mutex::new(batches.into_iter().collect::<Vec<_>>());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let item = queue.lock().unwrap().pop();
                let Some((idx, records)) = item else { break };
                let run = (|| -> Result<()> {
                    let list_path = work_dir.join(format!("batch_{idx:04}.list"));
                    let mut list = String::new();
                    for r in records {
                        list.push_str(&format!("{}\t{}\n", r.id, r.image_path.display()));
                    }
                    fs::write(&list_path, list)?;
                    let argv = command.resolve(&[
                        ("input_list_path", list_path.as_path()),
                        ("output_dir", depth_dir),
                    ]);
                    run_command(&argv, stage)?;
                    Ok(())
                })();
                if let Err(e) = run {
                    *failure.lock().unwrap() = Some(e);
                    queue.lock().unwrap().clear();
                    break;
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    let mut labeled = Vec::new();
    let mut skipped = Vec::new();
    for r in manifest.records() {
        let depth_path = depth_dir.join(format!("{}.pfm", r.id));
        if depth_path.is_file() {
            let mut rec = r.clone();
            rec.depth_path = Some(depth_path);
            labeled.push(rec);
        } else {
            skipped.push(r.id.clone());
        }
    }
    Ok((
        SampleManifest::from_ordered(labeled, manifest.provenance().clone())?,
        skipped,
    ))
}

/// Runs the external scorer and attaches one score per record.
///
/// The pair list (`<image_path>\t<depth_path>` per line) goes to `work_dir`;
/// the scorer prints one decimal per line to stdout, in input order. A line
/// count mismatch or a non-numeric line fails the stage.
pub fn score_samples(
    manifest: &SampleManifest,
    command: &CommandTemplate,
    work_dir: &Path,
    stage: &str,
) -> Result<SampleManifest> {
    command.require_placeholders(&["pair_list_path"])?;
    if manifest.is_empty() {
        return Ok(manifest.clone());
    }
    fs::create_dir_all(work_dir)?;
    let mut list = String::new();
    for r in manifest.records() {
        let depth = r.depth_path.as_ref().ok_or_else(|| {
            Error::invalid(format!("record `{}` has no depth_path to score", r.id))
        })?;
        list.push_str(&format!(
            "{}\t{}\n",
            r.image_path.display(),
            depth.display()
        ));
    }
    let pair_list = work_dir.join("pairs.list");
    fs::write(&pair_list, list)?;

    let argv = command.resolve(&[("pair_list_path", pair_list.as_path())]);
    let output = run_command(&argv, stage)?;
    let stdout = String::from_utf8_lossy(&output.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    if lines.len() != manifest.len() {
        return Err(Error::Stage {
            stage: stage.to_string(),
            msg: format!(
                "scorer wrote {} lines for {} pairs",
                lines.len(),
                manifest.len()
            ),
        });
    }
    let mut scored = Vec::with_capacity(manifest.len());
    for (i, (r, line)) in manifest.records().iter().zip(&lines).enumerate() {
        let score: f64 = line.trim().parse().map_err(|_| Error::Stage {
            stage: stage.to_string(),
            msg: format!("non-numeric score `{}` on line {}", line.trim(), i + 1),
        })?;
        if !score.is_finite() {
            return Err(Error::Stage {
                stage: stage.to_string(),
                msg: format!("non-finite score on line {}", i + 1),
            });
        }
        let mut rec = r.clone();
        rec.score = Some(score);
        scored.push(rec);
    }
    SampleManifest::from_ordered(scored, manifest.provenance().clone())
}

/// Keeps the top-k records per domain by score (descending), ties broken by
/// ascending id. Output order is the indoor block then the outdoor block.
/// Asking for more than a domain's pool returns the whole pool plus a warning.
pub fn select_top_k(
    manifest: &SampleManifest,
    k_indoor: usize,
    k_outdoor: usize,
) -> Result<(SampleManifest, Vec<String>)> {
    for r in manifest.records() {
        if r.score.is_none() {
            return Err(Error::invalid(format!(
                "record `{}` is unscored; run scoring before selection",
                r.id
            )));
        }
    }
    let mut warnings = Vec::new();
    let mut take = |domain: Domain, k: usize| -> Vec<SampleRecord> {
        let mut pool: Vec<&SampleRecord> = manifest
            .records()
            .iter()
            .filter(|r| r.domain == domain)
            .collect();
        pool.sort_by(|a, b| {
            b.score
                .unwrap()
                .partial_cmp(&a.score.unwrap())
                .unwrap()
                .then_with(|| a.id.cmp(&b.id))
        });
        if k > pool.len() {
            warnings.push(format!(
                "requested {k} {domain:?} records but only {} available",
                pool.len()
            ));
        }
        pool.into_iter().take(k).cloned().collect()
    };
    let mut selected = take(Domain::Indoor, k_indoor);
    selected.extend(take(Domain::Outdoor, k_outdoor));
    Ok((
        SampleManifest::from_ordered(selected, manifest.provenance().clone())?,
        warnings,
    ))
}

/// Concatenates manifests with weight-proportional repetition, then shuffles
/// deterministically with the given seed.
///
/// Each source is repeated `round(weight)` times (at least once for a
/// positive weight; zero-weight sources are dropped). Colliding ids — from
/// repetition or across sources — get a deterministic `__s<src>r<rep>`
/// suffix.
pub fn mix_datasets(inputs: &[(SampleManifest, f64)], seed: u64) -> Result<SampleManifest> {
    if inputs.is_empty() {
        return Err(Error::invalid("mix_datasets needs at least one input"));
    }
    for (_, w) in inputs {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::invalid(format!("mix weight {w} must be ≥ 0")));
        }
    }
    if inputs.iter().all(|(_, w)| *w == 0.0) {
        return Err(Error::invalid("mix weights must not all be zero"));
    }

    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (si, (manifest, weight)) in inputs.iter().enumerate() {
        if *weight == 0.0 {
            continue;
        }
        let reps = (weight.round() as usize).max(1);
        for rep in 0..reps {
            for r in manifest.records() {
                let mut rec = r.clone();
                if seen.contains(&rec.id) {
                    let mut id = format!("{}__s{si}r{rep}", rec.id);
                    while seen.contains(&id) {
                        id.push('x');
                    }
                    rec.id = id;
                }
                seen.insert(rec.id.clone());
                records.push(rec);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    SampleManifest::from_ordered(
        records,
        Provenance {
            stage: "mix".to_string(),
            config_hash: String::new(),
        },
    )
}

/// Plain concatenation with the same deterministic id-dedup rule as
/// [`mix_datasets`] and no reordering.
pub(crate) fn concat_manifests(inputs: &[SampleManifest]) -> Result<SampleManifest> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (si, manifest) in inputs.iter().enumerate() {
        for r in manifest.records() {
            let mut rec = r.clone();
            if seen.contains(&rec.id) {
                let mut id = format!("{}__s{si}r0", rec.id);
                while seen.contains(&id) {
                    id.push('x');
                }
                rec.id = id;
            }
            seen.insert(rec.id.clone());
            records.push(rec);
        }
    }
    SampleManifest::from_ordered(records, Provenance::default())
}
