//! The three-stage pseudo-label pipeline end to end, with stub shell scripts
//! standing in for the external labeler and scorer (Unix only).
//!
//! ```bash
//! cargo run -p panodepth --example curation_pipeline
//! ```

use std::os::unix::fs::PermissionsExt;
use std::path::PathBuf;

use panodepth::curation::{
    run_pipeline, Domain, PipelineConfig, Provenance, SampleManifest, SampleRecord, Source,
};
use panodepth::depth::DepthMap;
use panodepth::io::{write_depth, DepthFileFormat};

fn main() -> panodepth::Result<()> {
    let base = std::env::temp_dir().join("panodepth_curation_demo");
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base)?;

    // A canned depth file the stub labeler hands out for every image.
    let canned = base.join("canned.pfm");
    write_depth(
        &DepthMap::constant(8, 4, 5.0)?,
        &canned,
        DepthFileFormat::Pfm,
    )?;

    // Stub labeler: reads `<id>\t<image>` lines, writes <id>.pfm per sample.
    let labeler = base.join("labeler.sh");
    std::fs::write(
        &labeler,
        format!(
            "#!/bin/sh\nwhile read -r id img; do\n  cp \"{}\" \"$2/$id.pfm\"\ndone < \"$1\"\n",
            canned.display()
        ),
    )?;
    // Stub scorer: one deterministic decimal per (image, depth) line.
    let scorer = base.join("scorer.sh");
    std::fs::write(&scorer, "#!/bin/sh\nawk '{ print (7 * NR) % 10 }' \"$1\"\n")?;
    for p in [&labeler, &scorer] {
        let mut perms = std::fs::metadata(p)?.permissions();
        perms.set_mode(0o755);
        std::fs::set_permissions(p, perms)?;
    }

    // Fixture manifests: 6 unlabeled real samples, 3 labeled synthetic ones.
    let record = |id: &str, domain, source| SampleRecord {
        id: id.into(),
        image_path: PathBuf::from(format!("img/{id}.png")),
        depth_path: None,
        domain,
        source,
        score: None,
        stage_tag: String::new(),
    };
    SampleManifest::new(
        vec![
            record("real_in_0", Domain::Indoor, Source::Real),
            record("real_in_1", Domain::Indoor, Source::Real),
            record("real_in_2", Domain::Indoor, Source::Generated),
            record("real_out_0", Domain::Outdoor, Source::Real),
            record("real_out_1", Domain::Outdoor, Source::Real),
            record("real_out_2", Domain::Outdoor, Source::Real),
        ],
        Provenance::default(),
    )?
    .save(&base.join("unlabeled.jsonl"))?;
    SampleManifest::new(
        vec![
            record("syn_0", Domain::Indoor, Source::Synthetic),
            record("syn_1", Domain::Outdoor, Source::Synthetic),
            record("syn_2", Domain::Outdoor, Source::Synthetic),
        ],
        Provenance::default(),
    )?
    .save(&base.join("labeled.jsonl"))?;

    let toml = format!(
        r#"
[pipeline]
workers = 2

[[stage]]
name = "scene-invariant-labeler"
output_dir = "out/stage1"
inputs = [ {{ manifest = "unlabeled.jsonl" }} ]
labeler = {{ command = "{labeler} {{input_list_path}} {{output_dir}}", batch_size = 2 }}

[[stage]]
name = "realism-invariant-labeler"
output_dir = "out/stage2"
inputs = [ {{ stage = "scene-invariant-labeler" }} ]
scorer = {{ command = "{scorer} {{pair_list_path}}" }}
select = {{ k_indoor = 2, k_outdoor = 2 }}

[[stage]]
name = "dap"
output_dir = "out/stage3"
inputs = [ {{ stage = "realism-invariant-labeler", weight = 2.0 }}, {{ manifest = "labeled.jsonl", weight = 1.0 }} ]
mix = {{ seed = 7 }}
"#,
        labeler = labeler.display(),
        scorer = scorer.display(),
    );
    let cfg = PipelineConfig::from_toml(&toml)?;

    println!("first run:");
    for stage in run_pipeline(&cfg, &base)? {
        println!(
            "  {:<28} {:>2} records  skipped: {}",
            stage.name,
            stage.manifest.len(),
            stage.skipped
        );
        if stage.name == "dap" {
            for r in stage.manifest.records().iter().take(4) {
                println!(
                    "     e.g. {} (score {:?}, tag {})",
                    r.id, r.score, r.stage_tag
                );
            }
        }
    }

    println!("second run (idempotent):");
    for stage in run_pipeline(&cfg, &base)? {
        println!("  {:<28} skipped: {}", stage.name, stage.skipped);
    }
    println!("artifacts under {}", base.display());
    Ok(())
}
