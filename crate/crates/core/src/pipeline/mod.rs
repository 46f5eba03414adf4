//! Experiment harness: extract → prep → train → generate → evaluate → analyze.
//!
//! Each stage reads the artifacts of the stages before it from the output
//! directory and records a content hash of its inputs and outputs in
//! `pipeline_state.json`. A stage whose inputs and outputs still match its
//! stamp is skipped; a failed stage leaves the stamps of earlier stages in
//! place so the next run resumes from it.

mod fixture;
mod generate;
mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fixture::{write_fixture, FIXTURE_SEEDS};
pub use generate::{generate_for_split, resolve_all, with_hypothesis, HypothesisRecord};
pub use manifest::{
    EmbeddingSection, ExperimentManifest, ExtractSection, GenerationSection, ManifestPaths, PrepSection,
    ResolutionSection,
};
pub use stages::{
    extract_chains, load_instances, prepare_dataset, score_against_gold, variant_name, write_run_record,
    AnalysisReport, Artifacts, EvaluationReport, ExtractionReport, HumanResolution, ModelEvaluation, Provenance,
    SPLITS,
};

use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::util;
use stages::Ctx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Extract,
    Prep,
    TrainGen,
    TrainRes,
    Generate,
    Evaluate,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Extract,
        Stage::Prep,
        Stage::TrainGen,
        Stage::TrainRes,
        Stage::Generate,
        Stage::Evaluate,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Prep => "prep",
            Stage::TrainGen => "train-gen",
            Stage::TrainRes => "train-res",
            Stage::Generate => "generate",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown stage `{s}`")))
    }
}

/// Upstream artifacts of `stage`, each with the stage that produces it.
fn inputs(stage: Stage, m: &ExperimentManifest, art: &Artifacts) -> Vec<(Stage, PathBuf)> {
    let gen_ckpts = || {
        m.generation
            .variants
            .iter()
            .flat_map(|&v| m.seeds.iter().map(move |&s| (v, s)))
            .map(|(v, s)| (Stage::TrainGen, art.gen_run(v, s).best_checkpoint()))
            .collect::<Vec<_>>()
    };
    let generated = || {
        m.generation
            .variants
            .iter()
            .flat_map(|&v| m.seeds.iter().map(move |&s| (Stage::Generate, art.generated(v, s))))
            .collect::<Vec<_>>()
    };
    match stage {
        Stage::Extract => vec![],
        Stage::Prep => vec![(Stage::Extract, art.chains())],
        Stage::TrainGen => vec![
            (Stage::Prep, art.vocab()),
            (Stage::Prep, art.gen_instances(Split::Train)),
            (Stage::Prep, art.gen_instances(Split::Val)),
        ],
        Stage::TrainRes => vec![
            (Stage::Prep, art.res_instances(Split::Train)),
            (Stage::Prep, art.res_instances(Split::Val)),
        ],
        Stage::Generate => {
            let mut v = vec![(Stage::Prep, art.vocab()), (Stage::Prep, art.gen_instances(Split::Test))];
            v.extend(gen_ckpts());
            v
        }
        Stage::Evaluate => {
            let mut v = vec![
                (Stage::Prep, art.gen_instances(Split::Test)),
                (Stage::Prep, art.res_instances(Split::Test)),
            ];
            v.extend(m.seeds.iter().map(|&s| (Stage::TrainRes, art.res_run(s).best_checkpoint())));
            v.extend(generated());
            v
        }
        Stage::Analyze => {
            let mut v = vec![(Stage::Prep, art.gen_instances(Split::Test))];
            v.extend(generated());
            v
        }
    }
}

fn outputs(stage: Stage, m: &ExperimentManifest, art: &Artifacts) -> Vec<PathBuf> {
    let runs = |f: &dyn Fn(&crate::trainer::RunLayout) -> Vec<PathBuf>, layouts: Vec<crate::trainer::RunLayout>| {
        layouts.iter().flat_map(f).collect::<Vec<_>>()
    };
    let run_files = |l: &crate::trainer::RunLayout| vec![l.config(), l.log(), l.report(), l.best_checkpoint()];
    match stage {
        Stage::Extract => vec![art.chains(), art.report("extraction.json")],
        Stage::Prep => {
            let mut v = vec![art.vocab()];
            for s in SPLITS {
                v.push(art.gen_instances(s));
                v.push(art.res_instances(s));
            }
            v
        }
        Stage::TrainGen => runs(
            &run_files,
            m.generation
                .variants
                .iter()
                .flat_map(|&v| m.seeds.iter().map(move |&s| art.gen_run(v, s)))
                .collect(),
        ),
        Stage::TrainRes => runs(&run_files, m.seeds.iter().map(|&s| art.res_run(s)).collect()),
        Stage::Generate => m
            .generation
            .variants
            .iter()
            .flat_map(|&v| m.seeds.iter().map(move |&s| art.generated(v, s)))
            .collect(),
        Stage::Evaluate => vec![art.report("evaluation.json"), art.report("evaluation.md")],
        Stage::Analyze => vec![art.report("analysis.json"), art.report("analysis.md")],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    input_hash: String,
    /// Output path relative to the output directory -> content hash.
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct PipelineState {
    stages: BTreeMap<Stage, Stamp>,
}

impl PipelineState {
    fn load(art: &Artifacts) -> Result<Self> {
        let p = art.state();
        if p.exists() {
            util::read_json(&p)
        } else {
            Ok(PipelineState::default())
        }
    }
}

fn relative(art: &Artifacts, p: &std::path::Path) -> String {
    p.strip_prefix(&art.root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Hash of the manifest, the external inputs and the upstream artifacts.
fn input_hash(stage: Stage, m: &ExperimentManifest, art: &Artifacts) -> Result<String> {
    let mut text = format!("{stage}\n{}\n", m.hash());
    for f in m.input_files() {
        text.push_str(&util::hash_file(&f)?);
        text.push('\n');
    }
    for (upstream, p) in inputs(stage, m, art) {
        if !p.is_file() {
            return Err(Error::MissingArtifact {
                stage: upstream.name().to_string(),
                path: p,
            });
        }
        text.push_str(&relative(art, &p));
        text.push(' ');
        text.push_str(&util::hash_file(&p)?);
        text.push('\n');
    }
    Ok(util::sha256_hex(text.as_bytes()))
}

fn up_to_date(stamp: &Stamp, hash: &str, art: &Artifacts) -> bool {
    stamp.input_hash == hash
        && stamp
            .outputs
            .iter()
            .all(|(rel, h)| util::hash_file(&art.root.join(rel)).is_ok_and(|cur| cur == *h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ran,
    Skipped,
}

/// Runs the requested stages in pipeline order.
pub fn run_pipeline(manifest: &ExperimentManifest, stages: &[Stage]) -> Result<Vec<(Stage, StageStatus)>> {
    manifest.check_inputs()?;
    let art = Artifacts::new(manifest.output());
    std::fs::create_dir_all(&art.root).map_err(|e| Error::io(&art.root, e))?;
    let mut state = PipelineState::load(&art)?;
    let ctx = Ctx {
        manifest,
        art: art.clone(),
    };
    let mut done = Vec::new();
    for stage in Stage::ALL.into_iter().filter(|s| stages.contains(s)) {
        let hash = input_hash(stage, manifest, &art)?;
        if state.stages.get(&stage).is_some_and(|s| up_to_date(s, &hash, &art)) {
            log::info!("{stage}: up to date");
            done.push((stage, StageStatus::Skipped));
            continue;
        }
        log::info!("{stage}: running");
        state.stages.remove(&stage);
        match stage {
            Stage::Extract => stages::run_extract(&ctx),
            Stage::Prep => stages::run_prep(&ctx),
            Stage::TrainGen => stages::run_train_gen(&ctx),
            Stage::TrainRes => stages::run_train_res(&ctx),
            Stage::Generate => stages::run_generate(&ctx),
            Stage::Evaluate => stages::run_evaluate(&ctx),
            Stage::Analyze => stages::run_analyze(&ctx),
        }?;
        let mut outs = BTreeMap::new();
        for p in outputs(stage, manifest, &art) {
            outs.insert(relative(&art, &p), util::hash_file(&p)?);
        }
        state.stages.insert(stage, Stamp { input_hash: hash, outputs: outs });
        util::write_json(&art.state(), &state)?;
        done.push((stage, StageStatus::Ran));
    }
    Ok(done)
}
