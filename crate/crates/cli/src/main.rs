//! `refchain` command-line front end. See the README for the flag reference.
//!
//! Exit codes: 0 success, 1 user error (bad flags, missing or malformed
//! input), 2 internal error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use refchain::corpus::{chain_statistics, load_games, ChainRecord, ReferenceChain, ReferenceSets, Split};
use refchain::embed::{EmbeddingCache, EmbeddingProvider, HashEmbedding};
use refchain::genmodels::BeamConfig;
use refchain::metrics::{accuracy_mrr, RankedTarget};
use refchain::pipeline::{
    extract_chains, generate_for_split, load_instances, prepare_dataset, resolve_all, run_pipeline,
    score_against_gold, with_hypothesis, write_fixture, write_run_record, Artifacts, ExperimentManifest,
    HypothesisRecord, Stage, StageStatus,
};
use refchain::resolver::ResolverModel;
use refchain::textprep::{GenInstance, ResInstance, Vocabulary};
use refchain::trainer::{train_generation, train_resolution, GenerationData, ModelKind, ResolutionData, RunLayout, TrainConfig};
use refchain::{util, Error, FeatureTable, Result};
use serde_json::json;

/// Name of the embedding cache looked up inside the cache directory.
const CACHE_FILE: &str = "embeddings.jsonl";

#[derive(Parser)]
#[command(name = "refchain", version, about = "Reference chains: extraction, generation, resolution, analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EmbeddingArgs {
    /// Directory holding `embeddings.jsonl`; hash embeddings cover missing entries.
    #[arg(long, env = "REFCHAIN_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 0)]
    embedding_seed: u64,
}

impl EmbeddingArgs {
    fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        if self.embedding_dim == 0 {
            return Err(Error::Input("--embedding-dim must be positive".into()));
        }
        let hash = Box::new(HashEmbedding::new(self.embedding_dim, self.embedding_seed));
        match &self.cache_dir {
            Some(dir) if dir.join(CACHE_FILE).is_file() => {
                let path = dir.join(CACHE_FILE);
                log::info!("embedding cache {}", path.display());
                Ok(Box::new(EmbeddingCache::load(&path)?.with_fallback(hash)?))
            }
            _ => Ok(hash),
        }
    }
}

#[derive(Args)]
struct ManifestArg {
    /// Experiment manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
}

impl ManifestArg {
    fn load(&self) -> Result<ExperimentManifest> {
        ExperimentManifest::load(&self.manifest)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-image reference chains from game logs.
    Extract {
        #[arg(long)]
        games: PathBuf,
        #[arg(long)]
        captions: PathBuf,
        /// Scene-graph object and attribute tokens per image.
        #[arg(long)]
        vg: PathBuf,
        /// Chain records (JSON lines).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        top_n: usize,
        /// Hand-annotated links; prints link precision and recall.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[command(flatten)]
        embedding: EmbeddingArgs,
    },
    /// Build the vocabulary and model instances from chain records.
    Prep {
        #[arg(long)]
        games: PathBuf,
        #[arg(long)]
        chains: PathBuf,
        /// Output directory; files go under `prep/`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
    },
    /// Train one generation model or resolver, as named by the config.
    Train {
        /// Training config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Directory written by `prep`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        embedding: EmbeddingArgs,
    },
    /// Decode one utterance per chain entry of a split.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, default_value_t = 3)]
        width: usize,
        #[arg(long, default_value_t = 30)]
        max_len: usize,
        /// Hypotheses (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Resolve human utterances, or hypotheses in their place, to target images.
    Resolve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Hypotheses written by `generate`.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
        /// Per-instance rankings (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[command(flatten)]
        embedding: EmbeddingArgs,
    },
    /// Run the evaluate stage of a manifest.
    Evaluate(ManifestArg),
    /// Run the analyze stage of a manifest.
    Analyze(ManifestArg),
    /// Print the Markdown reports of a manifest's output directory.
    Report(ManifestArg),
    /// Run pipeline stages; stages already up to date are skipped.
    Run {
        #[command(flatten)]
        manifest: ManifestArg,
        /// Comma-separated subset of extract,prep,train-gen,train-res,generate,evaluate,analyze.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
    /// Write the bundled three-game fixture and its manifest.
    Fixture {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// Writes to stdout; a closed pipe is not an error.
fn out(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print(value: serde_json::Value) {
    out(&serde_json::to_string_pretty(&value).unwrap_or_default());
}

fn extract(
    games: &Path,
    captions: &Path,
    vg: &Path,
    out: &Path,
    top_n: usize,
    gold: Option<&Path>,
    embedding: &EmbeddingArgs,
) -> Result<()> {
    let games = load_games(games)?;
    let refsets = ReferenceSets::load(captions, vg)?;
    let provider = embedding.provider()?;
    let chains = extract_chains(&games, &refsets, provider.as_ref(), top_n)?;
    let records: Vec<ChainRecord> = chains.iter().flat_map(ReferenceChain::records).collect();
    util::write_jsonl(out, &records)?;
    let statistics = if chains.is_empty() { None } else { Some(chain_statistics(&chains)?) };
    let evaluation = match gold {
        Some(p) => Some(score_against_gold(&chains, &util::read_jsonl(p)?)),
        None => None,
    };
    print(json!({ "games": games.len(), "statistics": statistics, "evaluation": evaluation }));
    Ok(())
}

fn prep(games: &Path, chains: &Path, out: &Path, min_count: usize) -> Result<()> {
    let games = load_games(games)?;
    let records: Vec<ChainRecord> = util::read_jsonl(chains)?;
    let art = Artifacts::new(out);
    prepare_dataset(&games, &records, min_count, &art)?;
    print(json!({ "vocab": art.vocab(), "records": records.len() }));
    Ok(())
}

fn train(config: &Path, data: &Path, features: &Path, out: &Path, seed: Option<u64>, emb: &EmbeddingArgs) -> Result<()> {
    let mut config = TrainConfig::load(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    let art = Artifacts::new(data);
    let features = FeatureTable::load(features)?;
    let provider = emb.provider()?;
    let layout = RunLayout::new(out);
    layout.prepare(&config)?;
    let ckpt = layout.best_checkpoint();
    let record = match config.model {
        ModelKind::Generation(_) => {
            let vocab = Vocabulary::load(&art.vocab())?;
            let train: Vec<GenInstance> = load_instances(&art.gen_instances(Split::Train))?;
            let validation: Vec<GenInstance> = load_instances(&art.gen_instances(Split::Val))?;
            let data = GenerationData {
                vocab: &vocab,
                features: &features,
                train: &train,
                validation: &validation,
                embeddings: provider.as_ref(),
            };
            train_generation(&config, &data, Some(&ckpt))?.1
        }
        ModelKind::Resolution(_) => {
            let train: Vec<ResInstance> = load_instances(&art.res_instances(Split::Train))?;
            let validation: Vec<ResInstance> = load_instances(&art.res_instances(Split::Val))?;
            let data = ResolutionData {
                features: &features,
                embeddings: provider.as_ref(),
                train: &train,
                validation: &validation,
            };
            train_resolution(&config, &data, Some(&ckpt))?.1
        }
    };
    write_run_record(&layout, &record)?;
    print(json!({
        "checkpoint": ckpt,
        "best_epoch": record.best_epoch,
        "best_validation": record.best_validation,
        "stop_reason": record.stop_reason,
    }));
    Ok(())
}

fn generate(checkpoint: &Path, data: &Path, features: &Path, split: Split, beam: &BeamConfig, out: &Path) -> Result<()> {
    let art = Artifacts::new(data);
    let vocab = Vocabulary::load(&art.vocab())?;
    let features = FeatureTable::load(features)?;
    let instances: Vec<GenInstance> = load_instances(&art.gen_instances(split))?;
    // standalone runs have no manifest
    let hyps = generate_for_split(checkpoint, &vocab, &features, &instances, beam, "")?;
    util::write_jsonl(out, &hyps)?;
    print(json!({ "hypotheses": hyps.len(), "unfinished": hyps.iter().filter(|h| !h.finished).count() }));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn resolve(
    checkpoint: &Path,
    data: &Path,
    features: &Path,
    split: Split,
    hypotheses: Option<&Path>,
    out: Option<&Path>,
    batch_size: usize,
    emb: &EmbeddingArgs,
) -> Result<()> {
    let art = Artifacts::new(data);
    let features = FeatureTable::load(features)?;
    let provider = emb.provider()?;
    let (model, _) = ResolverModel::load(checkpoint)?;
    let mut instances: Vec<ResInstance> = load_instances(&art.res_instances(split))?;
    if let Some(p) = hypotheses {
        let hyps: Vec<HypothesisRecord> = util::read_jsonl(p)?;
        let by_key: std::collections::HashMap<(&str, &str, usize), &HypothesisRecord> = hyps
            .iter()
            .map(|h| ((h.game_id.as_str(), h.image_id.as_str(), h.chain_position), h))
            .collect();
        instances = instances
            .iter()
            .filter_map(|i| {
                by_key
                    .get(&(i.game_id.as_str(), i.image_id.as_str(), i.chain_position))
                    .map(|h| with_hypothesis(i, &h.tokens))
            })
            .collect();
        if instances.is_empty() {
            return Err(Error::Input(format!("no hypothesis in {} matches a {} instance", p.display(), split.as_str())));
        }
    }
    let resolutions = resolve_all(&model, &instances, &features, provider.as_ref(), batch_size)?;
    let ranked: Vec<RankedTarget> = resolutions
        .iter()
        .zip(&instances)
        .map(|(r, i)| RankedTarget { ranking: r.ranking.clone(), target: i.target_pos })
        .collect();
    if let Some(out) = out {
        let rows: Vec<serde_json::Value> = resolutions
            .iter()
            .zip(&instances)
            .map(|(r, i)| {
                json!({
                    "instance_id": i.id,
                    "chain_position": i.chain_position,
                    "target": i.target_pos,
                    "predicted": r.predicted,
                    "ranking": r.ranking,
                })
            })
            .collect();
        util::write_jsonl(out, &rows)?;
    }
    let score = |first: bool| -> Result<serde_json::Value> {
        let part: Vec<RankedTarget> = ranked
            .iter()
            .zip(&instances)
            .filter(|(_, i)| i.is_first() == first)
            .map(|(r, _)| r.clone())
            .collect();
        if part.is_empty() {
            return Ok(serde_json::Value::Null);
        }
        let (acc, mrr) = accuracy_mrr(&part)?;
        Ok(json!({ "n": part.len(), "accuracy": acc, "mrr": mrr }))
    };
    let (acc, mrr) = accuracy_mrr(&ranked)?;
    print(json!({
        "overall": { "n": ranked.len(), "accuracy": acc, "mrr": mrr },
        "first": score(true)?,
        "later": score(false)?,
    }));
    Ok(())
}

fn run_stages(manifest: &ManifestArg, stages: &[Stage]) -> Result<()> {
    let m = manifest.load()?;
    for (stage, status) in run_pipeline(&m, stages)? {
        let status = match status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "skipped",
        };
        out(&format!("{stage}: {status}"));
    }
    Ok(())
}

fn report(manifest: &ManifestArg) -> Result<()> {
    let m = manifest.load()?;
    let art = Artifacts::new(m.output());
    let mut found = false;
    for name in ["evaluation.md", "analysis.md"] {
        let p = art.report(name);
        if p.is_file() {
            found = true;
            out(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?);
        }
    }
    if !found {
        return Err(Error::MissingArtifact { stage: "evaluate".into(), path: art.report("evaluation.md") });
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract { games, captions, vg, out, top_n, gold, embedding } => {
            extract(&games, &captions, &vg, &out, top_n, gold.as_deref(), &embedding)
        }
        Command::Prep { games, chains, out, min_count } => prep(&games, &chains, &out, min_count),
        Command::Train { config, data, features, out, seed, embedding } => {
            train(&config, &data, &features, &out, seed, &embedding)
        }
        Command::Generate { checkpoint, data, features, split, width, max_len, out } => {
            if width == 0 || max_len == 0 {
                return Err(Error::Input("--width and --max-len must be positive".into()));
            }
            let beam = BeamConfig { width, max_len, length_normalize: true };
            generate(&checkpoint, &data, &features, split, &beam, &out)
        }
        Command::Resolve { checkpoint, data, features, split, hypotheses, out, batch_size, embedding } => resolve(
            &checkpoint,
            &data,
            &features,
            split,
            hypotheses.as_deref(),
            out.as_deref(),
            batch_size,
            &embedding,
        ),
        Command::Evaluate(m) => run_stages(&m, &[Stage::Evaluate]),
        Command::Analyze(m) => run_stages(&m, &[Stage::Analyze]),
        Command::Report(m) => report(&m),
        Command::Run { manifest, stages } => run_stages(&manifest, stages.as_deref().unwrap_or(&Stage::ALL)),
        Command::Fixture { dir } => {
            let path = write_fixture(&dir)?;
            out(&path.display().to_string());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
