use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{generate_for_split, resolve_all, with_hypothesis, HypothesisRecord};
use super::manifest::ExperimentManifest;
use crate::corpus::{
    chain_statistics, evaluate_extraction, extract_game, load_games, ChainRecord, ChainStatistics, ExtractConfig,
    ExtractionEval, GameLog, GoldLink, Link, ReferenceChain, ReferenceSets, Split, UtteranceScorer,
};
use crate::embed::{EmbeddingProvider, EmbeddingScorer};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::genmodels::{BeamConfig, GenVariant};
use crate::linganalysis::{
    analyze, profile_report, render_entrainment, render_trends, AnalysisConfig, ChainUtterance, LexiconTagger,
    LinguisticReport,
};
use crate::metrics::{
    accuracy_mrr, aggregate, evaluate, render_table, repetition_and_vocab, verbatim_baseline, AggregateReport, Cell,
    EvalItem, RankedTarget, RepetitionStats,
};
use crate::resolver::ResolverModel;
use crate::textprep::{build_instances, tokenize, GenInstance, ResInstance, StopwordList, Vocabulary};
use crate::trainer::{
    train_generation, train_resolution, GenerationData, MeanSd, ResolutionData, RunLayout, RunRecord,
};
use crate::util;

pub const SPLITS: [Split; 3] = [Split::Train, Split::Val, Split::Test];

/// File names under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Artifacts { root: root.into() }
    }

    pub fn state(&self) -> PathBuf {
        self.root.join("pipeline_state.json")
    }

    pub fn chains(&self) -> PathBuf {
        self.root.join("chains.jsonl")
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("prep/vocab.txt")
    }

    pub fn gen_instances(&self, split: Split) -> PathBuf {
        self.root.join(format!("prep/{}.gen.jsonl", split.as_str()))
    }

    pub fn res_instances(&self, split: Split) -> PathBuf {
        self.root.join(format!("prep/{}.res.jsonl", split.as_str()))
    }

    pub fn gen_run(&self, variant: GenVariant, seed: u64) -> RunLayout {
        RunLayout::new(self.root.join(format!("runs/gen-{}-s{seed}", variant_name(variant))))
    }

    pub fn res_run(&self, seed: u64) -> RunLayout {
        RunLayout::new(self.root.join(format!("runs/res-s{seed}")))
    }

    pub fn generated(&self, variant: GenVariant, seed: u64) -> PathBuf {
        self.root.join(format!("generated/{}-s{seed}.jsonl", variant_name(variant)))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }
}

pub fn variant_name(v: GenVariant) -> &'static str {
    match v {
        GenVariant::Ref => "ref",
        GenVariant::ReRef => "reref",
        GenVariant::Copy => "copy",
    }
}

/// Provenance block embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub manifest_hash: String,
    pub seeds: Vec<u64>,
}

pub(crate) struct Ctx<'a> {
    pub manifest: &'a ExperimentManifest,
    pub art: Artifacts,
}

impl Ctx<'_> {
    fn provenance(&self) -> Provenance {
        Provenance {
            manifest_hash: self.manifest.hash().to_string(),
            seeds: self.manifest.seeds.clone(),
        }
    }

    fn features(&self) -> Result<FeatureTable> {
        FeatureTable::load(&self.manifest.resolve(&self.manifest.paths.features))
    }

    fn md_header(&self, title: &str) -> String {
        let p = self.provenance();
        let seeds: Vec<String> = p.seeds.iter().map(u64::to_string).collect();
        format!("# {title}\n\nmanifest: {}\nseeds: {}\n\n", p.manifest_hash, seeds.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub provenance: Provenance,
    pub games: usize,
    pub statistics: Option<ChainStatistics>,
    /// Against the gold links, over the games the gold file covers.
    pub evaluation: Option<ExtractionEval>,
}

/// Extracts the chains of every game.
pub fn extract_chains(
    games: &[GameLog],
    refsets: &ReferenceSets,
    provider: &dyn EmbeddingProvider,
    top_n: usize,
) -> Result<Vec<ReferenceChain>> {
    let similarity = EmbeddingScorer::new(provider);
    let scorer = UtteranceScorer::new(&similarity);
    let config = ExtractConfig { top_n };
    let mut chains = Vec::new();
    for g in games {
        chains.extend(extract_game(g, refsets, &scorer, &config)?);
    }
    Ok(chains)
}

/// Link precision and recall over the games the gold file covers.
pub fn score_against_gold(chains: &[ReferenceChain], gold: &[GoldLink]) -> ExtractionEval {
    let covered: BTreeSet<&str> = gold.iter().map(|l| l.game_id.as_str()).collect();
    let extracted: Vec<Link> = Link::from_chains(chains)
        .into_iter()
        .filter(|l| covered.contains(l.game_id.as_str()))
        .collect();
    evaluate_extraction(&extracted, gold)
}

pub(crate) fn run_extract(ctx: &Ctx<'_>) -> Result<()> {
    let m = ctx.manifest;
    let games = load_games(&m.resolve(&m.paths.games))?;
    let refsets = ReferenceSets::load(&m.resolve(&m.paths.captions), &m.resolve(&m.paths.scene_graphs))?;
    let provider = m.embeddings()?;
    let chains = extract_chains(&games, &refsets, provider.as_ref(), m.extract.top_n)?;
    let records: Vec<ChainRecord> = chains.iter().flat_map(ReferenceChain::records).collect();
    util::write_jsonl(&ctx.art.chains(), &records)?;
    let evaluation = match &m.paths.gold_links {
        Some(p) => Some(score_against_gold(&chains, &util::read_jsonl(&m.resolve(p))?)),
        None => None,
    };
    let report = ExtractionReport {
        provenance: ctx.provenance(),
        games: games.len(),
        statistics: if chains.is_empty() { None } else { Some(chain_statistics(&chains)?) },
        evaluation,
    };
    util::write_json(&ctx.art.report("extraction.json"), &report)
}

/// Builds the vocabulary from training-split chains and writes the
/// generation and resolution instances of every split under `art`.
pub fn prepare_dataset(games: &[GameLog], records: &[ChainRecord], min_count: usize, art: &Artifacts) -> Result<()> {
    let split_of: HashMap<&str, Split> = games.iter().map(|g| (g.game_id.as_str(), g.split)).collect();
    let train_utts: Vec<Vec<String>> = records
        .iter()
        .filter(|r| split_of.get(r.game_id.as_str()) == Some(&Split::Train))
        .map(|r| tokenize(&r.text))
        .collect();
    let vocab = Vocabulary::build(&train_utts, min_count);
    vocab.save(&art.vocab())?;
    for split in SPLITS {
        let mut gen = Vec::new();
        let mut res = Vec::new();
        for g in games.iter().filter(|g| g.split == split) {
            let set = build_instances(g, records, &vocab)?;
            gen.extend(set.generation);
            res.extend(set.resolution);
        }
        util::write_jsonl(&art.gen_instances(split), &gen)?;
        util::write_jsonl(&art.res_instances(split), &res)?;
    }
    Ok(())
}

pub(crate) fn run_prep(ctx: &Ctx<'_>) -> Result<()> {
    let m = ctx.manifest;
    let games = load_games(&m.resolve(&m.paths.games))?;
    let records: Vec<ChainRecord> = util::read_jsonl(&ctx.art.chains())?;
    prepare_dataset(&games, &records, m.prep.min_count, &ctx.art)
}

fn nonempty<T>(v: Vec<T>, path: &Path) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::Input(format!("{} holds no instances", path.display())));
    }
    Ok(v)
}

pub fn load_instances<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    nonempty(util::read_jsonl(path)?, path)
}

/// Writes the run record and a per-epoch log into the run directory.
pub fn write_run_record(layout: &RunLayout, record: &RunRecord) -> Result<()> {
    let mut record = record.clone();
    // relative, so records do not depend on where the output directory lives
    record.checkpoint = record.checkpoint.as_ref().map(|_| PathBuf::from("checkpoints/best.ckpt"));
    let mut log = String::new();
    for e in &record.epochs {
        let _ = writeln!(
            log,
            "epoch {} loss {:.6} validation {:.4}{}",
            e.epoch,
            e.train_loss,
            e.validation,
            if e.improved { " *" } else { "" }
        );
    }
    let _ = writeln!(log, "stop {:?} best {:?}", record.stop_reason, record.best_epoch);
    util::write_string(&layout.log(), &log)?;
    util::write_json(&layout.report(), &record)
}

pub(crate) fn run_train_gen(ctx: &Ctx<'_>) -> Result<()> {
    let m = ctx.manifest;
    let vocab = Vocabulary::load(&ctx.art.vocab())?;
    let features = ctx.features()?;
    let provider = m.embeddings()?;
    let train: Vec<GenInstance> = load_instances(&ctx.art.gen_instances(Split::Train))?;
    let validation: Vec<GenInstance> = load_instances(&ctx.art.gen_instances(Split::Val))?;
    let data = GenerationData {
        vocab: &vocab,
        features: &features,
        train: &train,
        validation: &validation,
        embeddings: provider.as_ref(),
    };
    for &variant in &m.generation.variants {
        for &seed in &m.seeds {
            let config = m.generation_config(variant, seed)?;
            let layout = ctx.art.gen_run(variant, seed);
            layout.prepare(&config)?;
            log::info!("training {} seed {seed}", variant_name(variant));
            let (_, record) = train_generation(&config, &data, Some(&layout.best_checkpoint()))?;
            write_run_record(&layout, &record)?;
        }
    }
    Ok(())
}

pub(crate) fn run_train_res(ctx: &Ctx<'_>) -> Result<()> {
    let m = ctx.manifest;
    let features = ctx.features()?;
    let provider = m.embeddings()?;
    let train: Vec<ResInstance> = load_instances(&ctx.art.res_instances(Split::Train))?;
    let validation: Vec<ResInstance> = load_instances(&ctx.art.res_instances(Split::Val))?;
    let data = ResolutionData {
        features: &features,
        embeddings: provider.as_ref(),
        train: &train,
        validation: &validation,
    };
    for &seed in &m.seeds {
        let config = m.resolution_config(seed)?;
        let layout = ctx.art.res_run(seed);
        layout.prepare(&config)?;
        log::info!("training resolver seed {seed}");
        let (_, record) = train_resolution(&config, &data, Some(&layout.best_checkpoint()))?;
        write_run_record(&layout, &record)?;
    }
    Ok(())
}

pub(crate) fn run_generate(ctx: &Ctx<'_>) -> Result<()> {
    let m = ctx.manifest;
    let vocab = Vocabulary::load(&ctx.art.vocab())?;
    let features = ctx.features()?;
    let test: Vec<GenInstance> = load_instances(&ctx.art.gen_instances(Split::Test))?;
    let beam = BeamConfig {
        width: m.generation.beam_width,
        max_len: m.generation.max_len,
        length_normalize: true,
    };
    for &variant in &m.generation.variants {
        for &seed in &m.seeds {
            let ckpt = ctx.art.gen_run(variant, seed).best_checkpoint();
            let hyps = generate_for_split(&ckpt, &vocab, &features, &test, &beam, m.hash())?;
            util::write_jsonl(&ctx.art.generated(variant, seed), &hyps)?;
        }
    }
    Ok(())
}

fn by_id<'a, T>(items: &'a [T], id: impl Fn(&T) -> &str) -> HashMap<&'a str, &'a T> {
    items.iter().map(|x| (id(x), x)).collect()
}

/// Resolution accuracy and MRR of one resolver per seed on the human
/// utterances, First / Later / Overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanResolution {
    pub counts: [usize; 3],
    pub accuracy: [Option<Cell>; 3],
    pub mrr: [Option<Cell>; 3],
}

fn cell(values: &[f64]) -> Result<Option<Cell>> {
    Ok(match values.len() {
        0 => None,
        1 => Some(Cell { mean: values[0], sd: None }),
        _ => {
            let s = MeanSd::from_values(values)?;
            Some(Cell { mean: s.mean, sd: Some(s.sd) })
        }
    })
}

fn human_resolution(per_seed: &[Vec<(bool, RankedTarget)>]) -> Result<HumanResolution> {
    let subsets: [fn(bool) -> bool; 3] = [|first| first, |first| !first, |_| true];
    let mut counts = [0; 3];
    let mut accuracy = [None; 3];
    let mut mrr = [None; 3];
    for (k, keep) in subsets.iter().enumerate() {
        let mut accs = Vec::new();
        let mut mrrs = Vec::new();
        for run in per_seed {
            let ranked: Vec<RankedTarget> = run.iter().filter(|(f, _)| keep(*f)).map(|(_, r)| r.clone()).collect();
            counts[k] = ranked.len();
            if ranked.is_empty() {
                continue;
            }
            let (a, m) = accuracy_mrr(&ranked)?;
            accs.push(a);
            mrrs.push(m);
        }
        accuracy[k] = cell(&accs)?;
        mrr[k] = cell(&mrrs)?;
    }
    Ok(HumanResolution { counts, accuracy, mrr })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub name: String,
    pub scores: AggregateReport,
    /// Over the first seed's outputs.
    pub repetition: RepetitionStats,
    pub unfinished: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub provenance: Provenance,
    pub beam_width: usize,
    pub models: Vec<ModelEvaluation>,
    /// ReRef with its first generated description reused for every later
    /// mention; absent when ReRef is not among the variants.
    pub verbatim: Option<AggregateReport>,
    pub resolver_on_human: HumanResolution,
}

pub(crate) fn run_evaluate(ctx: &Ctx<'_>) -> Result<()> {
    let m = ctx.manifest;
    let features = ctx.features()?;
    let provider = m.embeddings()?;
    let gen_test: Vec<GenInstance> = load_instances(&ctx.art.gen_instances(Split::Test))?;
    let res_test: Vec<ResInstance> = load_instances(&ctx.art.res_instances(Split::Test))?;
    let res_by_id = by_id(&res_test, |r| r.id.as_str());
    let gen_by_id = by_id(&gen_test, |g| g.id.as_str());

    let mut resolvers: BTreeMap<u64, ResolverModel> = BTreeMap::new();
    let mut human_runs = Vec::new();
    for &seed in &m.seeds {
        let (model, _) = ResolverModel::load(&ctx.art.res_run(seed).best_checkpoint())?;
        let res = resolve_all(&model, &res_test, &features, provider.as_ref(), 32)?;
        human_runs.push(
            res_test
                .iter()
                .zip(res)
                .map(|(inst, r)| {
                    (inst.is_first(), RankedTarget { ranking: r.ranking, target: inst.target_pos })
                })
                .collect::<Vec<_>>(),
        );
        resolvers.insert(seed, model);
    }

    let stopwords = StopwordList::analysis();
    let mut models = Vec::new();
    let mut verbatim_reports = Vec::new();
    for &variant in &m.generation.variants {
        let mut reports = Vec::new();
        let mut repetition = None;
        let mut unfinished = 0;
        for &seed in &m.seeds {
            let hyps: Vec<HypothesisRecord> = util::read_jsonl(&ctx.art.generated(variant, seed))?;
            let mut items = Vec::with_capacity(hyps.len());
            let mut to_resolve = Vec::with_capacity(hyps.len());
            for h in &hyps {
                let g = gen_by_id.get(h.instance_id.as_str()).ok_or_else(|| {
                    Error::Input(format!("generated utterance for unknown instance {}", h.instance_id))
                })?;
                let r = res_by_id.get(h.instance_id.as_str()).ok_or_else(|| {
                    Error::Input(format!("no resolution instance for {}", h.instance_id))
                })?;
                to_resolve.push(with_hypothesis(r, &h.tokens));
                items.push(EvalItem {
                    instance_id: h.instance_id.clone(),
                    game_id: g.game_id.clone(),
                    image_id: g.image_id.clone(),
                    chain_position: g.chain_position,
                    hypothesis: h.tokens.clone(),
                    references: g.chain_refs.clone(),
                    resolution: None,
                });
            }
            let res = resolve_all(&resolvers[&seed], &to_resolve, &features, provider.as_ref(), 32)?;
            for ((item, r), inst) in items.iter_mut().zip(res).zip(&to_resolve) {
                item.resolution = Some(RankedTarget { ranking: r.ranking, target: inst.target_pos });
            }
            if repetition.is_none() {
                let toks: Vec<Vec<String>> = hyps.iter().map(|h| h.tokens.clone()).collect();
                repetition = Some(repetition_and_vocab(&toks, &stopwords));
                unfinished = hyps.iter().filter(|h| !h.finished).count();
            }
            if variant == GenVariant::ReRef {
                let v = verbatim_baseline(&items);
                if !v.is_empty() {
                    verbatim_reports.push(evaluate(&v, provider.as_ref())?);
                }
            }
            reports.push(evaluate(&items, provider.as_ref())?);
        }
        models.push(ModelEvaluation {
            name: variant_name(variant).to_string(),
            scores: aggregate(&reports)?,
            repetition: repetition.expect("at least one seed"),
            unfinished,
        });
    }

    let verbatim = if verbatim_reports.is_empty() {
        None
    } else {
        Some(aggregate(&verbatim_reports)?)
    };
    let report = EvaluationReport {
        provenance: ctx.provenance(),
        beam_width: m.generation.beam_width,
        models,
        verbatim,
        resolver_on_human: human_resolution(&human_runs)?,
    };
    util::write_json(&ctx.art.report("evaluation.json"), &report)?;
    util::write_string(&ctx.art.report("evaluation.md"), &render_evaluation(ctx, &report))
}

fn render_evaluation(ctx: &Ctx<'_>, r: &EvaluationReport) -> String {
    let mut out = ctx.md_header("Evaluation");
    let mut rows: Vec<(&str, &AggregateReport)> = r.models.iter().map(|m| (m.name.as_str(), &m.scores)).collect();
    if let Some(v) = &r.verbatim {
        rows.push(("reref-verbatim", v));
    }
    out.push_str(&render_table(&rows));
    out.push_str("\n| Model | Repeat rate | Vocab | Unfinished |\n|-|-|-|-|\n");
    for m in &r.models {
        let _ = writeln!(
            out,
            "| {} | {:.3} | {} | {} |",
            m.name, m.repetition.repeat_rate, m.repetition.vocab_size, m.unfinished
        );
    }
    out.push_str("\nResolver on human utterances\n\n| Subset | N | ACC | MRR |\n|-|-|-|-|\n");
    let h = &r.resolver_on_human;
    for (k, name) in ["First", "Later", "Overall"].iter().enumerate() {
        let show = |c: &Option<Cell>| c.map_or("-".to_string(), |c| c.to_string());
        let _ = writeln!(out, "| {name} | {} | {} | {} |", h.counts[k], show(&h.accuracy[k]), show(&h.mrr[k]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    /// Seed whose generated utterances were profiled.
    pub analysed_seed: u64,
    pub report: LinguisticReport,
}

pub(crate) fn run_analyze(ctx: &Ctx<'_>) -> Result<()> {
    let m = ctx.manifest;
    let gen_test: Vec<GenInstance> = load_instances(&ctx.art.gen_instances(Split::Test))?;
    let human: Vec<ChainUtterance> = gen_test
        .iter()
        .map(|g| ChainUtterance {
            id: g.id.clone(),
            chain_position: g.chain_position,
            tokens: g.target_tokens.clone(),
            previous: g.has_history().then(|| g.source_tokens.clone()),
        })
        .collect();
    let tagger = LexiconTagger::bundled();
    let stopwords = StopwordList::analysis();
    let config = AnalysisConfig::default();
    let seed = m.seeds[0];
    let reference = analyze("human", &human, &tagger, &stopwords, &config);
    let mut systems = Vec::new();
    for &variant in &m.generation.variants {
        let hyps: Vec<HypothesisRecord> = util::read_jsonl(&ctx.art.generated(variant, seed))?;
        let utts: Vec<ChainUtterance> = hyps
            .into_iter()
            .map(|h| ChainUtterance {
                id: h.instance_id,
                chain_position: h.chain_position,
                tokens: h.tokens,
                previous: h.previous,
            })
            .collect();
        systems.push(analyze(variant_name(variant), &utts, &tagger, &stopwords, &config));
    }
    let report = profile_report(&reference, &systems)?;
    let mut md = ctx.md_header("Linguistic analysis");
    let _ = writeln!(md, "generated utterances from seed {seed}\n");
    md.push_str(&render_trends(&report));
    md.push('\n');
    md.push_str(&render_entrainment(&report));
    util::write_json(
        &ctx.art.report("analysis.json"),
        &AnalysisReport {
            provenance: ctx.provenance(),
            analysed_seed: seed,
            report,
        },
    )?;
    util::write_string(&ctx.art.report("analysis.md"), &md)
}
