use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::features::FeatureTable;
use crate::genmodels::GenVariant;
use crate::resolver::ResolverVariant;
use crate::trainer::{SelectionMetric, TrainConfig};
use crate::util;

const GAMES: &str = include_str!("../../data/fixture/games.jsonl");
const CAPTIONS: &str = include_str!("../../data/fixture/captions.json");
const SCENE_GRAPHS: &str = include_str!("../../data/fixture/scene_graphs.json");
const GOLD_LINKS: &str = include_str!("../../data/fixture/gold_links.jsonl");

pub const FIXTURE_SEEDS: [u64; 2] = [1, 2];
const FEATURE_DIM: usize = 16;
const FEATURE_SEED: u64 = 7;

/// Small settings so the whole fixture pipeline runs in well under a minute.
fn gen_template() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        learning_rate: 1e-2,
        embed_dim: 32,
        hidden_dim: 32,
        attn_dim: 32,
        dropout: 0.0,
        max_epochs: 30,
        patience: 10,
        max_decode_len: 12,
        ..TrainConfig::generation(GenVariant::ReRef)
    }
}

fn res_template() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        learning_rate: 1e-2,
        hidden_dim: 32,
        attn_dim: 32,
        dropout: 0.0,
        max_epochs: 30,
        patience: 10,
        selection: SelectionMetric::Accuracy,
        ..TrainConfig::resolution(ResolverVariant::Full)
    }
}

fn manifest_text() -> String {
    let seeds: Vec<String> = FIXTURE_SEEDS.iter().map(u64::to_string).collect();
    format!(
        r#"seeds = [{}]
output_dir = "out"

[paths]
games = "games.jsonl"
captions = "captions.json"
scene_graphs = "scene_graphs.json"
features = "features.txt"
gold_links = "gold_links.jsonl"

[embedding]
dim = 32
seed = 0

[extract]
top_n = 4

[prep]
min_count = 1

[generation]
variants = ["ref", "reref", "copy"]
config = "gen.toml"
beam_width = 3
max_len = 12

[resolution]
variant = "resolver"
config = "res.toml"
"#,
        seeds.join(", ")
    )
}

/// Writes the bundled three-game fixture (one train, one validation and one
/// test game, with hand-annotated gold links) and its manifest into `dir`.
/// Returns the manifest path.
pub fn write_fixture(dir: &Path) -> Result<PathBuf> {
    util::write_string(&dir.join("games.jsonl"), GAMES)?;
    util::write_string(&dir.join("captions.json"), CAPTIONS)?;
    util::write_string(&dir.join("scene_graphs.json"), SCENE_GRAPHS)?;
    util::write_string(&dir.join("gold_links.jsonl"), GOLD_LINKS)?;
    let captions: BTreeMap<String, Vec<String>> =
        serde_json::from_str(CAPTIONS).map_err(|e| crate::error::Error::json("bundled captions", e))?;
    FeatureTable::synthetic(captions.keys(), FEATURE_DIM, FEATURE_SEED).save_text(&dir.join("features.txt"))?;
    util::write_string(&dir.join("gen.toml"), &gen_template().to_toml())?;
    util::write_string(&dir.join("res.toml"), &res_template().to_toml())?;
    let manifest = dir.join("manifest.toml");
    util::write_string(&manifest, &manifest_text())?;
    Ok(manifest)
}
