use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingCache, EmbeddingProvider, HashEmbedding};
use crate::error::{Error, Result};
use crate::genmodels::GenVariant;
use crate::resolver::ResolverVariant;
use crate::trainer::{ModelKind, TrainConfig};
use crate::util;

/// Input files; relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPaths {
    pub games: PathBuf,
    pub captions: PathBuf,
    pub scene_graphs: PathBuf,
    pub features: PathBuf,
    /// Precomputed utterance embeddings; tokens without an entry use the
    /// hash embedding.
    #[serde(default)]
    pub embedding_cache: Option<PathBuf>,
    /// Hand-annotated links used to score extraction.
    #[serde(default)]
    pub gold_links: Option<PathBuf>,
}

/// Seeded hash embedding used when no cache entry exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection { dim: 300, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub top_n: usize,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection { top_n: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSection {
    pub min_count: usize,
}

impl Default for PrepSection {
    fn default() -> Self {
        PrepSection { min_count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub variants: Vec<GenVariant>,
    /// Training config template; `model` and `seed` are overridden per run.
    pub config: Option<PathBuf>,
    pub beam_width: usize,
    pub max_len: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            variants: vec![GenVariant::Ref, GenVariant::ReRef, GenVariant::Copy],
            config: None,
            beam_width: 3,
            max_len: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionSection {
    pub variant: ResolverVariant,
    pub config: Option<PathBuf>,
}

impl Default for ResolutionSection {
    fn default() -> Self {
        ResolutionSection {
            variant: ResolverVariant::Full,
            config: None,
        }
    }
}

/// Everything one experiment needs: inputs, configs, seeds and where to
/// write. The hash of the manifest text is embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub paths: ManifestPaths,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub prep: PrepSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub resolution: ResolutionSection,
    #[serde(skip)]
    base_dir: PathBuf,
    #[serde(skip)]
    hash: String,
}

impl ExperimentManifest {
    /// Parses manifest text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: ExperimentManifest =
            toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.base_dir = base_dir.to_path_buf();
        m.hash = util::sha256_hex(text.as_bytes());
        m.check_settings()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = util::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// sha256 of the manifest text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    fn check_settings(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("manifest lists no seeds".into()));
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("manifest seeds must be distinct".into()));
        }
        if self.generation.variants.is_empty() {
            return Err(Error::Config("manifest lists no generation variants".into()));
        }
        if self.generation.variants.iter().collect::<HashSet<_>>().len() != self.generation.variants.len() {
            return Err(Error::Config("generation variants must be distinct".into()));
        }
        if self.generation.beam_width == 0 || self.generation.max_len == 0 {
            return Err(Error::Config("beam_width and max_len must be positive".into()));
        }
        if self.embedding.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        Ok(())
    }

    /// Every referenced input file must exist.
    pub fn check_inputs(&self) -> Result<()> {
        let p = &self.paths;
        let mut named: Vec<(&str, &PathBuf)> = vec![
            ("paths.games", &p.games),
            ("paths.captions", &p.captions),
            ("paths.scene_graphs", &p.scene_graphs),
            ("paths.features", &p.features),
        ];
        named.extend(p.embedding_cache.iter().map(|x| ("paths.embedding_cache", x)));
        named.extend(p.gold_links.iter().map(|x| ("paths.gold_links", x)));
        named.extend(self.generation.config.iter().map(|x| ("generation.config", x)));
        named.extend(self.resolution.config.iter().map(|x| ("resolution.config", x)));
        for (field, path) in named {
            let full = self.resolve(path);
            if !full.is_file() {
                return Err(Error::Input(format!("{field}: {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    /// Input files whose contents feed the pipeline.
    pub(crate) fn input_files(&self) -> Vec<PathBuf> {
        let p = &self.paths;
        let mut v = vec![p.games.clone(), p.captions.clone(), p.scene_graphs.clone(), p.features.clone()];
        v.extend(p.embedding_cache.clone());
        v.extend(p.gold_links.clone());
        v.extend(self.generation.config.clone());
        v.extend(self.resolution.config.clone());
        v.into_iter().map(|x| self.resolve(&x)).collect()
    }

    pub fn embeddings(&self) -> Result<Box<dyn EmbeddingProvider>> {
        let hash = Box::new(HashEmbedding::new(self.embedding.dim, self.embedding.seed));
        Ok(match &self.paths.embedding_cache {
            Some(p) => Box::new(EmbeddingCache::load(&self.resolve(p))?.with_fallback(hash)?),
            None => hash,
        })
    }

    pub fn generation_config(&self, variant: GenVariant, seed: u64) -> Result<TrainConfig> {
        let mut c = match &self.generation.config {
            Some(p) => TrainConfig::load(&self.resolve(p))?,
            None => TrainConfig::generation(variant),
        };
        c.model = ModelKind::Generation(variant);
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }

    pub fn resolution_config(&self, seed: u64) -> Result<TrainConfig> {
        let mut c = match &self.resolution.config {
            Some(p) => TrainConfig::load(&self.resolve(p))?,
            None => TrainConfig::resolution(self.resolution.variant),
        };
        c.model = ModelKind::Resolution(self.resolution.variant);
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}
