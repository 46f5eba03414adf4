use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// Scene-graph tokens of one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VisualGenomeTokens {
    #[serde(rename = "attributes")]
    pub attribute_tokens: BTreeSet<String>,
    #[serde(rename = "relationships")]
    pub relationship_tokens: BTreeSet<String>,
}

impl VisualGenomeTokens {
    /// Tokens occurring both in attributes and in relationships.
    pub fn retained(&self) -> BTreeSet<String> {
        self.attribute_tokens
            .intersection(&self.relationship_tokens)
            .cloned()
            .collect()
    }
}

/// What an utterance about `image_id` is compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub image_id: String,
    pub captions: Vec<String>,
    /// Retained scene-graph tokens; empty when the image has no annotation.
    pub vg_tokens: BTreeSet<String>,
    /// Utterances selected in earlier rounds of the current dialogue.
    pub dynamic_captions: Vec<String>,
}

impl ReferenceSet {
    pub fn all_captions(&self) -> impl Iterator<Item = &String> {
        self.captions.iter().chain(&self.dynamic_captions)
    }
}

/// Static caption and scene-graph data for every image.
#[derive(Debug, Clone, Default)]
pub struct ReferenceSets {
    captions: BTreeMap<String, Vec<String>>,
    scene_graphs: BTreeMap<String, VisualGenomeTokens>,
}

impl ReferenceSets {
    pub fn new(
        captions: BTreeMap<String, Vec<String>>,
        scene_graphs: BTreeMap<String, VisualGenomeTokens>,
    ) -> Result<Self> {
        if let Some((img, _)) = captions.iter().find(|(_, c)| c.is_empty()) {
            return Err(Error::Input(format!("image {img} has no captions")));
        }
        Ok(ReferenceSets {
            captions,
            scene_graphs,
        })
    }

    pub fn load(captions: &Path, scene_graphs: &Path) -> Result<Self> {
        Self::new(load_captions(captions)?, load_scene_graphs(scene_graphs)?)
    }

    /// Retained scene-graph tokens, empty for unannotated images.
    pub fn vg_tokens(&self, image_id: &str) -> BTreeSet<String> {
        self.scene_graphs
            .get(image_id)
            .map(VisualGenomeTokens::retained)
            .unwrap_or_default()
    }

    pub fn reference_set(&self, image_id: &str, dynamic: &[String]) -> Result<ReferenceSet> {
        let captions = self
            .captions
            .get(image_id)
            .cloned()
            .ok_or_else(|| Error::Input(format!("no captions for image {image_id}")))?;
        Ok(ReferenceSet {
            image_id: image_id.to_string(),
            captions,
            vg_tokens: self.vg_tokens(image_id),
            dynamic_captions: dynamic.to_vec(),
        })
    }
}

/// Caption file: JSON object `{"img_1": ["caption", ...], ...}`.
pub fn load_captions(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    util::read_json(path)
}

/// Scene-graph file: JSON object
/// `{"img_1": {"attributes": ["leafy", "tree"], "relationships": ["man", "frisbee"]}}`.
pub fn load_scene_graphs(path: &Path) -> Result<BTreeMap<String, VisualGenomeTokens>> {
    let raw: BTreeMap<String, VisualGenomeTokens> = util::read_json(path)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let lower = |s: BTreeSet<String>| s.into_iter().map(|t| t.to_lowercase()).collect();
            (
                k,
                VisualGenomeTokens {
                    attribute_tokens: lower(v.attribute_tokens),
                    relationship_tokens: lower(v.relationship_tokens),
                },
            )
        })
        .collect())
}
