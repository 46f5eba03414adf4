//! Linguistic profiling of referring utterances: givenness markers,
//! compression, lexical entrainment, noun-noun compounds, and first versus
//! later comparisons with effect sizes.

mod pos;
mod profile;
mod report;
mod stats;

pub use pos::{LexiconTagger, Pos, PosTagger};
pub use profile::{
    nn_compounds, profile, reuse, CompoundAnalysis, CompoundCandidate, CompoundKind, LinguisticProfile,
    ReuseProfile, DEFAULT_COMPOUND_MAX_LEN, DEFINITE_MARKERS, GIVENNESS_MARKERS, INDEFINITE_MARKERS,
    SEEN_MARKERS,
};
pub use report::{
    analyze, profile_report, render_entrainment, render_trends, AnalysisConfig, ChainUtterance,
    EntrainmentCell, EntrainmentRow, LinguisticReport, SystemAnalysis, SystemSummary, TrendRow,
    ENTRAINMENT_MEASURES, TREND_MEASURES,
};
pub use stats::{cohens_d, compare, significance_stars, StatResult};

#[cfg(test)]
mod tests;
