use proptest::prelude::*;

use super::*;
use crate::textprep::{tokenize, StopwordList};

fn toks(s: &str) -> Vec<String> {
    tokenize(s)
}

fn sw() -> StopwordList {
    StopwordList::analysis()
}

fn prof(s: &str, pos: usize) -> LinguisticProfile {
    let t = toks(s);
    let tags = LexiconTagger::bundled().tag(&t);
    profile(&t, &tags, pos, &sw())
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() < 1e-9, "{a} != {b}");
}

#[test]
fn tagger_uses_lexicon_then_suffixes() {
    let t = LexiconTagger::bundled();
    let tags = t.tag(&toks("the man smiling happily , zorblax 42"));
    assert_eq!(
        tags,
        vec![Pos::Det, Pos::Noun, Pos::Verb, Pos::Adv, Pos::Punct, Pos::Noun, Pos::Num]
    );
    let custom = LexiconTagger::parse("# c\nzorblax\tADJ\n").unwrap();
    assert_eq!(custom.tag(&toks("zorblax")), vec![Pos::Adj]);
    assert!(LexiconTagger::parse("bad line").is_err());
    assert!(LexiconTagger::parse("x\tFOO").is_err());
}

#[test]
fn givenness_and_ttr_by_hand() {
    let p = prof("the same dog again", 2);
    close(p.givenness_prop, 0.75);
    close(p.definite_prop, 0.25);
    close(p.seen_prop, 0.5);
    close(p.indefinite_prop, 0.0);
    close(p.ttr, 1.0);
    close(prof("the dog the dog", 1).ttr, 0.5);
    let e = prof("", 1);
    assert!(e.empty);
    close(e.givenness_prop, 0.0);
}

#[test]
fn pos_proportions_are_over_content_tokens() {
    let p = prof("woman holding a cake", 1);
    assert_eq!(p.length_content, 3);
    close(p.content_prop, 0.75);
    close(p.noun_prop, 2.0 / 3.0);
    close(p.verb_prop, 1.0 / 3.0);
    close(p.adj_prop, 0.0);
}

fn reuse_of(prev: &str, cur: &str) -> Option<ReuseProfile> {
    let c = toks(cur);
    let tags = LexiconTagger::bundled().tag(&c);
    reuse(&toks(prev), &c, &tags, &sw())
}

#[test]
fn reuse_by_hand() {
    let r = reuse_of("guy with camera", "camera guy").unwrap();
    close(r.reuse_c, 1.0);
    close(r.reuse_bigrams_c.unwrap(), 0.0);
    assert_eq!(r.reused_nn_bigrams, None);
    close(r.reused_noun.unwrap(), 1.0);

    let r = reuse_of("dog on table", "dog on the table").unwrap();
    close(r.reuse_bigrams_c.unwrap(), 1.0);
    close(r.reused_nn_bigrams.unwrap(), 1.0);

    let r = reuse_of("red car", "blue cup").unwrap();
    close(r.reuse_c, 0.0);
    assert_eq!(r.reused_noun, None);

    // multiset: one previous "dog" covers one current "dog"
    let r = reuse_of("dog", "dog dog").unwrap();
    close(r.reuse_c, 0.5);

    assert!(reuse_of("a dog", "the").is_none());
}

#[test]
fn compounds_by_hand() {
    let tagger = LexiconTagger::bundled();
    let prev = toks("guy with camera");
    let cur = toks("camera guy");
    let c = nn_compounds(Some(&prev), &cur, &tagger.tag(&cur), DEFAULT_COMPOUND_MAX_LEN);
    close(c.nn_prop, 1.0);
    assert_eq!(
        c.candidates,
        vec![CompoundCandidate {
            modifier: "camera".into(),
            head: "guy".into(),
            kind: CompoundKind::Reuse
        }]
    );

    let prev = toks("headband guy");
    let cur = toks("tattoo guy");
    let c = nn_compounds(Some(&prev), &cur, &tagger.tag(&cur), DEFAULT_COMPOUND_MAX_LEN);
    assert_eq!(c.candidates[0].kind, CompoundKind::NonReuse);

    let cur = toks("the tattoo guy with a big red camera bag");
    let c = nn_compounds(None, &cur, &tagger.tag(&cur), DEFAULT_COMPOUND_MAX_LEN);
    assert!(c.candidates.is_empty());
    close(c.nn_prop, 2.0 / 8.0);
}

#[test]
fn cohens_d_and_t_test_against_reference_values() {
    close(cohens_d(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap().unwrap(), -1.0);
    let r = compare(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    assert!((r.p_value.unwrap() - 0.287_864_134_726_690_8).abs() < 1e-9);
    assert_eq!(r.stars, "");
    let r = compare(&[0.1, 0.5, 0.3, 0.9, 0.7], &[0.2, 0.1, 0.05, 0.3]).unwrap();
    assert!((r.p_value.unwrap() - 0.083_881_777_262_714_02).abs() < 1e-9);

    let same = compare(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    close(same.cohens_d.unwrap(), 0.0);
    close(same.p_value.unwrap(), 1.0);

    let flat = compare(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
    assert_eq!(flat.cohens_d, None);
    assert_eq!(flat.p_value, None);
    assert!(compare(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn star_thresholds() {
    assert_eq!(significance_stars(Some(0.0005)), "***");
    assert_eq!(significance_stars(Some(0.003)), "**");
    assert_eq!(significance_stars(Some(0.007)), "*");
    assert_eq!(significance_stars(Some(0.01)), "");
    assert_eq!(significance_stars(None), "");
}

fn utt(id: &str, pos: usize, text: &str, prev: Option<&str>) -> ChainUtterance {
    ChainUtterance {
        id: id.into(),
        chain_position: pos,
        tokens: toks(text),
        previous: prev.map(toks),
    }
}

fn fixture() -> Vec<ChainUtterance> {
    vec![
        utt("a1", 1, "a man with a red shirt", None),
        utt("a2", 2, "the same man again", Some("a man with a red shirt")),
        utt("b1", 1, "a dog on a table", None),
        utt("b2", 2, "dog on table", Some("a dog on a table")),
        utt("c1", 1, "woman holding a cake", None),
        utt("c2", 2, "the cake woman", Some("woman holding a cake")),
        utt("d1", 1, "a girl with a camera", None),
        utt("d2", 2, "camera girl", Some("a girl with a camera")),
    ]
}

fn trend<'a>(s: &'a SystemSummary, m: &str) -> &'a TrendRow {
    s.trends.iter().find(|t| t.measure == m).unwrap()
}

#[test]
fn fixture_summary_matches_hand_counts() {
    let a = analyze("human", &fixture(), &LexiconTagger::bundled(), &sw(), &AnalysisConfig::default());
    assert_eq!(a.vocab_first, 13);
    assert_eq!(a.vocab_later, 11);
    assert_eq!(a.reuse.len(), 4);
    assert_eq!(a.reuse_skipped, 0);
    let kinds: Vec<_> = a.compounds.iter().map(|(id, c)| (id.as_str(), c.kind)).collect();
    assert_eq!(kinds, vec![("c2", CompoundKind::Reuse), ("d2", CompoundKind::Reuse)]);

    let r = profile_report(&a, &[]).unwrap();
    assert!(r.entrainment.is_empty());
    let s = &r.systems[0];
    assert_eq!((s.n_first, s.n_later), (4, 4));
    close(trend(s, "givenness").first.unwrap(), 0.0);
    close(trend(s, "givenness").later.unwrap(), (0.75 + 1.0 / 3.0) / 4.0);
    close(trend(s, "indefinite").first.unwrap(), (2.0 / 6.0 + 0.4 + 0.25 + 0.4) / 4.0);
    close(trend(s, "length").first.unwrap(), 5.0);
    close(trend(s, "length").later.unwrap(), 3.0);
    close(trend(s, "nn bigrams").first.unwrap(), 0.0);
    close(trend(s, "nn bigrams").later.unwrap(), 0.375);
    assert!(trend(s, "length").stat.as_ref().unwrap().cohens_d.unwrap() > 0.0);
    let reuse_c = s.reuse_means.iter().find(|(m, _)| m == "reuse_c").unwrap().1;
    close(reuse_c.unwrap(), 1.0);
    assert_eq!(s.reuse_compounds, 2);

    let table = render_trends(&r);
    assert!(table.contains("givenness"));
    assert_eq!(render_entrainment(&r), "");
}

#[test]
fn entrainment_compares_each_model_with_reference() {
    let tagger = LexiconTagger::bundled();
    let cfg = AnalysisConfig::default();
    let human = analyze("human", &fixture(), &tagger, &sw(), &cfg);
    let model_utts: Vec<ChainUtterance> = fixture()
        .into_iter()
        .map(|mut u| {
            if u.chain_position > 1 {
                u.tokens = toks("the blue car");
            }
            u
        })
        .collect();
    let model = analyze("model", &model_utts, &tagger, &sw(), &cfg);
    let r = profile_report(&human, &[model.clone()]).unwrap();
    assert_eq!(r.entrainment.len(), ENTRAINMENT_MEASURES.len());
    let row = &r.entrainment[0];
    close(row.human.unwrap(), 1.0);
    close(row.models[0].mean.unwrap(), 0.0);
    // both groups constant
    assert_eq!(row.models[0].stat.as_ref().unwrap().cohens_d, None);
    let text = render_entrainment(&r);
    assert!(text.contains("reuse_c") && text.contains("model"));

    let mut dup = model;
    dup.name = "human".into();
    assert!(profile_report(&human, &[dup]).is_err());
}

proptest! {
    #[test]
    fn self_reuse_is_total(words in prop::collection::vec("[a-z]{3,7}", 1..10)) {
        let t: Vec<String> = words;
        let tags = LexiconTagger::bundled().tag(&t);
        if let Some(r) = reuse(&t, &t, &tags, &sw()) {
            prop_assert!((r.reuse_c - 1.0).abs() < 1e-12);
            if let Some(b) = r.reuse_bigrams_c {
                prop_assert!((b - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn proportions_are_bounded(
        a in prop::collection::vec("[a-z]{1,6}|the|a|same|again|one|,", 0..12),
        b in prop::collection::vec("[a-z]{1,6}|the|dog|camera", 0..12),
    ) {
        let tagger = LexiconTagger::bundled();
        let p = profile(&a, &tagger.tag(&a), 1, &sw());
        for x in [p.givenness_prop, p.definite_prop, p.seen_prop, p.indefinite_prop,
                  p.content_prop, p.noun_prop, p.adj_prop, p.verb_prop, p.ttr] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!(p.noun_prop + p.adj_prop + p.verb_prop <= 1.0 + 1e-12);
        if let Some(r) = reuse(&a, &b, &tagger.tag(&b), &sw()) {
            prop_assert!((0.0..=1.0).contains(&r.reuse_c));
            let shares: f64 = [r.reused_noun, r.reused_adj, r.reused_verb].iter().flatten().sum();
            prop_assert!(shares <= 1.0 + 1e-12);
            for x in [r.reuse_bigrams_c, r.reused_nn_bigrams].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn cohens_d_is_antisymmetric(
        a in prop::collection::vec(-10.0f64..10.0, 2..20),
        b in prop::collection::vec(-10.0f64..10.0, 2..20),
    ) {
        let ab = compare(&a, &b).unwrap();
        let ba = compare(&b, &a).unwrap();
        match (ab.cohens_d, ba.cohens_d) {
            (Some(x), Some(y)) => prop_assert!((x + y).abs() < 1e-9),
            (None, None) => {}
            _ => prop_assert!(false),
        }
        if let (Some(p), Some(q)) = (ab.p_value, ba.p_value) {
            prop_assert!((p - q).abs() < 1e-9 && (0.0..=1.0).contains(&p));
        }
    }
}
