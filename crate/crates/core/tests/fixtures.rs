use std::path::{Path, PathBuf};

use entstat::corpus::{spot_mentions, Corpus};
use entstat::local::{disambiguate_local, train_weights, FeatureExtractor, TrainConfig, WeightVector};
use entstat::stats::{build_cooc_graph, entity_bigrams, personalized_pagerank, top_related};
use entstat::{EntityId, Error, KnowledgeBase};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn kb() -> KnowledgeBase {
    KnowledgeBase::load(fixtures().join("kb")).unwrap()
}

fn corpus() -> Corpus {
    Corpus::load(fixtures().join("corpus.jsonl")).unwrap()
}

#[test]
fn shipped_catalogs_load() {
    let kb = kb();
    assert_eq!(kb.len(), 12);
    assert_eq!(kb.total_pages(), 12);
    assert_eq!(kb.mention_prior("Michael  Jordan", EntityId(1)).unwrap(), 0.8);

    let synth = KnowledgeBase::load(fixtures().join("synth-kb")).unwrap();
    assert_eq!(synth.len(), 3);
    assert_eq!(synth.total_pages(), 3);
}

#[test]
fn dangling_mention_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["entities.jsonl", "links.tsv"] {
        std::fs::copy(fixtures().join("synth-kb").join(f), dir.path().join(f)).unwrap();
    }
    std::fs::write(dir.path().join("mentions.tsv"), "jaguar\t99\t3\n").unwrap();
    let err = KnowledgeBase::load(dir.path()).unwrap_err();
    assert!(matches!(err, Error::DanglingReference { id: EntityId(99), .. }), "{err}");

    std::fs::write(dir.path().join("mentions.tsv"), "").unwrap();
    assert!(KnowledgeBase::load(dir.path()).unwrap().mentions().is_empty());

    std::fs::write(dir.path().join("links.tsv"), "1\t2\nnot a link\n").unwrap();
    let err = KnowledgeBase::load(dir.path()).unwrap_err();
    assert!(err.to_string().contains(":2"), "{err}");
}

#[test]
fn spotter_recovers_the_gold_spans() {
    let kb = kb();
    for (doc, spots) in corpus().iter() {
        let found = spot_mentions(doc, kb.mentions());
        let spans: Vec<_> = found.iter().map(|s| (s.span, s.candidates.clone())).collect();
        let gold: Vec<_> = spots.iter().map(|s| (s.span, s.candidates.clone())).collect();
        assert_eq!(spans, gold, "{}", doc.doc_id);
    }
}

#[test]
fn trained_weights_fit_the_fixture() {
    let kb = kb();
    let corpus = corpus();
    let extractor = FeatureExtractor::with_default_window(&kb);
    let config = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let w = train_weights(&corpus, &extractor, &config).unwrap();
    let mut right = 0;
    let mut total = 0;
    for (doc, spots) in corpus.iter() {
        for s in disambiguate_local(&extractor, &w, doc, spots).unwrap() {
            total += 1;
            right += usize::from(s.predicted == s.gold);
        }
    }
    // The prior alone misses the professor, the river and the animal.
    let prior = WeightVector::prior_only();
    let mut prior_right = 0;
    for (doc, spots) in corpus.iter() {
        for s in disambiguate_local(&extractor, &prior, doc, spots).unwrap() {
            prior_right += usize::from(s.predicted == s.gold);
        }
    }
    assert!(prior_right < total);
    assert!(right > prior_right, "{right} vs prior {prior_right} of {total}");
}

#[test]
fn related_entities_of_the_river() {
    let table = entity_bigrams(&corpus());
    // Amazon (river) co-occurs with Brazil twice and the animal once.
    let g = build_cooc_graph(&table, EntityId(4), 0.0).unwrap();
    assert_eq!(g.nodes(), &[EntityId(4), EntityId(7), EntityId(10)]);
    let scores = personalized_pagerank(&g, 0.85, 1e-12, 10_000).unwrap();
    let top = top_related(&scores, 5);
    assert_eq!(top.iter().map(|t| t.0).collect::<Vec<_>>(), vec![EntityId(7), EntityId(10)]);
    assert!(build_cooc_graph(&table, EntityId(12), 0.0).is_err());
}
