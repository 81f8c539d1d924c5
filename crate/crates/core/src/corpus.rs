//! Documents, spots and the corpus container.
//!
//! On disk a corpus is `corpus.jsonl`: one document per line,
//!
//! ```text
//! {"doc_id":"d1","tokens":[...],"sentence_bounds":[[0,5],[5,9]],
//!  "spots":[{"span":[0,2],"surface":"michael jordan","candidates":[1,2],
//!            "gold":1,"predicted":null}]}
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase, MentionTable};
use crate::ratio::SimplexVector;
use crate::seed;
use crate::text::TokenBag;

pub const DEFAULT_WINDOW: usize = 25;
pub const MAX_SURFACE_TOKENS: usize = 5;
/// Context tokens sampled around each synthetic spot.
pub const SYNTH_CONTEXT_TOKENS: usize = 6;

/// Half-open token range `[start, end)`, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Span { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub sentence_bounds: Vec<Span>,
}

impl Document {
    /// Checks that the sentence ranges partition the token sequence.
    pub fn new(doc_id: String, tokens: Vec<String>, sentence_bounds: Vec<Span>) -> Result<Self> {
        let mut next = 0;
        for s in &sentence_bounds {
            if s.start != next || s.is_empty() {
                return Err(Error::invalid(format!(
                    "document {doc_id}: sentence bounds must partition the tokens in order"
                )));
            }
            next = s.end;
        }
        if next != tokens.len() {
            return Err(Error::invalid(format!(
                "document {doc_id}: sentence bounds cover {next} of {} tokens",
                tokens.len()
            )));
        }
        Ok(Document {
            doc_id,
            tokens,
            sentence_bounds,
        })
    }

    /// A document that is one sentence.
    pub fn single_sentence(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        let bounds = if tokens.is_empty() {
            vec![]
        } else {
            vec![Span::new(0, tokens.len())]
        };
        Document {
            doc_id: doc_id.into(),
            tokens,
            sentence_bounds: bounds,
        }
    }

    pub fn sentence_of(&self, span: &Span) -> Option<usize> {
        self.sentence_bounds.iter().position(|s| s.contains(span))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spot {
    pub doc_id: String,
    pub span: Span,
    pub surface: String,
    pub candidates: Vec<EntityId>,
    pub gold: Option<EntityId>,
    pub predicted: Option<EntityId>,
}

impl Spot {
    /// The predicted label, falling back to gold.
    pub fn label(&self) -> Option<EntityId> {
        self.predicted.or(self.gold)
    }

    pub fn candidate_index(&self, e: EntityId) -> Option<usize> {
        self.candidates.binary_search(&e).ok()
    }

    fn check(&self, doc: &Document) -> Result<()> {
        let ctx = || format!("document {} spot {:?}", doc.doc_id, (self.span.start, self.span.end));
        if self.doc_id != doc.doc_id {
            return Err(Error::invalid(format!("{}: belongs to {}", ctx(), self.doc_id)));
        }
        if self.span.is_empty() || doc.sentence_of(&self.span).is_none() {
            return Err(Error::invalid(format!("{}: span must lie inside one sentence", ctx())));
        }
        if self.candidates.is_empty() {
            return Err(Error::invalid(format!("{}: no candidates", ctx())));
        }
        if self.candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "{}: candidates must be sorted and distinct",
                ctx()
            )));
        }
        for (what, label) in [("gold", self.gold), ("predicted", self.predicted)] {
            if let Some(e) = label {
                if self.candidate_index(e).is_none() {
                    return Err(Error::invalid(format!(
                        "{}: {what} label {e} is not a candidate",
                        ctx()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Documents paired with their spots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<(Document, Vec<Spot>)>,
}

impl Corpus {
    pub fn new(docs: Vec<(Document, Vec<Spot>)>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for (doc, spots) in &docs {
            if !ids.insert(doc.doc_id.as_str()) {
                return Err(Error::invalid(format!("duplicate doc_id {}", doc.doc_id)));
            }
            for s in spots {
                s.check(doc)?;
            }
            for w in spots.windows(2) {
                if w[1].span.start < w[0].span.end {
                    return Err(Error::invalid(format!(
                        "document {}: spots overlap or are out of order at token {}",
                        doc.doc_id, w[1].span.start
                    )));
                }
            }
        }
        Ok(Corpus { docs })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Document, &[Spot])> {
        self.docs.iter().map(|(d, s)| (d, s.as_slice()))
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter().map(|(d, _)| d)
    }

    pub fn spots(&self) -> impl Iterator<Item = &Spot> {
        self.docs.iter().flat_map(|(_, s)| s.iter())
    }

    pub fn spot_count(&self) -> usize {
        self.docs.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn into_parts(self) -> Vec<(Document, Vec<Spot>)> {
        self.docs
    }

    /// Replace every document's spots, re-validating the result.
    pub fn with_spots(&self, spots: Vec<Vec<Spot>>) -> Result<Corpus> {
        if spots.len() != self.docs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.docs.len(),
                actual: spots.len(),
            });
        }
        let docs = self
            .docs
            .iter()
            .zip(spots)
            .map(|((d, _), s)| (d.clone(), s))
            .collect();
        Corpus::new(docs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse JSONL text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut docs = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            let rec: DocRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
            if !ids.insert(rec.doc_id.clone()) {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("duplicate doc_id {}", rec.doc_id),
                ));
            }
            let entry = rec
                .into_entry()
                .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
            docs.push(entry);
        }
        Corpus::new(docs)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (doc, spots) in &self.docs {
            let rec = DocRecord::from_entry(doc, spots);
            out.push_str(&serde_json::to_string(&rec).expect("document record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SpotRecord {
    span: Span,
    surface: String,
    candidates: Vec<EntityId>,
    #[serde(default)]
    gold: Option<EntityId>,
    #[serde(default)]
    predicted: Option<EntityId>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    doc_id: String,
    tokens: Vec<String>,
    sentence_bounds: Vec<Span>,
    #[serde(default)]
    spots: Vec<SpotRecord>,
}

impl DocRecord {
    fn into_entry(self) -> Result<(Document, Vec<Spot>)> {
        let doc = Document::new(self.doc_id, self.tokens, self.sentence_bounds)?;
        let spots = self
            .spots
            .into_iter()
            .map(|s| Spot {
                doc_id: doc.doc_id.clone(),
                span: s.span,
                surface: s.surface,
                candidates: s.candidates,
                gold: s.gold,
                predicted: s.predicted,
            })
            .collect::<Vec<_>>();
        for s in &spots {
            s.check(&doc)?;
        }
        Ok((doc, spots))
    }

    fn from_entry(doc: &Document, spots: &[Spot]) -> Self {
        DocRecord {
            doc_id: doc.doc_id.clone(),
            tokens: doc.tokens.clone(),
            sentence_bounds: doc.sentence_bounds.clone(),
            spots: spots
                .iter()
                .map(|s| SpotRecord {
                    span: s.span,
                    surface: s.surface.clone(),
                    candidates: s.candidates.clone(),
                    gold: s.gold,
                    predicted: s.predicted,
                })
                .collect(),
        }
    }
}

/// Greedy leftmost-longest dictionary spotting over token n-grams of at most
/// [`MAX_SURFACE_TOKENS`] tokens. Matches never cross a sentence boundary.
pub fn spot_mentions(doc: &Document, table: &MentionTable) -> Vec<Spot> {
    let lower: Vec<String> = doc.tokens.iter().map(|t| t.to_lowercase()).collect();
    let max_n = MAX_SURFACE_TOKENS.min(table.longest_surface());
    let mut spots = Vec::new();
    for sentence in &doc.sentence_bounds {
        let mut i = sentence.start;
        while i < sentence.end {
            let longest = max_n.min(sentence.end - i);
            let hit = (1..=longest).rev().find_map(|n| {
                let surface = lower[i..i + n].join(" ");
                table.get(&surface).map(|cands| (n, surface, cands))
            });
            match hit {
                Some((n, surface, cands)) => {
                    spots.push(Spot {
                        doc_id: doc.doc_id.clone(),
                        span: Span::new(i, i + n),
                        surface,
                        candidates: cands.iter().map(|c| c.entity).collect(),
                        gold: None,
                        predicted: None,
                    });
                    i += n;
                }
                None => i += 1,
            }
        }
    }
    spots
}

/// The spot tokens plus up to `k` tokens either side, clipped to the
/// document, as a lowercase bag.
pub fn context_window(doc: &Document, spot: &Spot, k: usize) -> Result<TokenBag> {
    if spot.span.is_empty() || spot.span.end > doc.tokens.len() {
        return Err(Error::invalid(format!(
            "span {:?} out of range for document {} ({} tokens)",
            (spot.span.start, spot.span.end),
            doc.doc_id,
            doc.tokens.len()
        )));
    }
    let lo = spot.span.start.saturating_sub(k);
    let hi = (spot.span.end + k).min(doc.tokens.len());
    Ok(TokenBag::from_tokens(doc.tokens[lo..hi].iter().map(String::as_str)))
}

/// Generate `n_spots` one-sentence documents with gold labels drawn i.i.d.
/// from `theta`.
///
/// Each class owns a random stream seeded from `(seed, class id)` alone, and
/// the j-th document of class `y` is drawn from it: surface ∝ prior count,
/// context tokens uniform over the entity's first paragraph. The per-class
/// conditional therefore does not depend on `theta`; only the label stream
/// does.
pub fn synth_corpus(
    kb: &KnowledgeBase,
    theta: &SimplexVector,
    n_spots: usize,
    seed: u64,
) -> Result<Corpus> {
    let table = kb.mentions();
    let mut classes = Vec::new();
    for (&y, &p) in theta.classes().iter().zip(theta.probs()) {
        let entity = kb.require(y)?;
        let surfaces = table.surfaces_of(y);
        if p > 0.0 && surfaces.is_empty() {
            return Err(Error::invalid(format!(
                "entity {y} has positive weight but no surface form"
            )));
        }
        let context: Vec<String> = entity
            .first_paragraph
            .iter()
            .flat_map(|(t, &n)| std::iter::repeat_n(t.clone(), n as usize))
            .collect();
        classes.push(SynthClass {
            id: y,
            surfaces,
            context,
            rng: seed::rng(seed::derive_indexed(seed, "synth/class", u64::from(y.0))),
        });
    }

    let label_dist = WeightedIndex::new(theta.probs())
        .map_err(|e| Error::invalid(format!("theta: {e}")))?;
    let mut label_rng = seed::rng(seed::derive(seed, "synth/labels"));

    let mut docs = Vec::with_capacity(n_spots);
    for i in 0..n_spots {
        let class = &mut classes[label_dist.sample(&mut label_rng)];
        let doc_id = format!("synth-{i:06}");
        let (doc, spot) = class.emit(doc_id, table);
        docs.push((doc, vec![spot]));
    }
    Corpus::new(docs)
}

struct SynthClass<'a> {
    id: EntityId,
    surfaces: Vec<(&'a str, u64)>,
    context: Vec<String>,
    rng: rand_chacha::ChaCha8Rng,
}

impl SynthClass<'_> {
    fn emit(&mut self, doc_id: String, table: &MentionTable) -> (Document, Spot) {
        let rng = &mut self.rng;
        let surface = if self.surfaces.iter().all(|s| s.1 == 0) {
            self.surfaces[rng.gen_range(0..self.surfaces.len())].0
        } else {
            let w = WeightedIndex::new(self.surfaces.iter().map(|s| s.1))
                .expect("nonzero surface weights");
            self.surfaces[w.sample(rng)].0
        };
        let mut draw = |n: usize| -> Vec<String> {
            if self.context.is_empty() {
                return Vec::new();
            }
            (0..n)
                .map(|_| self.context[rng.gen_range(0..self.context.len())].clone())
                .collect()
        };
        let left = draw(SYNTH_CONTEXT_TOKENS / 2);
        let right = draw(SYNTH_CONTEXT_TOKENS - SYNTH_CONTEXT_TOKENS / 2);

        let mut tokens = left;
        let start = tokens.len();
        tokens.extend(surface.split(' ').map(str::to_string));
        let end = tokens.len();
        tokens.extend(right);

        let candidates = table
            .get(surface)
            .expect("surface taken from the table")
            .iter()
            .map(|c| c.entity)
            .collect();
        let spot = Spot {
            doc_id: doc_id.clone(),
            span: Span::new(start, end),
            surface: surface.to_string(),
            candidates,
            gold: Some(self.id),
            predicted: None,
        };
        (Document::single_sentence(doc_id, tokens), spot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::Entity;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn table(rows: &[(&str, u32, u64)]) -> MentionTable {
        MentionTable::from_rows(rows.iter().map(|&(s, e, c)| (s, EntityId(e), c))).unwrap()
    }

    #[test]
    fn spots_two_token_surface() {
        let doc = Document::single_sentence("d", toks("michael jordan plays"));
        let t = table(&[("michael jordan", 1, 3), ("michael jordan", 2, 1)]);
        let spots = spot_mentions(&doc, &t);
        assert_eq!(spots.len(), 1);
        assert_eq!(spots[0].span, Span::new(0, 2));
        assert_eq!(spots[0].candidates, vec![EntityId(1), EntityId(2)]);
    }

    #[test]
    fn leftmost_longest_wins() {
        let doc = Document::single_sentence("d", toks("new york city"));
        let t = table(&[("new york", 1, 1), ("york city", 2, 1)]);
        let spots = spot_mentions(&doc, &t);
        assert_eq!(spots.len(), 1);
        assert_eq!(spots[0].surface, "new york");
        assert_eq!(spots[0].span, Span::new(0, 2));
    }

    #[test]
    fn no_match_and_sentence_boundaries() {
        let t = table(&[("new york", 1, 1)]);
        let doc = Document::single_sentence("d", toks("nothing here"));
        assert!(spot_mentions(&doc, &t).is_empty());

        let doc = Document::new(
            "d".into(),
            toks("in new york now"),
            vec![Span::new(0, 2), Span::new(2, 4)],
        )
        .unwrap();
        assert!(spot_mentions(&doc, &t).is_empty());
    }

    #[test]
    fn spotting_is_case_insensitive() {
        let doc = Document::single_sentence("d", toks("Visit New York"));
        let t = table(&[("new york", 1, 1)]);
        assert_eq!(spot_mentions(&doc, &t)[0].span, Span::new(1, 3));
    }

    fn spot_at(doc: &Document, start: usize, end: usize) -> Spot {
        Spot {
            doc_id: doc.doc_id.clone(),
            span: Span::new(start, end),
            surface: doc.tokens[start..end].join(" "),
            candidates: vec![EntityId(1)],
            gold: None,
            predicted: None,
        }
    }

    #[test]
    fn context_window_clipping() {
        let doc = Document::single_sentence("d", toks("a b c d e f g"));
        let first = spot_at(&doc, 0, 1);
        let bag = context_window(&doc, &first, 25).unwrap();
        assert_eq!(bag.total(), 7);

        let mid = spot_at(&doc, 3, 4);
        assert_eq!(context_window(&doc, &mid, 0).unwrap(), TokenBag::from_text("d"));
        assert_eq!(
            context_window(&doc, &mid, 2).unwrap(),
            TokenBag::from_text("b c d e f")
        );

        let bad = Spot {
            span: Span::new(5, 9),
            ..mid.clone()
        };
        assert!(context_window(&doc, &bad, 1).is_err());
    }

    #[test]
    fn corpus_validation() {
        let doc = Document::new(
            "d".into(),
            toks("a b c d"),
            vec![Span::new(0, 2), Span::new(2, 4)],
        )
        .unwrap();
        let crossing = spot_at(&doc, 1, 3);
        assert!(Corpus::new(vec![(doc.clone(), vec![crossing])]).is_err());

        let s1 = spot_at(&doc, 0, 2);
        let s2 = spot_at(&doc, 1, 2);
        assert!(Corpus::new(vec![(doc.clone(), vec![s1.clone(), s2])]).is_err());

        let mut bad_gold = s1.clone();
        bad_gold.gold = Some(EntityId(9));
        assert!(Corpus::new(vec![(doc.clone(), vec![bad_gold])]).is_err());

        assert!(Document::new("x".into(), toks("a b"), vec![Span::new(0, 1)]).is_err());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "\n{\"doc_id\":\"a\",\"tokens\":[\"x\"],\"sentence_bounds\":[[0,1]]}\n{oops\n";
        match Corpus::parse(text, Path::new("c.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "{\"doc_id\":\"a\",\"tokens\":[\"x\",\"y\"],\"sentence_bounds\":[[0,1],[1,2]],\
                    \"spots\":[{\"span\":[0,2],\"surface\":\"x y\",\"candidates\":[1]}]}\n";
        match Corpus::parse(text, Path::new("c.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(Corpus::parse("", Path::new("c.jsonl")).unwrap().is_empty());
    }

    fn synth_kb() -> KnowledgeBase {
        let entities = vec![
            Entity::from_texts(EntityId(1), "A", "alpha beta gamma", "", "", ""),
            Entity::from_texts(EntityId(2), "B", "delta epsilon", "", "", ""),
            Entity::from_texts(EntityId(3), "C", "", "", "", ""),
        ];
        let t = table(&[("aa", 1, 3), ("ab", 1, 1), ("ab", 2, 2), ("bb", 2, 5)]);
        KnowledgeBase::new(entities, vec![], t, None).unwrap()
    }

    fn theta(pairs: &[(u32, f64)]) -> SimplexVector {
        SimplexVector::new(
            pairs.iter().map(|p| EntityId(p.0)).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn synth_point_mass_and_determinism() {
        let kb = synth_kb();
        let t = theta(&[(1, 1.0), (2, 0.0)]);
        let c = synth_corpus(&kb, &t, 50, 3).unwrap();
        assert_eq!(c.spot_count(), 50);
        assert!(c.spots().all(|s| s.gold == Some(EntityId(1))));
        assert_eq!(c, synth_corpus(&kb, &t, 50, 3).unwrap());
        assert_ne!(c, synth_corpus(&kb, &t, 50, 4).unwrap());
    }

    #[test]
    fn synth_rejects_unreachable_class() {
        let kb = synth_kb();
        let t = theta(&[(1, 0.5), (3, 0.5)]);
        assert!(synth_corpus(&kb, &t, 10, 1).is_err());
        // zero weight on the surfaceless entity is fine
        let t = theta(&[(1, 1.0), (3, 0.0)]);
        assert!(synth_corpus(&kb, &t, 10, 1).is_ok());
    }

    #[test]
    fn synth_label_ratio_converges() {
        let kb = synth_kb();
        let t = theta(&[(1, 0.7), (2, 0.3)]);
        let c = synth_corpus(&kb, &t, 10_000, 11).unwrap();
        let ones = c.spots().filter(|s| s.gold == Some(EntityId(1))).count();
        let p = ones as f64 / 10_000.0;
        assert!((p - 0.7).abs() <= 0.02, "{p}");
    }

    #[test]
    fn synth_class_conditionals_ignore_theta() {
        let kb = synth_kb();
        let a = synth_corpus(&kb, &theta(&[(1, 0.8), (2, 0.2)]), 400, 9).unwrap();
        let b = synth_corpus(&kb, &theta(&[(1, 0.2), (2, 0.8)]), 400, 9).unwrap();
        for class in [EntityId(1), EntityId(2)] {
            let seq = |c: &Corpus| -> Vec<Vec<String>> {
                c.iter()
                    .filter(|(_, s)| s[0].gold == Some(class))
                    .map(|(d, _)| d.tokens.clone())
                    .collect()
            };
            let (sa, sb) = (seq(&a), seq(&b));
            let n = sa.len().min(sb.len());
            assert!(n > 50);
            assert_eq!(sa[..n], sb[..n]);
        }
    }
}
