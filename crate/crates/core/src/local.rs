//! Local disambiguation: per (spot, candidate) features, a ranking-hinge
//! trainer and per-spot argmax.
//!
//! Feature layout (13 values): index `3 * source + op` for the four entity
//! text sources (first paragraph, full text, anchor text, anchor context)
//! crossed with three similarity operations (count dot product, TF-IDF
//! cosine, Jaccard), then the mention prior at index 12.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::corpus::{context_window, Corpus, Document, Spot, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::kb::{Entity, EntityId, KnowledgeBase};
use crate::seed;
use crate::text::TokenBag;

pub const FEATURE_DIM: usize = 13;
pub const PRIOR_INDEX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextSource {
    FirstParagraph,
    FullText,
    AnchorText,
    AnchorContext,
}

impl TextSource {
    pub const ALL: [TextSource; 4] = [
        TextSource::FirstParagraph,
        TextSource::FullText,
        TextSource::AnchorText,
        TextSource::AnchorContext,
    ];

    fn of(self, e: &Entity) -> &TokenBag {
        match self {
            TextSource::FirstParagraph => &e.first_paragraph,
            TextSource::FullText => &e.full_text,
            TextSource::AnchorText => &e.anchor_text,
            TextSource::AnchorContext => &e.anchor_context,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    CountDot,
    TfidfCosine,
    Jaccard,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 3] = [
        SimilarityKind::CountDot,
        SimilarityKind::TfidfCosine,
        SimilarityKind::Jaccard,
    ];
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count_dot" => Ok(SimilarityKind::CountDot),
            "tfidf_cosine" => Ok(SimilarityKind::TfidfCosine),
            "jaccard" => Ok(SimilarityKind::Jaccard),
            other => Err(Error::invalid(format!("unknown similarity kind {other:?}"))),
        }
    }
}

/// Smoothed inverse document frequency over entity full texts:
/// `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone)]
pub struct IdfTable {
    idf: HashMap<String, f64>,
    unseen: f64,
}

impl IdfTable {
    pub fn get(&self, term: &str) -> f64 {
        self.idf.get(term).copied().unwrap_or(self.unseen)
    }
}

pub fn idf_table(kb: &KnowledgeBase) -> IdfTable {
    let n = kb.len() as f64;
    let mut df: HashMap<&str, usize> = HashMap::new();
    for e in kb.entities() {
        for t in e.full_text.terms() {
            *df.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let idf = df
        .into_iter()
        .map(|(t, d)| (t.to_string(), ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .collect();
    IdfTable {
        idf,
        unseen: (1.0 + n).ln() + 1.0,
    }
}

/// Similarity between two bags. `idf` is only consulted for TF-IDF cosine
/// and is required there.
pub fn similarity(
    a: &TokenBag,
    b: &TokenBag,
    kind: SimilarityKind,
    idf: Option<&IdfTable>,
) -> Result<f64> {
    match kind {
        SimilarityKind::CountDot => Ok(count_dot(a, b)),
        SimilarityKind::TfidfCosine => {
            let idf = idf.ok_or_else(|| Error::invalid("tfidf_cosine needs an IDF table"))?;
            Ok(tfidf_cosine(a, b, idf))
        }
        SimilarityKind::Jaccard => Ok(jaccard(a, b)),
    }
}

fn count_dot(a: &TokenBag, b: &TokenBag) -> f64 {
    let (small, large) = if a.distinct() <= b.distinct() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(t, &n)| f64::from(n) * f64::from(large.count(t)))
        .sum()
}

fn tfidf_cosine(a: &TokenBag, b: &TokenBag, idf: &IdfTable) -> f64 {
    let weight = |n: u32, t: &str| f64::from(n) * idf.get(t);
    let norm = |bag: &TokenBag| -> f64 {
        bag.iter().map(|(t, &n)| weight(n, t).powi(2)).sum::<f64>().sqrt()
    };
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .iter()
        .filter(|(t, _)| b.contains(t))
        .map(|(t, &n)| weight(n, t) * weight(b.count(t), t))
        .sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

fn jaccard(a: &TokenBag, b: &TokenBag) -> f64 {
    let inter = a.terms().filter(|t| b.contains(t)).count();
    let union = a.distinct() + b.distinct() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFeatureVector(pub [f64; FEATURE_DIM]);

impl LocalFeatureVector {
    pub fn prior(&self) -> f64 {
        self.0[PRIOR_INDEX]
    }

    pub fn get(&self, source: TextSource, kind: SimilarityKind) -> f64 {
        let s = TextSource::ALL.iter().position(|&x| x == source).unwrap();
        let k = SimilarityKind::ALL.iter().position(|&x| x == kind).unwrap();
        self.0[3 * s + k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightVector(pub [f64; FEATURE_DIM]);

impl Default for WeightVector {
    fn default() -> Self {
        WeightVector([0.0; FEATURE_DIM])
    }
}

impl WeightVector {
    pub fn score(&self, f: &LocalFeatureVector) -> f64 {
        self.0.iter().zip(&f.0).map(|(w, x)| w * x).sum()
    }

    /// All weight on the mention prior.
    pub fn prior_only() -> Self {
        let mut w = [0.0; FEATURE_DIM];
        w[PRIOR_INDEX] = 1.0;
        WeightVector(w)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        WeightVector(self.0.map(|w| w * alpha))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut w = [0.0; FEATURE_DIM];
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if n == FEATURE_DIM {
                return Err(Error::parse(path, i + 1, "more than 13 weights"));
            }
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad weight {line:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, i + 1, "weight is not finite"));
            }
            w[n] = v;
            n += 1;
        }
        if n != FEATURE_DIM {
            return Err(Error::parse(path, n, format!("expected 13 weights, found {n}")));
        }
        Ok(WeightVector(w))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for WeightVector {
    /// One weight per line, shortest round-trip decimal form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in &self.0 {
            writeln!(f, "{w:?}")?;
        }
        Ok(())
    }
}

/// Computes [`LocalFeatureVector`]s against a fixed knowledge base.
pub struct FeatureExtractor<'a> {
    kb: &'a KnowledgeBase,
    idf: IdfTable,
    window: usize,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(kb: &'a KnowledgeBase, window: usize) -> Self {
        FeatureExtractor {
            kb,
            idf: idf_table(kb),
            window,
        }
    }

    pub fn with_default_window(kb: &'a KnowledgeBase) -> Self {
        Self::new(kb, DEFAULT_WINDOW)
    }

    pub fn kb(&self) -> &'a KnowledgeBase {
        self.kb
    }

    pub fn idf(&self) -> &IdfTable {
        &self.idf
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn extract(&self, doc: &Document, spot: &Spot, candidate: EntityId) -> Result<LocalFeatureVector> {
        if spot.candidate_index(candidate).is_none() {
            return Err(Error::invalid(format!(
                "entity {candidate} is not a candidate of spot {:?}",
                spot.surface
            )));
        }
        let context = context_window(doc, spot, self.window)?;
        self.extract_with_context(&context, spot, candidate)
    }

    /// Features for every candidate of `spot`, in candidate order.
    pub fn extract_all(&self, doc: &Document, spot: &Spot) -> Result<Vec<LocalFeatureVector>> {
        let context = context_window(doc, spot, self.window)?;
        spot.candidates
            .iter()
            .map(|&c| self.extract_with_context(&context, spot, c))
            .collect()
    }

    fn extract_with_context(
        &self,
        context: &TokenBag,
        spot: &Spot,
        candidate: EntityId,
    ) -> Result<LocalFeatureVector> {
        let entity = self.kb.require(candidate)?;
        let mut f = [0.0; FEATURE_DIM];
        for (s, source) in TextSource::ALL.iter().enumerate() {
            let text = source.of(entity);
            f[3 * s] = count_dot(text, context);
            f[3 * s + 1] = tfidf_cosine(text, context, &self.idf);
            f[3 * s + 2] = jaccard(text, context);
        }
        f[PRIOR_INDEX] = match self.kb.mention_prior(&spot.surface, candidate) {
            Ok(p) => p,
            Err(Error::UnknownSurface(_)) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(LocalFeatureVector(f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.01,
            margin: 1.0,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("margin must be positive"));
        }
        Ok(())
    }
}

/// Pairwise hinge loss of one (gold, rival) pair.
pub fn pair_loss(w: &WeightVector, gold: &LocalFeatureVector, rival: &LocalFeatureVector, margin: f64) -> f64 {
    (margin - w.score(gold) + w.score(rival)).max(0.0)
}

/// One online subgradient step on a (gold, rival) pair. Returns whether the
/// pair violated the margin (and so changed `w`).
pub fn hinge_step(
    w: &mut WeightVector,
    gold: &LocalFeatureVector,
    rival: &LocalFeatureVector,
    margin: f64,
    learning_rate: f64,
) -> bool {
    if margin - w.score(gold) + w.score(rival) <= 0.0 {
        return false;
    }
    for i in 0..FEATURE_DIM {
        w.0[i] += learning_rate * (gold.0[i] - rival.0[i]);
    }
    true
}

struct TrainingSpot {
    gold: usize,
    features: Vec<LocalFeatureVector>,
}

/// Online subgradient descent on the ranking hinge
/// `sum_s sum_{c != gold} max(0, margin - w.f(gold) + w.f(c))`, starting from
/// zero. Single-candidate spots carry no signal and are skipped.
pub fn train_weights(
    corpus: &Corpus,
    extractor: &FeatureExtractor<'_>,
    config: &TrainConfig,
) -> Result<WeightVector> {
    config.validate()?;
    let mut data = Vec::new();
    for (doc, spots) in corpus.iter() {
        for spot in spots {
            let gold = spot
                .gold
                .ok_or_else(|| Error::invalid(format!("training spot {:?} in {} has no gold label", spot.surface, doc.doc_id)))?;
            let gold = spot.candidate_index(gold).expect("corpus validates gold");
            if spot.candidates.len() < 2 {
                continue;
            }
            data.push(TrainingSpot {
                gold,
                features: extractor.extract_all(doc, spot)?,
            });
        }
    }
    if data.is_empty() {
        return Err(Error::invalid(
            "training set has no spot with two or more candidates",
        ));
    }

    let mut w = WeightVector::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng(seed::derive(config.seed, "train/shuffle"));
    for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let ts = &data[i];
            let gold = &ts.features[ts.gold];
            for (j, rival) in ts.features.iter().enumerate() {
                if j != ts.gold {
                    hinge_step(&mut w, gold, rival, config.margin, config.learning_rate);
                }
            }
        }
    }
    Ok(w)
}

/// Index of the maximum, first one winning ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Link each spot to its highest-scoring candidate; ties go to the smallest
/// entity id.
pub fn disambiguate_local(
    extractor: &FeatureExtractor<'_>,
    weights: &WeightVector,
    doc: &Document,
    spots: &[Spot],
) -> Result<Vec<Spot>> {
    spots
        .iter()
        .map(|spot| {
            if spot.candidates.is_empty() {
                return Err(Error::invalid(format!("spot {:?} has no candidates", spot.surface)));
            }
            let scores: Vec<f64> = extractor
                .extract_all(doc, spot)?
                .iter()
                .map(|f| weights.score(f))
                .collect();
            let mut out = spot.clone();
            out.predicted = Some(spot.candidates[argmax(&scores)]);
            Ok(out)
        })
        .collect()
}
