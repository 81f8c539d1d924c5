//! Occurrence statistics over a labeled corpus: sense priors, sentence-level
//! entity bigrams, the co-occurrence subgraph around an entity and a
//! personalized PageRank ranking of its neighbours.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::kb::{EntityId, KnowledgeBase};

pub const DEFAULT_EPS: f64 = 0.01;
pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Fixed 12-decimal rendering used by every stats file.
pub fn fmt12(x: f64) -> String {
    format!("{x:.12}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseGroup {
    pub name: String,
    /// `(sense, count)` in the order the group lists its senses.
    pub counts: Vec<(EntityId, u64)>,
    /// `None` when no sense of the group was observed.
    pub distribution: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseStats {
    pub groups: Vec<SenseGroup>,
}

impl SenseStats {
    /// `group<TAB>sense<TAB>count<TAB>prob`, with `NA` for groups that were
    /// never observed.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            for (i, (sense, n)) in g.counts.iter().enumerate() {
                let p = match &g.distribution {
                    Some(d) => fmt12(d[i]),
                    None => "NA".to_string(),
                };
                let _ = writeln!(out, "{}\t{sense}\t{n}\t{p}", g.name);
            }
        }
        out
    }
}

/// Name groups derived from entity titles: a trailing parenthetical is
/// dropped (`Michael Jordan (professor)` -> `michael jordan`) and the rest is
/// lowercased.
pub fn groups_from_titles(kb: &KnowledgeBase) -> BTreeMap<String, Vec<EntityId>> {
    let mut groups: BTreeMap<String, Vec<EntityId>> = BTreeMap::new();
    for e in kb.entities() {
        let base = match e.title.find('(') {
            Some(i) if e.title.trim_end().ends_with(')') => &e.title[..i],
            _ => e.title.as_str(),
        };
        let name = base.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let name = if name.is_empty() { e.id.to_string() } else { name };
        groups.entry(name).or_default().push(e.id);
    }
    groups
}

/// Per-group label tallies normalized within the group. Labels are the
/// predicted entity, falling back to gold.
pub fn sense_prior(corpus: &Corpus, name_groups: &BTreeMap<String, Vec<EntityId>>) -> Result<SenseStats> {
    let mut owner: BTreeMap<EntityId, (usize, usize)> = BTreeMap::new();
    for (gi, (name, senses)) in name_groups.iter().enumerate() {
        for (si, &s) in senses.iter().enumerate() {
            if let Some((other, _)) = owner.insert(s, (gi, si)) {
                let other_name = name_groups.keys().nth(other).expect("group index");
                return Err(Error::invalid(format!(
                    "sense {s} belongs to both {other_name:?} and {name:?}"
                )));
            }
        }
    }
    let mut counts: Vec<Vec<u64>> = name_groups.values().map(|s| vec![0; s.len()]).collect();
    for spot in corpus.spots() {
        if let Some((gi, si)) = spot.label().and_then(|l| owner.get(&l)) {
            counts[*gi][*si] += 1;
        }
    }
    let groups = name_groups
        .iter()
        .zip(counts)
        .map(|((name, senses), c)| {
            let total: u64 = c.iter().sum();
            let distribution =
                (total > 0).then(|| c.iter().map(|&n| n as f64 / total as f64).collect());
            SenseGroup {
                name: name.clone(),
                counts: senses.iter().copied().zip(c).collect(),
                distribution,
            }
        })
        .collect();
    Ok(SenseStats { groups })
}

/// Sentence-level co-occurrence counts. Each entity counts at most once per
/// sentence, and each unordered pair of distinct entities at most once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BigramTable {
    unigrams: BTreeMap<EntityId, u64>,
    /// Keyed by `(smaller id, larger id)`.
    pairs: BTreeMap<(EntityId, EntityId), u64>,
}

impl BigramTable {
    pub fn unigram(&self, e: EntityId) -> u64 {
        self.unigrams.get(&e).copied().unwrap_or(0)
    }

    /// n(a, b), symmetric.
    pub fn pair(&self, a: EntityId, b: EntityId) -> u64 {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    /// P(b | a) = n(a, b) / n(a); `None` when `a` was never seen.
    pub fn conditional(&self, b: EntityId, a: EntityId) -> Option<f64> {
        let na = self.unigram(a);
        (na > 0).then(|| self.pair(a, b) as f64 / na as f64)
    }

    /// The entity seen in the most sentences; ties go to the smallest id.
    pub fn most_frequent(&self) -> Option<EntityId> {
        self.unigrams
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&e, _)| e)
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.unigrams.keys().copied()
    }

    /// Entities that co-occur with `a`, sorted by id.
    pub fn neighbors(&self, a: EntityId) -> Vec<EntityId> {
        let mut out: Vec<EntityId> = self
            .pairs
            .keys()
            .filter_map(|&(x, y)| {
                if x == a {
                    Some(y)
                } else if y == a {
                    Some(x)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }

    pub fn merge(&mut self, other: &BigramTable) {
        for (&e, &n) in &other.unigrams {
            *self.unigrams.entry(e).or_insert(0) += n;
        }
        for (&k, &n) in &other.pairs {
            *self.pairs.entry(k).or_insert(0) += n;
        }
    }

    /// `e1<TAB>e2<TAB>count<TAB>p_e2_given_e1`, both orientations of every
    /// observed pair, sorted by (e1, e2).
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(EntityId, EntityId, u64)> = Vec::new();
        for (&(a, b), &n) in &self.pairs {
            rows.push((a, b, n));
            rows.push((b, a, n));
        }
        rows.sort();
        let mut out = String::new();
        for (a, b, n) in rows {
            let p = self.conditional(b, a).expect("observed entity");
            let _ = writeln!(out, "{a}\t{b}\t{n}\t{}", fmt12(p));
        }
        out
    }
}

/// Count bigrams for one document's labeled spots.
pub fn document_bigrams(doc: &crate::corpus::Document, spots: &[crate::corpus::Spot]) -> BigramTable {
    let mut table = BigramTable::default();
    for sentence in &doc.sentence_bounds {
        let labels: BTreeSet<EntityId> = spots
            .iter()
            .filter(|s| sentence.contains(&s.span))
            .filter_map(|s| s.label())
            .collect();
        let labels: Vec<EntityId> = labels.into_iter().collect();
        for (i, &a) in labels.iter().enumerate() {
            *table.unigrams.entry(a).or_insert(0) += 1;
            for &b in &labels[i + 1..] {
                *table.pairs.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    table
}

pub fn entity_bigrams(corpus: &Corpus) -> BigramTable {
    let mut table = BigramTable::default();
    for (doc, spots) in corpus.iter() {
        table.merge(&document_bigrams(doc, spots));
    }
    table
}

/// Undirected weighted graph around a center entity. Node 0 is the center.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocGraph {
    nodes: Vec<EntityId>,
    /// Symmetric adjacency: `adj[i]` lists `(j, weight)` sorted by `j`.
    adj: Vec<Vec<(usize, f64)>>,
}

impl CoocGraph {
    /// Build from a center, further nodes and undirected weighted edges
    /// given as node-index pairs. Weights must be positive and finite.
    pub fn from_edges(center: EntityId, others: Vec<EntityId>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut nodes = vec![center];
        nodes.extend(others);
        let n = nodes.len();
        let distinct: BTreeSet<_> = nodes.iter().collect();
        if distinct.len() != n {
            return Err(Error::invalid("graph nodes must be distinct"));
        }
        let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) references a missing node")));
            }
            if a == b {
                return Err(Error::invalid("self-edges are not allowed"));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("edge weight {w} must be positive")));
            }
            adj[a].insert(b, w);
            adj[b].insert(a, w);
        }
        Ok(CoocGraph {
            nodes,
            adj: adj.into_iter().map(|m| m.into_iter().collect()).collect(),
        })
    }

    pub fn center(&self) -> EntityId {
        self.nodes[0]
    }

    pub fn nodes(&self) -> &[EntityId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn weight(&self, a: EntityId, b: EntityId) -> Option<f64> {
        let i = self.nodes.iter().position(|&x| x == a)?;
        let j = self.nodes.iter().position(|&x| x == b)?;
        self.adj[i].iter().find(|(k, _)| *k == j).map(|&(_, w)| w)
    }
}

/// The subgraph around `x`: neighbours `E` with `P(E|x) > eps`, linked to `x`
/// and to each other (where they co-occur) with weight `P(E|F) + P(F|E)`.
pub fn build_cooc_graph(table: &BigramTable, x: EntityId, eps: f64) -> Result<CoocGraph> {
    if table.unigram(x) == 0 {
        return Err(Error::invalid(format!("entity {x} was never observed")));
    }
    let keep: Vec<EntityId> = table
        .neighbors(x)
        .into_iter()
        .filter(|&e| e != x && table.conditional(e, x).is_some_and(|p| p > eps))
        .collect();
    let weight = |a: EntityId, b: EntityId| -> f64 {
        table.conditional(a, b).unwrap_or(0.0) + table.conditional(b, a).unwrap_or(0.0)
    };
    let mut edges = Vec::new();
    for (i, &e) in keep.iter().enumerate() {
        edges.push((0, i + 1, weight(x, e)));
        for (j, &f) in keep.iter().enumerate().skip(i + 1) {
            if table.pair(e, f) > 0 {
                edges.push((i + 1, j + 1, weight(e, f)));
            }
        }
    }
    CoocGraph::from_edges(x, keep, &edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PprScores {
    pub nodes: Vec<EntityId>,
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// Σ scores after each iteration.
    pub mass_history: Vec<f64>,
}

/// Random walk with restart to the center. Rows of the weight matrix are
/// normalized into transition probabilities; a dangling node sends its whole
/// mass back to the center. Starts from all mass on the center and stops
/// when the largest per-node change drops below `tol`.
pub fn personalized_pagerank(graph: &CoocGraph, damping: f64, tol: f64, max_iterations: usize) -> Result<PprScores> {
    if graph.is_empty() {
        return Err(Error::invalid("graph is empty"));
    }
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::invalid(format!("damping {damping} must lie in (0, 1)")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = graph.len();
    let out_weight: Vec<f64> = (0..n)
        .map(|i| graph.neighbors(i).iter().map(|&(_, w)| w).sum())
        .collect();
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    let mut mass_history = Vec::new();
    for it in 1..=max_iterations {
        let mut next = vec![0.0; n];
        next[0] = 1.0 - damping;
        for i in 0..n {
            if p[i] == 0.0 {
                continue;
            }
            if out_weight[i] == 0.0 {
                next[0] += damping * p[i];
                continue;
            }
            for &(j, w) in graph.neighbors(i) {
                next[j] += damping * p[i] * w / out_weight[i];
            }
        }
        let delta = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        mass_history.push(next.iter().sum());
        p = next;
        if delta < tol {
            return Ok(PprScores {
                nodes: graph.nodes().to_vec(),
                scores: p,
                iterations: it,
                mass_history,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "personalized pagerank",
        iterations: max_iterations,
    })
}

/// Top `k` nodes by score, excluding the center; ties to the smallest id.
pub fn top_related(scores: &PprScores, k: usize) -> Vec<(EntityId, f64)> {
    let mut ranked: Vec<(EntityId, f64)> = scores
        .nodes
        .iter()
        .copied()
        .zip(scores.scores.iter().copied())
        .skip(1)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// `rank<TAB>entity<TAB>score`, ranks starting at 1.
pub fn related_tsv(ranked: &[(EntityId, f64)]) -> String {
    let mut out = String::new();
    for (i, (e, s)) in ranked.iter().enumerate() {
        let _ = writeln!(out, "{}\t{e}\t{}", i + 1, fmt12(*s));
    }
    out
}

/// `surface<TAB>entity<TAB>count<TAB>prior` for every catalog row, sorted by
/// surface then entity.
pub fn mention_prior_tsv(kb: &KnowledgeBase) -> Result<String> {
    let mut out = String::new();
    for (surface, cands) in kb.mentions().iter() {
        for c in cands {
            let p = kb.mention_prior(surface, c.entity)?;
            let _ = writeln!(out, "{surface}\t{}\t{}\t{}", c.entity, c.prior_count, fmt12(p));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Span, Spot};

    fn e(n: u32) -> EntityId {
        EntityId(n)
    }

    /// One document; `sentences` lists the labels found in each sentence.
    fn corpus(sentences: &[&[u32]]) -> Corpus {
        let mut tokens = Vec::new();
        let mut bounds = Vec::new();
        let mut spots = Vec::new();
        for labels in sentences {
            let start = tokens.len();
            for &l in *labels {
                let i = tokens.len();
                tokens.push(format!("t{i}"));
                spots.push(Spot {
                    doc_id: "d".into(),
                    span: Span::new(i, i + 1),
                    surface: format!("t{i}"),
                    candidates: vec![e(l)],
                    gold: None,
                    predicted: Some(e(l)),
                });
            }
            tokens.push(".".into());
            bounds.push(Span::new(start, tokens.len()));
        }
        let doc = Document::new("d".into(), tokens, bounds).unwrap();
        Corpus::new(vec![(doc, spots)]).unwrap()
    }

    #[test]
    fn single_pair() {
        let t = entity_bigrams(&corpus(&[&[1, 2]]));
        assert_eq!(t.pair(e(1), e(2)), 1);
        assert_eq!(t.pair(e(2), e(1)), 1);
        assert_eq!(t.conditional(e(2), e(1)), Some(1.0));
    }

    #[test]
    fn once_per_sentence() {
        let t = entity_bigrams(&corpus(&[&[1, 2, 1]]));
        assert_eq!(t.pair(e(1), e(2)), 1);
        assert_eq!(t.unigram(e(1)), 1);
    }

    #[test]
    fn two_sentence_conditionals() {
        // s1 = {1, 2}, s2 = {1, 3}: P(2|1) = 1/2, P(1|2) = 1, P(3|2) = 0
        let t = entity_bigrams(&corpus(&[&[1, 2], &[3, 1]]));
        assert_eq!(t.unigram(e(1)), 2);
        assert_eq!(t.most_frequent(), Some(e(1)));
        assert_eq!(t.conditional(e(2), e(1)), Some(0.5));
        assert_eq!(t.conditional(e(1), e(2)), Some(1.0));
        assert_eq!(t.conditional(e(3), e(2)), Some(0.0));
        assert_eq!(t.conditional(e(1), e(9)), None);
        assert_eq!(
            t.to_tsv(),
            "1\t2\t1\t0.500000000000\n1\t3\t1\t0.500000000000\n\
             2\t1\t1\t1.000000000000\n3\t1\t1\t1.000000000000\n"
        );
    }

    #[test]
    fn sense_groups() {
        let c = corpus(&[&[1, 1, 2], &[1, 2, 2], &[1, 1, 3, 3]]);
        let mut groups = BTreeMap::new();
        groups.insert("mj".to_string(), vec![e(1), e(2)]);
        groups.insert("solo".to_string(), vec![e(3)]);
        groups.insert("unseen".to_string(), vec![e(4)]);
        let s = sense_prior(&c, &groups).unwrap();
        // e1: 5 spots, e2: 3 spots
        assert_eq!(s.groups[0].counts, vec![(e(1), 5), (e(2), 3)]);
        assert_eq!(s.groups[0].distribution, Some(vec![0.625, 0.375]));
        assert_eq!(s.groups[1].distribution, Some(vec![1.0]));
        assert_eq!(s.groups[2].distribution, None);
        assert!(s.to_tsv().contains("unseen\t4\t0\tNA\n"));

        groups.insert("dup".to_string(), vec![e(3)]);
        assert!(sense_prior(&c, &groups).is_err());
    }

    #[test]
    fn cooc_graph_thresholds() {
        // x=1 with 2 in s1, 1 with 3 in s2, 3 alone in s3, s4.
        let t = entity_bigrams(&corpus(&[&[1, 2], &[1, 3], &[3], &[3]]));
        let g = build_cooc_graph(&t, e(1), 0.0).unwrap();
        assert_eq!(g.nodes(), &[e(1), e(2), e(3)]);
        // P(3|1) = 0.5, P(1|3) = 1/3 ... weight 0.8333
        let w = g.weight(e(1), e(3)).unwrap();
        assert!((w - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(g.weight(e(2), e(3)), None);

        assert_eq!(build_cooc_graph(&t, e(1), 1.0).unwrap().len(), 1);
        assert!(build_cooc_graph(&t, e(9), 0.0).is_err());
    }

    #[test]
    fn asymmetric_weight() {
        // n(1)=2, n(2)=4, n(1,2)=1: P(2|1)=0.5, P(1|2)=0.25 -> 0.75
        let t = entity_bigrams(&corpus(&[&[1, 2], &[1], &[2], &[2], &[2]]));
        let g = build_cooc_graph(&t, e(1), 0.0).unwrap();
        assert_eq!(g.weight(e(1), e(2)), Some(0.75));
    }

    fn star(weights: &[f64]) -> CoocGraph {
        let others = (0..weights.len() as u32).map(|i| e(i + 2)).collect();
        let edges: Vec<_> = weights.iter().enumerate().map(|(i, &w)| (0, i + 1, w)).collect();
        CoocGraph::from_edges(e(1), others, &edges).unwrap()
    }

    #[test]
    fn star_leaves_tie() {
        let g = star(&[0.5, 0.5, 0.5]);
        let s = personalized_pagerank(&g, 0.85, 1e-12, 10_000).unwrap();
        assert_eq!(s.scores[1], s.scores[2]);
        assert_eq!(s.scores[2], s.scores[3]);
        assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for m in &s.mass_history {
            assert!((m - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn small_damping_concentrates_on_center() {
        let g = star(&[1.0, 0.2]);
        let s = personalized_pagerank(&g, 1e-6, 1e-12, 10_000).unwrap();
        assert!(s.scores[0] > 1.0 - 1e-5);
    }

    #[test]
    fn heavier_leaf_ranks_first() {
        let g = star(&[0.5, 1.5, 0.5]);
        let s = personalized_pagerank(&g, 0.85, 1e-12, 10_000).unwrap();
        let top = top_related(&s, 10);
        assert_eq!(top.len(), 3);
        assert_eq!(top[0].0, e(3));
        // the two light leaves tie; smaller id first
        assert_eq!(top[1].0, e(2));
        assert_eq!(top[2].0, e(4));
        assert!(top_related(&s, 0).is_empty());
        assert_eq!(related_tsv(&top[..1]).split('\t').next(), Some("1"));
    }

    #[test]
    fn ppr_rejects_bad_parameters() {
        let g = star(&[1.0]);
        assert!(personalized_pagerank(&g, 1.0, 1e-8, 100).is_err());
        assert!(personalized_pagerank(&g, 0.0, 1e-8, 100).is_err());
        assert!(matches!(
            personalized_pagerank(&g, 0.85, 1e-300, 3),
            Err(Error::NonConvergence { .. })
        ));
        assert!(CoocGraph::from_edges(e(1), vec![e(2)], &[(0, 0, 1.0)]).is_err());
    }
}
