//! Entity catalog: entity texts, the inlink graph, mention priors and the
//! inlink-overlap relatedness measure.
//!
//! A catalog lives in a directory of three UTF-8 files plus an optional
//! header:
//!
//! - `entities.jsonl`: one JSON object per line with `id`, `title`,
//!   `first_paragraph`, `full_text`, `anchor_text`, `anchor_context`.
//! - `links.tsv`: `src_id<TAB>dst_id`, meaning `src` links to `dst`.
//! - `mentions.tsv`: `surface<TAB>entity_id<TAB>prior_count`.
//! - `kb.meta` (optional): `total_pages=<n>` overriding the page count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{normalize_surface, TokenBag};

pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const LINKS_FILE: &str = "links.tsv";
pub const MENTIONS_FILE: &str = "mentions.tsv";
pub const META_FILE: &str = "kb.meta";

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for EntityId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim().parse().map(EntityId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    pub title: String,
    pub first_paragraph: TokenBag,
    pub full_text: TokenBag,
    pub anchor_text: TokenBag,
    /// Anchor text plus five surrounding tokens per incoming link.
    pub anchor_context: TokenBag,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntityRecord {
    id: EntityId,
    #[serde(default)]
    title: String,
    #[serde(default)]
    first_paragraph: String,
    #[serde(default)]
    full_text: String,
    #[serde(default)]
    anchor_text: String,
    #[serde(default)]
    anchor_context: String,
}

impl From<EntityRecord> for Entity {
    fn from(r: EntityRecord) -> Self {
        Entity {
            id: r.id,
            title: r.title,
            first_paragraph: TokenBag::from_text(&r.first_paragraph),
            full_text: TokenBag::from_text(&r.full_text),
            anchor_text: TokenBag::from_text(&r.anchor_text),
            anchor_context: TokenBag::from_text(&r.anchor_context),
        }
    }
}

impl Entity {
    /// Convenience constructor from raw strings.
    pub fn from_texts(
        id: EntityId,
        title: &str,
        first_paragraph: &str,
        full_text: &str,
        anchor_text: &str,
        anchor_context: &str,
    ) -> Self {
        EntityRecord {
            id,
            title: title.to_string(),
            first_paragraph: first_paragraph.to_string(),
            full_text: full_text.to_string(),
            anchor_text: anchor_text.to_string(),
            anchor_context: anchor_context.to_string(),
        }
        .into()
    }

    fn to_record(&self) -> EntityRecord {
        EntityRecord {
            id: self.id,
            title: self.title.clone(),
            first_paragraph: self.first_paragraph.to_text(),
            full_text: self.full_text.to_text(),
            anchor_text: self.anchor_text.to_text(),
            anchor_context: self.anchor_context.to_text(),
        }
    }
}

/// Who links to whom, plus the total page count `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InlinkIndex {
    inlinks: BTreeMap<EntityId, BTreeSet<EntityId>>,
    total_pages: u64,
}

static NO_INLINKS: BTreeSet<EntityId> = BTreeSet::new();

impl InlinkIndex {
    /// Build from `(src, dst)` link pairs.
    pub fn from_links<I>(links: I, total_pages: u64) -> Result<Self>
    where
        I: IntoIterator<Item = (EntityId, EntityId)>,
    {
        if total_pages == 0 {
            return Err(Error::invalid("total_pages must be positive"));
        }
        let mut inlinks: BTreeMap<EntityId, BTreeSet<EntityId>> = BTreeMap::new();
        for (src, dst) in links {
            inlinks.entry(dst).or_default().insert(src);
        }
        let largest = inlinks.values().map(BTreeSet::len).max().unwrap_or(0);
        if largest as u64 > total_pages {
            return Err(Error::invalid(format!(
                "total_pages {total_pages} is smaller than an inlink set of size {largest}"
            )));
        }
        Ok(InlinkIndex {
            inlinks,
            total_pages,
        })
    }

    /// g(e): the pages linking to `e`.
    pub fn inlinks(&self, e: EntityId) -> &BTreeSet<EntityId> {
        self.inlinks.get(&e).unwrap_or(&NO_INLINKS)
    }

    pub fn total_pages(&self) -> u64 {
        self.total_pages
    }

    pub fn links(&self) -> impl Iterator<Item = (EntityId, EntityId)> + '_ {
        self.inlinks
            .iter()
            .flat_map(|(&dst, srcs)| srcs.iter().map(move |&src| (src, dst)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub entity: EntityId,
    pub prior_count: u64,
}

/// Surface form -> candidate entities with link counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionTable {
    entries: BTreeMap<String, Vec<Candidate>>,
    longest: usize,
}

impl MentionTable {
    /// Build from `(surface, entity, count)` rows. Surfaces are normalized;
    /// repeated (surface, entity) rows are summed.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, EntityId, u64)>,
        S: AsRef<str>,
    {
        let mut grouped: BTreeMap<String, BTreeMap<EntityId, u64>> = BTreeMap::new();
        for (surface, entity, count) in rows {
            let key = normalize_surface(surface.as_ref());
            if key.is_empty() {
                return Err(Error::invalid(format!(
                    "surface {:?} has no tokens",
                    surface.as_ref()
                )));
            }
            *grouped.entry(key).or_default().entry(entity).or_insert(0) += count;
        }
        let mut entries = BTreeMap::new();
        let mut longest = 0;
        for (surface, cands) in grouped {
            if cands.values().all(|&c| c == 0) {
                return Err(Error::invalid(format!(
                    "all prior counts are zero for surface {surface:?}"
                )));
            }
            longest = longest.max(surface.split(' ').count());
            let cands = cands
                .into_iter()
                .map(|(entity, prior_count)| Candidate {
                    entity,
                    prior_count,
                })
                .collect();
            entries.insert(surface, cands);
        }
        Ok(MentionTable { entries, longest })
    }

    /// Candidates for an already normalized surface, sorted by id.
    pub fn get(&self, surface: &str) -> Option<&[Candidate]> {
        self.entries.get(surface).map(Vec::as_slice)
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.entries.contains_key(surface)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Candidate])> {
        self.entries.iter().map(|(s, c)| (s.as_str(), c.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Token length of the longest surface.
    pub fn longest_surface(&self) -> usize {
        self.longest
    }

    /// Surfaces naming `e`, with their counts.
    pub fn surfaces_of(&self, e: EntityId) -> Vec<(&str, u64)> {
        self.entries
            .iter()
            .filter_map(|(s, cands)| {
                cands
                    .iter()
                    .find(|c| c.entity == e)
                    .map(|c| (s.as_str(), c.prior_count))
            })
            .collect()
    }

    /// Every entity that is a candidate of some surface, sorted.
    pub fn candidate_entities(&self) -> Vec<EntityId> {
        let set: BTreeSet<EntityId> = self
            .entries
            .values()
            .flat_map(|c| c.iter().map(|c| c.entity))
            .collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    entities: BTreeMap<EntityId, Entity>,
    inlinks: InlinkIndex,
    mentions: MentionTable,
}

impl KnowledgeBase {
    /// Assemble and cross-check a knowledge base. `total_pages` defaults to
    /// the number of entities.
    pub fn new(
        entities: Vec<Entity>,
        links: Vec<(EntityId, EntityId)>,
        mentions: MentionTable,
        total_pages: Option<u64>,
    ) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for e in entities {
            let id = e.id;
            if by_id.insert(id, e).is_some() {
                return Err(Error::invalid(format!("duplicate entity id {id}")));
            }
        }
        for &(src, dst) in &links {
            for id in [src, dst] {
                if !by_id.contains_key(&id) {
                    return Err(Error::DanglingReference {
                        context: format!("link {src} -> {dst}"),
                        id,
                    });
                }
            }
        }
        for (surface, cands) in mentions.iter() {
            for c in cands {
                if !by_id.contains_key(&c.entity) {
                    return Err(Error::DanglingReference {
                        context: format!("mention {surface:?}"),
                        id: c.entity,
                    });
                }
            }
        }
        let c = total_pages.unwrap_or(by_id.len() as u64).max(1);
        let inlinks = InlinkIndex::from_links(links, c)?;
        Ok(KnowledgeBase {
            entities: by_id,
            inlinks,
            mentions,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();

        let path = dir.join(ENTITIES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entities = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: EntityRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(&path, i + 1, e.to_string()))?;
            if !seen.insert(rec.id) {
                return Err(Error::parse(
                    &path,
                    i + 1,
                    format!("duplicate entity id {}", rec.id),
                ));
            }
            entities.push(Entity::from(rec));
        }

        let path = dir.join(LINKS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut links = Vec::new();
        for (i, line) in data_lines(&text) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(&path, i, "expected src_id<TAB>dst_id"));
            }
            let src = parse_id(fields[0]).map_err(|m| Error::parse(&path, i, m))?;
            let dst = parse_id(fields[1]).map_err(|m| Error::parse(&path, i, m))?;
            links.push((src, dst));
        }

        let path = dir.join(MENTIONS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut rows = Vec::new();
        for (i, line) in data_lines(&text) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    &path,
                    i,
                    "expected surface<TAB>entity_id<TAB>prior_count",
                ));
            }
            if normalize_surface(fields[0]).is_empty() {
                return Err(Error::parse(&path, i, "surface has no tokens"));
            }
            let id = parse_id(fields[1]).map_err(|m| Error::parse(&path, i, m))?;
            let count: u64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(&path, i, format!("bad prior count {:?}", fields[2])))?;
            rows.push((fields[0].to_string(), id, count));
        }
        let mentions = MentionTable::from_rows(rows)?;

        let path = dir.join(META_FILE);
        let total_pages = if path.exists() {
            read_meta(&path)?
        } else {
            None
        };

        KnowledgeBase::new(entities, links, mentions, total_pages)
    }

    /// Write the catalog files into `dir`, creating it if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut out = String::new();
        for e in self.entities.values() {
            out.push_str(&serde_json::to_string(&e.to_record()).expect("entity record serializes"));
            out.push('\n');
        }
        write_file(&dir.join(ENTITIES_FILE), &out)?;

        let mut links: Vec<_> = self.inlinks.links().collect();
        links.sort();
        let mut out = String::new();
        for (src, dst) in links {
            out.push_str(&format!("{src}\t{dst}\n"));
        }
        write_file(&dir.join(LINKS_FILE), &out)?;

        let mut out = String::new();
        for (surface, cands) in self.mentions.iter() {
            for c in cands {
                out.push_str(&format!("{surface}\t{}\t{}\n", c.entity, c.prior_count));
            }
        }
        write_file(&dir.join(MENTIONS_FILE), &out)?;

        let meta = dir.join(META_FILE);
        if self.inlinks.total_pages() != self.entities.len() as u64 {
            write_file(&meta, &format!("total_pages={}\n", self.inlinks.total_pages()))?;
        } else if meta.exists() {
            fs::remove_file(&meta).map_err(|e| Error::io(&meta, e))?;
        }
        Ok(())
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn require(&self, id: EntityId) -> Result<&Entity> {
        self.entity(id).ok_or(Error::UnknownEntity(id))
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn inlinks(&self) -> &InlinkIndex {
        &self.inlinks
    }

    pub fn mentions(&self) -> &MentionTable {
        &self.mentions
    }

    pub fn total_pages(&self) -> u64 {
        self.inlinks.total_pages()
    }

    /// Inlink-overlap relatedness:
    ///
    /// ```text
    /// r(a, b) = [ln|g(a) ∩ g(b)| - ln max(|g(a)|, |g(b)|)]
    ///         / [ln c - ln min(|g(a)|, |g(b)|)]
    /// ```
    ///
    /// `Ok(None)` marks the undefined cases: an empty inlink set, an empty
    /// intersection, or a zero denominator. Defined values are `<= 0`.
    pub fn relatedness(&self, a: EntityId, b: EntityId) -> Result<Option<f64>> {
        self.require(a)?;
        self.require(b)?;
        let ga = self.inlinks.inlinks(a);
        let gb = self.inlinks.inlinks(b);
        if ga.is_empty() || gb.is_empty() {
            return Ok(None);
        }
        let common = ga.intersection(gb).count();
        if common == 0 {
            return Ok(None);
        }
        let (lo, hi) = if ga.len() <= gb.len() {
            (ga.len(), gb.len())
        } else {
            (gb.len(), ga.len())
        };
        let c = self.inlinks.total_pages() as f64;
        let denom = c.ln() - (lo as f64).ln();
        if denom == 0.0 {
            return Ok(None);
        }
        Ok(Some(((common as f64).ln() - (hi as f64).ln()) / denom))
    }

    /// Relatedness shifted into [0, 1]: `clamp(1 + r, 0, 1)`, with the
    /// undefined cases mapped to 0.
    pub fn coherence(&self, a: EntityId, b: EntityId) -> Result<f64> {
        match self.relatedness(a, b)? {
            Some(r) => Ok((1.0 + r).clamp(0.0, 1.0)),
            None => {
                // g(a) = g(b) = every page: numerator and denominator are both 0.
                let ga = self.inlinks.inlinks(a);
                if !ga.is_empty() && ga == self.inlinks.inlinks(b) {
                    Ok(1.0)
                } else {
                    Ok(0.0)
                }
            }
        }
    }

    /// Fraction of links with this surface that point at `e`.
    pub fn mention_prior(&self, surface: &str, e: EntityId) -> Result<f64> {
        let key = normalize_surface(surface);
        let cands = self
            .mentions
            .get(&key)
            .ok_or_else(|| Error::UnknownSurface(surface.to_string()))?;
        let total: u64 = cands.iter().map(|c| c.prior_count).sum();
        let count = cands
            .iter()
            .find(|c| c.entity == e)
            .map_or(0, |c| c.prior_count);
        Ok(count as f64 / total as f64)
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_id(s: &str) -> std::result::Result<EntityId, String> {
    s.parse().map_err(|_| format!("bad entity id {s:?}"))
}

fn read_meta(path: &Path) -> Result<Option<u64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut total = None;
    for (i, line) in data_lines(&text) {
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path, i, "expected key=value"));
        };
        match key.trim() {
            "total_pages" => {
                let v: u64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, i, format!("bad total_pages {value:?}")))?;
                if v == 0 {
                    return Err(Error::parse(path, i, "total_pages must be positive"));
                }
                total = Some(v);
            }
            other => return Err(Error::parse(path, i, format!("unknown key {other:?}"))),
        }
    }
    Ok(total)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u32) -> EntityId {
        EntityId(n)
    }

    fn bare(n: u32) -> Entity {
        Entity::from_texts(id(n), &format!("e{n}"), "", "", "", "")
    }

    /// Entities 1..=20 plus `a` (1000) with inlinks from `ga` and `b` (1001)
    /// with inlinks from `gb`; `pages` is the total page count.
    fn kb_with_inlinks(ga: &[u32], gb: &[u32], pages: u64) -> KnowledgeBase {
        let mut entities: Vec<Entity> = (1..=20).map(bare).collect();
        entities.push(bare(1000));
        entities.push(bare(1001));
        let mut links = Vec::new();
        links.extend(ga.iter().map(|&s| (id(s), id(1000))));
        links.extend(gb.iter().map(|&s| (id(s), id(1001))));
        KnowledgeBase::new(entities, links, MentionTable::default(), Some(pages)).unwrap()
    }

    #[test]
    fn relatedness_equal_sets_is_zero() {
        let g: Vec<u32> = (1..=10).collect();
        let kb = kb_with_inlinks(&g, &g, 1000);
        assert_eq!(kb.relatedness(id(1000), id(1001)).unwrap(), Some(0.0));
        assert_eq!(kb.coherence(id(1000), id(1001)).unwrap(), 1.0);
    }

    #[test]
    fn relatedness_quarter_case() {
        // |g(a)|=4, |g(b)|=8, overlap 2, c=1024: -ln 4 / ln 256 = -0.25
        let kb = kb_with_inlinks(&[1, 2, 3, 4], &[3, 4, 5, 6, 7, 8, 9, 10], 1024);
        let r = kb.relatedness(id(1000), id(1001)).unwrap().unwrap();
        assert!((r + 0.25).abs() < 1e-12, "{r}");
        let r2 = kb.relatedness(id(1001), id(1000)).unwrap().unwrap();
        assert_eq!(r.to_bits(), r2.to_bits());
        let c = kb.coherence(id(1000), id(1001)).unwrap();
        assert!((c - 0.75).abs() < 1e-12);
    }

    #[test]
    fn relatedness_sentinels() {
        let kb = kb_with_inlinks(&[1, 2], &[3, 4], 100);
        assert_eq!(kb.relatedness(id(1000), id(1001)).unwrap(), None);
        assert_eq!(kb.coherence(id(1000), id(1001)).unwrap(), 0.0);

        let kb = kb_with_inlinks(&[], &[3, 4], 100);
        assert_eq!(kb.relatedness(id(1000), id(1001)).unwrap(), None);
        assert_eq!(kb.coherence(id(1000), id(1000)).unwrap(), 0.0);

        // c equals the smaller inlink set: zero denominator.
        let kb = kb_with_inlinks(&[1, 2], &[1, 2], 2);
        assert_eq!(kb.relatedness(id(1000), id(1001)).unwrap(), None);
        assert_eq!(kb.coherence(id(1000), id(1000)).unwrap(), 1.0);

        assert!(matches!(
            kb.relatedness(id(1000), id(77)),
            Err(Error::UnknownEntity(EntityId(77)))
        ));
    }

    #[test]
    fn self_relatedness_is_zero() {
        let kb = kb_with_inlinks(&[1, 2, 3], &[1], 50);
        assert_eq!(kb.relatedness(id(1000), id(1000)).unwrap(), Some(0.0));
        assert_eq!(kb.coherence(id(1000), id(1000)).unwrap(), 1.0);
    }

    #[test]
    fn mention_prior_normalizes() {
        let mentions = MentionTable::from_rows([
            ("Amazon", id(1), 6),
            ("amazon", id(2), 4),
            ("Linux", id(3), 1),
        ])
        .unwrap();
        let kb = KnowledgeBase::new(vec![bare(1), bare(2), bare(3)], vec![], mentions, None)
            .unwrap();
        assert!((kb.mention_prior("amazon", id(1)).unwrap() - 0.6).abs() < 1e-15);
        assert!((kb.mention_prior("AMAZON", id(2)).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(kb.mention_prior("linux", id(3)).unwrap(), 1.0);
        assert_eq!(kb.mention_prior("linux", id(1)).unwrap(), 0.0);
        assert!(matches!(
            kb.mention_prior("nile", id(1)),
            Err(Error::UnknownSurface(_))
        ));
    }

    #[test]
    fn rejects_dangling_and_all_zero() {
        let mentions = MentionTable::from_rows([("x", id(99), 1)]).unwrap();
        assert!(matches!(
            KnowledgeBase::new(vec![bare(1)], vec![], mentions, None),
            Err(Error::DanglingReference { id: EntityId(99), .. })
        ));
        assert!(MentionTable::from_rows([("x", id(1), 0), ("x", id(2), 0)]).is_err());
        assert!(matches!(
            KnowledgeBase::new(vec![bare(1)], vec![(id(1), id(5))], MentionTable::default(), None),
            Err(Error::DanglingReference { .. })
        ));
    }

    #[test]
    fn total_pages_must_cover_inlinks() {
        let links = vec![(id(1), id(3)), (id(2), id(3))];
        let r = KnowledgeBase::new(
            vec![bare(1), bare(2), bare(3)],
            links,
            MentionTable::default(),
            Some(1),
        );
        assert!(r.is_err());
    }
}
