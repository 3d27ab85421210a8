//! Agent-specific domain knowledge: concepts, areas, pairwise overlaps and
//! the lexicon mapping words to concept overlays.
//!
//! Attribute concepts and verb concepts live in disjoint name spaces. A
//! concept has an *area* (its activation capacity); two concepts of the same
//! kind may *overlap*, sharing part of that capacity. Words map to overlays,
//! i.e. simultaneous activations of several concepts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a concept inside one agent's knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConceptKind {
    Attribute,
    Verb,
}

impl fmt::Display for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConceptKind::Attribute => write!(f, "attribute"),
            ConceptKind::Verb => write!(f, "verb"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub name: String,
    pub kind: ConceptKind,
    pub area: f64,
}

/// Requested overlap amount for [`KnowledgeBase::define_overlap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OverlapAmount {
    /// `min(area(a), area(b))`: full containment of the smaller concept.
    Full,
    Amount(f64),
}

/// Weighted simultaneous activation of concepts of one kind.
///
/// Energies are kept in `(0, 1]`; zero entries are never stored. Iteration
/// order is the concept id order, which keeps every downstream computation
/// deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    kind: ConceptKind,
    energies: BTreeMap<ConceptId, f64>,
}

impl Overlay {
    pub fn new(kind: ConceptKind) -> Self {
        Overlay { kind, energies: BTreeMap::new() }
    }

    pub fn single(kind: ConceptKind, concept: ConceptId, energy: f64) -> Self {
        let mut o = Overlay::new(kind);
        o.activate_max(concept, energy);
        o
    }

    pub fn kind(&self) -> ConceptKind {
        self.kind
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energy(&self, c: ConceptId) -> f64 {
        self.energies.get(&c).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConceptId, f64)> + '_ {
        self.energies.iter().map(|(c, e)| (*c, *e))
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    /// Raise the energy of `concept` to at least `energy`, clamped to 1.
    ///
    /// Energies combine by max: re-asserting an attribute is idempotent and
    /// existing energies never decrease.
    pub fn activate_max(&mut self, concept: ConceptId, energy: f64) {
        let e = energy.clamp(0.0, 1.0);
        if e <= 0.0 {
            return;
        }
        let slot = self.energies.entry(concept).or_insert(0.0);
        if e > *slot {
            *slot = e;
        }
    }

    /// Max-combine every activation of `other` into `self`.
    pub fn merge_max(&mut self, other: &Overlay) {
        for (c, e) in other.iter() {
            self.activate_max(c, e);
        }
    }

    /// True when every energy of `self` is `<=` the matching energy of `other`.
    pub fn subsumed_by(&self, other: &Overlay) -> bool {
        self.iter().all(|(c, e)| other.energy(c) >= e - 1e-12)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KnowledgeError {
    #[error("duplicate {kind} concept name `{name}`")]
    DuplicateName { kind: ConceptKind, name: String },
    #[error("concept `{name}` must have a positive area, got {area}")]
    NonPositiveArea { name: String, area: f64 },
    #[error("overlap {amount} between `{a}` and `{b}` exceeds the smaller area {cap}")]
    OverlapExceedsArea { a: String, b: String, amount: f64, cap: f64 },
    #[error("kind mismatch: `{a}` is a {ka}, `{b}` is a {kb}")]
    KindMismatch { a: String, ka: ConceptKind, b: String, kb: ConceptKind },
    #[error("unknown {kind} word `{word}`")]
    UnknownWord { kind: ConceptKind, word: String },
    #[error("knowledge file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One agent's domain knowledge: concepts, the overlap table and the lexicon.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    concepts: Vec<Concept>,
    names: BTreeMap<(ConceptKind, String), ConceptId>,
    /// Symmetric overlap table keyed by the ordered id pair.
    overlaps: BTreeMap<(ConceptId, ConceptId), f64>,
    lexicon: BTreeMap<(ConceptKind, String), Overlay>,
    proper_nouns: BTreeSet<String>,
    relation_verbs: BTreeSet<String>,
    /// Area given to concepts created for proper nouns.
    pub proper_noun_area: f64,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        KnowledgeBase { proper_noun_area: 0.1, ..Default::default() }
    }

    pub fn concept(&self, id: ConceptId) -> &Concept {
        &self.concepts[id.0 as usize]
    }

    pub fn concept_by_name(&self, kind: ConceptKind, name: &str) -> Option<ConceptId> {
        self.names.get(&(kind, name.to_string())).copied()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.iter()
    }

    pub fn is_proper_noun(&self, word: &str) -> bool {
        self.proper_nouns.contains(word)
    }

    pub fn is_relation_verb(&self, word: &str) -> bool {
        self.relation_verbs.contains(word)
    }

    pub fn declare_relation_verb(&mut self, word: &str) {
        self.relation_verbs.insert(word.to_string());
    }

    pub fn define_concept(
        &mut self,
        name: &str,
        kind: ConceptKind,
        area: f64,
    ) -> Result<ConceptId, KnowledgeError> {
        if area <= 0.0 {
            return Err(KnowledgeError::NonPositiveArea { name: name.to_string(), area });
        }
        if self.names.contains_key(&(kind, name.to_string())) {
            return Err(KnowledgeError::DuplicateName { kind, name: name.to_string() });
        }
        let id = ConceptId(self.concepts.len() as u32);
        self.concepts.push(Concept { id, name: name.to_string(), kind, area });
        self.names.insert((kind, name.to_string()), id);
        // overlap(c, c) = area(c)
        self.overlaps.insert((id, id), area);
        Ok(id)
    }

    /// Look up a concept by name or create it with the given area.
    pub fn concept_or_define(
        &mut self,
        name: &str,
        kind: ConceptKind,
        area: f64,
    ) -> Result<ConceptId, KnowledgeError> {
        match self.concept_by_name(kind, name) {
            Some(id) => Ok(id),
            None => self.define_concept(name, kind, area),
        }
    }

    pub fn area(&self, c: ConceptId) -> f64 {
        self.concept(c).area
    }

    pub fn overlap(&self, a: ConceptId, b: ConceptId) -> f64 {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.overlaps.get(&key).copied().unwrap_or(0.0)
    }

    /// Every explicitly defined overlap pair, self-overlaps (areas) included.
    pub fn overlaps(&self) -> impl Iterator<Item = (ConceptId, ConceptId, f64)> + '_ {
        self.overlaps.iter().map(|((a, b), v)| (*a, *b, *v))
    }

    pub fn define_overlap(
        &mut self,
        a: ConceptId,
        b: ConceptId,
        amount: OverlapAmount,
    ) -> Result<(), KnowledgeError> {
        let (ca, cb) = (self.concept(a).clone(), self.concept(b).clone());
        if ca.kind != cb.kind {
            return Err(KnowledgeError::KindMismatch {
                a: ca.name,
                ka: ca.kind,
                b: cb.name,
                kb: cb.kind,
            });
        }
        let cap = ca.area.min(cb.area);
        let amount = match amount {
            OverlapAmount::Full => cap,
            OverlapAmount::Amount(x) => x,
        };
        if amount > cap + 1e-12 {
            return Err(KnowledgeError::OverlapExceedsArea { a: ca.name, b: cb.name, amount, cap });
        }
        let key = if a <= b { (a, b) } else { (b, a) };
        self.overlaps.insert(key, amount.max(0.0));
        Ok(())
    }

    /// Register `word` in the lexicon with the given overlay.
    pub fn define_word(&mut self, word: &str, overlay: Overlay) {
        self.lexicon.insert((overlay.kind(), word.to_string()), overlay);
    }

    pub fn word_known(&self, word: &str, kind: ConceptKind) -> bool {
        self.lexicon.contains_key(&(kind, word.to_string()))
    }

    /// Map a word to its stored overlay. Never mutates the stored entry.
    pub fn word_to_overlay(
        &self,
        word: &str,
        kind: ConceptKind,
    ) -> Result<Overlay, KnowledgeError> {
        self.lexicon
            .get(&(kind, word.to_string()))
            .cloned()
            .ok_or_else(|| KnowledgeError::UnknownWord { kind, word: word.to_string() })
    }

    /// Lenient lookup: unknown words get a fresh single-concept overlay and a
    /// lexicon entry, mirroring how an agent picks up a new verb mid-story.
    pub fn word_to_overlay_lenient(
        &mut self,
        word: &str,
        kind: ConceptKind,
    ) -> Result<Overlay, KnowledgeError> {
        if let Ok(o) = self.word_to_overlay(word, kind) {
            return Ok(o);
        }
        let id = self.concept_or_define(word, kind, 1.0)?;
        let overlay = Overlay::single(kind, id, 1.0);
        self.define_word(word, overlay.clone());
        Ok(overlay)
    }

    /// Intern a proper noun: the first call creates a small-area concept and
    /// a lexicon entry, later calls return the same overlay. Sharing a proper
    /// noun implies no identity between instances.
    pub fn intern_proper_noun(&mut self, name: &str) -> Result<Overlay, KnowledgeError> {
        if self.proper_nouns.contains(name) {
            return self.word_to_overlay(name, ConceptKind::Attribute);
        }
        let area = self.proper_noun_area;
        let id = self.concept_or_define(name, ConceptKind::Attribute, area)?;
        let overlay = Overlay::single(ConceptKind::Attribute, id, 1.0);
        self.define_word(name, overlay.clone());
        self.proper_nouns.insert(name.to_string());
        Ok(overlay)
    }

    /// How strongly an overlay exhibits concept `c`.
    ///
    /// Max over activated concepts `a` of `energy(a) * overlap(a, c) / area(a)`,
    /// clamped to `[0, 1]`. Normalizing by the source area makes full
    /// containment score exactly 1.
    pub fn query_attribute(&self, attrs: &Overlay, c: ConceptId) -> f64 {
        let mut best: f64 = 0.0;
        for (a, e) in attrs.iter() {
            let area = self.area(a);
            if area <= 0.0 {
                continue;
            }
            let v = e * self.overlap(a, c) / area;
            if v > best {
                best = v;
            }
        }
        best.clamp(0.0, 1.0)
    }

    /// Bilinear form `sum e_x(a) * e_y(b) * overlap(a, b)` over all pairs.
    fn bilinear(&self, x: &Overlay, y: &Overlay) -> f64 {
        let mut acc = 0.0;
        for (a, ea) in x.iter() {
            for (b, eb) in y.iter() {
                acc += ea * eb * self.overlap(a, b);
            }
        }
        acc
    }

    /// Symmetric similarity of two overlays: the cosine of the overlap
    /// bilinear form. 1 for identical overlays, 0 for disjoint ones.
    pub fn overlay_match(&self, x: &Overlay, y: &Overlay) -> Result<f64, KnowledgeError> {
        if x.kind() != y.kind() {
            return Err(KnowledgeError::KindMismatch {
                a: "<overlay>".to_string(),
                ka: x.kind(),
                b: "<overlay>".to_string(),
                kb: y.kind(),
            });
        }
        let xx = self.bilinear(x, x);
        let yy = self.bilinear(y, y);
        if xx <= 0.0 || yy <= 0.0 {
            return Ok(0.0);
        }
        Ok((self.bilinear(x, y) / (xx.sqrt() * yy.sqrt())).clamp(0.0, 1.0))
    }

    /// Parse the line-oriented knowledge file format.
    ///
    /// ```text
    /// # comment
    /// concept girl = human:1.0 female:1.0 young:0.5 small:0.5
    /// concept man
    /// verb hits
    /// verb swallows = swallows:1.0 eats:0.8
    /// relation loves
    /// overlap man human full
    /// overlap fearless courageous 0.5
    /// voverlap swallows eats full
    /// ```
    ///
    /// `concept`/`verb` lines declare a word; right-hand-side concept names
    /// are created on first use with area 1.0. A bare declaration maps the
    /// word to a same-named concept at energy 1.0. `overlap` relates
    /// attribute concepts, `voverlap` verb concepts. `relation` declares a
    /// verb word whose sentences record relation edges instead of actions.
    pub fn load_str(&mut self, text: &str) -> Result<(), KnowledgeError> {
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let mut it = line.split_whitespace();
            let Some(head) = it.next() else { continue };
            let rest: Vec<&str> = it.collect();
            match head {
                "concept" | "verb" | "relation" => {
                    let kind = if head == "concept" {
                        ConceptKind::Attribute
                    } else {
                        ConceptKind::Verb
                    };
                    let word = rest.first().ok_or_else(|| KnowledgeError::Parse {
                        line: line_no,
                        msg: format!("`{head}` needs a word"),
                    })?;
                    let overlay = if rest.len() > 2 && rest[1] == "=" {
                        let mut o = Overlay::new(kind);
                        for spec in &rest[2..] {
                            let (name, energy) = match spec.split_once(':') {
                                Some((n, e)) => {
                                    let e: f64 = e.parse().map_err(|_| KnowledgeError::Parse {
                                        line: line_no,
                                        msg: format!("bad energy in `{spec}`"),
                                    })?;
                                    (n, e)
                                }
                                None => (*spec, 1.0),
                            };
                            let id = self.concept_or_define(name, kind, 1.0)?;
                            o.activate_max(id, energy);
                        }
                        o
                    } else if rest.len() == 1 {
                        let id = self.concept_or_define(word, kind, 1.0)?;
                        Overlay::single(kind, id, 1.0)
                    } else {
                        return Err(KnowledgeError::Parse {
                            line: line_no,
                            msg: format!("malformed `{head}` line"),
                        });
                    };
                    self.define_word(word, overlay);
                    if head == "relation" {
                        self.relation_verbs.insert(word.to_string());
                    }
                }
                "overlap" | "voverlap" => {
                    let kind = if head == "overlap" {
                        ConceptKind::Attribute
                    } else {
                        ConceptKind::Verb
                    };
                    if rest.len() != 3 {
                        return Err(KnowledgeError::Parse {
                            line: line_no,
                            msg: format!("`{head}` needs: a b amount|full"),
                        });
                    }
                    let a = self.concept_or_define(rest[0], kind, 1.0)?;
                    let b = self.concept_or_define(rest[1], kind, 1.0)?;
                    let amount = if rest[2].eq_ignore_ascii_case("full") {
                        OverlapAmount::Full
                    } else {
                        OverlapAmount::Amount(rest[2].parse().map_err(|_| {
                            KnowledgeError::Parse {
                                line: line_no,
                                msg: format!("bad overlap amount `{}`", rest[2]),
                            }
                        })?)
                    };
                    self.define_overlap(a, b, amount)?;
                }
                other => {
                    return Err(KnowledgeError::Parse {
                        line: line_no,
                        msg: format!("unknown directive `{other}`"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &std::path::Path) -> Result<(), KnowledgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::Parse {
            line: 0,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        self.load_str(&text)
    }
}
