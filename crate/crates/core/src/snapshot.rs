//! Name-based JSON snapshots of an agent's long-term state.
//!
//! A snapshot carries the concept definitions, the overlap table, the
//! episodic memory and the identity links between remembered instances -
//! everything referenced by concept *name* rather than by id, so a snapshot
//! written by one agent can be loaded into another whose id counters differ.
//! Loaded components receive fresh ids and enter memory directly: they were
//! demoted elsewhere and can never return to the focus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Agent;
use crate::identity::{IdentityKind, Provenance};
use crate::ids::{InstanceId, SceneId};
use crate::knowledge::{ConceptKind, KnowledgeBase, KnowledgeError, OverlapAmount, Overlay};
use crate::shadows::{MemInstance, MemVi};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("snapshot references unknown {what} `{value}`")]
    BadValue { what: &'static str, value: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapOverlay {
    kind: String,
    energies: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapConcept {
    name: String,
    kind: String,
    area: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapOverlap {
    a: String,
    b: String,
    kind: String,
    amount: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapInstance {
    attributes: SnapOverlay,
    scene_names: Vec<String>,
    label: String,
    salience: f64,
    created: f64,
    demoted_at: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapVi {
    verb_words: Vec<String>,
    verb: SnapOverlay,
    /// Index into the snapshot's instance list.
    subject: Option<usize>,
    object: Option<usize>,
    object_overlay: Option<SnapOverlay>,
    kind: String,
    /// Scenes are anonymous groups here; grouping is all the memory needs.
    scene_group: usize,
    scene_name: Option<String>,
    scene_seq: u64,
    salience: f64,
    demoted_at: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapLink {
    kind: String,
    a: usize,
    b: usize,
    provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    concepts: Vec<SnapConcept>,
    overlaps: Vec<SnapOverlap>,
    instances: Vec<SnapInstance>,
    vis: Vec<SnapVi>,
    links: Vec<SnapLink>,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub instances: usize,
    pub vis: usize,
    pub links: usize,
}

fn kind_name(kind: ConceptKind) -> &'static str {
    match kind {
        ConceptKind::Attribute => "attribute",
        ConceptKind::Verb => "verb",
    }
}

fn parse_concept_kind(s: &str) -> Result<ConceptKind, SnapshotError> {
    match s {
        "attribute" => Ok(ConceptKind::Attribute),
        "verb" => Ok(ConceptKind::Verb),
        other => Err(SnapshotError::BadValue { what: "concept kind", value: other.to_string() }),
    }
}

fn parse_vi_kind(s: &str) -> Result<crate::engine::ViKind, SnapshotError> {
    use crate::engine::ViKind::*;
    match s {
        "action" => Ok(Action),
        "attribute-set" => Ok(AttributeSet),
        "relation-set" => Ok(RelationSet),
        "quote" => Ok(Quote),
        "question" => Ok(Question),
        other => Err(SnapshotError::BadValue { what: "vi kind", value: other.to_string() }),
    }
}

fn parse_identity_kind(s: &str) -> Result<IdentityKind, SnapshotError> {
    match s {
        "somatic" => Ok(IdentityKind::Somatic),
        "fictional" => Ok(IdentityKind::Fictional),
        "view" => Ok(IdentityKind::View),
        other => Err(SnapshotError::BadValue { what: "identity kind", value: other.to_string() }),
    }
}

fn parse_provenance(s: &str) -> Result<Provenance, SnapshotError> {
    match s {
        "explicit-sentence" => Ok(Provenance::ExplicitSentence),
        "changes-side-effect" => Ok(Provenance::ChangesSideEffect),
        "inferred" => Ok(Provenance::Inferred),
        other => Err(SnapshotError::BadValue { what: "provenance", value: other.to_string() }),
    }
}

fn overlay_out(kb: &KnowledgeBase, o: &Overlay) -> SnapOverlay {
    SnapOverlay {
        kind: kind_name(o.kind()).to_string(),
        energies: o.iter().map(|(c, e)| (kb.concept(c).name.clone(), e)).collect(),
    }
}

fn overlay_in(kb: &mut KnowledgeBase, s: &SnapOverlay) -> Result<Overlay, SnapshotError> {
    let kind = parse_concept_kind(&s.kind)?;
    let mut o = Overlay::new(kind);
    for (name, e) in &s.energies {
        let id = kb.concept_or_define(name, kind, 1.0)?;
        o.activate_max(id, *e);
    }
    Ok(o)
}

/// Capture the agent's concepts, overlaps, memory and memory-side identity
/// links.
pub fn save(agent: &Agent) -> Snapshot {
    let kb = &agent.kb;
    let concepts = kb
        .concepts()
        .map(|c| SnapConcept {
            name: c.name.clone(),
            kind: kind_name(c.kind).to_string(),
            area: c.area,
        })
        .collect();
    let overlaps = kb
        .overlaps()
        .filter(|(a, b, _)| a != b)
        .map(|(a, b, amount)| SnapOverlap {
            a: kb.concept(a).name.clone(),
            b: kb.concept(b).name.clone(),
            kind: kind_name(kb.concept(a).kind).to_string(),
            amount,
        })
        .collect();

    let mut index: BTreeMap<InstanceId, usize> = BTreeMap::new();
    let mut instances = Vec::new();
    for m in agent.memory().instances() {
        index.insert(m.id, instances.len());
        instances.push(SnapInstance {
            attributes: overlay_out(kb, &m.attributes),
            scene_names: m.scene_names.iter().cloned().collect(),
            label: m.label.clone(),
            salience: m.salience,
            created: m.created,
            demoted_at: m.demoted_at,
        });
    }

    let mut groups: BTreeMap<SceneId, usize> = BTreeMap::new();
    let mut vis = Vec::new();
    for v in agent.memory().vis() {
        let next_group = groups.len();
        let group = *groups.entry(v.scene).or_insert(next_group);
        vis.push(SnapVi {
            verb_words: v.verb_words.clone(),
            verb: overlay_out(kb, &v.verb),
            subject: v.subject.and_then(|i| index.get(&i).copied()),
            object: v.object.and_then(|i| index.get(&i).copied()),
            object_overlay: v.object_overlay.as_ref().map(|o| overlay_out(kb, o)),
            kind: v.kind.to_string(),
            scene_group: group,
            scene_name: v.scene_name.clone(),
            scene_seq: v.scene_seq,
            salience: v.salience,
            demoted_at: v.demoted_at,
        });
    }

    let links = agent
        .identity
        .links()
        .iter()
        .filter_map(|l| {
            Some(SnapLink {
                kind: l.kind.to_string(),
                a: *index.get(&l.a)?,
                b: *index.get(&l.b)?,
                provenance: l.provenance.to_string(),
            })
        })
        .collect();

    Snapshot { concepts, overlaps, instances, vis, links }
}

pub fn save_json(agent: &Agent) -> Result<String, SnapshotError> {
    Ok(serde_json::to_string_pretty(&save(agent))?)
}

/// Merge a snapshot into the agent: concepts and overlaps are defined by
/// name, remembered components get fresh ids straight into memory, and
/// identity links between them are replayed. Duplicate identity links are
/// skipped silently.
pub fn load(agent: &mut Agent, snap: &Snapshot) -> Result<LoadReport, SnapshotError> {
    let mut report = LoadReport::default();
    for c in &snap.concepts {
        let kind = parse_concept_kind(&c.kind)?;
        agent.kb.concept_or_define(&c.name, kind, c.area)?;
    }
    for o in &snap.overlaps {
        let kind = parse_concept_kind(&o.kind)?;
        let a = agent.kb.concept_or_define(&o.a, kind, 1.0)?;
        let b = agent.kb.concept_or_define(&o.b, kind, 1.0)?;
        agent.kb.define_overlap(a, b, OverlapAmount::Amount(o.amount))?;
    }

    let mut ids: Vec<InstanceId> = Vec::with_capacity(snap.instances.len());
    for s in &snap.instances {
        let id = agent.alloc_instance_id();
        agent.mark_demoted(id.into());
        let attributes = overlay_in(&mut agent.kb, &s.attributes)?;
        agent.memory_mut().insert_instance(MemInstance {
            id,
            attributes,
            scene_names: s.scene_names.iter().cloned().collect(),
            label: s.label.clone(),
            salience: s.salience,
            created: s.created,
            demoted_at: s.demoted_at,
        });
        ids.push(id);
        report.instances += 1;
    }

    let mut scene_ids: BTreeMap<usize, SceneId> = BTreeMap::new();
    for v in &snap.vis {
        let id = agent.alloc_vi_id();
        agent.mark_demoted(id.into());
        let scene = *scene_ids.entry(v.scene_group).or_insert_with(|| agent.alloc_scene_id());
        let verb = overlay_in(&mut agent.kb, &v.verb)?;
        let object_overlay = match &v.object_overlay {
            Some(o) => Some(overlay_in(&mut agent.kb, o)?),
            None => None,
        };
        let arg = |idx: &Option<usize>| -> Result<Option<InstanceId>, SnapshotError> {
            match idx {
                None => Ok(None),
                Some(i) => ids.get(*i).copied().map(Some).ok_or(SnapshotError::BadValue {
                    what: "instance index",
                    value: i.to_string(),
                }),
            }
        };
        agent.memory_mut().insert_vi(MemVi {
            id,
            verb_words: v.verb_words.clone(),
            verb,
            subject: arg(&v.subject)?,
            object: arg(&v.object)?,
            object_overlay,
            kind: parse_vi_kind(&v.kind)?,
            scene,
            scene_name: v.scene_name.clone(),
            scene_seq: v.scene_seq,
            salience: v.salience,
            demoted_at: v.demoted_at,
        });
        report.vis += 1;
    }

    let clock = agent.clock();
    for l in &snap.links {
        let kind = parse_identity_kind(&l.kind)?;
        let provenance = parse_provenance(&l.provenance)?;
        let get = |i: usize| {
            ids.get(i).copied().ok_or(SnapshotError::BadValue {
                what: "instance index",
                value: i.to_string(),
            })
        };
        let (a, b) = (get(l.a)?, get(l.b)?);
        if agent.identity.link(kind, a, b, clock, provenance, false, false).is_ok() {
            report.links += 1;
        }
    }
    Ok(report)
}

pub fn load_json(agent: &mut Agent, json: &str) -> Result<LoadReport, SnapshotError> {
    let snap: Snapshot = serde_json::from_str(json)?;
    load(agent, &snap)
}
