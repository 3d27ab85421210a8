//! Episodic memory and the shadow machinery.
//!
//! Components demoted from the focus become immutable memory records with a
//! salience. Every focus component maintains a *shadow*: a weighted body of
//! memory components it resembles. Context successors of shadow members vote
//! for *headless shadows* - predictions of what should happen next - which
//! lower the surprise of matching events and, given enough support and a
//! slow enough pacing, are instantiated as inferred verb instances.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::engine::{
    Agent, EffectReport, EngineError, Instance, ObjectRef, SubjectRef, Vi, ViKind,
};
use crate::ids::{ComponentId, InstanceId, SceneId, ViId};
use crate::knowledge::{ConceptKind, Overlay};

/// Immutable memory record of a demoted instance.
#[derive(Debug, Clone)]
pub struct MemInstance {
    pub id: InstanceId,
    pub attributes: Overlay,
    /// Names of every scene the instance ever inhabited.
    pub scene_names: BTreeSet<String>,
    pub label: String,
    pub salience: f64,
    pub created: f64,
    pub demoted_at: f64,
}

/// Immutable memory record of a demoted verb instance.
#[derive(Debug, Clone)]
pub struct MemVi {
    pub id: ViId,
    pub verb_words: Vec<String>,
    pub verb: Overlay,
    pub subject: Option<InstanceId>,
    pub object: Option<InstanceId>,
    pub object_overlay: Option<Overlay>,
    pub kind: ViKind,
    pub scene: SceneId,
    pub scene_name: Option<String>,
    pub scene_seq: u64,
    pub salience: f64,
    pub demoted_at: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ShadowError {
    #[error("component {0} was already demoted; demotion is irreversible")]
    DoubleDemotion(ComponentId),
    #[error("component {0} is not in focus")]
    NeverInFocus(ComponentId),
}

/// Append-only store of demoted components.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    pub(crate) instances: BTreeMap<InstanceId, MemInstance>,
    pub(crate) vis: BTreeMap<ViId, MemVi>,
}

impl MemoryStore {
    pub fn instance(&self, id: InstanceId) -> Option<&MemInstance> {
        self.instances.get(&id)
    }

    pub fn vi(&self, id: ViId) -> Option<&MemVi> {
        self.vis.get(&id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &MemInstance> {
        self.instances.values()
    }

    pub fn vis(&self) -> impl Iterator<Item = &MemVi> {
        self.vis.values()
    }

    pub fn insert_instance(&mut self, m: MemInstance) {
        self.instances.insert(m.id, m);
    }

    pub fn insert_vi(&mut self, v: MemVi) {
        self.vis.insert(v.id, v);
    }

    /// The memory VI immediately following `of` in its scene's temporal
    /// order (the "and then" of the remembered episode). Questions do not
    /// advance a plot, so they are skipped over.
    pub fn context_successor(&self, of: &MemVi) -> Option<&MemVi> {
        self.vis
            .values()
            .filter(|v| {
                v.scene == of.scene && v.scene_seq > of.scene_seq && v.kind != ViKind::Question
            })
            .min_by_key(|v| v.scene_seq)
    }

    pub(crate) fn demote_instance(
        &mut self,
        inst: &Instance,
        salience: f64,
        scene_names: BTreeSet<String>,
        clock: f64,
    ) {
        self.instances.insert(
            inst.id,
            MemInstance {
                id: inst.id,
                attributes: inst.attributes.clone(),
                scene_names,
                label: inst.label.clone(),
                salience,
                created: inst.created,
                demoted_at: clock,
            },
        );
    }

    pub(crate) fn demote_vi(
        &mut self,
        vi: &Vi,
        salience: f64,
        scene_name: Option<String>,
        clock: f64,
    ) {
        let subject = match vi.subject {
            SubjectRef::Instance(i) => Some(i),
            _ => None,
        };
        let object = match vi.object {
            ObjectRef::Instance(i) => Some(i),
            _ => None,
        };
        self.vis.insert(
            vi.id,
            MemVi {
                id: vi.id,
                verb_words: vi.verb_words.clone(),
                verb: vi.verb.clone(),
                subject,
                object,
                object_overlay: vi.object_overlay.clone(),
                kind: vi.kind,
                scene: vi.scene,
                scene_name,
                scene_seq: vi.scene_seq,
                salience,
                demoted_at: clock,
            },
        );
    }
}

/// Shadow bodies of the current focus, keyed by the focus component.
#[derive(Debug, Clone, Default)]
pub struct ShadowState {
    pub(crate) inst: BTreeMap<InstanceId, BTreeMap<InstanceId, f64>>,
    pub(crate) vi: BTreeMap<ViId, BTreeMap<ViId, f64>>,
}

impl ShadowState {
    pub fn instance_shadow(&self, i: InstanceId) -> Option<&BTreeMap<InstanceId, f64>> {
        self.inst.get(&i)
    }

    pub fn vi_shadow(&self, v: ViId) -> Option<&BTreeMap<ViId, f64>> {
        self.vi.get(&v)
    }

    pub fn instance_shadows(&self) -> impl Iterator<Item = (InstanceId, &BTreeMap<InstanceId, f64>)> {
        self.inst.iter().map(|(k, v)| (*k, v))
    }

    pub fn vi_shadows(&self) -> impl Iterator<Item = (ViId, &BTreeMap<ViId, f64>)> {
        self.vi.iter().map(|(k, v)| (*k, v))
    }
}

/// A cluster of context successors of shadow members: one predicted event.
#[derive(Debug, Clone)]
pub struct HeadlessShadow {
    pub verb_words: Vec<String>,
    pub verb: Overlay,
    pub kind: ViKind,
    /// Predicted focus subject (the focus instance whose shadow most
    /// strongly contains the remembered subject).
    pub subject: Option<InstanceId>,
    pub object: Option<InstanceId>,
    pub object_overlay: Option<Overlay>,
    /// Voting memory VIs and their accumulated votes.
    pub members: BTreeMap<ViId, f64>,
    pub support: f64,
    pub source_scenes: BTreeSet<String>,
    /// Vote of the current representative member.
    rep_vote: f64,
}

fn kinds_compatible(a: ViKind, b: ViKind) -> bool {
    a == b || (a.in_succession() && b.in_succession())
}

/// Similarity of two events for shadow pairing: verb overlap, damped by the
/// result-state overlap when both events carry an attribute object. Two
/// `changes` with different outcomes are different events.
fn event_match(
    kb: &crate::knowledge::KnowledgeBase,
    a_verb: &Overlay,
    a_result: Option<&Overlay>,
    b_verb: &Overlay,
    b_result: Option<&Overlay>,
) -> f64 {
    let mut m = kb.overlay_match(a_verb, b_verb).unwrap_or(0.0);
    if let (Some(x), Some(y)) = (a_result, b_result) {
        m *= kb.overlay_match(x, y).unwrap_or(0.0);
    }
    m
}

fn truncate_body<K: Ord + Copy>(body: &mut BTreeMap<K, f64>, k: usize) {
    body.retain(|_, w| *w > 1e-9);
    if body.len() > k {
        let mut weights: Vec<f64> = body.values().copied().collect();
        weights.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let cut = weights[k - 1];
        let mut kept = 0usize;
        body.retain(|_, w| {
            if *w >= cut && kept < k {
                kept += 1;
                true
            } else {
                false
            }
        });
    }
}

impl Agent {
    /// One diffusion sub-step of the shadow dynamics.
    ///
    /// All bodies update simultaneously from the previous state:
    /// `w <- (1 - a*dt)*w + a*dt * attraction`, where the attraction of a
    /// memory component is its overlay match scaled by salience, plus the
    /// argument-consistency term, plus the fictional-identity bonus. Bodies
    /// are truncated to the strongest `shadow_k` members. Memory salience
    /// decays exponentially with the same step.
    pub fn shadow_tick(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let decay = (-self.params.salience_decay * dt).exp();
        for m in self.memory.instances.values_mut() {
            m.salience *= decay;
        }
        for v in self.memory.vis.values_mut() {
            v.salience *= decay;
        }

        let prev = self.shadows.clone();
        let keep = 1.0 - (self.params.alpha * dt).min(1.0);
        let gain = (self.params.alpha * dt).min(1.0);
        let mut next = ShadowState::default();

        // instance shadows
        for (&i, inst) in &self.instances {
            let mut body: BTreeMap<InstanceId, f64> = BTreeMap::new();
            let prev_body = prev.inst.get(&i);
            for m in self.memory.instances.values() {
                let mat = self.kb.overlay_match(&inst.attributes, &m.attributes).unwrap_or(0.0);
                let consistency = self.instance_consistency(&prev, i, m.id);
                // role consistency outranks surface similarity: an instance
                // shadows whoever played its part, not whoever resembles it
                let attraction = mat * m.salience + consistency;
                let w_old = prev_body.and_then(|b| b.get(&m.id)).copied().unwrap_or(0.0);
                let w = keep * w_old + gain * attraction;
                if w > 1e-9 {
                    body.insert(m.id, w);
                }
            }
            // fictional identity injects the (focus) partner into the body
            for p in self.identity.fictional_partners(i) {
                let Some(partner) = self.instances.get(&p) else { continue };
                let pw = self
                    .focus
                    .weights
                    .get(&ComponentId::Instance(p))
                    .copied()
                    .unwrap_or(0.0);
                let mat =
                    self.kb.overlay_match(&inst.attributes, &partner.attributes).unwrap_or(0.0);
                let attraction = self.params.gamma + mat * pw;
                let w_old = prev_body.and_then(|b| b.get(&p)).copied().unwrap_or(0.0);
                let w = keep * w_old + gain * attraction;
                if w > 1e-9 {
                    body.insert(p, w);
                }
            }
            truncate_body(&mut body, self.params.shadow_k);
            if !body.is_empty() {
                next.inst.insert(i, body);
            }
        }

        // VI shadows
        for (&f, fvi) in &self.vis {
            let mut body: BTreeMap<ViId, f64> = BTreeMap::new();
            let prev_body = prev.vi.get(&f);
            for s in self.memory.vis.values() {
                if !kinds_compatible(fvi.kind, s.kind) {
                    continue;
                }
                let verb_match = event_match(
                    &self.kb,
                    &fvi.verb,
                    fvi.object_overlay.as_ref(),
                    &s.verb,
                    s.object_overlay.as_ref(),
                );
                // shadows pair like events; argument consistency refines the
                // ranking among verb-compatible candidates but cannot pull a
                // verb-alien memory into the body on its own
                if verb_match <= 0.0 {
                    continue;
                }
                let mut args = 0.0;
                if let (SubjectRef::Instance(i), Some(mi)) = (fvi.subject, s.subject) {
                    args += prev
                        .inst
                        .get(&i)
                        .and_then(|b| b.get(&mi))
                        .copied()
                        .unwrap_or(0.0);
                }
                if let (ObjectRef::Instance(i), Some(mi)) = (fvi.object, s.object) {
                    args += prev
                        .inst
                        .get(&i)
                        .and_then(|b| b.get(&mi))
                        .copied()
                        .unwrap_or(0.0);
                }
                let attraction = verb_match * s.salience + self.params.beta * args;
                let w_old = prev_body.and_then(|b| b.get(&s.id)).copied().unwrap_or(0.0);
                let w = keep * w_old + gain * attraction;
                if w > 1e-9 {
                    body.insert(s.id, w);
                }
            }
            truncate_body(&mut body, self.params.shadow_k);
            if !body.is_empty() {
                next.vi.insert(f, body);
            }
        }

        self.shadows = next;
    }

    /// How consistently focus instance `i` plays the same VI roles as memory
    /// instance `m`: the summed VI-shadow weight of remembered events that
    /// cast `m` in the position `i` holds in a focus event.
    fn instance_consistency(&self, prev: &ShadowState, i: InstanceId, m: InstanceId) -> f64 {
        let mut acc = 0.0;
        for (f, fvi) in &self.vis {
            let Some(body) = prev.vi.get(f) else { continue };
            let subj_here = fvi.subject == SubjectRef::Instance(i);
            let obj_here = fvi.object == ObjectRef::Instance(i);
            if !subj_here && !obj_here {
                continue;
            }
            for (s, w) in body {
                let Some(svi) = self.memory.vis.get(s) else { continue };
                if (subj_here && svi.subject == Some(m)) || (obj_here && svi.object == Some(m)) {
                    acc += w;
                }
            }
        }
        acc
    }

    pub fn shadow_state(&self) -> &ShadowState {
        &self.shadows
    }

    /// Current headless shadows: predicted next events, strongest first.
    ///
    /// For every shadow member `s` of every focus VI, the context successor
    /// `t` of `s` votes with `w_s * salience(t)`; votes for similar verbs
    /// with the same predicted arguments pool into one cluster. Successors
    /// already shadowed by some focus VI (events that, in this telling,
    /// already happened) do not vote.
    pub fn headless_shadows(&self) -> Vec<HeadlessShadow> {
        // strongest focus counterpart of each memory instance
        let mut best_focus: BTreeMap<InstanceId, (f64, InstanceId)> = BTreeMap::new();
        for (&fi, body) in &self.shadows.inst {
            for (&mi, &w) in body {
                match best_focus.get(&mi) {
                    Some((bw, bf)) if *bw > w || (*bw == w && *bf <= fi) => {}
                    _ => {
                        best_focus.insert(mi, (w, fi));
                    }
                }
            }
        }
        let map_arg = |m: Option<InstanceId>| -> Option<InstanceId> {
            m.and_then(|mi| best_focus.get(&mi)).map(|(_, f)| *f)
        };

        // a remembered event counts as "already happened in this telling"
        // only when a focus VI retells it: similar verb, same outcome, and
        // every shared argument mapping back to the same focus participant.
        // A mere verb echo with other participants (the wolf ate grandma,
        // the wolf may yet eat the girl) must not suppress the prediction.
        // Arguments that a `changes` chain has already demoted are compared
        // through their living somatic tip.
        let tip = |mut i: InstanceId| -> InstanceId {
            while !self.instances.contains_key(&i) {
                match self.identity.somatic_successor(i) {
                    Some(n) => i = n,
                    None => break,
                }
            }
            i
        };
        let mut shadowed: BTreeSet<ViId> = BTreeSet::new();
        for (f, body) in &self.shadows.vi {
            let Some(fvi) = self.vis.get(f) else { continue };
            for s in body.keys() {
                let Some(svi) = self.memory.vis.get(s) else { continue };
                let subj_agrees = match (fvi.subject, svi.subject) {
                    (SubjectRef::Instance(fi), Some(mi)) => map_arg(Some(mi)) == Some(tip(fi)),
                    _ => true,
                };
                let obj_agrees = match (fvi.object, svi.object) {
                    (ObjectRef::Instance(fi), Some(mi)) => map_arg(Some(mi)) == Some(tip(fi)),
                    _ => true,
                };
                if subj_agrees
                    && obj_agrees
                    && kinds_compatible(fvi.kind, svi.kind)
                    && event_match(
                        &self.kb,
                        &fvi.verb,
                        fvi.object_overlay.as_ref(),
                        &svi.verb,
                        svi.object_overlay.as_ref(),
                    ) >= self.params.theta_hs
                {
                    shadowed.insert(*s);
                }
            }
        }

        let mut clusters: Vec<HeadlessShadow> = Vec::new();
        for body in self.shadows.vi.values() {
            for (&s, &w_s) in body {
                let Some(svi) = self.memory.vis.get(&s) else { continue };
                // only plot-advancing events cast votes; stative shadow
                // members describe state, not sequence
                if !svi.kind.in_succession() {
                    continue;
                }
                let Some(t) = self.memory.context_successor(svi) else { continue };
                if shadowed.contains(&t.id) {
                    continue;
                }
                let vote = w_s * t.salience;
                if vote <= 1e-12 {
                    continue;
                }
                let subject = map_arg(t.subject);
                let object = map_arg(t.object);
                let slot = clusters.iter_mut().find(|c| {
                    kinds_compatible(c.kind, t.kind)
                        && c.subject == subject
                        && c.object == object
                        && self.kb.overlay_match(&c.verb, &t.verb).unwrap_or(0.0)
                            >= self.params.theta_hs
                });
                match slot {
                    Some(c) => {
                        c.support += vote;
                        *c.members.entry(t.id).or_insert(0.0) += vote;
                        if let Some(n) = &t.scene_name {
                            c.source_scenes.insert(n.clone());
                        }
                        if vote > c.rep_vote {
                            c.rep_vote = vote;
                            c.verb_words = t.verb_words.clone();
                            c.verb = t.verb.clone();
                            c.kind = t.kind;
                            c.object_overlay = t.object_overlay.clone();
                        }
                    }
                    None => clusters.push(HeadlessShadow {
                        verb_words: t.verb_words.clone(),
                        verb: t.verb.clone(),
                        kind: t.kind,
                        subject,
                        object,
                        object_overlay: t.object_overlay.clone(),
                        members: BTreeMap::from([(t.id, vote)]),
                        support: vote,
                        source_scenes: t
                            .scene_name
                            .iter()
                            .cloned()
                            .collect(),
                        rep_vote: vote,
                    }),
                }
            }
        }
        clusters.sort_by(|a, b| {
            b.support
                .partial_cmp(&a.support)
                .unwrap()
                .then_with(|| a.members.keys().next().cmp(&b.members.keys().next()))
        });
        clusters
    }

    /// Pair a freshly inserted VI with the strongest compatible headless
    /// shadow. A matched VI inherits the cluster members as its initial
    /// shadow and is unsurprising in proportion to the cluster's support;
    /// an unmatched VI has surprise 1.
    pub(crate) fn match_incoming(&mut self, vi: ViId) -> f64 {
        let clusters = self.headless_shadows();
        let v = &self.vis[&vi];
        let mut best: Option<&HeadlessShadow> = None;
        for c in &clusters {
            if !kinds_compatible(c.kind, v.kind) {
                continue;
            }
            if self.kb.overlay_match(&c.verb, &v.verb).unwrap_or(0.0) < self.params.theta_hs {
                continue;
            }
            if let (Some(ps), SubjectRef::Instance(s)) = (c.subject, v.subject) {
                if ps != s {
                    continue;
                }
            }
            if best.is_none_or(|b| c.support > b.support) {
                best = Some(c);
            }
        }
        match best {
            Some(c) => {
                let mut body = c.members.clone();
                truncate_body(&mut body, self.params.shadow_k);
                let surprise = 1.0 / (1.0 + c.support);
                self.shadows.vi.insert(vi, body);
                surprise
            }
            None => 1.0,
        }
    }

    /// Surprise the agent would assign to an event with this verb and
    /// subject, without inserting anything.
    pub fn predicted_surprise(&self, verb: &Overlay, subject: Option<InstanceId>) -> f64 {
        let mut best = 0.0f64;
        for c in self.headless_shadows() {
            if self.kb.overlay_match(&c.verb, verb).unwrap_or(0.0) < self.params.theta_hs {
                continue;
            }
            if let (Some(ps), Some(s)) = (c.subject, subject) {
                if ps != s {
                    continue;
                }
            }
            best = best.max(c.support);
        }
        1.0 / (1.0 + best)
    }

    /// Instantiate up to `max` headless shadows whose support reaches the
    /// instantiation threshold, strongest first. Each instantiation is a
    /// spike activity followed by one diffusion sub-step, so an inferred
    /// event can recruit support for the next one (cascading inference).
    pub fn instantiate_inferences(&mut self, max: usize) -> Result<Vec<ViId>, EngineError> {
        let mut out = Vec::new();
        let Some(scene) = self.focus.current_scene else { return Ok(out) };
        for _ in 0..max {
            let clusters = self.headless_shadows();
            let infer_identity = self.params.infer_identity;
            let Some(c) = clusters.into_iter().find(|c| {
                c.support >= self.params.theta_inst
                    // only plain events and state changes are worth asserting;
                    // a quote without content or a bare relation echo is not
                    && matches!(c.kind, ViKind::Action | ViKind::AttributeSet)
                    && c.subject.is_some_and(|s| self.instances.contains_key(&s))
                    && (infer_identity
                        || !matches!(
                            c.verb_words.first().map(String::as_str),
                            Some(
                                "is-somatically-identical"
                                    | "is-fictionally-identical"
                                    | "is-view-identical"
                            )
                        ))
            }) else {
                break;
            };
            let subject = c.subject.expect("filtered above");
            let mut report = EffectReport::default();
            let head = c.verb_words.first().cloned().unwrap_or_default();
            let vi = match head.as_str() {
                "changes" => {
                    let overlay = c
                        .object_overlay
                        .clone()
                        .unwrap_or_else(|| Overlay::new(ConceptKind::Attribute));
                    self.apply_changes_vi(
                        subject,
                        overlay,
                        c.verb_words.clone(),
                        c.verb.clone(),
                        scene,
                        true,
                        &mut report,
                    )?
                }
                "is-a" => {
                    let overlay = c
                        .object_overlay
                        .clone()
                        .unwrap_or_else(|| Overlay::new(ConceptKind::Attribute));
                    if let Some(inst) = self.instances.get_mut(&subject) {
                        inst.attributes.merge_max(&overlay);
                    }
                    self.touch(subject);
                    self.insert_vi(
                        c.verb_words.clone(),
                        c.verb.clone(),
                        SubjectRef::Instance(subject),
                        ObjectRef::None,
                        Some(overlay),
                        ViKind::AttributeSet,
                        scene,
                        true,
                    )
                }
                "leaves-scene" => {
                    self.remove_from_scenes(subject);
                    self.insert_vi(
                        c.verb_words.clone(),
                        c.verb.clone(),
                        SubjectRef::Instance(subject),
                        ObjectRef::None,
                        None,
                        ViKind::Action,
                        scene,
                        true,
                    )
                }
                "is-somatically-identical" | "is-fictionally-identical" | "is-view-identical"
                    if c.object.is_some_and(|o| self.instances.contains_key(&o))
                        && c.object != c.subject =>
                {
                    // reached only when identity inference is enabled
                    let kind = match head.as_str() {
                        "is-somatically-identical" => crate::identity::IdentityKind::Somatic,
                        "is-fictionally-identical" => crate::identity::IdentityKind::Fictional,
                        _ => crate::identity::IdentityKind::View,
                    };
                    let b = c.object.expect("guarded above");
                    self.link_identity(kind, subject, b, crate::identity::Provenance::Inferred)?;
                    self.insert_vi(
                        c.verb_words.clone(),
                        c.verb.clone(),
                        SubjectRef::Instance(subject),
                        ObjectRef::Instance(b),
                        None,
                        ViKind::RelationSet,
                        scene,
                        true,
                    )
                }
                _ => {
                    let object = match c.object {
                        Some(o) if self.instances.contains_key(&o) => ObjectRef::Instance(o),
                        _ => ObjectRef::None,
                    };
                    let kind = if c.kind == ViKind::Quote { ViKind::Action } else { c.kind };
                    let vi = self.insert_vi(
                        c.verb_words.clone(),
                        c.verb.clone(),
                        SubjectRef::Instance(subject),
                        object,
                        None,
                        kind,
                        scene,
                        true,
                    );
                    if let ObjectRef::Instance(o) = object {
                        if self.verb_consumes(&c.verb) {
                            self.remove_from_scenes(o);
                        }
                    }
                    vi
                }
            };
            out.push(vi);
            // a full respiro of diffusion lets the inferred event recruit
            // its own shadow and thereby support for the next inference
            self.diffuse(self.params.tau_respiro)?;
        }
        Ok(out)
    }
}
