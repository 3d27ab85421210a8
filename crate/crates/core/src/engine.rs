//! Sentence execution: scenes, instances, verb instances, the focus with
//! weighted decay, reference resolution and the side effects of built-in
//! verbs.
//!
//! One [`Agent`] is one single-threaded state machine. Sentences execute as
//! serialized spike activities; diffusion activities run between sentences in
//! discrete sub-steps (see [`Agent::run_story`]).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::config::Params;
use crate::identity::{IdentityError, IdentityGraph, IdentityKind, IdentityLink, Provenance};
use crate::ids::{ComponentId, InstanceId, SceneId, ViId};
use crate::knowledge::{ConceptKind, KnowledgeBase, KnowledgeError, Overlay};
use crate::parser::{Article, PartAst, SentenceAst, SentenceKind};
use crate::shadows::{MemoryStore, ShadowError, ShadowState};
use crate::trace::{weights_digest, TraceRecord};

/// A story entity, valid while its attributes grow additively. Attributes
/// only ever grow; an instance that left the focus never changes again.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: InstanceId,
    pub attributes: Overlay,
    pub scenes: BTreeSet<SceneId>,
    pub label: String,
    pub created: f64,
    pub entered_focus: f64,
    pub participation: u32,
    pub last_refresh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViKind {
    Action,
    AttributeSet,
    RelationSet,
    Quote,
    Question,
}

impl ViKind {
    /// Quote inquits share the action VIs' succession behavior.
    pub fn in_succession(self) -> bool {
        matches!(self, ViKind::Action | ViKind::Quote)
    }
}

impl std::fmt::Display for ViKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ViKind::Action => write!(f, "action"),
            ViKind::AttributeSet => write!(f, "attribute-set"),
            ViKind::RelationSet => write!(f, "relation-set"),
            ViKind::Quote => write!(f, "quote"),
            ViKind::Question => write!(f, "question"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SubjectRef {
    Wh,
    Instance(InstanceId),
    Scene(SceneId),
}

impl std::fmt::Display for SubjectRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubjectRef::Wh => write!(f, "wh"),
            SubjectRef::Instance(i) => write!(f, "{i}"),
            SubjectRef::Scene(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ObjectRef {
    None,
    Instance(InstanceId),
    Vi(ViId),
}

impl std::fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ObjectRef::None => write!(f, "-"),
            ObjectRef::Instance(i) => write!(f, "{i}"),
            ObjectRef::Vi(v) => write!(f, "{v}"),
        }
    }
}

/// One event record; the nodes of the experience graph.
#[derive(Debug, Clone)]
pub struct Vi {
    pub id: ViId,
    pub verb_words: Vec<String>,
    pub verb: Overlay,
    pub subject: SubjectRef,
    pub object: ObjectRef,
    /// Overlay argument of `is-a` / `changes` style verbs.
    pub object_overlay: Option<Overlay>,
    pub kind: ViKind,
    pub quoted: Option<ViId>,
    pub scene: SceneId,
    /// Position in the scene's temporal order.
    pub scene_seq: u64,
    pub successors: BTreeSet<ViId>,
    pub predecessors: BTreeSet<ViId>,
    pub created: f64,
    pub inferred: bool,
    pub surprise: f64,
}

/// A scene: the collection of focus instances inhabiting one narrative plane.
#[derive(Debug, Clone)]
pub struct Scene {
    pub id: SceneId,
    pub name: Option<String>,
    pub members: BTreeSet<InstanceId>,
    pub relations: Vec<(String, SceneId)>,
    pub created: f64,
    pub seq_counter: u64,
    pub last_action_vi: Option<ViId>,
}

/// Directed relation edge recorded by relation verbs (`has`, `loves`, ...).
#[derive(Debug, Clone)]
pub struct RelationEdge {
    pub word: String,
    pub from: InstanceId,
    pub to: InstanceId,
    pub vi: ViId,
}

#[derive(Debug, Clone, Default)]
pub struct Focus {
    pub weights: BTreeMap<ComponentId, f64>,
    pub current_scene: Option<SceneId>,
    pub clock: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EffectReport {
    pub vis: Vec<ViId>,
    pub created: Vec<InstanceId>,
    pub removed: Vec<InstanceId>,
    pub links: Vec<IdentityLink>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Shadow(#[from] ShadowError),
    #[error("no instance in scene {scene} matches `{part}`")]
    NoCandidate { scene: String, part: String },
    #[error("ambiguous reference `{part}` in scene {scene}")]
    Ambiguous { scene: String, part: String },
    #[error("unknown scene `{0}`")]
    UnknownScene(String),
    #[error("no current scene; start with `a scene \"X\" / is-current-scene.`")]
    NoCurrentScene,
    #[error("negative time step {0}")]
    NegativeDt(f64),
    #[error("instance {0} is not in focus")]
    NotInFocus(InstanceId),
    #[error("pronoun `{0}` used outside a quotation")]
    PronounWithoutSpeaker(String),
    #[error("`{verb}` expects {expected}")]
    VerbArity { verb: String, expected: String },
    #[error("sentence at line {line}: {source}")]
    AtLine { line: usize, source: Box<EngineError> },
}

impl EngineError {
    fn at_line(self, line: usize) -> EngineError {
        match self {
            e @ EngineError::AtLine { .. } => e,
            e => EngineError::AtLine { line, source: Box::new(e) },
        }
    }
}

/// The narrative agent: knowledge, focus, scenes, identity graph, episodic
/// memory and shadows, driven one sentence at a time.
#[derive(Debug)]
pub struct Agent {
    pub kb: KnowledgeBase,
    pub params: Params,
    pub(crate) instances: BTreeMap<InstanceId, Instance>,
    pub(crate) vis: BTreeMap<ViId, Vi>,
    pub(crate) scenes: BTreeMap<SceneId, Scene>,
    pub(crate) focus: Focus,
    /// Ids that left the focus; they can never return.
    pub(crate) demoted: BTreeSet<ComponentId>,
    pub identity: IdentityGraph,
    pub(crate) memory: MemoryStore,
    pub(crate) shadows: ShadowState,
    pub(crate) relations: Vec<RelationEdge>,
    trace: Vec<TraceRecord>,
    next_instance: u64,
    next_vi: u64,
    next_scene: u64,
    seq: u64,
    participated: BTreeSet<InstanceId>,
    successors_acquired: BTreeMap<ViId, u32>,
}

impl Agent {
    pub fn new(mut kb: KnowledgeBase, params: Params) -> Self {
        kb.proper_noun_area = params.pn_area;
        Agent {
            kb,
            params,
            instances: BTreeMap::new(),
            vis: BTreeMap::new(),
            scenes: BTreeMap::new(),
            focus: Focus::default(),
            demoted: BTreeSet::new(),
            identity: IdentityGraph::new(),
            memory: MemoryStore::default(),
            shadows: ShadowState::default(),
            relations: Vec::new(),
            trace: Vec::new(),
            next_instance: 0,
            next_vi: 0,
            next_scene: 0,
            seq: 0,
            participated: BTreeSet::new(),
            successors_acquired: BTreeMap::new(),
        }
    }

    pub fn clock(&self) -> f64 {
        self.focus.clock
    }

    pub fn current_scene(&self) -> Option<SceneId> {
        self.focus.current_scene
    }

    pub fn focus_weight(&self, c: ComponentId) -> Option<f64> {
        self.focus.weights.get(&c).copied()
    }

    pub fn in_focus(&self, c: ComponentId) -> bool {
        self.focus.weights.contains_key(&c)
    }

    pub fn instance(&self, id: InstanceId) -> Option<&Instance> {
        self.instances.get(&id)
    }

    pub fn vi(&self, id: ViId) -> Option<&Vi> {
        self.vis.get(&id)
    }

    pub fn scene(&self, id: SceneId) -> Option<&Scene> {
        self.scenes.get(&id)
    }

    pub fn scenes(&self) -> impl Iterator<Item = &Scene> {
        self.scenes.values()
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.instances.values()
    }

    pub fn vis(&self) -> impl Iterator<Item = &Vi> {
        self.vis.values()
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut MemoryStore {
        &mut self.memory
    }

    pub fn relations(&self) -> &[RelationEdge] {
        &self.relations
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn render_trace(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&r.render());
            out.push('\n');
        }
        out
    }

    /// Record an id as demoted without it ever being in focus (snapshot
    /// loading brings in components that were demoted elsewhere).
    pub(crate) fn mark_demoted(&mut self, c: ComponentId) {
        self.demoted.insert(c);
    }

    pub(crate) fn alloc_instance_id(&mut self) -> InstanceId {
        let id = InstanceId(self.next_instance);
        self.next_instance += 1;
        id
    }

    pub(crate) fn alloc_vi_id(&mut self) -> ViId {
        let id = ViId(self.next_vi);
        self.next_vi += 1;
        id
    }

    pub(crate) fn alloc_scene_id(&mut self) -> SceneId {
        let id = SceneId(self.next_scene);
        self.next_scene += 1;
        id
    }

    // ------------------------------------------------------------------
    // Scenes
    // ------------------------------------------------------------------

    pub fn create_scene(&mut self, name: Option<String>) -> SceneId {
        let id = self.alloc_scene_id();
        self.scenes.insert(
            id,
            Scene {
                id,
                name,
                members: BTreeSet::new(),
                relations: Vec::new(),
                created: self.focus.clock,
                seq_counter: 0,
                last_action_vi: None,
            },
        );
        id
    }

    /// Find a scene by its proper-noun name. Exact match first, then an
    /// ASCII-case-insensitive fallback (story texts are not consistent about
    /// scene-name casing); the most recently created scene wins a tie.
    pub fn scene_by_name(&self, name: &str) -> Result<SceneId, EngineError> {
        let pick = |pred: &dyn Fn(&str) -> bool| {
            self.scenes
                .values()
                .filter(|s| s.name.as_deref().is_some_and(pred))
                .max_by_key(|s| s.id)
                .map(|s| s.id)
        };
        pick(&|n: &str| n == name)
            .or_else(|| pick(&|n: &str| n.eq_ignore_ascii_case(name)))
            .ok_or_else(|| EngineError::UnknownScene(name.to_string()))
    }

    /// Does this part denote a scene rather than an instance?
    fn scene_part(&self, part: &PartAst) -> bool {
        if part.words.iter().any(|w| w == "scene") {
            return true;
        }
        part.words.is_empty()
            && part.rel.is_none()
            && part
                .proper_noun
                .as_deref()
                .is_some_and(|pn| self.scene_by_name(pn).is_ok())
    }

    fn resolve_scene_part(&mut self, part: &PartAst) -> Result<SceneId, EngineError> {
        if part.article == Article::Indefinite {
            if let Some(pn) = &part.proper_noun {
                self.kb.intern_proper_noun(pn)?;
            }
            return Ok(self.create_scene(part.proper_noun.clone()));
        }
        match &part.proper_noun {
            Some(pn) => self.scene_by_name(pn),
            None => self.focus.current_scene.ok_or(EngineError::NoCurrentScene),
        }
    }

    // ------------------------------------------------------------------
    // Instances and resolution
    // ------------------------------------------------------------------

    /// Create a fresh instance carrying `overlay`, member of `scene`, with
    /// focus weight 1.0.
    pub fn create_instance(&mut self, overlay: Overlay, scene: SceneId, label: String) -> InstanceId {
        let id = self.alloc_instance_id();
        debug_assert!(!self.demoted.contains(&ComponentId::Instance(id)));
        let clock = self.focus.clock;
        self.instances.insert(
            id,
            Instance {
                id,
                attributes: overlay,
                scenes: BTreeSet::from([scene]),
                label,
                created: clock,
                entered_focus: clock,
                participation: 0,
                last_refresh: clock,
            },
        );
        if let Some(s) = self.scenes.get_mut(&scene) {
            s.members.insert(id);
        }
        self.focus.weights.insert(ComponentId::Instance(id), 1.0);
        id
    }

    fn part_label(part: &PartAst) -> String {
        let mut s = part.words.join(" ");
        if let Some(pn) = &part.proper_noun {
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str(&format!("\"{pn}\""));
        }
        s
    }

    /// Build the attribute overlay named by a part's words and proper noun.
    pub fn part_overlay(&mut self, part: &PartAst) -> Result<Overlay, EngineError> {
        let mut overlay = Overlay::new(ConceptKind::Attribute);
        for w in &part.words {
            let o = if self.params.lenient_nouns {
                self.kb.word_to_overlay_lenient(w, ConceptKind::Attribute)?
            } else {
                self.kb.word_to_overlay(w, ConceptKind::Attribute)?
            };
            overlay.merge_max(&o);
        }
        if let Some(pn) = &part.proper_noun {
            let o = self.kb.intern_proper_noun(pn)?;
            overlay.merge_max(&o);
        }
        Ok(overlay)
    }

    fn rel_word_matches(edge_word: &str, rel: &str) -> bool {
        rel == "of" || edge_word == rel || edge_word == format!("is-{rel}")
    }

    fn related(&self, candidate: InstanceId, rel: &str, other: InstanceId) -> bool {
        self.relations.iter().any(|e| {
            Self::rel_word_matches(&e.word, rel)
                && ((e.from == candidate && e.to == other)
                    || (rel == "of" && e.to == candidate && e.from == other))
        })
    }

    /// Resolve a definite reference: the strongest matching instance in the
    /// scene, i.e. the argmax of overlay match times focus weight.
    pub fn resolve_reference(
        &mut self,
        part: &PartAst,
        scene: SceneId,
        speaker: Option<InstanceId>,
    ) -> Result<InstanceId, EngineError> {
        // cross-scene adjunct switches the search scene
        let mut scene = match &part.scene_ref {
            Some(name) => self.scene_by_name(name)?,
            None => scene,
        };

        // `--of-- "X"` where X names a scene is a scene qualifier too
        let mut rel_filter: Option<(&str, &PartAst)> = None;
        if let Some((rel, right)) = &part.rel {
            let is_scene_qualifier = rel == "of"
                && right.words.is_empty()
                && right.proper_noun.as_deref().is_some_and(|pn| self.scene_by_name(pn).is_ok());
            if is_scene_qualifier {
                scene = self.scene_by_name(right.proper_noun.as_deref().unwrap())?;
            } else {
                rel_filter = Some((rel.as_str(), right));
            }
        }

        // pronouns resolve through the quotation context
        if part.words.len() == 1 && part.proper_noun.is_none() && rel_filter.is_none() {
            match part.words[0].as_str() {
                "i" => return self.resolve_speaker_pronoun(scene, speaker, "i"),
                "you" => return self.resolve_addressee_pronoun(scene, speaker),
                _ => {}
            }
        }

        let overlay = self.part_overlay(part)?;
        let related_to = match rel_filter {
            Some((rel, right)) => Some((rel, self.resolve_reference(right, scene, speaker)?)),
            None => None,
        };

        // candidates: current scene members, plus focus instances that once
        // inhabited the scene and have not decayed out yet (a swallowed or
        // departed character stays referencable while it is still in focus)
        let mut candidates: BTreeSet<InstanceId> = self
            .scenes
            .get(&scene)
            .map(|s| s.members.clone())
            .unwrap_or_default();
        for (id, inst) in &self.instances {
            if inst.scenes.contains(&scene) {
                candidates.insert(*id);
            }
        }
        let mut best: Option<(f64, f64, InstanceId)> = None; // (score, last_refresh, id)
        let mut tie = false;
        for id in candidates {
            // inside a quotation, a plain reference never means the speaker;
            // speakers refer to themselves with the pronoun `i`
            if Some(id) == speaker {
                continue;
            }
            if let Some((rel, other)) = related_to {
                if !self.related(id, rel, other) {
                    continue;
                }
            }
            let inst = &self.instances[&id];
            let m = self.kb.overlay_match(&overlay, &inst.attributes)?;
            let w = self.focus.weights.get(&ComponentId::Instance(id)).copied().unwrap_or(0.0);
            let score = m * w;
            if score <= 0.0 {
                continue;
            }
            match &best {
                None => best = Some((score, inst.last_refresh, id)),
                Some((bs, br, bi)) => {
                    if (score - bs).abs() < 1e-12 {
                        tie = true;
                        // lenient tie-break: most recently refreshed, then newest
                        if inst.last_refresh > *br
                            || (inst.last_refresh == *br && id > *bi)
                        {
                            best = Some((score, inst.last_refresh, id));
                        }
                    } else if score > *bs {
                        tie = false;
                        best = Some((score, inst.last_refresh, id));
                    }
                }
            }
        }
        match best {
            Some(_) if tie && self.params.strict => Err(EngineError::Ambiguous {
                scene: self.scene_label(scene),
                part: Self::part_label(part),
            }),
            Some((_, _, id)) => Ok(id),
            None => Err(EngineError::NoCandidate {
                scene: self.scene_label(scene),
                part: Self::part_label(part),
            }),
        }
    }

    fn scene_label(&self, id: SceneId) -> String {
        match self.scenes.get(&id).and_then(|s| s.name.clone()) {
            Some(n) => format!("{id}(\"{n}\")"),
            None => id.to_string(),
        }
    }

    /// `I` inside a quotation: the speaker if it inhabits the quote scene,
    /// otherwise the speaker's fictional/view counterpart there, otherwise
    /// the speaker itself (lenient mode only).
    fn resolve_speaker_pronoun(
        &self,
        scene: SceneId,
        speaker: Option<InstanceId>,
        word: &str,
    ) -> Result<InstanceId, EngineError> {
        let speaker = speaker.ok_or_else(|| EngineError::PronounWithoutSpeaker(word.into()))?;
        let members = &self.scenes[&scene].members;
        if members.contains(&speaker) {
            return Ok(speaker);
        }
        let closure =
            self.identity.closure(speaker, &[IdentityKind::Fictional, IdentityKind::View]);
        let mut counterparts: Vec<InstanceId> =
            closure.into_iter().filter(|i| members.contains(i)).collect();
        counterparts.sort();
        if let Some(id) = counterparts.pop() {
            return Ok(id);
        }
        if self.params.strict {
            Err(EngineError::NoCandidate {
                scene: self.scene_label(scene),
                part: word.to_string(),
            })
        } else {
            Ok(speaker)
        }
    }

    /// `you` inside a quotation: the strongest scene member other than the
    /// speaker's counterpart.
    fn resolve_addressee_pronoun(
        &self,
        scene: SceneId,
        speaker: Option<InstanceId>,
    ) -> Result<InstanceId, EngineError> {
        let speaker = speaker.ok_or_else(|| EngineError::PronounWithoutSpeaker("you".into()))?;
        let me = self.resolve_speaker_pronoun(scene, Some(speaker), "i")?;
        let mut best: Option<(f64, InstanceId)> = None;
        for id in &self.scenes[&scene].members {
            if *id == me {
                continue;
            }
            let w = self.focus.weights.get(&ComponentId::Instance(*id)).copied().unwrap_or(0.0);
            if best.map_or(true, |(bw, bi)| w > bw || (w == bw && *id > bi)) {
                best = Some((w, *id));
            }
        }
        best.map(|(_, id)| id).ok_or_else(|| EngineError::NoCandidate {
            scene: self.scene_label(scene),
            part: "you".to_string(),
        })
    }

    /// Resolve the object of an identity verb. Identity sentences may refer
    /// back to instances that already left the focus (the swallowed character
    /// a later one is somatically identical to), so when no focus candidate
    /// exists the search falls back to memory instances that once inhabited
    /// the named scene, scored by overlay match times salience.
    ///
    /// `exclude` is the subject of the identity sentence: "the Grandma in
    /// the house" on the right-hand side never means the very instance being
    /// linked, even when that instance is the best focus match.
    fn resolve_with_memory(
        &mut self,
        part: &PartAst,
        scene: SceneId,
        speaker: Option<InstanceId>,
        exclude: Option<InstanceId>,
    ) -> Result<InstanceId, EngineError> {
        match self.resolve_reference(part, scene, speaker) {
            Ok(id) if Some(id) != exclude => Ok(id),
            Ok(_) | Err(EngineError::NoCandidate { .. }) => {
                let overlay = self.part_overlay(part)?;
                let scene_name = part.scene_ref.clone();
                let mut best: Option<(f64, f64, InstanceId)> = None;
                for m in self.memory.instances() {
                    if let Some(name) = &scene_name {
                        if !m.scene_names.iter().any(|n| n.eq_ignore_ascii_case(name)) {
                            continue;
                        }
                    }
                    let score = self.kb.overlay_match(&overlay, &m.attributes)? * m.salience.max(1e-6);
                    if score <= 0.0 {
                        continue;
                    }
                    let better = match &best {
                        None => true,
                        Some((bs, bt, bi)) => {
                            score > *bs + 1e-12
                                || ((score - bs).abs() <= 1e-12
                                    && (m.demoted_at > *bt
                                        || (m.demoted_at == *bt && m.id > *bi)))
                        }
                    };
                    if better {
                        best = Some((score, m.demoted_at, m.id));
                    }
                }
                best.map(|(_, _, id)| id).ok_or_else(|| EngineError::NoCandidate {
                    scene: self.scene_label(scene),
                    part: Self::part_label(part),
                })
            }
            Err(e) => Err(e),
        }
    }

    pub(crate) fn touch(&mut self, id: InstanceId) {
        if let Some(inst) = self.instances.get_mut(&id) {
            inst.participation += 1;
            inst.last_refresh = self.focus.clock;
            self.participated.insert(id);
        }
    }

    /// Refresh the focus weight of an instance without counting it as event
    /// participation.
    pub(crate) fn refresh(&mut self, id: InstanceId) {
        if let Some(inst) = self.instances.get_mut(&id) {
            inst.last_refresh = self.focus.clock;
            self.participated.insert(id);
        }
    }

    // ------------------------------------------------------------------
    // VI insertion
    // ------------------------------------------------------------------

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn insert_vi(
        &mut self,
        verb_words: Vec<String>,
        verb: Overlay,
        subject: SubjectRef,
        object: ObjectRef,
        object_overlay: Option<Overlay>,
        kind: ViKind,
        scene: SceneId,
        inferred: bool,
    ) -> ViId {
        let id = self.alloc_vi_id();
        let clock = self.focus.clock;
        let scene_seq = {
            let s = self.scenes.get_mut(&scene).expect("vi scene exists");
            let seq = s.seq_counter;
            s.seq_counter += 1;
            seq
        };
        let mut vi = Vi {
            id,
            verb_words,
            verb,
            subject,
            object,
            object_overlay,
            kind,
            quoted: None,
            scene,
            scene_seq,
            successors: BTreeSet::new(),
            predecessors: BTreeSet::new(),
            created: clock,
            inferred,
            surprise: 1.0,
        };

        // weak temporal succession between action-kind VIs of one scene,
        // and only between VIs that were simultaneously in focus
        if kind.in_succession() {
            let prev = self.scenes[&scene].last_action_vi.filter(|p| self.vis.contains_key(p));
            if let Some(prev) = prev {
                vi.predecessors.insert(prev);
                if let Some(p) = self.vis.get_mut(&prev) {
                    p.successors.insert(id);
                }
                *self.successors_acquired.entry(prev).or_insert(0) += 1;
            }
            if let Some(s) = self.scenes.get_mut(&scene) {
                s.last_action_vi = Some(id);
            }
        }

        if let SubjectRef::Instance(i) = subject {
            self.touch(i);
        }
        if let ObjectRef::Instance(i) = object {
            self.touch(i);
        }

        self.vis.insert(id, vi);
        self.focus.weights.insert(ComponentId::Vi(id), 1.0);

        // pair the incoming VI with a headless shadow, note the surprise
        let surprise = self.match_incoming(id);
        if let Some(v) = self.vis.get_mut(&id) {
            v.surprise = surprise;
        }

        self.trace_sa(id, surprise, inferred);
        id
    }

    fn trace_sa(&mut self, vi: ViId, surprise: f64, inferred: bool) {
        let v = &self.vis[&vi];
        let record = TraceRecord {
            seq: self.seq,
            clock: self.focus.clock,
            kind: if inferred { "sa-inferred".into() } else { "sa".into() },
            scene: v.scene.to_string(),
            subject: v.subject.to_string(),
            verb: v.verb_words.join("+"),
            object: match (&v.object, &v.object_overlay) {
                (ObjectRef::None, Some(_)) => "overlay".to_string(),
                (o, _) => o.to_string(),
            },
            surprise: Some(surprise),
            digest: weights_digest(&self.focus.weights),
        };
        self.seq += 1;
        self.trace.push(record);
    }

    pub(crate) fn trace_da(&mut self) {
        let record = TraceRecord {
            seq: self.seq,
            clock: self.focus.clock,
            kind: "da".into(),
            scene: self
                .focus
                .current_scene
                .map(|s| s.to_string())
                .unwrap_or_else(|| "-".into()),
            subject: "-".into(),
            verb: "-".into(),
            object: "-".into(),
            surprise: None,
            digest: weights_digest(&self.focus.weights),
        };
        self.seq += 1;
        self.trace.push(record);
    }

    // ------------------------------------------------------------------
    // Sentence execution
    // ------------------------------------------------------------------

    /// Execute one parsed sentence as a spike activity.
    pub fn execute(&mut self, ast: &SentenceAst) -> Result<EffectReport, EngineError> {
        let mut report = EffectReport::default();
        let scene = self.focus.current_scene;
        self.execute_in(ast, scene, None, &mut report).map_err(|e| e.at_line(ast.line))?;
        Ok(report)
    }

    fn verb_overlay(&mut self, words: &[String]) -> Result<Overlay, EngineError> {
        let mut overlay = Overlay::new(ConceptKind::Verb);
        for w in words {
            let o = if self.params.strict {
                self.kb.word_to_overlay(w, ConceptKind::Verb)?
            } else {
                self.kb.word_to_overlay_lenient(w, ConceptKind::Verb)?
            };
            overlay.merge_max(&o);
        }
        Ok(overlay)
    }

    /// Subject or object argument for an ordinary (non-builtin) part:
    /// indefinite article creates, everything else resolves.
    fn resolve_or_create(
        &mut self,
        part: &PartAst,
        scene: SceneId,
        speaker: Option<InstanceId>,
        report: &mut EffectReport,
    ) -> Result<InstanceId, EngineError> {
        if part.article == Article::Indefinite {
            let overlay = self.part_overlay(part)?;
            let target = match &part.scene_ref {
                Some(name) => self.scene_by_name(name)?,
                None => scene,
            };
            let id = self.create_instance(overlay, target, Self::part_label(part));
            report.created.push(id);
            Ok(id)
        } else {
            self.resolve_reference(part, scene, speaker)
        }
    }

    fn execute_in(
        &mut self,
        ast: &SentenceAst,
        scene: Option<SceneId>,
        speaker: Option<InstanceId>,
        report: &mut EffectReport,
    ) -> Result<ViId, EngineError> {
        let head = ast.verb.head().to_string();
        let verb = self.verb_overlay(&ast.verb.words)?;

        // scene-control verbs may bootstrap the very first scene
        if head == "is-current-scene" || head == "is-only-scene" {
            let target = self.resolve_scene_part(&ast.subject)?;
            self.focus.current_scene = Some(target);
            // attention returns to the scene: its members are refreshed
            // (without counting as event participation)
            let members: Vec<InstanceId> = self
                .scenes
                .get(&target)
                .map(|s| s.members.iter().copied().collect())
                .unwrap_or_default();
            for id in members {
                self.refresh(id);
            }
            if head == "is-only-scene" {
                let others: Vec<InstanceId> = self
                    .scenes
                    .values()
                    .filter(|s| s.id != target)
                    .flat_map(|s| s.members.iter().copied())
                    .collect();
                for id in others {
                    self.demote_instance(id)?;
                    report.removed.push(id);
                }
            }
            let vi = self.insert_vi(
                ast.verb.words.clone(),
                verb,
                SubjectRef::Scene(target),
                ObjectRef::None,
                None,
                ViKind::AttributeSet,
                target,
                false,
            );
            report.vis.push(vi);
            return Ok(vi);
        }

        let scene = scene.ok_or(EngineError::NoCurrentScene)?;

        // quotation sentences: inquit here, content in the named scene
        if let Some(quoted_ast) = &ast.quoted {
            let quote_scene = match &ast.verb.scene_ref {
                Some(name) => self.scene_by_name(name)?,
                None => scene,
            };
            let subject = if Self::bare_scene_subject(&ast.subject) {
                SubjectRef::Scene(scene)
            } else {
                SubjectRef::Instance(self.resolve_reference(&ast.subject, scene, speaker)?)
            };
            let inner_speaker = match subject {
                SubjectRef::Instance(i) => Some(i),
                _ => speaker,
            };
            let quoted_vi =
                self.execute_in(quoted_ast, Some(quote_scene), inner_speaker, report)?;
            let vi = self.insert_vi(
                ast.verb.words.clone(),
                verb,
                subject,
                ObjectRef::Vi(quoted_vi),
                None,
                ViKind::Quote,
                scene,
                false,
            );
            if let Some(v) = self.vis.get_mut(&vi) {
                v.quoted = Some(quoted_vi);
            }
            report.vis.push(vi);
            return Ok(vi);
        }

        // questions record the event but answer nothing and change nothing
        if ast.kind == SentenceKind::Question {
            let subject = if ast.subject.has_wh() {
                SubjectRef::Wh
            } else {
                SubjectRef::Instance(self.resolve_reference(&ast.subject, scene, speaker)?)
            };
            // `wh is-a / big?` questions carry an attribute object, not an
            // instance reference
            let mut object_overlay = None;
            let object = match &ast.object {
                Some(o) if o.has_wh() => ObjectRef::None,
                Some(o) if head == "is-a" => {
                    object_overlay = Some(self.part_overlay(o)?);
                    ObjectRef::None
                }
                Some(o) => ObjectRef::Instance(self.resolve_or_create(o, scene, speaker, report)?),
                None => ObjectRef::None,
            };
            let vi = self.insert_vi(
                ast.verb.words.clone(),
                verb,
                subject,
                object,
                object_overlay,
                ViKind::Question,
                scene,
                false,
            );
            report.vis.push(vi);
            return Ok(vi);
        }

        match head.as_str() {
            "exists" => {
                if self.scene_part(&ast.subject) {
                    let new_scene = self.resolve_scene_part(&ast.subject)?;
                    let vi = self.insert_vi(
                        ast.verb.words.clone(),
                        verb,
                        SubjectRef::Scene(new_scene),
                        ObjectRef::None,
                        None,
                        ViKind::AttributeSet,
                        scene,
                        false,
                    );
                    report.vis.push(vi);
                    Ok(vi)
                } else {
                    let overlay = self.part_overlay(&ast.subject)?;
                    let target = match &ast.subject.scene_ref {
                        Some(name) => self.scene_by_name(name)?,
                        None => scene,
                    };
                    let id =
                        self.create_instance(overlay, target, Self::part_label(&ast.subject));
                    report.created.push(id);
                    let vi = self.insert_vi(
                        ast.verb.words.clone(),
                        verb,
                        SubjectRef::Instance(id),
                        ObjectRef::None,
                        None,
                        ViKind::AttributeSet,
                        target,
                        false,
                    );
                    report.vis.push(vi);
                    Ok(vi)
                }
            }
            "is-a" => {
                let object = ast.object.as_ref().ok_or_else(|| EngineError::VerbArity {
                    verb: head.clone(),
                    expected: "an attribute object".into(),
                })?;
                let subject = self.resolve_reference(&ast.subject, scene, speaker)?;
                let overlay = self.part_overlay(object)?;
                if let Some(inst) = self.instances.get_mut(&subject) {
                    inst.attributes.merge_max(&overlay);
                }
                self.touch(subject);
                let vi = self.insert_vi(
                    ast.verb.words.clone(),
                    verb,
                    SubjectRef::Instance(subject),
                    ObjectRef::None,
                    Some(overlay),
                    ViKind::AttributeSet,
                    scene,
                    false,
                );
                report.vis.push(vi);
                Ok(vi)
            }
            "changes" => {
                let object = ast.object.as_ref().ok_or_else(|| EngineError::VerbArity {
                    verb: head.clone(),
                    expected: "a change overlay".into(),
                })?;
                let subject = self.resolve_reference(&ast.subject, scene, speaker)?;
                let overlay = self.part_overlay(object)?;
                self.apply_changes_vi(subject, overlay, ast.verb.words.clone(), verb, scene, false, report)
            }
            "leaves-scene" => {
                let subject = self.resolve_reference(&ast.subject, scene, speaker)?;
                self.remove_from_scenes(subject);
                let vi = self.insert_vi(
                    ast.verb.words.clone(),
                    verb,
                    SubjectRef::Instance(subject),
                    ObjectRef::None,
                    None,
                    ViKind::Action,
                    scene,
                    false,
                );
                report.vis.push(vi);
                Ok(vi)
            }
            "is-somatically-identical" | "is-fictionally-identical" | "is-view-identical" => {
                let object = ast.object.as_ref().ok_or_else(|| EngineError::VerbArity {
                    verb: head.clone(),
                    expected: "an identity object".into(),
                })?;
                let kind = match head.as_str() {
                    "is-somatically-identical" => IdentityKind::Somatic,
                    "is-fictionally-identical" => IdentityKind::Fictional,
                    _ => IdentityKind::View,
                };
                let a = self.resolve_reference(&ast.subject, scene, speaker)?;
                let b = self.resolve_with_memory(object, scene, speaker, Some(a))?;
                let link = self.link_identity(kind, a, b, Provenance::ExplicitSentence)?;
                report.links.push(link);
                let vi = self.insert_vi(
                    ast.verb.words.clone(),
                    verb,
                    SubjectRef::Instance(a),
                    ObjectRef::Instance(b),
                    None,
                    ViKind::RelationSet,
                    scene,
                    false,
                );
                report.vis.push(vi);
                Ok(vi)
            }
            "is-future-hypothetical" => {
                let object = ast.object.as_ref().ok_or_else(|| EngineError::VerbArity {
                    verb: head.clone(),
                    expected: "a scene object".into(),
                })?;
                let a = self.resolve_scene_part(&ast.subject)?;
                let b = self.resolve_scene_part(object)?;
                if let Some(s) = self.scenes.get_mut(&a) {
                    s.relations.push((head.clone(), b));
                }
                let vi = self.insert_vi(
                    ast.verb.words.clone(),
                    verb,
                    SubjectRef::Scene(a),
                    ObjectRef::None,
                    None,
                    ViKind::RelationSet,
                    scene,
                    false,
                );
                report.vis.push(vi);
                Ok(vi)
            }
            _ if self.kb.is_relation_verb(&head) => {
                let object = ast.object.as_ref().ok_or_else(|| EngineError::VerbArity {
                    verb: head.clone(),
                    expected: "a relation object".into(),
                })?;
                let subject = self.resolve_or_create(&ast.subject, scene, speaker, report)?;
                let obj = self.resolve_or_create(object, scene, speaker, report)?;
                let vi = self.insert_vi(
                    ast.verb.words.clone(),
                    verb,
                    SubjectRef::Instance(subject),
                    ObjectRef::Instance(obj),
                    None,
                    ViKind::RelationSet,
                    scene,
                    false,
                );
                self.relations.push(RelationEdge { word: head, from: subject, to: obj, vi });
                report.vis.push(vi);
                Ok(vi)
            }
            _ => {
                // plain action verb
                let subject = self.resolve_or_create(&ast.subject, scene, speaker, report)?;
                let object = match &ast.object {
                    Some(o) => {
                        ObjectRef::Instance(self.resolve_or_create(o, scene, speaker, report)?)
                    }
                    None => ObjectRef::None,
                };
                let vi = self.insert_vi(
                    ast.verb.words.clone(),
                    verb.clone(),
                    SubjectRef::Instance(subject),
                    object,
                    None,
                    ViKind::Action,
                    scene,
                    false,
                );
                // verbs that overlap `eats` consume their object: it leaves
                // the scene (and then decays out of the focus)
                if let ObjectRef::Instance(obj) = object {
                    if self.verb_consumes(&verb) {
                        self.remove_from_scenes(obj);
                        report.removed.push(obj);
                    }
                }
                report.vis.push(vi);
                Ok(vi)
            }
        }
    }

    fn bare_scene_subject(part: &PartAst) -> bool {
        part.article == Article::None
            && part.words.len() == 1
            && part.words[0] == "scene"
            && part.proper_noun.is_none()
            && part.rel.is_none()
    }

    pub(crate) fn verb_consumes(&self, verb: &Overlay) -> bool {
        match self.kb.concept_by_name(ConceptKind::Verb, "eats") {
            Some(eats) => self.kb.query_attribute(verb, eats) >= 0.5,
            None => false,
        }
    }

    pub(crate) fn remove_from_scenes(&mut self, id: InstanceId) {
        let scenes: Vec<SceneId> = self
            .instances
            .get(&id)
            .map(|i| i.scenes.iter().copied().collect())
            .unwrap_or_default();
        for s in scenes {
            if let Some(scene) = self.scenes.get_mut(&s) {
                scene.members.remove(&id);
            }
        }
        // `Instance::scenes` keeps every scene the instance ever inhabited:
        // identity sentences may still refer back through the scene name.
    }

    /// Record a typed identity link, enforcing the somatic co-focus rule and
    /// chain orientation (older instance first).
    pub fn link_identity(
        &mut self,
        kind: IdentityKind,
        a: InstanceId,
        b: InstanceId,
        provenance: Provenance,
    ) -> Result<IdentityLink, EngineError> {
        let (a, b) = if kind == IdentityKind::Somatic {
            let created = |id: InstanceId| {
                self.instances
                    .get(&id)
                    .map(|i| i.created)
                    .or_else(|| self.memory.instance(id).map(|m| m.created))
                    .unwrap_or(0.0)
            };
            if created(a) <= created(b) {
                (a, b)
            } else {
                (b, a)
            }
        } else {
            (a, b)
        };
        let both_in_focus = self.in_focus(ComponentId::Instance(a))
            && self.in_focus(ComponentId::Instance(b));
        let link = self.identity.link(
            kind,
            a,
            b,
            self.focus.clock,
            provenance,
            both_in_focus,
            self.params.strict,
        )?;
        Ok(link)
    }

    /// The side effect of the `changes` verb: a fresh instance carrying the
    /// grown attribute set, a somatic link, and the old instance leaves the
    /// focus immediately. View identity is inherited by the new instance.
    pub fn apply_changes(
        &mut self,
        subject: InstanceId,
        overlay: Overlay,
    ) -> Result<InstanceId, EngineError> {
        let mut report = EffectReport::default();
        let scene = self.focus.current_scene.ok_or(EngineError::NoCurrentScene)?;
        let verb = self.verb_overlay(&["changes".to_string()])?;
        let vi = self.apply_changes_vi(
            subject,
            overlay,
            vec!["changes".to_string()],
            verb,
            scene,
            false,
            &mut report,
        )?;
        match self.vis[&vi].object {
            ObjectRef::Instance(id) => Ok(id),
            _ => unreachable!("changes VI records the new instance"),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn apply_changes_vi(
        &mut self,
        subject: InstanceId,
        overlay: Overlay,
        verb_words: Vec<String>,
        verb: Overlay,
        scene: SceneId,
        inferred: bool,
        report: &mut EffectReport,
    ) -> Result<ViId, EngineError> {
        if !self.in_focus(ComponentId::Instance(subject)) {
            return Err(EngineError::NotInFocus(subject));
        }
        let mut attrs = self.instances[&subject].attributes.clone();
        attrs.merge_max(&overlay);
        let label = self.instances[&subject].label.clone();
        let new = self.create_instance(attrs, scene, label);
        report.created.push(new);

        // record the event while the old instance is still in focus, so the
        // incoming VI is compared against predictions about that instance
        let vi = self.insert_vi(
            verb_words,
            verb,
            SubjectRef::Instance(subject),
            ObjectRef::Instance(new),
            Some(overlay),
            ViKind::Action,
            scene,
            inferred,
        );
        report.vis.push(vi);

        // then the old instance leaves focus and scene immediately
        self.remove_from_scenes(subject);
        self.demote_instance(subject)?;
        report.removed.push(subject);

        let link =
            self.link_identity(IdentityKind::Somatic, subject, new, Provenance::ChangesSideEffect)?;
        report.links.push(link);
        self.identity.inherit_view_links(subject, new, self.focus.clock);
        Ok(vi)
    }

    // ------------------------------------------------------------------
    // Dynamics
    // ------------------------------------------------------------------

    fn lambda_for(&self, c: ComponentId) -> f64 {
        match c {
            ComponentId::Instance(_) => self.params.lambda_instance,
            ComponentId::Vi(v) => match self.vis.get(&v).map(|v| v.kind) {
                Some(k) if k.in_succession() => self.params.lambda_action_vi,
                _ => self.params.lambda_stative_vi,
            },
        }
    }

    /// One focus decay step: exponential decay per component kind, refresh of
    /// participating instances, push-out of action VIs by their successors,
    /// demotion of components that fell below the eviction threshold.
    pub fn focus_tick(&mut self, dt: f64) -> Result<Vec<ComponentId>, EngineError> {
        if dt < 0.0 {
            return Err(EngineError::NegativeDt(dt));
        }
        // push-out: action VIs are displaced by acquired successors
        let acquired = std::mem::take(&mut self.successors_acquired);
        for (vi, n) in acquired {
            if let Some(w) = self.focus.weights.get_mut(&ComponentId::Vi(vi)) {
                *w *= self.params.rho.powi(n as i32);
            }
        }
        // exponential decay
        let lambdas: Vec<(ComponentId, f64)> = self
            .focus
            .weights
            .keys()
            .map(|c| (*c, self.lambda_for(*c)))
            .collect();
        for (c, lambda) in lambdas {
            if let Some(w) = self.focus.weights.get_mut(&c) {
                *w *= (-lambda * dt).exp();
            }
        }
        // refresh instances that participated in a VI since the last tick
        let participated = std::mem::take(&mut self.participated);
        for id in participated {
            if let Some(w) = self.focus.weights.get_mut(&ComponentId::Instance(id)) {
                *w = 1.0;
            }
        }
        // demote everything below the eviction threshold
        let evicted: Vec<ComponentId> = self
            .focus
            .weights
            .iter()
            .filter(|(_, w)| **w < self.params.eps_evict)
            .map(|(c, _)| *c)
            .collect();
        for c in &evicted {
            match c {
                ComponentId::Instance(i) => self.demote_instance(*i)?,
                ComponentId::Vi(v) => self.demote_vi(*v)?,
            };
        }
        self.focus.clock += dt;
        Ok(evicted)
    }

    /// Run the diffusion activities for `duration` seconds in discrete
    /// sub-steps.
    pub fn diffuse(&mut self, duration: f64) -> Result<(), EngineError> {
        let steps = if duration > 0.0 { self.params.da_substeps.max(1) } else { 1 };
        let dt = duration / steps as f64;
        for _ in 0..steps {
            self.focus_tick(dt)?;
            self.shadow_tick(dt);
            self.trace_da();
        }
        Ok(())
    }

    /// Execute a story: each sentence is a spike activity followed by
    /// `pacing` seconds of diffusion. A pacing of at least the respiro
    /// threshold lets the agent instantiate its strongest predicted events.
    pub fn run_story(
        &mut self,
        asts: &[SentenceAst],
        pacing: f64,
    ) -> Result<EffectReport, EngineError> {
        let mut total = EffectReport::default();
        for ast in asts {
            let report = self.execute(ast)?;
            total.vis.extend(report.vis);
            total.created.extend(report.created);
            total.removed.extend(report.removed);
            total.links.extend(report.links);
            self.diffuse(pacing)?;
            if pacing >= self.params.tau_respiro {
                let max = self.params.max_inferences;
                let inferred = self.instantiate_inferences(max)?;
                total.vis.extend(inferred);
            }
        }
        Ok(total)
    }

    // ------------------------------------------------------------------
    // Demotion to memory
    // ------------------------------------------------------------------

    pub(crate) fn demote_instance(&mut self, id: InstanceId) -> Result<f64, EngineError> {
        let c = ComponentId::Instance(id);
        if self.demoted.contains(&c) {
            return Err(ShadowError::DoubleDemotion(c).into());
        }
        let inst = self
            .instances
            .remove(&id)
            .ok_or(ShadowError::NeverInFocus(c))?;
        self.focus.weights.remove(&c);
        self.demoted.insert(c);
        self.shadows.inst.remove(&id);
        let scene_names: BTreeSet<String> = inst
            .scenes
            .iter()
            .chain(self.scenes.values().filter(|s| s.members.contains(&id)).map(|s| &s.id))
            .filter_map(|s| self.scenes.get(s).and_then(|s| s.name.clone()))
            .collect();
        for s in self.scenes.values_mut() {
            s.members.remove(&id);
        }
        let time_in_focus = self.focus.clock - inst.entered_focus;
        let salience = self.params.w_time * time_in_focus
            + self.params.w_part * inst.participation as f64;
        // record every scene the instance ever inhabited
        let mut names = scene_names;
        for s in &inst.scenes {
            if let Some(n) = self.scenes.get(s).and_then(|s| s.name.clone()) {
                names.insert(n);
            }
        }
        self.memory.demote_instance(&inst, salience, names, self.focus.clock);
        Ok(salience)
    }

    pub(crate) fn demote_vi(&mut self, id: ViId) -> Result<f64, EngineError> {
        let c = ComponentId::Vi(id);
        if self.demoted.contains(&c) {
            return Err(ShadowError::DoubleDemotion(c).into());
        }
        let vi = self.vis.remove(&id).ok_or(ShadowError::NeverInFocus(c))?;
        self.focus.weights.remove(&c);
        self.demoted.insert(c);
        self.shadows.vi.remove(&id);
        if let Some(s) = self.scenes.get_mut(&vi.scene) {
            if s.last_action_vi == Some(id) {
                s.last_action_vi = None;
            }
        }
        let time_in_focus = self.focus.clock - vi.created;
        let participation = vi.successors.len() + vi.predecessors.len();
        let salience = self.params.w_time * time_in_focus
            + self.params.w_part * participation as f64;
        let scene_name = self.scenes.get(&vi.scene).and_then(|s| s.name.clone());
        self.memory.demote_vi(&vi, salience, scene_name, self.focus.clock);
        Ok(salience)
    }

    /// Force-demote every remaining focus component (used when a narration
    /// ends and the agent moves on).
    pub fn demote_all(&mut self) -> Result<(), EngineError> {
        let components: Vec<ComponentId> = self.focus.weights.keys().copied().collect();
        for c in components {
            match c {
                ComponentId::Instance(i) => {
                    self.demote_instance(i)?;
                }
                ComponentId::Vi(v) => {
                    self.demote_vi(v)?;
                }
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Reporting helpers
    // ------------------------------------------------------------------

    /// All instances (focus and memory) whose attributes activate the concept
    /// interned for `word`.
    pub fn instances_bearing(&self, word: &str) -> Vec<InstanceId> {
        let Some(c) = self.kb.concept_by_name(ConceptKind::Attribute, word) else {
            return Vec::new();
        };
        let mut out: Vec<InstanceId> = self
            .instances
            .values()
            .filter(|i| i.attributes.energy(c) > 0.0)
            .map(|i| i.id)
            .chain(
                self.memory
                    .instances()
                    .filter(|m| m.attributes.energy(c) > 0.0)
                    .map(|m| m.id),
            )
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn instance_label(&self, id: InstanceId) -> String {
        if let Some(i) = self.instances.get(&id) {
            return i.label.clone();
        }
        if let Some(m) = self.memory.instance(id) {
            return m.label.clone();
        }
        id.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_story;

    fn seed_kb() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        kb.load_str(
            "concept girl = human:1.0 female:1.0 young:0.5 small:0.5\n\
             concept wolf = animal:1.0 wolf:1.0\n\
             concept scene\n\
             concept door = object:1.0 door:1.0\n\
             concept hood = object:1.0 hood:1.0\n\
             concept red\n\
             concept small\n\
             concept little\n\
             concept dead = dead:1.0\n\
             verb eats\n\
             verb swallows\n\
             voverlap swallows eats full\n\
             relation has\n\
             relation loves\n",
        )
        .unwrap();
        kb
    }

    fn agent() -> Agent {
        Agent::new(seed_kb(), Params::default())
    }

    fn run(a: &mut Agent, text: &str) -> EffectReport {
        let asts = parse_story(text).unwrap();
        let mut total = EffectReport::default();
        for ast in &asts {
            let r = a.execute(ast).unwrap_or_else(|e| panic!("{text}: {e}"));
            total.vis.extend(r.vis);
            total.created.extend(r.created);
            total.removed.extend(r.removed);
            total.links.extend(r.links);
        }
        total
    }

    #[test]
    fn bootstrap_requires_scene() {
        let mut a = agent();
        let asts = parse_story("A girl / exists.").unwrap();
        assert!(matches!(a.execute(&asts[0]), Err(EngineError::AtLine { .. })));
        run(&mut a, "A scene \"s\" / is-current-scene. A girl / exists.");
        assert_eq!(a.instances().count(), 1);
    }

    #[test]
    fn succession_only_between_action_vis() {
        let mut a = agent();
        let r = run(
            &mut a,
            "A scene \"house\" / is-current-scene.\n\
             A wolf / exists.\n\
             A door / exists.\n\
             A girl \"Grandma\" / exists.\n\
             The wolf / knocks / the door.\n\
             \"Grandma\" / opens / the door.\n\
             \"Grandma\" / is-a / small girl.",
        );
        let knocks = r.vis[4];
        let opens = r.vis[5];
        let isa = r.vis[6];
        assert!(a.vi(opens).unwrap().predecessors.contains(&knocks));
        assert!(a.vi(knocks).unwrap().successors.contains(&opens));
        assert_eq!(a.vi(isa).unwrap().kind, ViKind::AttributeSet);
        assert!(a.vi(isa).unwrap().predecessors.is_empty());
        assert!(a.vi(opens).unwrap().successors.is_empty());
    }

    #[test]
    fn resolution_prefers_strongest_weighted_match() {
        let mut a = agent();
        run(&mut a, "A scene \"s\" / is-current-scene. A wolf / exists. A wolf / exists.");
        let ids: Vec<InstanceId> = a.instances().map(|i| i.id).collect();
        // weaken the first wolf by hand
        a.focus.weights.insert(ComponentId::Instance(ids[0]), 0.4);
        a.focus.weights.insert(ComponentId::Instance(ids[1]), 0.9);
        let asts = parse_story("The wolf / exits / wh?").unwrap();
        let part = &asts[0].subject;
        let scene = a.current_scene().unwrap();
        let got = a.resolve_reference(part, scene, None).unwrap();
        // brute-force oracle over all members
        let overlay = a.part_overlay(part).unwrap();
        let want = a.scenes[&scene]
            .members
            .iter()
            .map(|id| {
                let m = a.kb.overlay_match(&overlay, &a.instances[id].attributes).unwrap();
                let w = a.focus_weight(ComponentId::Instance(*id)).unwrap();
                (*id, m * w)
            })
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(got, want);
        assert_eq!(got, ids[1]);
    }

    #[test]
    fn indefinite_article_always_creates() {
        let mut a = agent();
        run(
            &mut a,
            "A scene \"s\" / is-current-scene.\n\
             A girl \"LRRH\" / exists.\n\
             \"LRRH\" / has / a hood.",
        );
        assert_eq!(a.instances().count(), 2);
        assert_eq!(a.relations().len(), 1);
        // a second indefinite proper noun makes a NEW instance
        run(&mut a, "An \"LRRH\" / exists.");
        assert_eq!(a.instances_bearing("LRRH").len(), 2);
        assert!(a.identity.links().is_empty());
    }

    #[test]
    fn changes_creates_somatic_chain() {
        let mut a = agent();
        let r = run(
            &mut a,
            "A scene \"s\" / is-current-scene.\n\
             A wolf / exists.\n\
             The wolf / changes / dead.",
        );
        assert_eq!(r.links.len(), 1);
        let link = r.links[0];
        assert_eq!(link.kind, IdentityKind::Somatic);
        // old one left focus immediately, new one carries old + new attributes
        assert!(!a.in_focus(ComponentId::Instance(link.a)));
        assert!(a.in_focus(ComponentId::Instance(link.b)));
        let dead = a.kb.concept_by_name(ConceptKind::Attribute, "dead").unwrap();
        let wolf = a.kb.concept_by_name(ConceptKind::Attribute, "wolf").unwrap();
        let attrs = &a.instance(link.b).unwrap().attributes;
        assert_eq!(attrs.energy(dead), 1.0);
        assert_eq!(attrs.energy(wolf), 1.0);
        // degenerate change still forks the instance
        let wolf2 = link.b;
        let new = a.apply_changes(wolf2, Overlay::new(ConceptKind::Attribute)).unwrap();
        assert!(a.identity.has_link(IdentityKind::Somatic, wolf2, new));
    }

    #[test]
    fn focus_decay_matches_closed_form() {
        let mut a = agent();
        run(&mut a, "A scene \"s\" / is-current-scene. A wolf / exists.");
        let id = a.instances().next().unwrap().id;
        let c = ComponentId::Instance(id);
        a.focus_tick(0.0).unwrap();
        assert_eq!(a.focus_weight(c), Some(1.0));
        a.focus_tick(1.0).unwrap();
        // lambda_instance = 0.05
        let want = (-0.05f64).exp();
        assert!((a.focus_weight(c).unwrap() - want).abs() < 1e-12);
        assert!(a.focus_tick(-1.0).is_err());
    }

    #[test]
    fn push_out_multiplies_by_rho() {
        let mut a = agent();
        run(
            &mut a,
            "A scene \"s\" / is-current-scene.\n\
             A wolf / exists.\n\
             A door / exists.\n\
             The wolf / knocks / the door.",
        );
        let knocks = *a.vis().map(|v| &v.id).last().unwrap();
        a.focus.weights.insert(ComponentId::Vi(knocks), 0.8);
        run(&mut a, "The wolf / opens / the door.");
        // one successor acquired; rho = 0.5 applies at the next tick, before decay
        a.focus_tick(0.0).unwrap();
        let got = a.focus_weight(ComponentId::Vi(knocks)).unwrap();
        assert!((got - 0.4).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn never_return_after_demotion() {
        let mut a = agent();
        run(&mut a, "A scene \"s\" / is-current-scene. A wolf / exists.");
        let id = a.instances().next().unwrap().id;
        // decay until eviction
        for _ in 0..100 {
            a.focus_tick(1.0).unwrap();
        }
        assert!(!a.in_focus(ComponentId::Instance(id)));
        assert!(a.memory.instance(id).is_some());
        // double demotion is an error
        assert!(a.demote_instance(id).is_err());
        // a later wolf is a fresh id
        run(&mut a, "A wolf / exists.");
        let id2 = a.instances().next().unwrap().id;
        assert_ne!(id, id2);
    }

    #[test]
    fn quote_resolves_in_named_scene() {
        let mut a = agent();
        let r = run(
            &mut a,
            "A scene \"bedroom\" / is-current-scene.\n\
             A girl \"Cindy\" / exists.\n\
             A scene \"fairytale\" / exists.\n\
             \"Cindy\" / says in \"fairytale\" // a little girl / exists.",
        );
        // inquit + quoted exists
        let inquit = *r.vis.last().unwrap();
        assert_eq!(a.vi(inquit).unwrap().kind, ViKind::Quote);
        let quoted = a.vi(inquit).unwrap().quoted.unwrap();
        let fairytale = a.scene_by_name("fairytale").unwrap();
        assert_eq!(a.vi(quoted).unwrap().scene, fairytale);
        let girl = match a.vi(quoted).unwrap().subject {
            SubjectRef::Instance(i) => i,
            _ => panic!(),
        };
        assert!(a.scene(fairytale).unwrap().members.contains(&girl));
    }

    #[test]
    fn pronoun_i_resolves_to_speaker() {
        let mut a = agent();
        run(
            &mut a,
            "A scene \"bedroom\" / is-current-scene.\n\
             A girl \"Cindy\" / exists.\n\
             \"Cindy\" / says in \"bedroom\" // i / has / a red hood.",
        );
        let cindy = a.instances_bearing("Cindy")[0];
        let edge = &a.relations()[0];
        assert_eq!(edge.from, cindy);
    }

    #[test]
    fn consuming_verb_removes_object_from_scene() {
        let mut a = agent();
        run(
            &mut a,
            "A scene \"s\" / is-current-scene.\n\
             A wolf / exists.\n\
             A girl \"Grandma\" / exists.\n\
             The wolf / swallows / \"Grandma\".",
        );
        let grandma = a.instances_bearing("Grandma")[0];
        let scene = a.current_scene().unwrap();
        assert!(!a.scene(scene).unwrap().members.contains(&grandma));
        // still in focus until decay
        assert!(a.in_focus(ComponentId::Instance(grandma)));
    }

    #[test]
    fn is_only_scene_demotes_other_members() {
        let mut a = agent();
        run(
            &mut a,
            "A scene \"a\" / is-current-scene.\n\
             A girl / exists.\n\
             A scene \"b\" / is-only-scene.",
        );
        assert_eq!(a.instances().count(), 0);
        assert_eq!(a.memory.instances().count(), 1);
    }

    #[test]
    fn somatic_identity_resolves_into_memory() {
        let mut a = agent();
        run(
            &mut a,
            "A scene \"house\" / is-current-scene.\n\
             A girl \"LRRH\" / exists.\n\
             A wolf / exists.\n\
             The wolf / swallows / \"LRRH\".",
        );
        let old = a.instances_bearing("LRRH")[0];
        // let the swallowed instance decay out of focus
        for _ in 0..100 {
            a.focus_tick(1.0).unwrap();
        }
        assert!(!a.in_focus(ComponentId::Instance(old)));
        run(
            &mut a,
            "A scene \"house2\" / is-current-scene.\n\
             An \"LRRH\" / exists.\n\
             \"LRRH\" / is-somatically-identical / \"LRRH\" --in-- \"house\".",
        );
        let lrrhs = a.instances_bearing("LRRH");
        assert_eq!(lrrhs.len(), 2);
        assert!(a.identity.has_link(IdentityKind::Somatic, old, lrrhs[1]));
        // chain is oriented old -> new
        assert_eq!(a.identity.somatic_successor(old), Some(lrrhs[1]));
    }

    #[test]
    fn deterministic_trace() {
        let text = "A scene \"s\" / is-current-scene.\n\
                    A girl \"LRRH\" / exists.\n\
                    A wolf / exists.\n\
                    The wolf / swallows / \"LRRH\".";
        let render = |_: ()| {
            let mut a = agent();
            let asts = parse_story(text).unwrap();
            a.run_story(&asts, 1.5).unwrap();
            a.render_trace()
        };
        assert_eq!(render(()), render(()));
    }
}
