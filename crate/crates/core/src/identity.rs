//! Typed identity graph over instances.
//!
//! Three relation kinds: somatic (same body over time, a directed chain),
//! fictional (imagined alter ego, undirected) and view (same entity seen
//! differently across scenes, undirected). Identity never copies attributes;
//! it only connects instances.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::InstanceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IdentityKind {
    Somatic,
    Fictional,
    View,
}

impl std::fmt::Display for IdentityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdentityKind::Somatic => write!(f, "somatic"),
            IdentityKind::Fictional => write!(f, "fictional"),
            IdentityKind::View => write!(f, "view"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ExplicitSentence,
    ChangesSideEffect,
    Inferred,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::ExplicitSentence => write!(f, "explicit-sentence"),
            Provenance::ChangesSideEffect => write!(f, "changes-side-effect"),
            Provenance::Inferred => write!(f, "inferred"),
        }
    }
}

/// For somatic links `a` is the older instance and `b` the newer one; for
/// fictional and view links the orientation carries no meaning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityLink {
    pub kind: IdentityKind,
    pub a: InstanceId,
    pub b: InstanceId,
    pub created: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Error, PartialEq)]
pub enum IdentityError {
    #[error("identity link from an instance to itself")]
    SelfLink,
    #[error("duplicate {kind} identity link between {a} and {b}")]
    Duplicate { kind: IdentityKind, a: InstanceId, b: InstanceId },
    #[error("somatic identity between {a} and {b}: both are in focus")]
    SomaticCoFocus { a: InstanceId, b: InstanceId },
    #[error("somatic chain would branch at {at}")]
    SomaticBranch { at: InstanceId },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdentityGraph {
    links: Vec<IdentityLink>,
}

impl IdentityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn links(&self) -> &[IdentityLink] {
        &self.links
    }

    pub fn has_link(&self, kind: IdentityKind, a: InstanceId, b: InstanceId) -> bool {
        self.links
            .iter()
            .any(|l| l.kind == kind && ((l.a == a && l.b == b) || (l.a == b && l.b == a)))
    }

    pub fn somatic_successor(&self, of: InstanceId) -> Option<InstanceId> {
        self.links
            .iter()
            .find(|l| l.kind == IdentityKind::Somatic && l.a == of)
            .map(|l| l.b)
    }

    pub fn somatic_predecessor(&self, of: InstanceId) -> Option<InstanceId> {
        self.links
            .iter()
            .find(|l| l.kind == IdentityKind::Somatic && l.b == of)
            .map(|l| l.a)
    }

    /// Record a typed identity link.
    ///
    /// `both_in_focus` is checked only for somatic links: two somatically
    /// identical instances can never share the focus. `strict` rejects
    /// somatic chain branching (fission); lenient mode allows and records it.
    pub fn link(
        &mut self,
        kind: IdentityKind,
        a: InstanceId,
        b: InstanceId,
        created: f64,
        provenance: Provenance,
        both_in_focus: bool,
        strict: bool,
    ) -> Result<IdentityLink, IdentityError> {
        if a == b {
            return Err(IdentityError::SelfLink);
        }
        if self.has_link(kind, a, b) {
            return Err(IdentityError::Duplicate { kind, a, b });
        }
        if kind == IdentityKind::Somatic {
            if both_in_focus {
                return Err(IdentityError::SomaticCoFocus { a, b });
            }
            if strict {
                if self.somatic_successor(a).is_some() {
                    return Err(IdentityError::SomaticBranch { at: a });
                }
                if self.somatic_predecessor(b).is_some() {
                    return Err(IdentityError::SomaticBranch { at: b });
                }
            }
        }
        let link = IdentityLink { kind, a, b, created, provenance };
        self.links.push(link);
        Ok(link)
    }

    /// Connected component of `instance` under links of the given kinds;
    /// reflexive.
    pub fn closure(&self, instance: InstanceId, kinds: &[IdentityKind]) -> BTreeSet<InstanceId> {
        let mut seen = BTreeSet::from([instance]);
        let mut frontier = vec![instance];
        while let Some(cur) = frontier.pop() {
            for l in &self.links {
                if !kinds.contains(&l.kind) {
                    continue;
                }
                for next in [l.a, l.b] {
                    if (l.a == cur || l.b == cur) && seen.insert(next) {
                        frontier.push(next);
                    }
                }
            }
        }
        seen
    }

    /// Fictional partners of `instance` (used by shadow injection).
    pub fn fictional_partners(&self, instance: InstanceId) -> Vec<InstanceId> {
        let mut out: Vec<InstanceId> = self
            .links
            .iter()
            .filter(|l| l.kind == IdentityKind::Fictional)
            .filter_map(|l| {
                if l.a == instance {
                    Some(l.b)
                } else if l.b == instance {
                    Some(l.a)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }

    /// Duplicate every view link touching `old` onto `new`; the originals
    /// stay on the old, now immutable, instance. Returns how many were
    /// relinked.
    pub fn inherit_view_links(&mut self, old: InstanceId, new: InstanceId, clock: f64) -> usize {
        let targets: Vec<InstanceId> = self
            .links
            .iter()
            .filter(|l| l.kind == IdentityKind::View)
            .filter_map(|l| {
                if l.a == old {
                    Some(l.b)
                } else if l.b == old {
                    Some(l.a)
                } else {
                    None
                }
            })
            .collect();
        let mut count = 0;
        for t in targets {
            if t != new && !self.has_link(IdentityKind::View, new, t) {
                self.links.push(IdentityLink {
                    kind: IdentityKind::View,
                    a: new,
                    b: t,
                    created: clock,
                    provenance: Provenance::ChangesSideEffect,
                });
                count += 1;
            }
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: &[IdentityKind] = &[IdentityKind::Somatic, IdentityKind::Fictional, IdentityKind::View];

    fn i(n: u64) -> InstanceId {
        InstanceId(n)
    }

    #[test]
    fn link_preconditions() {
        let mut g = IdentityGraph::new();
        assert_eq!(
            g.link(IdentityKind::Somatic, i(1), i(1), 0.0, Provenance::ExplicitSentence, false, true),
            Err(IdentityError::SelfLink)
        );
        // both in focus is only an error for somatic links
        assert!(matches!(
            g.link(IdentityKind::Somatic, i(1), i(2), 0.0, Provenance::ExplicitSentence, true, true),
            Err(IdentityError::SomaticCoFocus { .. })
        ));
        g.link(IdentityKind::Fictional, i(1), i(2), 0.0, Provenance::ExplicitSentence, true, true)
            .unwrap();
        assert!(matches!(
            g.link(IdentityKind::Fictional, i(2), i(1), 1.0, Provenance::ExplicitSentence, true, true),
            Err(IdentityError::Duplicate { .. })
        ));
    }

    #[test]
    fn somatic_chains_stay_linear_in_strict_mode() {
        let mut g = IdentityGraph::new();
        g.link(IdentityKind::Somatic, i(1), i(2), 0.0, Provenance::ChangesSideEffect, false, true)
            .unwrap();
        g.link(IdentityKind::Somatic, i(2), i(3), 1.0, Provenance::ChangesSideEffect, false, true)
            .unwrap();
        assert!(matches!(
            g.link(IdentityKind::Somatic, i(1), i(4), 2.0, Provenance::ExplicitSentence, false, true),
            Err(IdentityError::SomaticBranch { .. })
        ));
        // lenient mode allows fission
        g.link(IdentityKind::Somatic, i(1), i(4), 2.0, Provenance::ExplicitSentence, false, false)
            .unwrap();
        assert_eq!(g.somatic_successor(i(2)), Some(i(3)));
        assert_eq!(g.somatic_predecessor(i(2)), Some(i(1)));
    }

    #[test]
    fn closure_reaches_the_whole_chain() {
        let mut g = IdentityGraph::new();
        g.link(IdentityKind::Somatic, i(1), i(2), 0.0, Provenance::ChangesSideEffect, false, true)
            .unwrap();
        g.link(IdentityKind::Somatic, i(2), i(3), 1.0, Provenance::ChangesSideEffect, false, true)
            .unwrap();
        g.link(IdentityKind::Fictional, i(1), i(5), 2.0, Provenance::ExplicitSentence, true, true)
            .unwrap();
        assert_eq!(g.closure(i(3), &[IdentityKind::Somatic]), BTreeSet::from([i(1), i(2), i(3)]));
        assert_eq!(g.closure(i(5), ALL), BTreeSet::from([i(1), i(2), i(3), i(5)]));
        assert_eq!(g.closure(i(9), ALL), BTreeSet::from([i(9)]));
    }

    #[test]
    fn view_links_are_inherited() {
        let mut g = IdentityGraph::new();
        assert_eq!(g.inherit_view_links(i(1), i(2), 0.0), 0);
        g.link(IdentityKind::View, i(1), i(7), 0.0, Provenance::ExplicitSentence, true, true)
            .unwrap();
        g.link(IdentityKind::View, i(1), i(8), 0.0, Provenance::ExplicitSentence, true, true)
            .unwrap();
        assert_eq!(g.inherit_view_links(i(1), i(2), 1.0), 2);
        assert!(g.has_link(IdentityKind::View, i(2), i(7)));
        assert!(g.has_link(IdentityKind::View, i(2), i(8)));
        // originals retained
        assert!(g.has_link(IdentityKind::View, i(1), i(7)));
    }
}
