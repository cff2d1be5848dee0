//! Exhaustive satisfiability by enumerating every structurally valid
//! instance: ancestor-closed inclusion sets times version choices, with no
//! selection below a selected unit.

use std::collections::{BTreeMap, BTreeSet};

use contract_cad::{
    Atom, Checker, ConstraintKind, DocumentInstance, GenericDocument, Mode, UnitId, VersionId,
};

use crate::{parents, preorder};

/// How many candidate instances [`exhaustive`] visits.
pub fn candidate_count(doc: &GenericDocument) -> u128 {
    fn count(doc: &GenericDocument, u: &UnitId, shadowed: bool, root: bool) -> u128 {
        let children = |shadow: bool| -> u128 {
            doc.units[u]
                .children
                .iter()
                .map(|c| count(doc, c, shadow, false))
                .product()
        };
        let versions = doc.versions_of(u.as_str()).len() as u128;
        let excluded = if root { 0 } else { 1 };
        let selected = if shadowed {
            0
        } else {
            versions * children(true)
        };
        excluded + children(shadowed) + selected
    }
    count(doc, &doc.root, false, true)
}

/// Whether `inst` meets every non-parameter constraint and every
/// completeness requirement.
pub fn acceptable(checker: &Checker, inst: &DocumentInstance) -> bool {
    let doc = checker.doc();
    let holds = |a: &Atom| match a {
        Atom::UnitIncluded(u) => inst.included.contains(u),
        Atom::VersionSelected(v) => inst.selections.values().any(|s| s == v),
    };
    let constraints_hold = checker.constraints().iter().all(|c| match &c.kind {
        ConstraintKind::Requires {
            antecedent,
            consequent,
        } => !holds(antecedent) || inst.included.contains(consequent),
        ConstraintKind::Excludes { a, b } => !(holds(a) && holds(b)),
        ConstraintKind::ExactlyOne { group } => {
            group.iter().filter(|u| inst.included.contains(*u)).count() == 1
        }
        ConstraintKind::ParamRule { .. } => true,
    });
    if !constraints_hold {
        return false;
    }
    let parent = parents(doc);
    let ancestors = |u: &UnitId| {
        std::iter::successors(parent.get(u), |p| parent.get(*p))
            .cloned()
            .collect::<Vec<_>>()
    };
    // Every selection on an included unit, none above another.
    for u in inst.selections.keys() {
        if !inst.included.contains(u)
            || ancestors(u).iter().any(|a| inst.selections.contains_key(a))
        {
            return false;
        }
    }
    for u in &inst.included {
        if ancestors(u).iter().any(|a| !inst.included.contains(a)) {
            return false;
        }
        if doc.versions_of(u.as_str()).is_empty() || inst.selections.contains_key(u) {
            continue;
        }
        let covered = ancestors(u).iter().any(|a| inst.selections.contains_key(a))
            || inst.selections.keys().any(|s| ancestors(s).contains(u));
        if !covered {
            return false;
        }
    }
    true
}

/// The first acceptable instance in enumeration order, if any.
pub fn exhaustive(checker: &Checker) -> Option<DocumentInstance> {
    let doc = checker.doc();
    let units = preorder(doc);
    let parent = parents(doc);
    let mut inst = DocumentInstance::new("oracle", doc, Mode::Notify);
    inst.included.clear();
    let mut walk = Walk {
        checker,
        units: &units,
        parent: &parent,
        inst: &mut inst,
    };
    walk.visit(0).then_some(inst)
}

struct Walk<'a> {
    checker: &'a Checker,
    units: &'a [UnitId],
    parent: &'a BTreeMap<UnitId, UnitId>,
    inst: &'a mut DocumentInstance,
}

impl Walk<'_> {
    fn visit(&mut self, i: usize) -> bool {
        let Some(u) = self.units.get(i).cloned() else {
            return acceptable(self.checker, self.inst);
        };
        let parent = self.parent.get(&u);
        if parent.is_some_and(|p| !self.inst.included.contains(p)) {
            return self.visit(i + 1);
        }
        let shadowed = {
            let mut seen = BTreeSet::new();
            let mut cursor = parent;
            while let Some(p) = cursor {
                seen.insert(p);
                cursor = self.parent.get(p);
            }
            seen.iter().any(|a| self.inst.selections.contains_key(*a))
        };
        self.inst.included.insert(u.clone());
        if !shadowed {
            let versions: Vec<VersionId> = self
                .checker
                .doc()
                .versions_of(u.as_str())
                .iter()
                .map(|v| v.id.clone())
                .collect();
            for v in versions {
                self.inst.selections.insert(u.clone(), v);
                if self.visit(i + 1) {
                    return true;
                }
            }
            self.inst.selections.remove(&u);
        }
        if self.visit(i + 1) {
            return true;
        }
        self.inst.included.remove(&u);
        parent.is_some() && self.visit(i + 1)
    }
}
