//! Naive fixpoint for enforce-mode inclusion.
//!
//! Every round rescans all requires constraints in id order and fires those
//! whose antecedent was derived in the previous round.

use std::collections::{BTreeMap, BTreeSet};

use contract_cad::constraint::{ChainStep, EnforceOutcome, Via};
use contract_cad::{Atom, Checker, Constraint, ConstraintKind, DocumentInstance, UnitId};

use crate::parents;

struct State<'a> {
    parent: BTreeMap<UnitId, UnitId>,
    inst: &'a DocumentInstance,
    included: BTreeSet<UnitId>,
    added: BTreeSet<UnitId>,
    derived: BTreeMap<Atom, (usize, Via, Option<Atom>)>,
    order: usize,
}

impl State<'_> {
    fn include(&mut self, unit: &UnitId, via: Via, cause: Option<Atom>, round: &mut Vec<Atom>) {
        if self.included.contains(unit) {
            return;
        }
        let mut atom = Atom::UnitIncluded(unit.clone());
        self.order += 1;
        self.included.insert(unit.clone());
        self.added.insert(unit.clone());
        self.derived.insert(atom.clone(), (self.order, via, cause));
        round.push(atom.clone());
        let mut cursor = self.parent.get(unit).cloned();
        while let Some(p) = cursor {
            if self.included.contains(&p) {
                break;
            }
            self.order += 1;
            let a = Atom::UnitIncluded(p.clone());
            self.included.insert(p.clone());
            self.added.insert(p.clone());
            self.derived
                .insert(a.clone(), (self.order, Via::Ancestor, Some(atom)));
            round.push(a.clone());
            atom = a;
            cursor = self.parent.get(&p).cloned();
        }
    }

    fn holds(&self, atom: &Atom) -> bool {
        match atom {
            Atom::UnitIncluded(u) => self.included.contains(u),
            Atom::VersionSelected(v) => self.inst.selections.values().any(|s| s == v),
        }
    }

    fn fresh(&self, atom: &Atom) -> bool {
        match atom {
            Atom::UnitIncluded(u) => self.added.contains(u),
            Atom::VersionSelected(_) => false,
        }
    }

    fn rank(&self, atom: &Atom) -> usize {
        if self.fresh(atom) {
            self.derived[atom].0 + 1
        } else {
            0
        }
    }

    fn path(&self, atom: &Atom) -> Vec<ChainStep> {
        let mut steps = Vec::new();
        let mut cursor = Some(atom.clone());
        while let Some(a) = cursor {
            match self.derived.get(&a) {
                Some((_, via, cause)) if *via != Via::Trigger => {
                    steps.push(ChainStep {
                        via: via.clone(),
                        atom: a.clone(),
                    });
                    cursor = cause.clone();
                }
                _ => break,
            }
        }
        steps.reverse();
        steps
    }
}

pub fn naive_enforce_include(
    checker: &Checker,
    inst: &DocumentInstance,
    trigger: &UnitId,
) -> EnforceOutcome {
    let mut constraints: Vec<&Constraint> = checker.constraints().iter().collect();
    constraints.sort_by(|a, b| a.id.cmp(&b.id));
    let mut s = State {
        parent: parents(checker.doc()),
        inst,
        included: inst.included.clone(),
        added: BTreeSet::new(),
        derived: BTreeMap::new(),
        order: 0,
    };
    let mut round = Vec::new();
    if s.included.contains(trigger) {
        let atom = Atom::UnitIncluded(trigger.clone());
        s.derived.insert(atom.clone(), (0, Via::Trigger, None));
        round.push(atom);
    } else {
        s.include(trigger, Via::Trigger, None, &mut round);
    }
    while !round.is_empty() {
        let previous: BTreeSet<Atom> = round.drain(..).collect();
        for c in &constraints {
            if let ConstraintKind::Requires {
                antecedent,
                consequent,
            } = &c.kind
            {
                if previous.contains(antecedent) {
                    s.include(
                        consequent,
                        Via::Constraint { id: c.id.clone() },
                        Some(antecedent.clone()),
                        &mut round,
                    );
                }
            }
        }
    }

    for c in &constraints {
        let clash: Vec<Atom> = match &c.kind {
            ConstraintKind::Excludes { a, b } if s.holds(a) && s.holds(b) => {
                vec![a.clone(), b.clone()]
            }
            ConstraintKind::ExactlyOne { group } => group
                .iter()
                .filter(|u| s.included.contains(*u))
                .map(|u| Atom::UnitIncluded(u.clone()))
                .collect(),
            _ => continue,
        };
        if clash.len() < 2 || !clash.iter().any(|a| s.fresh(a)) {
            continue;
        }
        let mut by_rank = clash.clone();
        by_rank.sort_by(|x, y| s.rank(x).cmp(&s.rank(y)).then_with(|| x.cmp(y)));
        let later_rank = s.rank(by_rank.last().expect("two atoms"));
        let later = by_rank
            .iter()
            .find(|a| s.rank(a) == later_rank)
            .expect("present")
            .clone();
        let other = by_rank
            .iter()
            .find(|a| **a != later)
            .expect("two atoms")
            .clone();
        let mut chain = s.path(&later);
        chain.push(ChainStep {
            via: Via::Constraint { id: c.id.clone() },
            atom: other,
        });
        return EnforceOutcome::Contradiction { chain };
    }
    EnforceOutcome::Added { added: s.added }
}
