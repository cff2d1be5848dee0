//! Requirement closure used by enforce mode.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Atom, Checker, ConstraintKind};
use crate::model::{DocumentInstance, ModelError, UnitId};

/// Why an atom became true during the closure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "kebab-case")]
pub enum Via {
    /// The unit being included, or the selection being made.
    Trigger,
    /// Included to keep the included set ancestor-closed.
    Ancestor,
    /// Forced by a requires constraint, or the constraint that was tripped.
    Constraint { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    #[serde(flatten)]
    pub via: Via,
    pub atom: Atom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum EnforceOutcome {
    /// Every unit the closure adds (including the trigger if it was not
    /// already present).
    Added { added: BTreeSet<UnitId> },
    /// The closure trips an exclusion or puts two members of an exactly-one
    /// group in. The chain leads from the trigger to the later of the two
    /// clashing atoms; its last step names the tripped constraint and the
    /// atom it clashes with.
    Contradiction { chain: Vec<ChainStep> },
}

struct Derivation {
    order: usize,
    via: Via,
    cause: Option<Atom>,
}

/// Forward closure over requires constraints starting at `seeds`.
pub(crate) struct Closure {
    pub included: BTreeSet<UnitId>,
    pub added: BTreeSet<UnitId>,
    derivations: BTreeMap<Atom, Derivation>,
    fresh: BTreeSet<Atom>,
}

impl Closure {
    /// `inst` must already reflect the triggering edit except for unit
    /// additions, which are passed as `trigger_unit`.
    pub fn run(
        checker: &Checker,
        inst: &DocumentInstance,
        trigger_unit: Option<&UnitId>,
        seed_atoms: &[Atom],
    ) -> Closure {
        let mut closure = Closure {
            included: inst.included.clone(),
            added: BTreeSet::new(),
            derivations: BTreeMap::new(),
            fresh: BTreeSet::new(),
        };
        let mut frontier = Vec::new();
        let mut order = 0;
        for atom in seed_atoms {
            closure.derivations.insert(
                atom.clone(),
                Derivation {
                    order,
                    via: Via::Trigger,
                    cause: None,
                },
            );
            if !checker_holds_before(atom, inst) {
                closure.fresh.insert(atom.clone());
            }
            frontier.push(atom.clone());
        }
        if let Some(u) = trigger_unit {
            closure.add(checker, u, Via::Trigger, None, &mut order, &mut frontier);
        }
        // Rounds: every requires constraint whose antecedent became true in the
        // previous round fires once, in constraint-id order.
        while !frontier.is_empty() {
            let mut fired: BTreeMap<&str, (&UnitId, &Atom)> = BTreeMap::new();
            for atom in &frontier {
                for (c, consequent) in checker.requires_from(atom) {
                    fired.insert(c.id.as_str(), (consequent, atom));
                }
            }
            let mut next = Vec::new();
            for (id, (consequent, antecedent)) in fired {
                closure.add(
                    checker,
                    consequent,
                    Via::Constraint { id: id.to_string() },
                    Some(antecedent.clone()),
                    &mut order,
                    &mut next,
                );
            }
            frontier = next;
        }
        closure
    }

    fn add(
        &mut self,
        checker: &Checker,
        unit: &UnitId,
        via: Via,
        cause: Option<Atom>,
        order: &mut usize,
        frontier: &mut Vec<Atom>,
    ) {
        let atom = Atom::UnitIncluded(unit.clone());
        let is_trigger = via == Via::Trigger;
        if self.included.contains(unit) {
            // An already-present trigger still fires its own requirements.
            if is_trigger && !self.derivations.contains_key(&atom) {
                self.derivations.insert(
                    atom.clone(),
                    Derivation {
                        order: *order,
                        via,
                        cause,
                    },
                );
                frontier.push(atom);
            }
            return;
        }
        *order += 1;
        self.included.insert(unit.clone());
        self.added.insert(unit.clone());
        self.fresh.insert(atom.clone());
        self.derivations.insert(
            atom.clone(),
            Derivation {
                order: *order,
                via,
                cause,
            },
        );
        frontier.push(atom.clone());
        let mut child = atom;
        for ancestor in checker.tree().ancestors(unit.as_str()) {
            if self.included.contains(ancestor) {
                break;
            }
            *order += 1;
            let a = Atom::UnitIncluded(ancestor.clone());
            self.included.insert(ancestor.clone());
            self.added.insert(ancestor.clone());
            self.fresh.insert(a.clone());
            self.derivations.insert(
                a.clone(),
                Derivation {
                    order: *order,
                    via: Via::Ancestor,
                    cause: Some(child.clone()),
                },
            );
            frontier.push(a.clone());
            child = a;
        }
    }

    fn holds(&self, checker: &Checker, inst: &DocumentInstance, atom: &Atom) -> bool {
        match atom {
            Atom::UnitIncluded(u) => self.included.contains(u),
            Atom::VersionSelected(_) => checker.holds(inst, atom),
        }
    }

    fn rank(&self, atom: &Atom) -> usize {
        if self.fresh.contains(atom) {
            self.derivations.get(atom).map_or(0, |d| d.order + 1)
        } else {
            0
        }
    }

    fn path(&self, atom: &Atom) -> Vec<ChainStep> {
        let mut steps = Vec::new();
        let mut cursor = Some(atom.clone());
        while let Some(a) = cursor {
            let Some(d) = self.derivations.get(&a) else {
                break;
            };
            if d.via == Via::Trigger {
                break;
            }
            steps.push(ChainStep {
                via: d.via.clone(),
                atom: a.clone(),
            });
            cursor = d.cause.clone();
        }
        steps.reverse();
        steps
    }

    /// The lowest-id constraint the closure trips, as a chain; `None` if consistent.
    pub fn contradiction(
        &self,
        checker: &Checker,
        inst: &DocumentInstance,
    ) -> Option<Vec<ChainStep>> {
        for c in checker.constraints() {
            let clash: Vec<Atom> = match &c.kind {
                ConstraintKind::Excludes { a, b } => {
                    if !(self.holds(checker, inst, a) && self.holds(checker, inst, b)) {
                        continue;
                    }
                    vec![a.clone(), b.clone()]
                }
                ConstraintKind::ExactlyOne { group } => {
                    let present: Vec<Atom> = group
                        .iter()
                        .filter(|u| self.included.contains(*u))
                        .map(|u| Atom::UnitIncluded(u.clone()))
                        .collect();
                    if present.len() < 2 {
                        continue;
                    }
                    present
                }
                _ => continue,
            };
            if !clash.iter().any(|a| self.fresh.contains(a)) {
                continue;
            }
            // Latest-derived atom carries the chain; the earliest other one is named last.
            let later = clash
                .iter()
                .max_by(|x, y| self.rank(x).cmp(&self.rank(y)).then_with(|| y.cmp(x)))
                .expect("non-empty clash");
            let other = clash
                .iter()
                .filter(|a| *a != later)
                .min_by(|x, y| self.rank(x).cmp(&self.rank(y)).then_with(|| x.cmp(y)))
                .expect("clash has two atoms");
            let mut chain = self.path(later);
            chain.push(ChainStep {
                via: Via::Constraint { id: c.id.clone() },
                atom: other.clone(),
            });
            return Some(chain);
        }
        None
    }
}

fn checker_holds_before(atom: &Atom, inst: &DocumentInstance) -> bool {
    match atom {
        Atom::UnitIncluded(u) => inst.included.contains(u),
        // Selection seeds are passed after the selection is made; treat them as new.
        Atom::VersionSelected(_) => false,
    }
}

pub(crate) fn enforce_include(
    checker: &Checker,
    inst: &DocumentInstance,
    unit: &UnitId,
) -> Result<EnforceOutcome, ModelError> {
    if checker.doc().unit(unit.as_str()).is_none() {
        return Err(ModelError::UnknownUnit(unit.clone()));
    }
    let closure = Closure::run(checker, inst, Some(unit), &[]);
    Ok(match closure.contradiction(checker, inst) {
        Some(chain) => EnforceOutcome::Contradiction { chain },
        None => EnforceOutcome::Added {
            added: closure.added,
        },
    })
}
