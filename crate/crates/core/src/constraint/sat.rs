//! Backtracking search for a complete, violation-free instance.
//!
//! Units are decided in preorder. Each decision fixes inclusion and, for a
//! versioned unit not shadowed by a selected ancestor, which version (if
//! any) is selected. A constraint is evaluated as soon as every atom it
//! reads is decided, so dead branches are cut early. Parameter rules are
//! ignored: value domains are unbounded.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use std::collections::BTreeMap;

use super::{Atom, Checker, ConstraintKind};
use crate::exec::Exec;
use crate::model::{validate_structure, DocumentInstance, Mode, UnitId};

/// Searches refuse documents with more versioned units than this.
pub const SAT_MAX_VERSIONED_UNITS: usize = 25;
/// Searches refuse documents with more units (of any kind) than this.
pub const SAT_MAX_UNITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatOutcome {
    Witness(DocumentInstance),
    Unsatisfiable,
    /// The document fails structural validation; search needs a proper tree.
    InvalidDocument,
    TooLarge {
        units: usize,
        versioned_units: usize,
    },
}

#[derive(Debug, Clone, Copy)]
enum Check {
    Constraint(usize),
    AtMostOne(usize),
    Selection(usize),
}

struct Problem<'a> {
    checker: &'a Checker,
    units: Vec<UnitId>,
    parent: Vec<Option<usize>>,
    subtree_end: Vec<usize>,
    versions: Vec<Vec<crate::model::VersionId>>,
    checks: Vec<Vec<Check>>,
    pos: BTreeMap<UnitId, usize>,
}

#[derive(Debug, Clone)]
struct State {
    next: usize,
    included: Vec<bool>,
    selection: Vec<Option<usize>>,
}

impl<'a> Problem<'a> {
    fn new(checker: &'a Checker) -> Problem<'a> {
        let tree = checker.tree();
        let doc = checker.doc();
        let units: Vec<UnitId> = tree.preorder().to_vec();
        let pos: BTreeMap<UnitId, usize> = units
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, u)| (u, i))
            .collect();
        let parent = units
            .iter()
            .map(|u| tree.parent(u.as_str()).map(|p| pos[p]))
            .collect();
        let mut subtree_end: Vec<usize> = (0..units.len()).collect();
        for (i, u) in units.iter().enumerate().rev() {
            for child in &doc.units[u].children {
                if let Some(&c) = pos.get(child) {
                    subtree_end[i] = subtree_end[i].max(subtree_end[c]);
                }
            }
        }
        let versions: Vec<Vec<crate::model::VersionId>> = units
            .iter()
            .map(|u| {
                doc.versions_of(u.as_str())
                    .iter()
                    .map(|v| v.id.clone())
                    .collect()
            })
            .collect();

        let mut checks = vec![Vec::new(); units.len()];
        let atom_pos = |a: &Atom| match a {
            Atom::UnitIncluded(u) => pos[u],
            Atom::VersionSelected(v) => pos[checker.version_unit(v).expect("known version")],
        };
        for (i, c) in checker.constraints().iter().enumerate() {
            match &c.kind {
                ConstraintKind::Requires {
                    antecedent,
                    consequent,
                } => {
                    checks[atom_pos(antecedent).max(pos[consequent])].push(Check::Constraint(i));
                }
                ConstraintKind::Excludes { a, b } => {
                    checks[atom_pos(a).max(atom_pos(b))].push(Check::Constraint(i));
                }
                ConstraintKind::ExactlyOne { group } => {
                    let members: Vec<usize> = group.iter().map(|u| pos[u]).collect();
                    for &m in &members {
                        checks[m].push(Check::AtMostOne(i));
                    }
                    checks[*members.iter().max().expect("non-empty group")]
                        .push(Check::Constraint(i));
                }
                ConstraintKind::ParamRule { .. } => {}
            }
        }
        for (i, vs) in versions.iter().enumerate() {
            if !vs.is_empty() {
                checks[subtree_end[i]].push(Check::Selection(i));
            }
        }
        Problem {
            checker,
            units,
            parent,
            subtree_end,
            versions,
            checks,
            pos,
        }
    }

    fn holds(&self, s: &State, a: &Atom) -> bool {
        match a {
            Atom::UnitIncluded(u) => s.included[self.pos[u]],
            Atom::VersionSelected(v) => {
                let p = self.pos[self.checker.version_unit(v).expect("known version")];
                s.selection[p].is_some_and(|k| self.versions[p][k] == *v)
            }
        }
    }

    fn passes(&self, s: &State, check: Check) -> bool {
        let cs = self.checker.constraints();
        match check {
            Check::Constraint(i) => match &cs[i].kind {
                ConstraintKind::Requires {
                    antecedent,
                    consequent,
                } => !self.holds(s, antecedent) || s.included[self.pos[consequent]],
                ConstraintKind::Excludes { a, b } => !(self.holds(s, a) && self.holds(s, b)),
                ConstraintKind::ExactlyOne { group } => {
                    group.iter().filter(|u| s.included[self.pos[*u]]).count() == 1
                }
                ConstraintKind::ParamRule { .. } => true,
            },
            Check::AtMostOne(i) => match &cs[i].kind {
                ConstraintKind::ExactlyOne { group } => {
                    group
                        .iter()
                        .filter(|u| self.pos[*u] < s.next && s.included[self.pos[*u]])
                        .count()
                        <= 1
                }
                _ => true,
            },
            Check::Selection(i) => {
                !s.included[i]
                    || s.selection[i].is_some()
                    || self.shadowed(s, i)
                    || (i + 1..=self.subtree_end[i]).any(|d| s.selection[d].is_some())
            }
        }
    }

    fn shadowed(&self, s: &State, i: usize) -> bool {
        std::iter::successors(self.parent[i], |&p| self.parent[p]).any(|a| s.selection[a].is_some())
    }

    /// Decisions for the unit at `s.next`, in search order.
    fn options(&self, s: &State) -> Vec<(bool, Option<usize>)> {
        let i = s.next;
        let parent_in = self.parent[i].is_none_or(|p| s.included[p]);
        if !parent_in {
            return vec![(false, None)];
        }
        let mut out = Vec::new();
        if !self.versions[i].is_empty() && !self.shadowed(s, i) {
            out.extend((0..self.versions[i].len()).map(|k| (true, Some(k))));
        }
        out.push((true, None));
        if self.parent[i].is_some() {
            out.push((false, None));
        }
        out
    }

    fn step(&self, s: &State, (inc, sel): (bool, Option<usize>)) -> Option<State> {
        let mut next = s.clone();
        next.included[s.next] = inc;
        next.selection[s.next] = sel;
        next.next += 1;
        self.checks[s.next]
            .iter()
            .all(|&c| self.passes(&next, c))
            .then_some(next)
    }

    fn dfs(&self, s: State) -> Option<State> {
        if s.next == self.units.len() {
            return Some(s);
        }
        self.options(&s)
            .into_iter()
            .filter_map(|o| self.step(&s, o))
            .find_map(|child| self.dfs(child))
    }

    /// Partially decided states at a common depth, in search order.
    fn frontier(&self, target: usize) -> Vec<State> {
        let mut frontier = vec![State {
            next: 0,
            included: vec![false; self.units.len()],
            selection: vec![None; self.units.len()],
        }];
        while frontier.len() < target && frontier.first().is_some_and(|s| s.next < self.units.len())
        {
            frontier = frontier
                .iter()
                .flat_map(|s| {
                    self.options(s)
                        .into_iter()
                        .filter_map(move |o| self.step(s, o))
                })
                .collect();
        }
        frontier
    }

    fn witness(&self, s: State) -> DocumentInstance {
        let mut inst = DocumentInstance::new("witness", self.checker.doc(), Mode::Notify);
        for (i, u) in self.units.iter().enumerate() {
            if s.included[i] {
                inst.included.insert(u.clone());
            }
            if let Some(k) = s.selection[i] {
                inst.selections
                    .insert(u.clone(), self.versions[i][k].clone());
            }
        }
        inst
    }
}

pub(crate) fn satisfiable(checker: &Checker) -> SatOutcome {
    satisfiable_with(checker, Exec::default())
}

pub(crate) fn satisfiable_with(checker: &Checker, exec: Exec) -> SatOutcome {
    let doc = checker.doc();
    let versioned = doc.versions.values().filter(|v| !v.is_empty()).count();
    if versioned > SAT_MAX_VERSIONED_UNITS || doc.units.len() > SAT_MAX_UNITS {
        return SatOutcome::TooLarge {
            units: doc.units.len(),
            versioned_units: versioned,
        };
    }
    if !validate_structure(doc).is_empty() {
        return SatOutcome::InvalidDocument;
    }
    let problem = Problem::new(checker);
    let found = match exec {
        Exec::Sequential => problem.dfs(problem.frontier(1).remove(0)),
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            let target = 4 * rayon::current_num_threads().max(1);
            problem
                .frontier(target)
                .into_par_iter()
                .find_map_first(|s| problem.dfs(s))
        }
    };
    match found {
        Some(s) => SatOutcome::Witness(problem.witness(s)),
        None => SatOutcome::Unsatisfiable,
    }
}

impl Checker {
    /// [`Checker::satisfiable`] with an explicit execution strategy.
    pub fn satisfiable_with(&self, exec: Exec) -> SatOutcome {
        satisfiable_with(self, exec)
    }
}
