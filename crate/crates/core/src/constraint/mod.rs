//! Constraints over unit inclusion, version selection and parameter bindings,
//! with full and incremental checking.
//!
//! A [`Checker`] is built once per generic document. It merges the authored
//! constraints with the textual ones derived from cross-references and
//! indexes every constraint by the units, versions and parameters it reads,
//! so that an edit only re-evaluates what it can affect.

pub(crate) mod enforce;
pub mod expr;
mod sat;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::model::Delta;
use crate::model::{
    DocumentInstance, GenericDocument, ModelError, Touched, Tree, UnitId, VersionId,
};
use crate::template::{self, AuthoringFault};
pub use enforce::{ChainStep, EnforceOutcome, Via};
pub use expr::ParamExpr;
pub use sat::{SatOutcome, SAT_MAX_UNITS, SAT_MAX_VERSIONED_UNITS};

/// Prefix reserved for constraints derived from cross-references.
pub const DERIVED_PREFIX: &str = "xref:";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Atom {
    #[serde(rename = "unit")]
    UnitIncluded(UnitId),
    #[serde(rename = "version")]
    VersionSelected(VersionId),
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::UnitIncluded(u) => write!(f, "unit {u}"),
            Atom::VersionSelected(v) => write!(f, "version {v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// Antecedent true forces the consequent unit in.
    Requires {
        antecedent: Atom,
        consequent: UnitId,
    },
    /// Symmetric: the two atoms may not both hold.
    Excludes {
        a: Atom,
        b: Atom,
    },
    /// At most one member while drafting, exactly one at finalization.
    ExactlyOne {
        group: BTreeSet<UnitId>,
    },
    ParamRule {
        expr: ParamExpr,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "kebab-case")]
pub enum Origin {
    Authored,
    DerivedTextual { source: VersionId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: String,
    #[serde(flatten)]
    pub kind: ConstraintKind,
    #[serde(flatten)]
    pub origin: Origin,
    /// Author's note, shown with violations.
    pub message: String,
}

impl Constraint {
    fn authored(id: &str, kind: ConstraintKind, message: &str) -> Self {
        Constraint {
            id: id.to_string(),
            kind,
            origin: Origin::Authored,
            message: message.to_string(),
        }
    }

    pub fn requires(id: &str, antecedent: Atom, consequent: &str, message: &str) -> Self {
        Self::authored(
            id,
            ConstraintKind::Requires {
                antecedent,
                consequent: consequent.into(),
            },
            message,
        )
    }

    pub fn excludes(id: &str, a: Atom, b: Atom, message: &str) -> Self {
        Self::authored(id, ConstraintKind::Excludes { a, b }, message)
    }

    pub fn exactly_one<'a>(
        id: &str,
        group: impl IntoIterator<Item = &'a str>,
        message: &str,
    ) -> Self {
        Self::authored(
            id,
            ConstraintKind::ExactlyOne {
                group: group.into_iter().map(UnitId::from).collect(),
            },
            message,
        )
    }

    pub fn param_rule(id: &str, expr: ParamExpr, message: &str) -> Self {
        Self::authored(id, ConstraintKind::ParamRule { expr }, message)
    }

    fn atoms(&self) -> Vec<&Atom> {
        match &self.kind {
            ConstraintKind::Requires { antecedent, .. } => vec![antecedent],
            ConstraintKind::Excludes { a, b } => vec![a, b],
            _ => Vec::new(),
        }
    }

    /// Units whose inclusion the constraint reads.
    fn unit_deps(&self) -> Vec<&UnitId> {
        let mut out: Vec<&UnitId> = self
            .atoms()
            .into_iter()
            .filter_map(|a| match a {
                Atom::UnitIncluded(u) => Some(u),
                _ => None,
            })
            .collect();
        match &self.kind {
            ConstraintKind::Requires { consequent, .. } => out.push(consequent),
            ConstraintKind::ExactlyOne { group } => out.extend(group),
            _ => {}
        }
        out
    }

    fn version_deps(&self) -> Vec<&VersionId> {
        self.atoms()
            .into_iter()
            .filter_map(|a| match a {
                Atom::VersionSelected(v) => Some(v),
                _ => None,
            })
            .collect()
    }
}

fn check_atom(doc: &GenericDocument, atom: &Atom) -> Result<(), String> {
    match atom {
        Atom::UnitIncluded(u) if !doc.units.contains_key(u) => Err(format!("unknown unit `{u}`")),
        Atom::VersionSelected(v) if doc.version(v.as_str()).is_none() => {
            Err(format!("unknown version `{v}`"))
        }
        _ => Ok(()),
    }
}

/// Checks one constraint's references and shape against `doc`.
pub fn validate_constraint(doc: &GenericDocument, c: &Constraint) -> Result<(), String> {
    if c.id.is_empty() {
        return Err("constraint id is empty".into());
    }
    if c.origin == Origin::Authored && c.id.starts_with(DERIVED_PREFIX) {
        return Err(format!("ids starting with `{DERIVED_PREFIX}` are reserved"));
    }
    match &c.kind {
        ConstraintKind::Requires {
            antecedent,
            consequent,
        } => {
            check_atom(doc, antecedent)?;
            check_atom(doc, &Atom::UnitIncluded(consequent.clone()))
        }
        ConstraintKind::Excludes { a, b } => {
            if a == b {
                return Err(format!("`{}` excludes itself", c.id));
            }
            check_atom(doc, a)?;
            check_atom(doc, b)
        }
        ConstraintKind::ExactlyOne { group } => {
            if group.len() < 2 {
                return Err(format!(
                    "exactly-one group `{}` needs at least two units",
                    c.id
                ));
            }
            group
                .iter()
                .try_for_each(|u| check_atom(doc, &Atom::UnitIncluded(u.clone())))
        }
        ConstraintKind::ParamRule { expr } => expr.validate(doc),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Requires,
    Excludes,
    ExactlyOne,
    ParamRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Violation {
    pub constraint_id: String,
    pub kind: ViolationKind,
    pub atoms: Vec<Atom>,
    pub params: Vec<String>,
    pub message: String,
}

/// Something still missing before the instance can be finalized.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "gap", rename_all = "kebab-case")]
pub enum Gap {
    /// Included unit with versions, none selected here or above/below it.
    MissingSelection { unit: UnitId },
    /// Exactly-one group with no member included.
    EmptyGroup {
        #[serde(rename = "constraintId")]
        constraint_id: String,
        group: BTreeSet<UnitId>,
    },
    /// Unbound parameter used by a selected template or required by `defined(..)`.
    UnboundParameter {
        name: String,
        #[serde(rename = "referencedBy")]
        referenced_by: Vec<VersionId>,
        #[serde(rename = "requiredBy")]
        required_by: Vec<String>,
    },
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gap::MissingSelection { unit } => {
                write!(f, "unit {unit} has versions but none is selected")
            }
            Gap::EmptyGroup {
                constraint_id,
                group,
            } => write!(
                f,
                "{constraint_id}: one of [{}] must be included",
                join(group.iter())
            ),
            Gap::UnboundParameter {
                name,
                referenced_by,
                required_by,
            } => {
                write!(f, "parameter {name} is unbound")?;
                if !referenced_by.is_empty() {
                    write!(f, " (used by {})", join(referenced_by.iter()))?;
                }
                if !required_by.is_empty() {
                    write!(f, " (required by {})", join(required_by.iter()))?;
                }
                Ok(())
            }
        }
    }
}

fn join<T: fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

/// Result of checking an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct CheckReport {
    /// Instance revision the report describes.
    pub revision: u64,
    /// Sorted by constraint id.
    pub violations: Vec<Violation>,
    pub gaps: Vec<Gap>,
    /// Set when an incremental check fell back to a full one.
    #[serde(default)]
    pub full_recheck: bool,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.gaps.is_empty()
    }

    /// Report entries as text lines, violations first.
    pub fn lines(&self) -> Vec<String> {
        self.violations
            .iter()
            .map(|v| format!("violation {}: {}", v.constraint_id, v.message))
            .chain(self.gaps.iter().map(|g| format!("gap: {g}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("report has no violation at index {0}")]
    BadIndex(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Constraint index for one generic document.
#[derive(Debug, Clone)]
pub struct Checker {
    doc: Arc<GenericDocument>,
    tree: Tree,
    constraints: Vec<Constraint>,
    authoring_faults: Vec<AuthoringFault>,
    by_unit: BTreeMap<UnitId, Vec<usize>>,
    by_version: BTreeMap<VersionId, Vec<usize>>,
    by_param: BTreeMap<String, Vec<usize>>,
    version_unit: BTreeMap<VersionId, UnitId>,
    version_params: BTreeMap<VersionId, BTreeSet<String>>,
    param_versions: BTreeMap<String, Vec<VersionId>>,
    param_required_by: BTreeMap<String, Vec<String>>,
}

impl Checker {
    pub fn new(doc: impl Into<Arc<GenericDocument>>) -> Checker {
        let doc = doc.into();
        let tree = Tree::new(&doc);
        let (derived, authoring_faults) = template::derive_textual_constraints(&doc);
        let mut constraints: Vec<Constraint> =
            doc.constraints.iter().cloned().chain(derived).collect();
        constraints.sort_by(|a, b| a.id.cmp(&b.id));

        let mut by_unit: BTreeMap<UnitId, Vec<usize>> = BTreeMap::new();
        let mut by_version: BTreeMap<VersionId, Vec<usize>> = BTreeMap::new();
        let mut by_param: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut param_required_by: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, c) in constraints.iter().enumerate() {
            for u in c.unit_deps() {
                push_unique(by_unit.entry(u.clone()).or_default(), i);
            }
            for v in c.version_deps() {
                push_unique(by_version.entry(v.clone()).or_default(), i);
            }
            if let ConstraintKind::ParamRule { expr } = &c.kind {
                for p in expr.params() {
                    push_unique(by_param.entry(p.to_string()).or_default(), i);
                }
                for p in expr.required() {
                    let list = param_required_by.entry(p.to_string()).or_default();
                    if !list.contains(&c.id) {
                        list.push(c.id.clone());
                    }
                }
            }
        }

        let mut version_unit = BTreeMap::new();
        let mut version_params = BTreeMap::new();
        let mut param_versions: BTreeMap<String, Vec<VersionId>> = BTreeMap::new();
        for v in doc.all_versions() {
            version_unit.insert(v.id.clone(), v.unit_id.clone());
            let params: BTreeSet<String> = template::parse(&v.template)
                .map(|t| t.params().into_iter().map(str::to_string).collect())
                .unwrap_or_default();
            for p in &params {
                param_versions
                    .entry(p.clone())
                    .or_default()
                    .push(v.id.clone());
            }
            version_params.insert(v.id.clone(), params);
        }
        for list in param_versions.values_mut() {
            list.sort();
        }

        Checker {
            doc,
            tree,
            constraints,
            authoring_faults,
            by_unit,
            by_version,
            by_param,
            version_unit,
            version_params,
            param_versions,
            param_required_by,
        }
    }

    pub fn doc(&self) -> &GenericDocument {
        &self.doc
    }

    pub fn doc_arc(&self) -> &Arc<GenericDocument> {
        &self.doc
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    /// Authored plus derived constraints, sorted by id.
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, id: &str) -> Option<&Constraint> {
        self.constraints
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.constraints[i])
    }

    /// Cross-references to units that do not exist.
    pub fn authoring_faults(&self) -> &[AuthoringFault] {
        &self.authoring_faults
    }

    pub fn version_unit(&self, v: &VersionId) -> Option<&UnitId> {
        self.version_unit.get(v)
    }

    /// Parameters used by the version's template.
    pub fn version_params(&self, v: &VersionId) -> impl Iterator<Item = &String> {
        self.version_params.get(v).into_iter().flatten()
    }

    pub fn holds(&self, inst: &DocumentInstance, atom: &Atom) -> bool {
        match atom {
            Atom::UnitIncluded(u) => inst.included.contains(u),
            Atom::VersionSelected(v) => self
                .version_unit
                .get(v)
                .is_some_and(|u| inst.selections.get(u) == Some(v)),
        }
    }

    fn unit_name(&self, u: &UnitId) -> String {
        match self.doc.unit(u.as_str()) {
            Some(unit) => format!("{u} '{}'", unit.heading),
            None => u.to_string(),
        }
    }

    fn atom_name(&self, a: &Atom) -> String {
        match a {
            Atom::UnitIncluded(u) => format!("unit {}", self.unit_name(u)),
            Atom::VersionSelected(v) => format!("version {v}"),
        }
    }

    fn with_note(&self, c: &Constraint, text: String) -> String {
        if c.message.is_empty() {
            text
        } else {
            format!("{text} ({})", c.message)
        }
    }

    /// Evaluates one constraint; `None` if it is satisfied.
    pub fn evaluate(&self, c: &Constraint, inst: &DocumentInstance) -> Option<Violation> {
        match &c.kind {
            ConstraintKind::Requires {
                antecedent,
                consequent,
            } => {
                if !self.holds(inst, antecedent) || inst.included.contains(consequent) {
                    return None;
                }
                Some(Violation {
                    constraint_id: c.id.clone(),
                    kind: ViolationKind::Requires,
                    atoms: vec![antecedent.clone(), Atom::UnitIncluded(consequent.clone())],
                    params: Vec::new(),
                    message: self.with_note(
                        c,
                        format!(
                            "{} requires {}, which is not included",
                            self.atom_name(antecedent),
                            self.unit_name(consequent)
                        ),
                    ),
                })
            }
            ConstraintKind::Excludes { a, b } => {
                if !(self.holds(inst, a) && self.holds(inst, b)) {
                    return None;
                }
                let (first, second) = if a <= b { (a, b) } else { (b, a) };
                Some(Violation {
                    constraint_id: c.id.clone(),
                    kind: ViolationKind::Excludes,
                    atoms: vec![first.clone(), second.clone()],
                    params: Vec::new(),
                    message: self.with_note(
                        c,
                        format!(
                            "{} and {} preclude each other",
                            self.atom_name(first),
                            self.atom_name(second)
                        ),
                    ),
                })
            }
            ConstraintKind::ExactlyOne { group } => {
                let present: Vec<&UnitId> = group
                    .iter()
                    .filter(|u| inst.included.contains(*u))
                    .collect();
                if present.len() < 2 {
                    return None;
                }
                Some(Violation {
                    constraint_id: c.id.clone(),
                    kind: ViolationKind::ExactlyOne,
                    atoms: present
                        .iter()
                        .map(|u| Atom::UnitIncluded((*u).clone()))
                        .collect(),
                    params: Vec::new(),
                    message: self.with_note(
                        c,
                        format!(
                            "at most one of [{}] may be included, found {}",
                            join(group.iter()),
                            join(present.iter().map(|u| self.unit_name(u)))
                        ),
                    ),
                })
            }
            ConstraintKind::ParamRule { expr } => {
                if expr.evaluate(&self.doc, &inst.bindings) != Some(false) {
                    return None;
                }
                let params: Vec<String> = expr.params().into_iter().map(str::to_string).collect();
                let values = params
                    .iter()
                    .map(|p| format!("{p} = \"{}\"", inst.bindings[p]))
                    .collect::<Vec<_>>()
                    .join(", ");
                Some(Violation {
                    constraint_id: c.id.clone(),
                    kind: ViolationKind::ParamRule,
                    atoms: Vec::new(),
                    params,
                    message: self.with_note(c, format!("rule `{expr}` fails with {values}")),
                })
            }
        }
    }

    fn missing_selection(&self, inst: &DocumentInstance, unit: &UnitId) -> Option<Gap> {
        let needs = inst.included.contains(unit)
            && !self.doc.versions_of(unit.as_str()).is_empty()
            && !inst.selections.contains_key(unit)
            && inst
                .selection_conflict(&self.doc, &self.tree, unit)
                .is_none();
        needs.then(|| Gap::MissingSelection { unit: unit.clone() })
    }

    fn empty_group(&self, inst: &DocumentInstance, c: &Constraint) -> Option<Gap> {
        match &c.kind {
            ConstraintKind::ExactlyOne { group }
                if !group.iter().any(|u| inst.included.contains(u)) =>
            {
                Some(Gap::EmptyGroup {
                    constraint_id: c.id.clone(),
                    group: group.clone(),
                })
            }
            _ => None,
        }
    }

    fn unbound_parameter(&self, inst: &DocumentInstance, name: &str) -> Option<Gap> {
        if inst.bindings.contains_key(name) {
            return None;
        }
        let referenced_by: Vec<VersionId> = self
            .param_versions
            .get(name)
            .into_iter()
            .flatten()
            .filter(|v| self.holds(inst, &Atom::VersionSelected((*v).clone())))
            .cloned()
            .collect();
        let required_by = self
            .param_required_by
            .get(name)
            .cloned()
            .unwrap_or_default();
        if referenced_by.is_empty() && required_by.is_empty() {
            return None;
        }
        Some(Gap::UnboundParameter {
            name: name.to_string(),
            referenced_by,
            required_by,
        })
    }

    /// Evaluates every constraint and completeness requirement.
    pub fn check_full(&self, inst: &DocumentInstance) -> CheckReport {
        let violations = self
            .constraints
            .iter()
            .filter_map(|c| self.evaluate(c, inst))
            .collect();
        let mut gaps: Vec<Gap> = self
            .tree
            .preorder()
            .iter()
            .filter_map(|u| self.missing_selection(inst, u))
            .collect();
        gaps.extend(
            self.constraints
                .iter()
                .filter_map(|c| self.empty_group(inst, c)),
        );
        gaps.extend(
            self.doc
                .parameters
                .iter()
                .filter_map(|p| self.unbound_parameter(inst, &p.name)),
        );
        gaps.sort();
        CheckReport {
            revision: inst.revision,
            violations,
            gaps,
            full_recheck: false,
        }
    }

    /// Updates `prev` (the report for the instance before the edit) to describe
    /// `inst`, re-evaluating only what `touched` can affect.
    ///
    /// When `prev` does not describe the revision immediately preceding `inst`,
    /// a full check is performed and flagged.
    pub fn check_incremental(
        &self,
        inst: &DocumentInstance,
        touched: &Touched,
        prev: &CheckReport,
    ) -> CheckReport {
        if prev.revision + 1 != inst.revision {
            return CheckReport {
                full_recheck: true,
                ..self.check_full(inst)
            };
        }
        let mut affected: BTreeSet<usize> = BTreeSet::new();
        for u in touched.units.iter() {
            affected.extend(self.by_unit.get(u).into_iter().flatten());
        }
        for v in &touched.versions {
            affected.extend(self.by_version.get(v).into_iter().flatten());
        }
        for p in &touched.params {
            affected.extend(self.by_param.get(p).into_iter().flatten());
        }
        let affected_ids: BTreeSet<&str> = affected
            .iter()
            .map(|&i| self.constraints[i].id.as_str())
            .collect();

        let mut violations: Vec<Violation> = prev
            .violations
            .iter()
            .filter(|v| !affected_ids.contains(v.constraint_id.as_str()))
            .cloned()
            .collect();
        violations.extend(
            affected
                .iter()
                .filter_map(|&i| self.evaluate(&self.constraints[i], inst)),
        );
        violations.sort_by(|a, b| a.constraint_id.cmp(&b.constraint_id));

        // Units whose missing-selection gap may have changed.
        let mut gap_units: BTreeSet<UnitId> = touched.units.clone();
        for u in &touched.selection_units {
            gap_units.insert(u.clone());
            gap_units.extend(self.tree.ancestors(u.as_str()).cloned());
            gap_units.extend(self.tree.descendants(&self.doc, u.as_str()));
        }
        let mut gap_params: BTreeSet<&str> = touched.params.iter().map(String::as_str).collect();
        for v in &touched.versions {
            gap_params.extend(self.version_params(v).map(String::as_str));
        }

        let stale = |g: &Gap| match g {
            Gap::MissingSelection { unit } => gap_units.contains(unit),
            Gap::EmptyGroup { constraint_id, .. } => affected_ids.contains(constraint_id.as_str()),
            Gap::UnboundParameter { name, .. } => gap_params.contains(name.as_str()),
        };
        let mut gaps: Vec<Gap> = prev.gaps.iter().filter(|g| !stale(g)).cloned().collect();
        gaps.extend(
            gap_units
                .iter()
                .filter_map(|u| self.missing_selection(inst, u)),
        );
        gaps.extend(
            affected
                .iter()
                .filter_map(|&i| self.empty_group(inst, &self.constraints[i])),
        );
        gaps.extend(
            gap_params
                .iter()
                .filter_map(|p| self.unbound_parameter(inst, p)),
        );
        gaps.sort();

        CheckReport {
            revision: inst.revision,
            violations,
            gaps,
            full_recheck: false,
        }
    }

    /// Applies `delta` to a copy of `before` and checks it incrementally against `prev`.
    pub fn check_delta(
        &self,
        before: &DocumentInstance,
        delta: &Delta,
        prev: &CheckReport,
    ) -> Result<(DocumentInstance, CheckReport), ModelError> {
        let mut after = before.clone();
        let touched = after.apply(&self.doc, &self.tree, delta)?;
        if prev.revision != before.revision {
            let report = CheckReport {
                full_recheck: true,
                ..self.check_full(&after)
            };
            return Ok((after, report));
        }
        let report = self.check_incremental(&after, &touched, prev);
        Ok((after, report))
    }

    /// One-paragraph explanation of the violation at `index`.
    pub fn explain(
        &self,
        inst: Option<&DocumentInstance>,
        report: &CheckReport,
        index: usize,
    ) -> Result<String, CheckError> {
        let v = report
            .violations
            .get(index)
            .ok_or(CheckError::BadIndex(index))?;
        let c = self
            .constraint(&v.constraint_id)
            .ok_or(CheckError::BadIndex(index))?;
        let scheme = crate::model::LabelScheme::default();
        let titled = |u: &UnitId| -> String {
            let heading = self
                .doc
                .unit(u.as_str())
                .map(|x| x.heading.as_str())
                .unwrap_or("");
            let label = match inst {
                Some(i) if i.included.contains(u) => {
                    self.tree.label(&self.doc, Some(i), u.as_str(), &scheme)
                }
                // Excluded units are named by their position in the full document.
                _ => self.tree.label(&self.doc, None, u.as_str(), &scheme),
            };
            match label {
                Ok(l) if !l.is_empty() => format!("'{l} {heading}'"),
                _ => format!("'{heading}' ({u})"),
            }
        };
        let origin = match &c.origin {
            Origin::Authored if c.message.is_empty() => "an authored constraint".to_string(),
            Origin::Authored => format!("an authored constraint: {}", c.message),
            Origin::DerivedTextual { source } => {
                format!("a textual dependency derived from version {source}")
            }
        };
        let body = match &c.kind {
            ConstraintKind::Requires {
                antecedent,
                consequent,
            } => match (&c.origin, antecedent) {
                (Origin::DerivedTextual { source }, _) => {
                    let owner = self
                        .version_unit
                        .get(source)
                        .map(&titled)
                        .unwrap_or_default();
                    format!(
                        "{} must be included because version {source} of {owner} cross-references {}",
                        titled(consequent),
                        titled(consequent)
                    )
                }
                (_, Atom::UnitIncluded(u)) => format!(
                    "{} must be included because {} is included",
                    titled(consequent),
                    titled(u)
                ),
                (_, Atom::VersionSelected(ver)) => format!(
                    "{} must be included because version {ver} is selected",
                    titled(consequent)
                ),
            },
            ConstraintKind::Excludes { .. } => {
                let names: Vec<String> = v
                    .atoms
                    .iter()
                    .map(|a| match a {
                        Atom::UnitIncluded(u) => titled(u),
                        Atom::VersionSelected(ver) => format!("version {ver}"),
                    })
                    .collect();
                format!("{} and {} may not both be present", names[0], names[1])
            }
            ConstraintKind::ExactlyOne { group } => format!(
                "only one of {} may be included",
                group.iter().map(&titled).collect::<Vec<_>>().join(", ")
            ),
            ConstraintKind::ParamRule { expr } => {
                format!("parameters {} violate `{expr}`", v.params.join(" and "))
            }
        };
        Ok(format!(
            "Constraint {} ({origin}) is violated: {body}. {}",
            c.id, v.message
        ))
    }

    /// Least fixpoint of required inclusions from `unit`; see [`EnforceOutcome`].
    pub fn enforce_include(
        &self,
        inst: &DocumentInstance,
        unit: &UnitId,
    ) -> Result<EnforceOutcome, ModelError> {
        enforce::enforce_include(self, inst, unit)
    }

    /// Like [`Checker::enforce_include`] but applies the additions in place on success.
    pub fn enforce_include_apply(
        &self,
        inst: &mut DocumentInstance,
        unit: &UnitId,
    ) -> Result<EnforceOutcome, ModelError> {
        let outcome = enforce::enforce_include(self, inst, unit)?;
        if let EnforceOutcome::Added { added } = &outcome {
            inst.included.extend(added.iter().cloned());
            inst.revision += 1;
        }
        Ok(outcome)
    }

    /// Searches for a complete instance satisfying every non-parameter constraint.
    pub fn satisfiable(&self) -> SatOutcome {
        sat::satisfiable(self)
    }

    pub(crate) fn requires_from<'a>(
        &'a self,
        atom: &'a Atom,
    ) -> impl Iterator<Item = (&'a Constraint, &'a UnitId)> + 'a {
        let idx: &[usize] = match atom {
            Atom::UnitIncluded(u) => self.by_unit.get(u).map(Vec::as_slice).unwrap_or(&[]),
            Atom::VersionSelected(v) => self.by_version.get(v).map(Vec::as_slice).unwrap_or(&[]),
        };
        idx.iter()
            .filter_map(move |&i| match &self.constraints[i].kind {
                ConstraintKind::Requires {
                    antecedent,
                    consequent,
                } if antecedent == atom => Some((&self.constraints[i], consequent)),
                _ => None,
            })
    }
}

fn push_unique(list: &mut Vec<usize>, i: usize) {
    if list.last() != Some(&i) {
        list.push(i);
    }
}
