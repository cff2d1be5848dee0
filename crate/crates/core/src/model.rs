//! Generic documents, their unit trees and versions, and document instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{self, Constraint};
use crate::template::{self, ParseFault};
pub use crate::value::ParamType;
use crate::value::Value;

/// Current on-disk format revision of generic documents.
pub const SCHEMA_VERSION: u32 = 1;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

id_newtype!(
    /// Stable identifier of a unit within a generic document.
    UnitId
);
id_newtype!(
    /// Stable identifier of a version; unique across the whole generic document.
    VersionId
);

/// Names usable for units and parameters: `[A-Za-z0-9_-]+`.
pub fn is_valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Version ids additionally allow `:` and `.` (e.g. `s14-6:v2`).
pub fn is_valid_version_id(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b':' | b'.'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Document,
    Part,
    Section,
    Provision,
    Sentence,
}

impl UnitKind {
    pub const ALL: [UnitKind; 5] = [
        UnitKind::Document,
        UnitKind::Part,
        UnitKind::Section,
        UnitKind::Provision,
        UnitKind::Sentence,
    ];

    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Document => "document",
            UnitKind::Part => "part",
            UnitKind::Section => "section",
            UnitKind::Provision => "provision",
            UnitKind::Sentence => "sentence",
        }
    }

    pub fn from_name(s: &str) -> Option<UnitKind> {
        UnitKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// The role a provision plays in the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleTag {
    Definition,
    Prescription,
    Procedure,
    Formula,
    SecondaryCondition,
}

impl RoleTag {
    pub fn from_name(s: &str) -> Option<RoleTag> {
        Some(match s {
            "definition" => RoleTag::Definition,
            "prescription" => RoleTag::Prescription,
            "procedure" => RoleTag::Procedure,
            "formula" => RoleTag::Formula,
            "secondary-condition" => RoleTag::SecondaryCondition,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub id: UnitId,
    pub kind: UnitKind,
    pub heading: String,
    pub children: Vec<UnitId>,
    pub role_tags: BTreeSet<RoleTag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterDecl {
    pub name: String,
    pub ptype: ParamType,
    pub description: String,
}

impl ParameterDecl {
    pub fn new(name: &str, ptype: ParamType, description: &str) -> Self {
        ParameterDecl {
            name: name.to_string(),
            ptype,
            description: description.to_string(),
        }
    }
}

/// One text rendering of a unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Version {
    pub id: VersionId,
    pub unit_id: UnitId,
    /// Raw template source, see [`crate::template`].
    pub template: String,
    pub rationale: String,
    pub provenance: String,
    pub derived_from: Option<VersionId>,
    /// Caller-supplied timestamp; compared lexically, never read from a clock.
    pub created_at: String,
}

/// Input to [`GenericDocument::add_version`].
#[derive(Debug, Clone, Default)]
pub struct NewVersion {
    pub template: String,
    pub rationale: String,
    pub provenance: String,
    pub derived_from: Option<VersionId>,
    pub created_at: String,
    /// Explicit id; defaults to `<unit>:v<n>`.
    pub id: Option<VersionId>,
}

impl NewVersion {
    pub fn new(template: impl Into<String>) -> Self {
        NewVersion {
            template: template.into(),
            ..Default::default()
        }
    }

    pub fn rationale(mut self, r: impl Into<String>) -> Self {
        self.rationale = r.into();
        self
    }

    pub fn provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = p.into();
        self
    }

    pub fn derived_from(mut self, v: impl Into<VersionId>) -> Self {
        self.derived_from = Some(v.into());
        self
    }

    pub fn created_at(mut self, t: impl Into<String>) -> Self {
        self.created_at = t.into();
        self
    }

    pub fn id(mut self, id: impl Into<VersionId>) -> Self {
        self.id = Some(id.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown unit `{0}`")]
    UnknownUnit(UnitId),
    #[error("unknown version `{0}`")]
    UnknownVersion(VersionId),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("a {child} cannot be placed under a {parent}")]
    RankViolation {
        parent: &'static str,
        child: &'static str,
    },
    #[error("unit id `{0}` is already in use")]
    DuplicateUnit(UnitId),
    #[error("version id `{0}` is already in use")]
    DuplicateVersion(VersionId),
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("position {position} is beyond the {len} children of `{parent}`")]
    PositionOutOfRange {
        parent: UnitId,
        position: usize,
        len: usize,
    },
    #[error("template does not parse: {}", faults.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    Template { faults: Vec<ParseFault> },
    #[error("derived version of `{0}` must record a rationale")]
    MissingRationale(UnitId),
    #[error("version `{derived_from}` belongs to `{owner}`, not `{unit}`")]
    LineageUnitMismatch {
        unit: UnitId,
        derived_from: VersionId,
        owner: UnitId,
    },
    #[error("parameter `{0}` is already declared")]
    DuplicateParameter(String),
    #[error("enum parameter `{0}` needs at least one value")]
    EmptyEnum(String),
    #[error("unit `{0}` is not included in the instance")]
    NotIncluded(UnitId),
    #[error("version `{version}` does not belong to unit `{unit}`")]
    VersionNotOfUnit { unit: UnitId, version: VersionId },
    #[error("unit `{unit}` cannot carry a selection while `{conflicting}` has one (ancestor or descendant)")]
    MixedGranularity { unit: UnitId, conflicting: UnitId },
    #[error("parameter `{name}` expects {expected}, got {got}")]
    TypeMismatch {
        name: String,
        expected: String,
        got: &'static str,
    },
    #[error("the root unit cannot be excluded")]
    CannotExcludeRoot,
    #[error("invalid constraint: {0}")]
    Constraint(String),
}

/// A class of contracts: unit tree, versions, parameters and authored constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericDocument {
    pub id: String,
    pub title: String,
    pub root: UnitId,
    pub units: BTreeMap<UnitId, Unit>,
    /// Versions per unit, in insertion order.
    pub versions: BTreeMap<UnitId, Vec<Version>>,
    pub parameters: Vec<ParameterDecl>,
    /// Authored constraints; textual ones are derived on demand.
    pub constraints: Vec<Constraint>,
    pub schema_version: u32,
}

impl GenericDocument {
    /// A document holding only its root unit.
    pub fn new(id: &str, title: &str, root: &str) -> Self {
        let root_id = UnitId::from(root);
        let mut units = BTreeMap::new();
        units.insert(
            root_id.clone(),
            Unit {
                id: root_id.clone(),
                kind: UnitKind::Document,
                heading: title.to_string(),
                children: Vec::new(),
                role_tags: BTreeSet::new(),
            },
        );
        GenericDocument {
            id: id.to_string(),
            title: title.to_string(),
            root: root_id,
            units,
            versions: BTreeMap::new(),
            parameters: Vec::new(),
            constraints: Vec::new(),
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn unit(&self, id: &str) -> Option<&Unit> {
        self.units.get(id)
    }

    pub fn versions_of(&self, unit: &str) -> &[Version] {
        self.versions.get(unit).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_versions(&self) -> impl Iterator<Item = &Version> {
        self.versions.values().flatten()
    }

    pub fn version(&self, id: &str) -> Option<&Version> {
        self.all_versions().find(|v| v.id.as_str() == id)
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterDecl> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn parent_of(&self, id: &str) -> Option<&UnitId> {
        self.units
            .values()
            .find(|u| u.children.iter().any(|c| c.as_str() == id))
            .map(|u| &u.id)
    }

    /// Inserts a new unit under `parent` at `position` and returns its id.
    ///
    /// Without an explicit `id` a fresh one of the form `u<n>` is chosen.
    pub fn add_unit(
        &mut self,
        parent: &str,
        kind: UnitKind,
        heading: &str,
        position: usize,
        id: Option<&str>,
    ) -> Result<UnitId, ModelError> {
        let parent_unit = self
            .units
            .get(parent)
            .ok_or_else(|| ModelError::UnknownUnit(parent.into()))?;
        if kind.rank() <= parent_unit.kind.rank() {
            return Err(ModelError::RankViolation {
                parent: parent_unit.kind.name(),
                child: kind.name(),
            });
        }
        if position > parent_unit.children.len() {
            return Err(ModelError::PositionOutOfRange {
                parent: parent.into(),
                position,
                len: parent_unit.children.len(),
            });
        }
        let id = match id {
            Some(id) => {
                if !is_valid_name(id) {
                    return Err(ModelError::InvalidIdentifier(id.to_string()));
                }
                if self.units.contains_key(id) {
                    return Err(ModelError::DuplicateUnit(id.into()));
                }
                UnitId::from(id)
            }
            None => (self.units.len()..)
                .map(|n| UnitId(format!("u{n}")))
                .find(|candidate| !self.units.contains_key(candidate))
                .expect("unbounded search"),
        };
        self.units
            .get_mut(parent)
            .expect("checked above")
            .children
            .insert(position, id.clone());
        self.units.insert(
            id.clone(),
            Unit {
                id: id.clone(),
                kind,
                heading: heading.to_string(),
                children: Vec::new(),
                role_tags: BTreeSet::new(),
            },
        );
        Ok(id)
    }

    /// Appends a child at the end of `parent`'s children.
    pub fn push_unit(
        &mut self,
        parent: &str,
        kind: UnitKind,
        heading: &str,
        id: &str,
    ) -> Result<UnitId, ModelError> {
        let len = self
            .unit(parent)
            .ok_or_else(|| ModelError::UnknownUnit(parent.into()))?
            .children
            .len();
        self.add_unit(parent, kind, heading, len, Some(id))
    }

    pub fn set_role_tags(
        &mut self,
        unit: &str,
        tags: impl IntoIterator<Item = RoleTag>,
    ) -> Result<(), ModelError> {
        let u = self
            .units
            .get_mut(unit)
            .ok_or_else(|| ModelError::UnknownUnit(unit.into()))?;
        u.role_tags = tags.into_iter().collect();
        Ok(())
    }

    /// Appends a version to `unit`. Existing versions are never touched.
    pub fn add_version(&mut self, unit: &str, new: NewVersion) -> Result<VersionId, ModelError> {
        if !self.units.contains_key(unit) {
            return Err(ModelError::UnknownUnit(unit.into()));
        }
        template::parse(&new.template).map_err(|faults| ModelError::Template { faults })?;
        if let Some(base) = &new.derived_from {
            let owner = self
                .version(base.as_str())
                .ok_or_else(|| ModelError::UnknownVersion(base.clone()))?
                .unit_id
                .clone();
            if owner.as_str() != unit {
                return Err(ModelError::LineageUnitMismatch {
                    unit: unit.into(),
                    derived_from: base.clone(),
                    owner,
                });
            }
            if new.rationale.trim().is_empty() {
                return Err(ModelError::MissingRationale(unit.into()));
            }
        }
        let existing = self.versions_of(unit).len();
        let id = match new.id {
            Some(id) => {
                if !is_valid_version_id(id.as_str()) {
                    return Err(ModelError::InvalidIdentifier(id.0));
                }
                id
            }
            None => (existing + 1..)
                .map(|n| VersionId(format!("{unit}:v{n}")))
                .find(|candidate| self.version(candidate.as_str()).is_none())
                .expect("unbounded search"),
        };
        if self.version(id.as_str()).is_some() {
            return Err(ModelError::DuplicateVersion(id));
        }
        self.versions.entry(unit.into()).or_default().push(Version {
            id: id.clone(),
            unit_id: unit.into(),
            template: new.template,
            rationale: new.rationale,
            provenance: new.provenance,
            derived_from: new.derived_from,
            created_at: new.created_at,
        });
        Ok(id)
    }

    pub fn declare_parameter(&mut self, decl: ParameterDecl) -> Result<(), ModelError> {
        if !is_valid_name(&decl.name) {
            return Err(ModelError::InvalidIdentifier(decl.name));
        }
        if self.parameter(&decl.name).is_some() {
            return Err(ModelError::DuplicateParameter(decl.name));
        }
        if let ParamType::Enum(values) = &decl.ptype {
            if values.is_empty() {
                return Err(ModelError::EmptyEnum(decl.name));
            }
        }
        self.parameters.push(decl);
        Ok(())
    }

    /// Adds an authored constraint after checking it against the document.
    pub fn add_constraint(&mut self, c: Constraint) -> Result<(), ModelError> {
        if self.constraints.iter().any(|existing| existing.id == c.id) {
            return Err(ModelError::Constraint(format!(
                "duplicate constraint id `{}`",
                c.id
            )));
        }
        constraint::validate_constraint(self, &c).map_err(ModelError::Constraint)?;
        self.constraints.push(c);
        Ok(())
    }

    /// Computed label of `unit`, optionally relative to an instance's included set.
    pub fn unit_label(
        &self,
        instance: Option<&DocumentInstance>,
        unit: &str,
        scheme: &LabelScheme,
    ) -> Result<String, ModelError> {
        Tree::new(self).label(self, instance, unit, scheme)
    }
}

/// How unit labels are joined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub separator: String,
}

impl Default for LabelScheme {
    fn default() -> Self {
        LabelScheme {
            separator: "-".to_string(),
        }
    }
}

/// Parent links and traversal order for a structurally valid document.
#[derive(Debug, Clone)]
pub struct Tree {
    parent: BTreeMap<UnitId, UnitId>,
    preorder: Vec<UnitId>,
    root: UnitId,
}

impl Tree {
    pub fn new(doc: &GenericDocument) -> Tree {
        let mut parent = BTreeMap::new();
        let mut preorder = Vec::with_capacity(doc.units.len());
        let mut seen = BTreeSet::new();
        let mut stack = vec![doc.root.clone()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id.clone()) {
                continue;
            }
            if let Some(unit) = doc.units.get(&id) {
                for child in unit.children.iter().rev() {
                    if !seen.contains(child) && doc.units.contains_key(child) {
                        parent.entry(child.clone()).or_insert_with(|| id.clone());
                        stack.push(child.clone());
                    }
                }
            }
            preorder.push(id);
        }
        Tree {
            parent,
            preorder,
            root: doc.root.clone(),
        }
    }

    pub fn root(&self) -> &UnitId {
        &self.root
    }

    pub fn parent(&self, id: &str) -> Option<&UnitId> {
        self.parent.get(id)
    }

    /// Units reachable from the root, depth-first in child order.
    pub fn preorder(&self) -> &[UnitId] {
        &self.preorder
    }

    /// Proper ancestors, nearest first.
    pub fn ancestors<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a UnitId> + 'a {
        std::iter::successors(self.parent.get(id), move |p| self.parent.get(p.as_str()))
    }

    pub fn is_ancestor(&self, ancestor: &str, of: &str) -> bool {
        self.ancestors(of).any(|a| a.as_str() == ancestor)
    }

    /// Proper descendants in preorder.
    pub fn descendants(&self, doc: &GenericDocument, id: &str) -> Vec<UnitId> {
        let mut out = Vec::new();
        let mut stack: Vec<&UnitId> = match doc.units.get(id) {
            Some(u) => u.children.iter().rev().collect(),
            None => return out,
        };
        while let Some(next) = stack.pop() {
            out.push(next.clone());
            if let Some(u) = doc.units.get(next) {
                stack.extend(u.children.iter().rev());
            }
        }
        out
    }

    pub fn label(
        &self,
        doc: &GenericDocument,
        instance: Option<&DocumentInstance>,
        unit: &str,
        scheme: &LabelScheme,
    ) -> Result<String, ModelError> {
        if !doc.units.contains_key(unit) {
            return Err(ModelError::UnknownUnit(unit.into()));
        }
        if let Some(inst) = instance {
            if !inst.included.contains(unit) {
                return Err(ModelError::NotIncluded(unit.into()));
            }
        }
        let mut ordinals = Vec::new();
        let mut current = UnitId::from(unit);
        while let Some(parent) = self.parent(current.as_str()) {
            let siblings = &doc.units[parent].children;
            let ordinal = siblings
                .iter()
                .filter(|s| instance.is_none_or(|inst| inst.included.contains(*s)))
                .position(|s| *s == current)
                .expect("unit is a child of its parent")
                + 1;
            ordinals.push(ordinal.to_string());
            current = parent.clone();
        }
        ordinals.reverse();
        Ok(ordinals.join(&scheme.separator))
    }

    /// Labels for every included unit in one pass.
    pub fn labels(
        &self,
        doc: &GenericDocument,
        instance: &DocumentInstance,
        scheme: &LabelScheme,
    ) -> BTreeMap<UnitId, String> {
        let mut out = BTreeMap::new();
        out.insert(self.root.clone(), String::new());
        for id in &self.preorder {
            let Some(base) = out.get(id).cloned() else {
                continue;
            };
            let mut ordinal = 0;
            for child in &doc.units[id].children {
                if !instance.included.contains(child) {
                    continue;
                }
                ordinal += 1;
                let label = if base.is_empty() {
                    ordinal.to_string()
                } else {
                    format!("{base}{}{ordinal}", scheme.separator)
                };
                out.insert(child.clone(), label);
            }
        }
        out
    }
}

/// A structural defect found by [`validate_structure`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructureFault {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for StructureFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Every violation of the tree, version, parameter and constraint invariants.
pub fn validate_structure(doc: &GenericDocument) -> Vec<StructureFault> {
    let mut faults = Vec::new();
    let mut fault = |subject: &str, message: String| {
        faults.push(StructureFault {
            subject: subject.to_string(),
            message,
        })
    };

    match doc.units.get(&doc.root) {
        None => fault(doc.root.as_str(), "root unit is missing".into()),
        Some(root) if root.kind != UnitKind::Document => fault(
            doc.root.as_str(),
            "root unit must be of kind document".into(),
        ),
        _ => {}
    }

    let mut parents: BTreeMap<&UnitId, Vec<&UnitId>> = BTreeMap::new();
    for (key, unit) in &doc.units {
        if *key != unit.id {
            fault(
                key.as_str(),
                format!("unit is stored under mismatched key (id `{}`)", unit.id),
            );
        }
        if !is_valid_name(unit.id.as_str()) {
            fault(unit.id.as_str(), "invalid unit identifier".into());
        }
        let mut seen = BTreeSet::new();
        for child in &unit.children {
            if !seen.insert(child) {
                fault(unit.id.as_str(), format!("child `{child}` listed twice"));
                continue;
            }
            if *child == unit.id {
                fault(
                    unit.id.as_str(),
                    "unit lists itself as a child (cycle)".into(),
                );
                continue;
            }
            match doc.units.get(child) {
                None => fault(unit.id.as_str(), format!("dangling child `{child}`")),
                Some(c) => {
                    if c.kind.rank() <= unit.kind.rank() {
                        fault(
                            child.as_str(),
                            format!(
                                "rank inversion: {} under {}",
                                c.kind.name(),
                                unit.kind.name()
                            ),
                        );
                    }
                    parents.entry(child).or_default().push(&unit.id);
                }
            }
        }
    }
    for (child, ps) in &parents {
        if ps.len() > 1 {
            let list: Vec<_> = ps.iter().map(|p| p.as_str()).collect();
            fault(
                child.as_str(),
                format!("unit has several parents: {}", list.join(", ")),
            );
        }
        if **child == doc.root {
            fault(child.as_str(), "root unit has a parent (cycle)".into());
        }
    }
    let tree = Tree::new(doc);
    let reachable: BTreeSet<&UnitId> = tree.preorder().iter().collect();
    for id in doc.units.keys() {
        if !reachable.contains(id) && !parents.contains_key(id) {
            fault(id.as_str(), "unit is detached from the root".into());
        } else if !reachable.contains(id) {
            fault(
                id.as_str(),
                "unit is on a cycle unreachable from the root".into(),
            );
        }
    }

    let mut version_owner: BTreeMap<&VersionId, &UnitId> = BTreeMap::new();
    for (key, list) in &doc.versions {
        if !doc.units.contains_key(key) {
            fault(key.as_str(), "versions recorded for an unknown unit".into());
        }
        for v in list {
            if v.unit_id != *key {
                fault(
                    v.id.as_str(),
                    format!("version filed under `{key}` but owned by `{}`", v.unit_id),
                );
            }
            if !is_valid_version_id(v.id.as_str()) {
                fault(v.id.as_str(), "invalid version identifier".into());
            }
            if version_owner.insert(&v.id, &v.unit_id).is_some() {
                fault(v.id.as_str(), "duplicate version id".into());
            }
            if let Err(parse) = template::parse(&v.template) {
                for f in parse {
                    fault(v.id.as_str(), format!("template fault: {f}"));
                }
            }
        }
    }
    for v in doc.all_versions() {
        let Some(base) = &v.derived_from else {
            continue;
        };
        if v.rationale.trim().is_empty() {
            fault(v.id.as_str(), "derived version has no rationale".into());
        }
        match version_owner.get(base) {
            None => fault(
                v.id.as_str(),
                format!("lineage names unknown version `{base}`"),
            ),
            Some(owner) if **owner != v.unit_id => fault(
                v.id.as_str(),
                format!("lineage fault: `{base}` belongs to unit `{owner}`"),
            ),
            _ => {}
        }
    }
    // lineage cycles
    let derived: BTreeMap<&VersionId, &VersionId> = doc
        .all_versions()
        .filter_map(|v| v.derived_from.as_ref().map(|b| (&v.id, b)))
        .collect();
    for start in derived.keys() {
        let mut cursor = derived.get(start).copied();
        let mut steps = 0;
        while let Some(next) = cursor {
            if next == *start {
                fault(start.as_str(), "lineage cycle".into());
                break;
            }
            steps += 1;
            if steps > derived.len() {
                break;
            }
            cursor = derived.get(next).copied();
        }
    }

    let mut names = BTreeSet::new();
    for p in &doc.parameters {
        if !names.insert(p.name.as_str()) {
            fault(&p.name, "duplicate parameter".into());
        }
        if !is_valid_name(&p.name) {
            fault(&p.name, "invalid parameter name".into());
        }
        if matches!(&p.ptype, ParamType::Enum(v) if v.is_empty()) {
            fault(&p.name, "enum parameter has no values".into());
        }
    }

    let mut ids = BTreeSet::new();
    for c in &doc.constraints {
        if !ids.insert(c.id.as_str()) {
            fault(&c.id, "duplicate constraint id".into());
        }
        if let Err(msg) = constraint::validate_constraint(doc, c) {
            fault(&c.id, msg);
        }
    }
    faults
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Notify,
    Enforce,
}

/// A single edit to a document instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Delta {
    Include { unit: UnitId },
    Exclude { unit: UnitId },
    Select { unit: UnitId, version: VersionId },
    Deselect { unit: UnitId },
    Bind { param: String, value: Value },
    Unbind { param: String },
}

/// What an applied edit changed, used to drive incremental checking.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Touched {
    /// Units whose inclusion flipped.
    pub units: BTreeSet<UnitId>,
    /// Units whose selection changed.
    pub selection_units: BTreeSet<UnitId>,
    /// Versions whose selected status flipped.
    pub versions: BTreeSet<VersionId>,
    pub params: BTreeSet<String>,
    /// Newly included units.
    pub added: BTreeSet<UnitId>,
}

impl Touched {
    pub fn merge(&mut self, other: Touched) {
        self.units.extend(other.units);
        self.selection_units.extend(other.selection_units);
        self.versions.extend(other.versions);
        self.params.extend(other.params);
        self.added.extend(other.added);
    }
}

/// A (partial) contract drafted from a generic document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentInstance {
    pub id: String,
    pub generic_id: String,
    pub generic_schema_version: u32,
    pub included: BTreeSet<UnitId>,
    pub selections: BTreeMap<UnitId, VersionId>,
    pub bindings: BTreeMap<String, Value>,
    pub mode: Mode,
    /// Bumped by every applied edit.
    #[serde(default)]
    pub revision: u64,
}

impl DocumentInstance {
    /// A fresh instance containing only the root unit.
    pub fn new(id: &str, doc: &GenericDocument, mode: Mode) -> Self {
        DocumentInstance {
            id: id.to_string(),
            generic_id: doc.id.clone(),
            generic_schema_version: doc.schema_version,
            included: BTreeSet::from([doc.root.clone()]),
            selections: BTreeMap::new(),
            bindings: BTreeMap::new(),
            mode,
            revision: 0,
        }
    }

    /// Equality of inclusion, selection and bindings, ignoring ids, mode and revision.
    pub fn same_content(&self, other: &DocumentInstance) -> bool {
        self.included == other.included
            && self.selections == other.selections
            && self.bindings == other.bindings
    }

    pub fn is_selected(&self, doc_version_unit: &UnitId, version: &VersionId) -> bool {
        self.selections.get(doc_version_unit) == Some(version)
    }

    /// Applies `delta` with ancestor closure on include and cascade on exclude.
    ///
    /// On error the instance is unchanged.
    pub fn apply(
        &mut self,
        doc: &GenericDocument,
        tree: &Tree,
        delta: &Delta,
    ) -> Result<Touched, ModelError> {
        let mut touched = Touched::default();
        match delta {
            Delta::Include { unit } => {
                if !doc.units.contains_key(unit) {
                    return Err(ModelError::UnknownUnit(unit.clone()));
                }
                for u in std::iter::once(unit).chain(tree.ancestors(unit.as_str())) {
                    if self.included.insert(u.clone()) {
                        touched.units.insert(u.clone());
                        touched.added.insert(u.clone());
                    }
                }
            }
            Delta::Exclude { unit } => {
                if !doc.units.contains_key(unit) {
                    return Err(ModelError::UnknownUnit(unit.clone()));
                }
                if *unit == doc.root {
                    return Err(ModelError::CannotExcludeRoot);
                }
                if self.included.contains(unit) {
                    let mut gone = vec![unit.clone()];
                    gone.extend(tree.descendants(doc, unit.as_str()));
                    for u in gone {
                        if self.included.remove(&u) {
                            touched.units.insert(u.clone());
                        }
                        if let Some(v) = self.selections.remove(&u) {
                            touched.selection_units.insert(u.clone());
                            touched.versions.insert(v);
                        }
                    }
                }
            }
            Delta::Select { unit, version } => {
                if !doc.units.contains_key(unit) {
                    return Err(ModelError::UnknownUnit(unit.clone()));
                }
                let owner = &doc
                    .version(version.as_str())
                    .ok_or_else(|| ModelError::UnknownVersion(version.clone()))?
                    .unit_id;
                if owner != unit {
                    return Err(ModelError::VersionNotOfUnit {
                        unit: unit.clone(),
                        version: version.clone(),
                    });
                }
                if !self.included.contains(unit) {
                    return Err(ModelError::NotIncluded(unit.clone()));
                }
                if let Some(conflicting) = self.selection_conflict(doc, tree, unit) {
                    return Err(ModelError::MixedGranularity {
                        unit: unit.clone(),
                        conflicting,
                    });
                }
                let previous = self.selections.insert(unit.clone(), version.clone());
                if previous.as_ref() != Some(version) {
                    touched.selection_units.insert(unit.clone());
                    touched.versions.insert(version.clone());
                    touched.versions.extend(previous);
                }
            }
            Delta::Deselect { unit } => {
                if !doc.units.contains_key(unit) {
                    return Err(ModelError::UnknownUnit(unit.clone()));
                }
                if let Some(v) = self.selections.remove(unit) {
                    touched.selection_units.insert(unit.clone());
                    touched.versions.insert(v);
                }
            }
            Delta::Bind { param, value } => {
                let decl = doc
                    .parameter(param)
                    .ok_or_else(|| ModelError::UnknownParameter(param.clone()))?;
                if !value.matches(&decl.ptype) {
                    return Err(ModelError::TypeMismatch {
                        name: param.clone(),
                        expected: decl.ptype.to_string(),
                        got: value.type_name(),
                    });
                }
                if self.bindings.insert(param.clone(), value.clone()).as_ref() != Some(value) {
                    touched.params.insert(param.clone());
                }
            }
            Delta::Unbind { param } => {
                if doc.parameter(param).is_none() {
                    return Err(ModelError::UnknownParameter(param.clone()));
                }
                if self.bindings.remove(param).is_some() {
                    touched.params.insert(param.clone());
                }
            }
        }
        self.revision += 1;
        Ok(touched)
    }

    /// An ancestor or descendant of `unit` that already has a selection.
    pub fn selection_conflict(
        &self,
        doc: &GenericDocument,
        tree: &Tree,
        unit: &UnitId,
    ) -> Option<UnitId> {
        tree.ancestors(unit.as_str())
            .find(|a| self.selections.contains_key(*a))
            .cloned()
            .or_else(|| {
                tree.descendants(doc, unit.as_str())
                    .into_iter()
                    .find(|d| self.selections.contains_key(d))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(n: usize) -> GenericDocument {
        let mut doc = GenericDocument::new("g", "Conditions", "root");
        for i in 1..=n {
            doc.push_unit(
                "root",
                UnitKind::Part,
                &format!("Part {i}"),
                &format!("p{i}"),
            )
            .unwrap();
        }
        doc
    }

    #[test]
    fn add_unit_grows_parent_and_enforces_rank() {
        let mut doc = parts(1);
        let id = doc
            .add_unit("p1", UnitKind::Section, "Precedence of Documents", 0, None)
            .unwrap();
        assert_eq!(doc.unit("p1").unwrap().children, vec![id.clone()]);
        assert_eq!(
            doc.add_unit(id.as_str(), UnitKind::Part, "bad", 0, None),
            Err(ModelError::RankViolation {
                parent: "section",
                child: "part"
            })
        );
        // levels may be skipped
        doc.add_unit("p1", UnitKind::Sentence, "A sentence", 1, Some("s1"))
            .unwrap();
        assert!(matches!(
            doc.add_unit("p1", UnitKind::Section, "dup", 0, Some("s1")),
            Err(ModelError::DuplicateUnit(_))
        ));
        assert!(matches!(
            doc.add_unit("nope", UnitKind::Section, "x", 0, None),
            Err(ModelError::UnknownUnit(_))
        ));
        assert!(matches!(
            doc.add_unit("p1", UnitKind::Section, "x", 9, None),
            Err(ModelError::PositionOutOfRange { .. })
        ));
        assert!(validate_structure(&doc).is_empty());
    }

    #[test]
    fn versions_append_and_record_lineage() {
        let mut doc = parts(1);
        doc.push_unit("p1", UnitKind::Section, "Rate of Progress", "s14-6")
            .unwrap();
        let v1 = doc
            .add_version(
                "s14-6",
                NewVersion::new("The Engineer shall notify.").provenance("IEE MF/1 (1988)"),
            )
            .unwrap();
        assert_eq!(v1.as_str(), "s14-6:v1");
        let before = doc.versions_of("s14-6").to_vec();
        let v2 = doc
            .add_version(
                "s14-6",
                NewVersion::new("The Engineer may notify.")
                    .derived_from(v1.clone())
                    .rationale("soften engineer's duty to a discretion"),
            )
            .unwrap();
        assert_eq!(
            doc.version(v2.as_str()).unwrap().derived_from,
            Some(v1.clone())
        );
        assert_eq!(&doc.versions_of("s14-6")[..1], &before[..]);
        assert_eq!(
            doc.add_version("s14-6", NewVersion::new("x").derived_from(v1.clone())),
            Err(ModelError::MissingRationale("s14-6".into()))
        );
        doc.push_unit("p1", UnitKind::Section, "Other", "other")
            .unwrap();
        assert!(matches!(
            doc.add_version(
                "other",
                NewVersion::new("x").derived_from(v1).rationale("r")
            ),
            Err(ModelError::LineageUnitMismatch { .. })
        ));
        assert!(matches!(
            doc.add_version("other", NewVersion::new("{{param")),
            Err(ModelError::Template { .. })
        ));
    }

    #[test]
    fn parameters_are_unique_and_enums_nonempty() {
        let mut doc = parts(0);
        doc.declare_parameter(ParameterDecl::new("buyer", ParamType::Party, ""))
            .unwrap();
        assert_eq!(
            doc.declare_parameter(ParameterDecl::new("buyer", ParamType::Party, "")),
            Err(ModelError::DuplicateParameter("buyer".into()))
        );
        assert_eq!(
            doc.declare_parameter(ParameterDecl::new("priority", ParamType::Enum(vec![]), "")),
            Err(ModelError::EmptyEnum("priority".into()))
        );
    }

    #[test]
    fn labels_follow_included_siblings() {
        let mut doc = parts(4);
        doc.push_unit("p4", UnitKind::Section, "Precedence of Documents", "s4-1")
            .unwrap();
        let scheme = LabelScheme::default();
        assert_eq!(doc.unit_label(None, "s4-1", &scheme).unwrap(), "4-1");
        assert_eq!(doc.unit_label(None, "root", &scheme).unwrap(), "");

        let tree = Tree::new(&doc);
        let mut inst = DocumentInstance::new("i", &doc, Mode::Notify);
        inst.apply(
            &doc,
            &tree,
            &Delta::Include {
                unit: "s4-1".into(),
            },
        )
        .unwrap();
        assert_eq!(doc.unit_label(Some(&inst), "s4-1", &scheme).unwrap(), "1-1");
        assert_eq!(
            doc.unit_label(Some(&inst), "p2", &scheme),
            Err(ModelError::NotIncluded("p2".into()))
        );
        let dotted = LabelScheme {
            separator: ".".into(),
        };
        assert_eq!(doc.unit_label(None, "s4-1", &dotted).unwrap(), "4.1");
        let all = tree.labels(&doc, &inst, &scheme);
        assert_eq!(all["s4-1"], "1-1");
        assert_eq!(all["p4"], "1");
    }

    #[test]
    fn validate_structure_reports_cycles_and_lineage_faults() {
        let mut doc = parts(2);
        doc.units.get_mut("p1").unwrap().children.push("p1".into());
        let faults = validate_structure(&doc);
        assert!(
            faults.iter().any(|f| f.message.contains("cycle")),
            "{faults:?}"
        );

        let mut doc = parts(2);
        doc.add_version("p1", NewVersion::new("a")).unwrap();
        doc.add_version("p2", NewVersion::new("b")).unwrap();
        doc.versions.get_mut("p2").unwrap()[0].derived_from = Some("p1:v1".into());
        doc.versions.get_mut("p2").unwrap()[0].rationale = "r".into();
        let faults = validate_structure(&doc);
        assert_eq!(faults.len(), 1);
        assert!(faults[0].message.contains("lineage"));
    }

    #[test]
    fn exclude_cascades_and_select_rejects_mixed_granularity() {
        let mut doc = parts(1);
        doc.push_unit("p1", UnitKind::Section, "S", "s").unwrap();
        doc.push_unit("s", UnitKind::Provision, "P", "pr").unwrap();
        doc.add_version("s", NewVersion::new("section text"))
            .unwrap();
        doc.add_version("pr", NewVersion::new("provision text"))
            .unwrap();
        let tree = Tree::new(&doc);
        let mut inst = DocumentInstance::new("i", &doc, Mode::Notify);
        let t = inst
            .apply(&doc, &tree, &Delta::Include { unit: "pr".into() })
            .unwrap();
        assert_eq!(t.added.len(), 3);
        inst.apply(
            &doc,
            &tree,
            &Delta::Select {
                unit: "pr".into(),
                version: "pr:v1".into(),
            },
        )
        .unwrap();
        let before = inst.clone();
        assert_eq!(
            inst.apply(
                &doc,
                &tree,
                &Delta::Select {
                    unit: "s".into(),
                    version: "s:v1".into()
                }
            ),
            Err(ModelError::MixedGranularity {
                unit: "s".into(),
                conflicting: "pr".into()
            })
        );
        assert_eq!(inst, before);
        let t = inst
            .apply(&doc, &tree, &Delta::Exclude { unit: "p1".into() })
            .unwrap();
        assert_eq!(inst.included, BTreeSet::from(["root".into()]));
        assert!(inst.selections.is_empty());
        assert!(t.versions.contains("pr:v1"));
        assert_eq!(
            inst.apply(
                &doc,
                &tree,
                &Delta::Exclude {
                    unit: "root".into()
                }
            ),
            Err(ModelError::CannotExcludeRoot)
        );
    }
}
