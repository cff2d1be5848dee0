//! Drafting sessions: edits under notify or enforce mode, previews, undo,
//! finalization, rendering, instance diffs and promotion of edited text.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::enforce::Closure;
use crate::constraint::{
    Atom, ChainStep, CheckReport, Checker, ConstraintKind, Via, ViolationKind,
};
use crate::model::{
    validate_structure, Delta, DocumentInstance, GenericDocument, LabelScheme, Mode, ModelError,
    NewVersion, StructureFault, Touched, UnitId, VersionId,
};
use crate::template::{self, ParseFault, RenderFault};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("generic document is structurally invalid: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidDocument(Vec<StructureFault>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("a promoted version must record a rationale")]
    EmptyRationale,
    #[error("template does not parse: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    Template(Vec<ParseFault>),
    #[error("instances belong to different generic documents (`{0}` and `{1}`)")]
    DifferentGenerics(String, String),
    #[error("instance `{instance}` belongs to `{expected}`, not `{found}`")]
    WrongGeneric {
        instance: String,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum EditOutcome {
    Applied {
        report: CheckReport,
        /// Units included beyond the edit's own target.
        #[serde(rename = "sideEffects")]
        side_effects: BTreeSet<UnitId>,
    },
    /// The edit was refused; the session is unchanged.
    Blocked {
        reason: String,
        chain: Vec<ChainStep>,
    },
}

impl EditOutcome {
    pub fn is_blocked(&self) -> bool {
        matches!(self, EditOutcome::Blocked { .. })
    }
}

enum Computed {
    Applied {
        after: DocumentInstance,
        report: CheckReport,
        side_effects: BTreeSet<UnitId>,
    },
    Blocked {
        reason: String,
        chain: Vec<ChainStep>,
    },
}

#[derive(Debug, Clone)]
struct LogEntry {
    delta: Delta,
    before: DocumentInstance,
    report: CheckReport,
}

/// One drafter working on one instance against a snapshot of a generic document.
#[derive(Debug, Clone)]
pub struct Session {
    checker: Checker,
    initial: DocumentInstance,
    instance: DocumentInstance,
    report: CheckReport,
    revision: u64,
    log: Vec<LogEntry>,
}

impl Session {
    /// Starts a fresh instance holding only the root unit.
    pub fn new(
        doc: GenericDocument,
        instance_id: &str,
        mode: Mode,
    ) -> Result<Session, AssemblyError> {
        let inst = DocumentInstance::new(instance_id, &doc, mode);
        Session::resume(doc, inst)
    }

    /// Opens an existing instance; the undo log starts empty.
    pub fn resume(
        doc: GenericDocument,
        instance: DocumentInstance,
    ) -> Result<Session, AssemblyError> {
        let faults = validate_structure(&doc);
        if !faults.is_empty() {
            return Err(AssemblyError::InvalidDocument(faults));
        }
        if instance.generic_id != doc.id {
            return Err(AssemblyError::WrongGeneric {
                instance: instance.id.clone(),
                expected: doc.id.clone(),
                found: instance.generic_id.clone(),
            });
        }
        let checker = Checker::new(doc);
        let report = checker.check_full(&instance);
        Ok(Session {
            checker,
            initial: instance.clone(),
            instance,
            report,
            revision: 0,
            log: Vec::new(),
        })
    }

    pub fn checker(&self) -> &Checker {
        &self.checker
    }

    pub fn doc(&self) -> &GenericDocument {
        self.checker.doc()
    }

    pub fn instance(&self) -> &DocumentInstance {
        &self.instance
    }

    /// Instance the undo log starts from.
    pub fn initial(&self) -> &DocumentInstance {
        &self.initial
    }

    pub fn report(&self) -> &CheckReport {
        &self.report
    }

    pub fn mode(&self) -> Mode {
        self.instance.mode
    }

    /// Switches between notify and enforce; undo keeps the current mode.
    pub fn set_mode(&mut self, mode: Mode) {
        if self.instance.mode != mode {
            self.instance.mode = mode;
            self.revision += 1;
        }
    }

    /// Bumped by every applied edit, undo and promotion.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Applied edits, oldest first.
    pub fn log(&self) -> impl Iterator<Item = &Delta> {
        self.log.iter().map(|e| &e.delta)
    }

    pub fn apply_edit(&mut self, delta: &Delta) -> Result<EditOutcome, AssemblyError> {
        Ok(match self.compute(delta)? {
            Computed::Blocked { reason, chain } => EditOutcome::Blocked { reason, chain },
            Computed::Applied {
                after,
                report,
                side_effects,
            } => {
                let before = std::mem::replace(&mut self.instance, after);
                let prev = std::mem::replace(&mut self.report, report.clone());
                self.log.push(LogEntry {
                    delta: delta.clone(),
                    before,
                    report: prev,
                });
                self.revision += 1;
                EditOutcome::Applied {
                    report,
                    side_effects,
                }
            }
        })
    }

    /// What [`Session::apply_edit`] would return, without changing anything.
    pub fn preview_edit(&self, delta: &Delta) -> Result<EditOutcome, AssemblyError> {
        Ok(match self.compute(delta)? {
            Computed::Blocked { reason, chain } => EditOutcome::Blocked { reason, chain },
            Computed::Applied {
                report,
                side_effects,
                ..
            } => EditOutcome::Applied {
                report,
                side_effects,
            },
        })
    }

    pub fn undo(&mut self) -> Result<(), AssemblyError> {
        let entry = self.log.pop().ok_or(AssemblyError::NothingToUndo)?;
        let mode = self.instance.mode;
        self.instance = entry.before;
        self.instance.mode = mode;
        self.report = entry.report;
        self.revision += 1;
        Ok(())
    }

    fn compute(&self, delta: &Delta) -> Result<Computed, AssemblyError> {
        let checker = &self.checker;
        let (doc, tree) = (checker.doc(), checker.tree());
        let mut after = self.instance.clone();
        let enforce = self.mode() == Mode::Enforce;

        if let (true, Delta::Include { unit }) = (enforce, delta) {
            if doc.unit(unit.as_str()).is_none() {
                return Err(ModelError::UnknownUnit(unit.clone()).into());
            }
            let closure = Closure::run(checker, &self.instance, Some(unit), &[]);
            if let Some(chain) = closure.contradiction(checker, &self.instance) {
                return Ok(self.blocked(&Atom::UnitIncluded(unit.clone()), chain));
            }
            after.included.extend(closure.added.iter().cloned());
            after.revision += 1;
            let touched = Touched {
                units: closure.added.clone(),
                added: closure.added.clone(),
                ..Touched::default()
            };
            let report = checker.check_incremental(&after, &touched, &self.report);
            let side_effects = closure.added.into_iter().filter(|u| u != unit).collect();
            return Ok(Computed::Applied {
                after,
                report,
                side_effects,
            });
        }

        let mut touched = match after.apply(doc, tree, delta) {
            Ok(t) => t,
            Err(ModelError::MixedGranularity { unit, conflicting }) => {
                return Ok(Computed::Blocked {
                    reason: ModelError::MixedGranularity { unit, conflicting }.to_string(),
                    chain: Vec::new(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let mut side_effects: BTreeSet<UnitId> = touched.added.clone();
        if let Delta::Include { unit } = delta {
            side_effects.remove(unit);
        }

        if enforce {
            match delta {
                Delta::Select { version, .. } => {
                    let seed = Atom::VersionSelected(version.clone());
                    let closure = Closure::run(checker, &after, None, std::slice::from_ref(&seed));
                    if let Some(chain) = closure.contradiction(checker, &after) {
                        return Ok(self.blocked(&seed, chain));
                    }
                    after.included.extend(closure.added.iter().cloned());
                    touched.units.extend(closure.added.iter().cloned());
                    touched.added.extend(closure.added.iter().cloned());
                    side_effects.extend(closure.added);
                }
                Delta::Exclude { unit } => {
                    let report = checker.check_incremental(&after, &touched, &self.report);
                    let broken: Vec<&crate::constraint::Violation> = report
                        .violations
                        .iter()
                        .filter(|v| {
                            v.kind == ViolationKind::Requires && !self.report.violations.contains(v)
                        })
                        .collect();
                    if !broken.is_empty() {
                        let chain = broken
                            .iter()
                            .map(|v| ChainStep {
                                via: Via::Constraint {
                                    id: v.constraint_id.clone(),
                                },
                                atom: v.atoms[0].clone(),
                            })
                            .collect();
                        let reasons: Vec<&str> =
                            broken.iter().map(|v| v.message.as_str()).collect();
                        return Ok(Computed::Blocked {
                            reason: format!("excluding {unit} would leave: {}", reasons.join("; ")),
                            chain,
                        });
                    }
                    return Ok(Computed::Applied {
                        after,
                        report,
                        side_effects,
                    });
                }
                _ => {}
            }
        }
        let report = checker.check_incremental(&after, &touched, &self.report);
        Ok(Computed::Applied {
            after,
            report,
            side_effects,
        })
    }

    fn blocked(&self, trigger: &Atom, chain: Vec<ChainStep>) -> Computed {
        let steps: Vec<String> = chain
            .iter()
            .map(|s| match &s.via {
                Via::Constraint { id } if Some(s) == chain.last() => {
                    format!("{id} forbids it alongside {}", s.atom)
                }
                Via::Constraint { id } => format!("{id} requires {}", s.atom),
                Via::Ancestor => format!("which needs its parent {}", s.atom),
                Via::Trigger => s.atom.to_string(),
            })
            .collect();
        let reason = if steps.len() == 1 {
            format!("{trigger} conflicts with the instance: {}", steps[0])
        } else {
            format!("{trigger} cannot be added: {}", steps.join(", "))
        };
        Computed::Blocked { reason, chain }
    }

    /// Succeeds iff the report is clean.
    pub fn finalize(&self) -> Result<FinalizedInstance, CheckReport> {
        if !self.report.is_clean() {
            return Err(self.report.clone());
        }
        Ok(FinalizedInstance {
            instance: self.instance.clone(),
            generic_sha256: crate::store::snapshot_hash(self.doc()),
        })
    }

    /// Best-effort draft render with placeholders and a watermark.
    pub fn render(&self, options: &RenderOptions) -> Result<RenderedDocument, RenderError> {
        render(&self.checker, &self.instance, true, options)
    }

    /// Appends a version for `unit`, derived from its current selection, and selects it.
    ///
    /// The version stays in the generic snapshot even if enforce mode blocks the selection.
    pub fn promote_version(
        &mut self,
        unit: &UnitId,
        template_text: &str,
        rationale: &str,
        created_at: &str,
    ) -> Result<(VersionId, EditOutcome), AssemblyError> {
        let doc = self.doc();
        if doc.unit(unit.as_str()).is_none() {
            return Err(ModelError::UnknownUnit(unit.clone()).into());
        }
        if rationale.trim().is_empty() {
            return Err(AssemblyError::EmptyRationale);
        }
        template::parse(template_text).map_err(AssemblyError::Template)?;
        if !self.instance.included.contains(unit) {
            return Err(ModelError::NotIncluded(unit.clone()).into());
        }
        let ancestor_or_descendant = self
            .checker
            .tree()
            .ancestors(unit.as_str())
            .chain(self.checker.tree().descendants(doc, unit.as_str()).iter())
            .find(|u| self.instance.selections.contains_key(*u))
            .cloned();
        if let Some(conflicting) = ancestor_or_descendant {
            return Err(ModelError::MixedGranularity {
                unit: unit.clone(),
                conflicting,
            }
            .into());
        }

        let mut grown = doc.clone();
        let mut new = NewVersion::new(template_text)
            .rationale(rationale)
            .provenance(format!("promoted from instance {}", self.instance.id))
            .created_at(created_at);
        if let Some(base) = self.instance.selections.get(unit) {
            new = new.derived_from(base.clone());
        }
        let version = grown.add_version(unit.as_str(), new)?;
        self.checker = Checker::new(grown);
        self.report = self.checker.check_full(&self.instance);
        self.revision += 1;
        let outcome = self.apply_edit(&Delta::Select {
            unit: unit.clone(),
            version: version.clone(),
        })?;
        Ok((version, outcome))
    }
}

/// A complete, violation-free instance pinned to the generic snapshot it was drafted against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FinalizedInstance {
    instance: DocumentInstance,
    generic_sha256: String,
}

impl FinalizedInstance {
    pub fn instance(&self) -> &DocumentInstance {
        &self.instance
    }

    pub fn generic_sha256(&self) -> &str {
        &self.generic_sha256
    }

    /// Re-pins a stored instance; the store verifies the hash before calling this.
    pub(crate) fn from_parts(instance: DocumentInstance, generic_sha256: String) -> Self {
        FinalizedInstance {
            instance,
            generic_sha256,
        }
    }

    /// Renders against `doc`, which must hash to the pinned snapshot.
    pub fn render(
        &self,
        doc: &GenericDocument,
        options: &RenderOptions,
    ) -> Result<RenderedDocument, RenderError> {
        let actual = crate::store::snapshot_hash(doc);
        if actual != self.generic_sha256 {
            return Err(RenderError::SnapshotMismatch {
                expected: self.generic_sha256.clone(),
                actual,
            });
        }
        render(&Checker::new(doc.clone()), &self.instance, false, options)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenderOptions {
    pub scheme: LabelScheme,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub unit: UnitId,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedDocument {
    pub text: String,
    /// Byte offset where the body (after the header lines) begins.
    pub body_start: usize,
    /// One span per rendered unit, in tree order; together they tile the body.
    pub spans: Vec<Span>,
    pub scheme: LabelScheme,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("version `{version}` cross-references `{target}`, which is not included")]
    DanglingReference { version: VersionId, target: UnitId },
    #[error("version `{version}` uses unbound parameter `{param}`")]
    UnboundParameter { version: VersionId, param: String },
    #[error("unit `{0}` has versions but none is selected")]
    NoVersion(UnitId),
    #[error("generic document hash {actual} does not match the pinned snapshot {expected}")]
    SnapshotMismatch { expected: String, actual: String },
}

pub const DRAFT_WATERMARK: &str = "# DRAFT — not finalized";
pub const NO_VERSION: &str = "⟨no-version⟩";

fn render(
    checker: &Checker,
    inst: &DocumentInstance,
    draft: bool,
    options: &RenderOptions,
) -> Result<RenderedDocument, RenderError> {
    let doc = checker.doc();
    let tree = checker.tree();
    let labels = tree.labels(doc, inst, &options.scheme);
    let mut text = String::new();
    if draft {
        text.push_str(DRAFT_WATERMARK);
        text.push('\n');
    }
    text.push_str(&format!("# {}\n\n", doc.title));
    let body_start = text.len();
    let mut spans = Vec::new();
    let mut shadow: Option<&UnitId> = None;
    for unit in tree.preorder() {
        if *unit == doc.root || !inst.included.contains(unit) {
            continue;
        }
        if let Some(s) = shadow {
            if tree.is_ancestor(s.as_str(), unit.as_str()) {
                continue;
            }
            shadow = None;
        }
        let start = text.len();
        let heading = &doc.units[unit].heading;
        let label = &labels[unit];
        if heading.is_empty() {
            text.push_str(label);
        } else {
            text.push_str(&format!("{label} {heading}"));
        }
        text.push_str("\n\n");
        if let Some(vid) = inst.selections.get(unit) {
            shadow = Some(unit);
            let version = doc.version(vid.as_str()).expect("selected version exists");
            let parsed = template::parse(&version.template).expect("stored templates parse");
            let labeler = |target: &UnitId| labels.get(target).cloned();
            let fragment = if draft {
                template::render_fragment_draft(&parsed, &inst.bindings, labeler)
            } else {
                template::render_fragment(&parsed, &inst.bindings, labeler)
            }
            .map_err(|f| match f {
                RenderFault::DanglingReference(target) => RenderError::DanglingReference {
                    version: vid.clone(),
                    target,
                },
                RenderFault::UnboundParameter(param) => RenderError::UnboundParameter {
                    version: vid.clone(),
                    param,
                },
            })?;
            text.push_str(&fragment);
            text.push_str("\n\n");
        } else if !doc.versions_of(unit.as_str()).is_empty() {
            if !draft {
                return Err(RenderError::NoVersion(unit.clone()));
            }
            text.push_str(NO_VERSION);
            text.push_str("\n\n");
        }
        spans.push(Span {
            unit: unit.clone(),
            start,
            end: text.len(),
        });
    }
    while text.ends_with("\n\n") {
        text.pop();
    }
    if let Some(last) = spans.last_mut() {
        last.end = text.len();
    }
    let body_start = body_start.min(text.len());
    Ok(RenderedDocument {
        text,
        body_start,
        spans,
        scheme: options.scheme.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "change", rename_all = "kebab-case")]
pub enum DiffEntry {
    InclusionChanged {
        unit: UnitId,
        included: bool,
    },
    SelectionChanged {
        unit: UnitId,
        from: Option<VersionId>,
        to: Option<VersionId>,
    },
    BindingChanged {
        param: String,
        from: Option<Value>,
        to: Option<Value>,
    },
}

impl DiffEntry {
    fn key(&self) -> (&str, u8) {
        match self {
            DiffEntry::InclusionChanged { unit, .. } => (unit.as_str(), 0),
            DiffEntry::SelectionChanged { unit, .. } => (unit.as_str(), 1),
            DiffEntry::BindingChanged { param, .. } => (param.as_str(), 2),
        }
    }
}

fn changed<K: Ord + Clone, V: PartialEq + Clone>(
    a: &BTreeMap<K, V>,
    b: &BTreeMap<K, V>,
) -> Vec<(K, Option<V>, Option<V>)> {
    let keys: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| ((*k).clone(), a.get(k).cloned(), b.get(k).cloned()))
        .collect()
}

/// Entries turning `a` into `b`, sorted by unit or parameter id.
pub fn diff(a: &DocumentInstance, b: &DocumentInstance) -> Result<Vec<DiffEntry>, AssemblyError> {
    if a.generic_id != b.generic_id {
        return Err(AssemblyError::DifferentGenerics(
            a.generic_id.clone(),
            b.generic_id.clone(),
        ));
    }
    let mut out: Vec<DiffEntry> = a
        .included
        .symmetric_difference(&b.included)
        .map(|u| DiffEntry::InclusionChanged {
            unit: u.clone(),
            included: b.included.contains(u),
        })
        .collect();
    out.extend(
        changed(&a.selections, &b.selections)
            .into_iter()
            .map(|(unit, from, to)| DiffEntry::SelectionChanged { unit, from, to }),
    );
    out.extend(
        changed(&a.bindings, &b.bindings)
            .into_iter()
            .map(|(param, from, to)| DiffEntry::BindingChanged { param, from, to }),
    );
    out.sort_by(|x, y| x.key().cmp(&y.key()));
    Ok(out)
}

/// Applies diff entries literally (no cascade or closure).
pub fn apply_diff(a: &DocumentInstance, entries: &[DiffEntry]) -> DocumentInstance {
    let mut out = a.clone();
    for e in entries {
        match e {
            DiffEntry::InclusionChanged {
                unit,
                included: true,
            } => {
                out.included.insert(unit.clone());
            }
            DiffEntry::InclusionChanged {
                unit,
                included: false,
            } => {
                out.included.remove(unit);
            }
            DiffEntry::SelectionChanged { unit, to, .. } => match to {
                Some(v) => {
                    out.selections.insert(unit.clone(), v.clone());
                }
                None => {
                    out.selections.remove(unit);
                }
            },
            DiffEntry::BindingChanged { param, to, .. } => match to {
                Some(v) => {
                    out.bindings.insert(param.clone(), v.clone());
                }
                None => {
                    out.bindings.remove(param);
                }
            },
        }
    }
    out
}

/// Constraint ids present in the checker that are derived from cross-references.
pub fn derived_constraint_ids(checker: &Checker) -> BTreeSet<String> {
    checker
        .constraints()
        .iter()
        .filter(|c| matches!(c.origin, crate::constraint::Origin::DerivedTextual { .. }))
        .filter(|c| matches!(c.kind, ConstraintKind::Requires { .. }))
        .map(|c| c.id.clone())
        .collect()
}
