//! Fragment templates: literal text with parameter slots and cross-references.
//!
//! Grammar:
//!
//! ```text
//! template = { literal | "{{param " name "}}" | "{{ref " name "}}" }
//! name     = [A-Za-z0-9_-]+
//! ```
//!
//! Inside literals `\{{` stands for `{{` and `\\` for `\`. A `{` that is
//! directly followed by `{{` is literal text, so a literal may end in `{`
//! right before a marker.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::constraint::{Atom, Constraint, ConstraintKind, Origin};
use crate::model::{is_valid_name, GenericDocument, UnitId, VersionId};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Literal(String),
    Param(String),
    Ref(UnitId),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Template {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    UnterminatedMarker,
    UnknownEscape,
    EmptyName,
    /// `{{` followed by something other than `param ` or `ref `.
    UnknownMarker,
    /// A name with characters outside `[A-Za-z0-9_-]`.
    InvalidName,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{kind:?} at byte {offset}")]
pub struct ParseFault {
    pub offset: usize,
    pub kind: FaultKind,
}

/// Parses template source. All faults are reported; no template is produced if any occur.
pub fn parse(source: &str) -> Result<Template, Vec<ParseFault>> {
    let bytes = source.as_bytes();
    let mut nodes = Vec::new();
    let mut faults = Vec::new();
    let mut literal = String::new();
    let mut i = 0;
    let mut run_start = 0;

    // Copies source[run_start..end] into the literal buffer.
    let flush = |literal: &mut String, run_start: usize, end: usize| {
        literal.push_str(&source[run_start..end]);
    };

    while i < bytes.len() {
        match bytes[i] {
            b'\\' => {
                flush(&mut literal, run_start, i);
                if source[i + 1..].starts_with("{{") {
                    literal.push_str("{{");
                    i += 3;
                } else if bytes.get(i + 1) == Some(&b'\\') {
                    literal.push('\\');
                    i += 2;
                } else {
                    faults.push(ParseFault {
                        offset: i,
                        kind: FaultKind::UnknownEscape,
                    });
                    i += 1;
                }
                run_start = i;
            }
            b'{' if bytes.get(i + 1) == Some(&b'{') && bytes.get(i + 2) != Some(&b'{') => {
                flush(&mut literal, run_start, i);
                let rest = &source[i + 2..];
                let (ctor, name_start): (fn(String) -> Node, usize) = if rest.starts_with("param ")
                {
                    (Node::Param, i + 2 + "param ".len())
                } else if rest.starts_with("ref ") {
                    (|n| Node::Ref(UnitId(n)), i + 2 + "ref ".len())
                } else {
                    match rest.find("}}") {
                        Some(_) => faults.push(ParseFault {
                            offset: i,
                            kind: FaultKind::UnknownMarker,
                        }),
                        None => faults.push(ParseFault {
                            offset: i,
                            kind: FaultKind::UnterminatedMarker,
                        }),
                    }
                    i += 2;
                    run_start = i;
                    continue;
                };
                match source[name_start..].find("}}") {
                    None => {
                        faults.push(ParseFault {
                            offset: i,
                            kind: FaultKind::UnterminatedMarker,
                        });
                        i = bytes.len();
                    }
                    Some(len) => {
                        let name = &source[name_start..name_start + len];
                        if name.is_empty() {
                            faults.push(ParseFault {
                                offset: name_start,
                                kind: FaultKind::EmptyName,
                            });
                        } else if !is_valid_name(name) {
                            faults.push(ParseFault {
                                offset: name_start,
                                kind: FaultKind::InvalidName,
                            });
                        } else {
                            if !literal.is_empty() {
                                nodes.push(Node::Literal(std::mem::take(&mut literal)));
                            }
                            nodes.push(ctor(name.to_string()));
                        }
                        i = name_start + len + 2;
                    }
                }
                run_start = i;
            }
            _ => i += 1,
        }
    }
    flush(&mut literal, run_start, bytes.len().max(run_start));
    if !literal.is_empty() {
        nodes.push(Node::Literal(literal));
    }
    if faults.is_empty() {
        Ok(Template { nodes })
    } else {
        Err(faults)
    }
}

impl Template {
    /// Re-serializes to template source, escaping literals.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            match node {
                Node::Literal(text) => out.push_str(&escape_literal(text)),
                Node::Param(name) => {
                    out.push_str("{{param ");
                    out.push_str(name);
                    out.push_str("}}");
                }
                Node::Ref(unit) => {
                    out.push_str("{{ref ");
                    out.push_str(unit.as_str());
                    out.push_str("}}");
                }
            }
        }
        out
    }

    /// Names of parameters used, deduplicated.
    pub fn params(&self) -> BTreeSet<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Param(p) => Some(p.as_str()),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_source())
    }
}

fn escape_literal(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(ch) = rest.chars().next() {
        if rest.starts_with("{{") {
            out.push_str("\\{{");
            rest = &rest[2..];
        } else if ch == '\\' {
            out.push_str("\\\\");
            rest = &rest[1..];
        } else {
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    out
}

/// Cross-reference targets of `t`, deduplicated.
pub fn extract_crossrefs(t: &Template) -> BTreeSet<UnitId> {
    t.nodes
        .iter()
        .filter_map(|n| match n {
            Node::Ref(u) => Some(u.clone()),
            _ => None,
        })
        .collect()
}

/// A cross-reference that names no unit of the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuthoringFault {
    pub version: VersionId,
    pub target: UnitId,
}

/// Id given to the constraint derived from `version` referencing `target`.
pub fn textual_constraint_id(version: &VersionId, target: &UnitId) -> String {
    format!("xref:{version}->{target}")
}

/// One `Requires(VersionSelected(v) => UnitIncluded(target))` per cross-reference
/// from a version of one unit to a different unit.
///
/// Output is ordered by unit id, then version id, then target id. Templates that
/// fail to parse contribute nothing.
pub fn derive_textual_constraints(doc: &GenericDocument) -> (Vec<Constraint>, Vec<AuthoringFault>) {
    let mut constraints = Vec::new();
    let mut faults = Vec::new();
    for (unit, versions) in &doc.versions {
        let mut sorted: Vec<_> = versions.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        for v in sorted {
            let Ok(t) = parse(&v.template) else { continue };
            for target in extract_crossrefs(&t) {
                if target == *unit {
                    continue;
                }
                if !doc.units.contains_key(&target) {
                    faults.push(AuthoringFault {
                        version: v.id.clone(),
                        target,
                    });
                    continue;
                }
                constraints.push(Constraint {
                    id: textual_constraint_id(&v.id, &target),
                    kind: ConstraintKind::Requires {
                        antecedent: Atom::VersionSelected(v.id.clone()),
                        consequent: target.clone(),
                    },
                    origin: Origin::DerivedTextual {
                        source: v.id.clone(),
                    },
                    message: String::new(),
                });
            }
        }
    }
    (constraints, faults)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderFault {
    #[error("parameter `{0}` is unbound")]
    UnboundParameter(String),
    #[error("cross-reference to `{0}`, which is not included")]
    DanglingReference(UnitId),
}

/// Renders `t` with literal text verbatim, parameters in canonical form and
/// cross-references replaced by the target's label.
pub fn render_fragment(
    t: &Template,
    bindings: &BTreeMap<String, Value>,
    labeler: impl Fn(&UnitId) -> Option<String>,
) -> Result<String, RenderFault> {
    render_with(t, bindings, labeler, false)
}

/// Like [`render_fragment`] but unbound parameters become `⟨unbound:NAME⟩`.
pub fn render_fragment_draft(
    t: &Template,
    bindings: &BTreeMap<String, Value>,
    labeler: impl Fn(&UnitId) -> Option<String>,
) -> Result<String, RenderFault> {
    render_with(t, bindings, labeler, true)
}

fn render_with(
    t: &Template,
    bindings: &BTreeMap<String, Value>,
    labeler: impl Fn(&UnitId) -> Option<String>,
    placeholders: bool,
) -> Result<String, RenderFault> {
    let mut out = String::new();
    for node in &t.nodes {
        match node {
            Node::Literal(text) => out.push_str(text),
            Node::Param(name) => match bindings.get(name) {
                Some(v) => out.push_str(&v.canonical()),
                None if placeholders => {
                    out.push_str("⟨unbound:");
                    out.push_str(name);
                    out.push('⟩');
                }
                None => return Err(RenderFault::UnboundParameter(name.clone())),
            },
            Node::Ref(unit) => match labeler(unit) {
                Some(label) => out.push_str(&label),
                None => return Err(RenderFault::DanglingReference(unit.clone())),
            },
        }
    }
    Ok(out)
}
