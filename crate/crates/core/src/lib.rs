//! Constraint-driven assembly of contract documents.
//!
//! A [`GenericDocument`](model::GenericDocument) describes a class of
//! contracts: a tree of units, the text versions available for each unit,
//! document-wide parameters and the constraints that tie units together.
//! Drafters build a [`DocumentInstance`](model::DocumentInstance) by
//! including units, selecting versions and binding parameters inside an
//! [`assembler::Session`], which keeps a live [`CheckReport`](constraint::CheckReport)
//! and renders the finished contract text.
//!
//! The [`cases`] module is independent of documents: it enumerates the full
//! universe of factual cases for a set of condition/outcome rules and reports
//! cases no rule covers and cases where rules disagree.

pub mod assembler;
pub mod cases;
pub mod constraint;
mod exec;
pub mod model;
pub mod store;
pub mod template;
pub mod value;

#[cfg(feature = "testing")]
pub mod testing;

pub use assembler::{EditOutcome, FinalizedInstance, RenderOptions, RenderedDocument, Session};
pub use constraint::{Atom, CheckReport, Checker, Constraint, ConstraintKind, Delta, Origin};
pub use exec::Exec;
pub use model::{
    DocumentInstance, GenericDocument, LabelScheme, Mode, ParamType, ParameterDecl, RoleTag, Unit,
    UnitId, UnitKind, Version, VersionId,
};
pub use value::Value;
