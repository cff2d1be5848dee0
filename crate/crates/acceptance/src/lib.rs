//! Reference implementations used by the acceptance suite.
//!
//! Each oracle is written against the public data model only and favours
//! the most direct formulation over speed: rescans instead of indexes,
//! enumeration instead of search.

pub mod cases;
pub mod enforce;
pub mod sat;

use std::collections::BTreeMap;

use contract_cad::{GenericDocument, UnitId};

/// Parent of every non-root unit, read off the children lists.
pub fn parents(doc: &GenericDocument) -> BTreeMap<UnitId, UnitId> {
    doc.units
        .values()
        .flat_map(|u| u.children.iter().map(move |c| (c.clone(), u.id.clone())))
        .collect()
}

/// Units in document order, root first.
pub fn preorder(doc: &GenericDocument) -> Vec<UnitId> {
    let mut out = Vec::new();
    let mut stack = vec![doc.root.clone()];
    while let Some(u) = stack.pop() {
        stack.extend(doc.units[&u].children.iter().rev().cloned());
        out.push(u);
    }
    out
}
