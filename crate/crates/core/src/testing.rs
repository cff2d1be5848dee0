//! Seeded random generators for documents, instances, edits and rule sets.
//!
//! Shared by property tests, the acceptance suite and the benches. Every
//! generated document passes [`validate_structure`](crate::model::validate_structure).

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

use crate::cases::{CaseRule, Factor, Literal};
use crate::constraint::{Atom, Constraint, ParamExpr};
use crate::model::{
    Delta, DocumentInstance, GenericDocument, Mode, NewVersion, ParameterDecl, UnitId, UnitKind,
    VersionId,
};
use crate::value::{Money, ParamType, Value};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Size bounds for [`random_document`].
#[derive(Debug, Clone)]
pub struct DocShape {
    /// Units including the root.
    pub max_units: usize,
    pub max_versions: usize,
    /// Authored constraints.
    pub max_constraints: usize,
    /// Probability that a non-root unit carries versions.
    pub versioned_ratio: f64,
    /// Use parameters in templates and parameter rules.
    pub params: bool,
    /// Allow `{{ref ..}}` markers in templates.
    pub refs: bool,
}

impl Default for DocShape {
    fn default() -> Self {
        DocShape {
            max_units: 30,
            max_versions: 3,
            max_constraints: 40,
            versioned_ratio: 0.5,
            params: true,
            refs: true,
        }
    }
}

const WORDS: &[&str] = &[
    "the",
    "Contractor",
    "shall",
    "Engineer",
    "may",
    "notice",
    "within",
    "days",
    "of",
    "Works",
    "payment",
    "Employer",
    "completion",
    "{",
    "}",
    "\\",
    "clause",
];

/// Declared by every generated document when `params` is on.
pub fn standard_parameters() -> Vec<ParameterDecl> {
    vec![
        ParameterDecl::new("buyer", ParamType::Party, "purchasing party"),
        ParameterDecl::new("seller", ParamType::Party, "supplying party"),
        ParameterDecl::new("draftDate", ParamType::Date, "date of this draft"),
        ParameterDecl::new(
            "effectiveDate",
            ParamType::Date,
            "date the agreement comes into force",
        ),
        ParameterDecl::new("price", ParamType::Money, "contract price"),
        ParameterDecl::new("days", ParamType::Integer, "notice period"),
        ParameterDecl::new("rate", ParamType::Decimal, "interest rate"),
        ParameterDecl::new(
            "law",
            ParamType::Enum(vec!["english".into(), "swiss".into()]),
            "governing law",
        ),
    ]
}

const RULES: &[&str] = &[
    "distinct(buyer,seller)",
    "draftDate < effectiveDate",
    "defined(effectiveDate)",
    "days <= \"90\" && days != \"0\"",
    "price != \"0 GBP\"",
    "law = \"english\" && defined(buyer)",
    "rate < \"10.5\"",
];

fn escape_literal(word: &str) -> String {
    word.replace('\\', "\\\\").replace("{{", "\\{{")
}

fn random_template(rng: &mut TestRng, shape: &DocShape, units: &[UnitId]) -> String {
    let len = rng.random_range(1..8);
    let mut parts = Vec::new();
    for _ in 0..len {
        let roll: f64 = rng.random();
        if shape.params && roll < 0.2 {
            let p = standard_parameters();
            parts.push(format!(
                "{{{{param {}}}}}",
                p.choose(rng).expect("non-empty").name
            ));
        } else if shape.refs && roll < 0.3 {
            parts.push(format!(
                "{{{{ref {}}}}}",
                units.choose(rng).expect("non-empty")
            ));
        } else {
            parts.push(escape_literal(WORDS.choose(rng).expect("non-empty")));
        }
    }
    parts.join(" ")
}

pub fn random_document(rng: &mut TestRng, shape: &DocShape) -> GenericDocument {
    let mut doc = GenericDocument::new("gen", "Generated Conditions", "root");
    let n = rng.random_range(1..=shape.max_units.max(1));
    let mut ids: Vec<UnitId> = vec!["root".into()];
    for i in 1..n {
        let candidates: Vec<&UnitId> = ids
            .iter()
            .filter(|u| doc.units[*u].kind != UnitKind::Sentence)
            .collect();
        let parent = (*candidates.choose(rng).expect("root is a candidate")).clone();
        let prank = doc.units[&parent].kind.rank();
        let rank = (prank + rng.random_range(1..=2)).min(4);
        let kind = UnitKind::ALL[rank as usize];
        let pos = rng.random_range(0..=doc.units[&parent].children.len());
        let id = doc
            .add_unit(
                parent.as_str(),
                kind,
                &format!("Heading {i}"),
                pos,
                Some(&format!("u{i}")),
            )
            .expect("generated unit is valid");
        ids.push(id);
    }
    if shape.params {
        for p in standard_parameters() {
            doc.declare_parameter(p).expect("fresh parameter");
        }
    }
    for u in ids.iter().skip(1) {
        if !rng.random_bool(shape.versioned_ratio) {
            continue;
        }
        let count = rng.random_range(1..=shape.max_versions.max(1));
        let mut prev: Option<VersionId> = None;
        for _ in 0..count {
            let mut nv = NewVersion::new(random_template(rng, shape, &ids)).provenance("generated");
            if let Some(base) = &prev {
                if rng.random_bool(0.5) {
                    nv = nv.derived_from(base.clone()).rationale("adapted");
                }
            }
            prev = Some(
                doc.add_version(u.as_str(), nv)
                    .expect("generated version is valid"),
            );
        }
    }
    let versions: Vec<VersionId> = doc.all_versions().map(|v| v.id.clone()).collect();
    let m = rng.random_range(0..=shape.max_constraints);
    let atom = |rng: &mut TestRng| -> Atom {
        if !versions.is_empty() && rng.random_bool(0.3) {
            Atom::VersionSelected(versions.choose(rng).expect("non-empty").clone())
        } else {
            Atom::UnitIncluded(ids.choose(rng).expect("non-empty").clone())
        }
    };
    for k in 0..m {
        let id = format!("c{k:02}");
        let c = match rng.random_range(0..10) {
            0..=3 => {
                let a = atom(rng);
                let target = ids.choose(rng).expect("non-empty").clone();
                Constraint::requires(&id, a, target.as_str(), "")
            }
            4..=6 => {
                let (a, b) = (atom(rng), atom(rng));
                if a == b {
                    continue;
                }
                Constraint::excludes(&id, a, b, "")
            }
            7 | 8 => {
                let size = rng.random_range(2..=3).min(ids.len());
                let group: BTreeSet<&str> =
                    ids.choose_multiple(rng, size).map(|u| u.as_str()).collect();
                if group.len() < 2 {
                    continue;
                }
                Constraint::exactly_one(&id, group, "")
            }
            _ => {
                if !shape.params {
                    continue;
                }
                let expr: ParamExpr = RULES
                    .choose(rng)
                    .expect("non-empty")
                    .parse()
                    .expect("valid rule");
                Constraint::param_rule(&id, expr, "")
            }
        };
        doc.add_constraint(c)
            .expect("generated constraint is valid");
    }
    doc
}

pub fn random_value(rng: &mut TestRng, ptype: &ParamType) -> Value {
    match ptype {
        ParamType::Text => Value::Text(WORDS.choose(rng).expect("non-empty").to_string()),
        ParamType::Party => Value::Party(
            ["Acme Ltd", "Borg plc", "Cyclops SA"]
                .choose(rng)
                .expect("non-empty")
                .to_string(),
        ),
        ParamType::Integer => Value::Integer(rng.random_range(-5..120)),
        ParamType::Decimal => Value::Decimal(Decimal::new(rng.random_range(0..2000), 2)),
        ParamType::Date => Value::Date(
            NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
                + chrono::Days::new(rng.random_range(0..60)),
        ),
        ParamType::Money => Value::Money(Money {
            amount: Decimal::new(rng.random_range(0..3) * 500, 0),
            currency: ["GBP", "EUR"].choose(rng).expect("non-empty").to_string(),
        }),
        ParamType::Enum(values) => Value::Enum(values.choose(rng).expect("non-empty enum").clone()),
    }
}

/// A random edit; mostly applicable, sometimes not (unknown or
/// non-included units, mixed-granularity selections).
pub fn random_delta(rng: &mut TestRng, doc: &GenericDocument, inst: &DocumentInstance) -> Delta {
    let units: Vec<&UnitId> = doc.units.keys().collect();
    let included: Vec<&UnitId> = inst.included.iter().collect();
    let unit = |rng: &mut TestRng| -> UnitId { (*units.choose(rng).expect("root exists")).clone() };
    match rng.random_range(0..12) {
        0..=3 => Delta::Include { unit: unit(rng) },
        4 | 5 => Delta::Exclude { unit: unit(rng) },
        6..=8 => {
            let pool: Vec<&UnitId> = if rng.random_bool(0.9) {
                included
                    .iter()
                    .copied()
                    .filter(|u| !doc.versions_of(u.as_str()).is_empty())
                    .collect()
            } else {
                units.clone()
            };
            match pool.choose(rng) {
                Some(u) => {
                    let vs = doc.versions_of(u.as_str());
                    match vs.choose(rng) {
                        Some(v) => Delta::Select {
                            unit: (*u).clone(),
                            version: v.id.clone(),
                        },
                        None => Delta::Deselect { unit: (*u).clone() },
                    }
                }
                None => Delta::Include { unit: unit(rng) },
            }
        }
        9 => Delta::Deselect { unit: unit(rng) },
        _ => match doc.parameters.choose(rng) {
            Some(p) if rng.random_bool(0.8) => Delta::Bind {
                param: p.name.clone(),
                value: random_value(rng, &p.ptype),
            },
            Some(p) => Delta::Unbind {
                param: p.name.clone(),
            },
            None => Delta::Include { unit: unit(rng) },
        },
    }
}

/// An instance reached by applying random edits to a fresh one.
pub fn random_instance(rng: &mut TestRng, doc: &GenericDocument, steps: usize) -> DocumentInstance {
    let tree = crate::model::Tree::new(doc);
    let mode = if rng.random_bool(0.5) {
        Mode::Notify
    } else {
        Mode::Enforce
    };
    let mut inst = DocumentInstance::new("inst", doc, mode);
    for _ in 0..steps {
        let delta = random_delta(rng, doc, &inst);
        let _ = inst.apply(doc, &tree, &delta);
    }
    inst
}

/// Random factors and rules whose universe stays within `max_cases`.
pub fn random_rule_set(
    rng: &mut TestRng,
    max_factors: usize,
    max_domain: usize,
    max_rules: usize,
) -> (Vec<Factor>, Vec<CaseRule>) {
    let n = rng.random_range(1..=max_factors);
    let factors: Vec<Factor> = (0..n)
        .map(|i| Factor {
            name: format!("f{i}"),
            domain: (0..rng.random_range(2..=max_domain.max(2)))
                .map(|v| format!("v{v}"))
                .collect(),
        })
        .collect();
    let rules = (0..rng.random_range(0..=max_rules))
        .map(|r| {
            let mut condition = Vec::new();
            for f in &factors {
                if rng.random_bool(0.5) {
                    let k = rng.random_range(1..=f.domain.len());
                    condition.push(Literal {
                        factor: f.name.clone(),
                        allowed: f.domain.choose_multiple(rng, k).cloned().collect(),
                    });
                }
            }
            CaseRule {
                id: format!("r{r}"),
                condition,
                outcome: ["pay", "refund", "penalty"]
                    .choose(rng)
                    .expect("non-empty")
                    .to_string(),
            }
        })
        .collect();
    (factors, rules)
}
