//! Completeness and consistency of condition/outcome rules over a finite
//! universe of cases.
//!
//! Every factor has a finite domain; a case assigns one value to each
//! factor. The universe is enumerated exhaustively, in lexicographic order
//! by factor declaration then domain order, and each case is matched
//! against every rule. A case no rule matches is uncovered; a case matched
//! by rules with two or more distinct outcomes is a conflict.
//!
//! Rule-set text format:
//!
//! ```text
//! # comment
//! factor delivery = on-time | late
//! factor paid = yes | no
//! rule r1: delivery in {late} -> penalty
//! rule r2: delivery in {late} & paid in {yes} -> waiver
//! rule r3: * -> default
//! ```
//!
//! `<factor> in *` allows the whole domain; a bare `*` condition matches
//! every case.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;

/// Largest universe the checks will enumerate.
pub const UNIVERSE_LIMIT: u64 = 1_000_000;
/// Example cases listed per report; totals are always exact.
pub const REPORT_LIMIT: usize = 100;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub domain: Vec<String>,
}

impl Factor {
    pub fn new(name: &str, domain: &[&str]) -> Self {
        Factor {
            name: name.to_string(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// `factor in {allowed…}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub factor: String,
    pub allowed: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRule {
    pub id: String,
    /// Conjunction; empty matches every case.
    pub condition: Vec<Literal>,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RuleSet {
    pub factors: Vec<Factor>,
    pub rules: Vec<CaseRule>,
}

/// One value per factor, in factor declaration order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Case(pub Vec<String>);

impl Case {
    pub fn describe(&self, factors: &[Factor]) -> String {
        factors
            .iter()
            .zip(&self.0)
            .map(|(f, v)| format!("{}={v}", f.name))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CaseError {
    #[error("factor `{0}` is declared twice")]
    DuplicateFactor(String),
    #[error("factor `{0}` needs at least two distinct values")]
    BadDomain(String),
    #[error("rule id `{0}` is used twice")]
    DuplicateRule(String),
    #[error("rule `{rule}` refers to unknown factor `{factor}`")]
    UnknownFactor { rule: String, factor: String },
    #[error("rule `{rule}` allows `{value}`, which is not in the domain of `{factor}`")]
    UnknownValue {
        rule: String,
        factor: String,
        value: String,
    },
    #[error("rule `{rule}` mentions factor `{factor}` twice")]
    RepeatedFactor { rule: String, factor: String },
    #[error("rule `{rule}` allows no value for `{factor}`")]
    EmptyAllowed { rule: String, factor: String },
    #[error("universe of {size} cases exceeds the limit of {limit}")]
    TooLarge { size: u128, limit: u64 },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompletenessReport {
    pub universe: u64,
    pub uncovered_total: u64,
    /// First [`REPORT_LIMIT`] uncovered cases in enumeration order.
    pub uncovered: Vec<Case>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub case: Case,
    /// All rules matching the case.
    pub rules: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsistencyReport {
    pub universe: u64,
    pub conflict_total: u64,
    pub conflicts: Vec<Conflict>,
}

fn validate_factors(factors: &[Factor]) -> Result<(), CaseError> {
    let mut names = BTreeSet::new();
    for f in factors {
        if !names.insert(f.name.as_str()) {
            return Err(CaseError::DuplicateFactor(f.name.clone()));
        }
        let distinct: BTreeSet<&String> = f.domain.iter().collect();
        if f.domain.len() < 2 || distinct.len() != f.domain.len() {
            return Err(CaseError::BadDomain(f.name.clone()));
        }
    }
    Ok(())
}

/// Number of cases, refusing universes above [`UNIVERSE_LIMIT`].
pub fn universe_size(factors: &[Factor]) -> Result<u64, CaseError> {
    validate_factors(factors)?;
    let size = factors
        .iter()
        .fold(1u128, |acc, f| acc.saturating_mul(f.domain.len() as u128));
    if size > UNIVERSE_LIMIT as u128 {
        return Err(CaseError::TooLarge {
            size,
            limit: UNIVERSE_LIMIT,
        });
    }
    Ok(size as u64)
}

/// Rules compiled to per-factor membership tables.
struct Compiled<'a> {
    radices: Vec<usize>,
    rules: Vec<(&'a CaseRule, Vec<Option<Vec<bool>>>)>,
    outcome_ids: Vec<usize>,
}

impl<'a> Compiled<'a> {
    fn new(factors: &[Factor], rules: &'a [CaseRule]) -> Result<Self, CaseError> {
        let mut ids = BTreeSet::new();
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            if !ids.insert(rule.id.as_str()) {
                return Err(CaseError::DuplicateRule(rule.id.clone()));
            }
            let mut tables: Vec<Option<Vec<bool>>> = vec![None; factors.len()];
            for lit in &rule.condition {
                let fi = factors
                    .iter()
                    .position(|f| f.name == lit.factor)
                    .ok_or_else(|| CaseError::UnknownFactor {
                        rule: rule.id.clone(),
                        factor: lit.factor.clone(),
                    })?;
                if tables[fi].is_some() {
                    return Err(CaseError::RepeatedFactor {
                        rule: rule.id.clone(),
                        factor: lit.factor.clone(),
                    });
                }
                if lit.allowed.is_empty() {
                    return Err(CaseError::EmptyAllowed {
                        rule: rule.id.clone(),
                        factor: lit.factor.clone(),
                    });
                }
                let domain = &factors[fi].domain;
                let mut table = vec![false; domain.len()];
                for v in &lit.allowed {
                    let k = domain.iter().position(|d| d == v).ok_or_else(|| {
                        CaseError::UnknownValue {
                            rule: rule.id.clone(),
                            factor: lit.factor.clone(),
                            value: v.clone(),
                        }
                    })?;
                    table[k] = true;
                }
                tables[fi] = Some(table);
            }
            compiled.push((rule, tables));
        }
        let mut outcomes: BTreeMap<&str, usize> = BTreeMap::new();
        let outcome_ids = rules
            .iter()
            .map(|r| {
                let next = outcomes.len();
                *outcomes.entry(r.outcome.as_str()).or_insert(next)
            })
            .collect();
        Ok(Compiled {
            radices: factors.iter().map(|f| f.domain.len()).collect(),
            rules: compiled,
            outcome_ids,
        })
    }

    fn decode(&self, mut index: u64, out: &mut [usize]) {
        for (slot, &radix) in out.iter_mut().zip(&self.radices).rev() {
            *slot = (index % radix as u64) as usize;
            index /= radix as u64;
        }
    }

    fn matches(&self, tables: &[Option<Vec<bool>>], case: &[usize]) -> bool {
        tables
            .iter()
            .zip(case)
            .all(|(t, &v)| t.as_ref().is_none_or(|t| t[v]))
    }
}

fn to_case(factors: &[Factor], idx: &[usize]) -> Case {
    Case(
        factors
            .iter()
            .zip(idx)
            .map(|(f, &i)| f.domain[i].clone())
            .collect(),
    )
}

/// Per-chunk tally: exact count plus the first few hits.
struct Tally<T> {
    total: u64,
    examples: Vec<T>,
}

/// `visit(i, idx, keep)` decodes case `i` into `idx` and reports whether it
/// is a hit; the example is built only when `keep` is set.
fn scan<T: Send>(
    universe: u64,
    width: usize,
    exec: Exec,
    visit: impl Fn(u64, &mut [usize], bool) -> Option<Option<T>> + Sync,
) -> Tally<T> {
    let chunk = |start: u64| {
        let mut tally = Tally {
            total: 0,
            examples: Vec::new(),
        };
        let mut idx = vec![0; width];
        for i in start..(start + CHUNK).min(universe) {
            let keep = tally.examples.len() < REPORT_LIMIT;
            if let Some(hit) = visit(i, &mut idx, keep) {
                tally.total += 1;
                tally.examples.extend(hit);
            }
        }
        tally
    };
    let starts = (0..universe.div_ceil(CHUNK)).map(|c| c * CHUNK);
    let tallies: Vec<Tally<T>> = match exec {
        Exec::Sequential => starts.map(chunk).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => starts
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(chunk)
            .collect(),
    };
    let mut out = Tally {
        total: 0,
        examples: Vec::new(),
    };
    for t in tallies {
        out.total += t.total;
        let room = REPORT_LIMIT - out.examples.len();
        out.examples.extend(t.examples.into_iter().take(room));
    }
    out
}

/// Cases matched by no rule.
pub fn check_completeness(
    factors: &[Factor],
    rules: &[CaseRule],
) -> Result<CompletenessReport, CaseError> {
    check_completeness_with(factors, rules, Exec::default())
}

pub fn check_completeness_with(
    factors: &[Factor],
    rules: &[CaseRule],
    exec: Exec,
) -> Result<CompletenessReport, CaseError> {
    let universe = universe_size(factors)?;
    let compiled = Compiled::new(factors, rules)?;
    let tally = scan(universe, factors.len(), exec, |i, idx, keep| {
        compiled.decode(i, idx);
        let covered = compiled.rules.iter().any(|(_, t)| compiled.matches(t, idx));
        (!covered).then(|| keep.then(|| to_case(factors, idx)))
    });
    Ok(CompletenessReport {
        universe,
        uncovered_total: tally.total,
        uncovered: tally.examples,
    })
}

/// Cases matched by rules with at least two distinct outcomes.
pub fn check_consistency(
    factors: &[Factor],
    rules: &[CaseRule],
) -> Result<ConsistencyReport, CaseError> {
    check_consistency_with(factors, rules, Exec::default())
}

pub fn check_consistency_with(
    factors: &[Factor],
    rules: &[CaseRule],
    exec: Exec,
) -> Result<ConsistencyReport, CaseError> {
    let universe = universe_size(factors)?;
    let compiled = Compiled::new(factors, rules)?;
    let tally = scan(universe, factors.len(), exec, |i, idx, keep| {
        compiled.decode(i, idx);
        let mut matching =
            (0..compiled.rules.len()).filter(|&r| compiled.matches(&compiled.rules[r].1, idx));
        let first = compiled.outcome_ids[matching.next()?];
        if !matching.any(|r| compiled.outcome_ids[r] != first) {
            return None;
        }
        Some(keep.then(|| {
            Conflict {
                case: to_case(factors, idx),
                rules: (0..compiled.rules.len())
                    .filter(|&r| compiled.matches(&compiled.rules[r].1, idx))
                    .map(|r| compiled.rules[r].0.id.clone())
                    .collect(),
            }
        }))
    });
    Ok(ConsistencyReport {
        universe,
        conflict_total: tally.total,
        conflicts: tally.examples,
    })
}

fn is_token(s: &str) -> bool {
    !s.is_empty()
        && !s.chars().any(|c| {
            c.is_whitespace() || matches!(c, '|' | '{' | '}' | ',' | '&' | ':' | '*' | '#')
        })
}

impl RuleSet {
    /// Parses the rule-set text format and validates it.
    pub fn parse(text: &str) -> Result<RuleSet, CaseError> {
        let mut set = RuleSet::default();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| CaseError::Syntax {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("factor ") {
                let (name, values) = rest
                    .split_once('=')
                    .ok_or_else(|| err("expected `factor <name> = v1 | v2`".into()))?;
                let name = name.trim();
                if !is_token(name) {
                    return Err(err(format!("bad factor name `{name}`")));
                }
                let domain: Vec<String> = values.split('|').map(|v| v.trim().to_string()).collect();
                if let Some(bad) = domain.iter().find(|v| !is_token(v)) {
                    return Err(err(format!("bad value `{bad}`")));
                }
                set.factors.push(Factor {
                    name: name.to_string(),
                    domain,
                });
            } else if let Some(rest) = line.strip_prefix("rule ") {
                let (id, body) = rest
                    .split_once(':')
                    .ok_or_else(|| err("expected `rule <id>: <condition> -> <outcome>`".into()))?;
                let id = id.trim();
                if !is_token(id) {
                    return Err(err(format!("bad rule id `{id}`")));
                }
                let (cond, outcome) = body
                    .split_once("->")
                    .ok_or_else(|| err("missing `->`".into()))?;
                let outcome = outcome.trim();
                if outcome.is_empty() {
                    return Err(err("missing outcome".into()));
                }
                let cond = cond.trim();
                let mut condition = Vec::new();
                if cond != "*" {
                    for part in cond.split('&') {
                        let (factor, allowed) = part.split_once(" in ").ok_or_else(|| {
                            err(format!(
                                "expected `<factor> in {{…}}`, found `{}`",
                                part.trim()
                            ))
                        })?;
                        let factor = factor.trim().to_string();
                        let allowed = allowed.trim();
                        let allowed: BTreeSet<String> = if allowed == "*" {
                            set.factors
                                .iter()
                                .find(|f| f.name == factor)
                                .ok_or_else(|| {
                                    err(format!("`{factor} in *` before factor is declared"))
                                })?
                                .domain
                                .iter()
                                .cloned()
                                .collect()
                        } else {
                            let inner = allowed
                                .strip_prefix('{')
                                .and_then(|a| a.strip_suffix('}'))
                                .ok_or_else(|| {
                                    err(format!("expected `{{…}}`, found `{allowed}`"))
                                })?;
                            inner
                                .split(',')
                                .map(str::trim)
                                .filter(|v| !v.is_empty())
                                .map(str::to_string)
                                .collect()
                        };
                        condition.push(Literal { factor, allowed });
                    }
                }
                set.rules.push(CaseRule {
                    id: id.to_string(),
                    condition,
                    outcome: outcome.to_string(),
                });
            } else {
                return Err(err(format!("unrecognised line `{line}`")));
            }
        }
        validate_factors(&set.factors)?;
        Compiled::new(&set.factors, &set.rules)?;
        Ok(set)
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for factor in &self.factors {
            writeln!(f, "factor {} = {}", factor.name, factor.domain.join(" | "))?;
        }
        for rule in &self.rules {
            let cond = if rule.condition.is_empty() {
                "*".to_string()
            } else {
                rule.condition
                    .iter()
                    .map(|l| {
                        let vals: Vec<&str> = l.allowed.iter().map(String::as_str).collect();
                        format!("{} in {{{}}}", l.factor, vals.join(", "))
                    })
                    .collect::<Vec<_>>()
                    .join(" & ")
            };
            writeln!(f, "rule {}: {cond} -> {}", rule.id, rule.outcome)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delivery() -> Vec<Factor> {
        vec![
            Factor::new("delivery", &["on-time", "late"]),
            Factor::new("paid", &["yes", "no"]),
        ]
    }

    fn rule(id: &str, lits: &[(&str, &[&str])], outcome: &str) -> CaseRule {
        CaseRule {
            id: id.into(),
            condition: lits
                .iter()
                .map(|(f, vs)| Literal {
                    factor: f.to_string(),
                    allowed: vs.iter().map(|v| v.to_string()).collect(),
                })
                .collect(),
            outcome: outcome.into(),
        }
    }

    #[test]
    fn universe_sizes_and_guard() {
        let f = vec![
            Factor::new("a", &["1", "2"]),
            Factor::new("b", &["1", "2", "3"]),
            Factor::new("c", &["1", "2", "3", "4"]),
        ];
        assert_eq!(universe_size(&f), Ok(24));
        assert_eq!(universe_size(&f[..1]), Ok(2));
        let binary: Vec<Factor> = (0..21)
            .map(|i| Factor::new(&format!("f{i}"), &["0", "1"]))
            .collect();
        assert_eq!(
            universe_size(&binary),
            Err(CaseError::TooLarge {
                size: 2_097_152,
                limit: UNIVERSE_LIMIT
            })
        );
        assert_eq!(universe_size(&binary[..19]), Ok(524_288));
        assert!(matches!(
            universe_size(&[Factor::new("x", &["1"])]),
            Err(CaseError::BadDomain(_))
        ));
    }

    #[test]
    fn late_only_rule_leaves_on_time_column_uncovered() {
        let rules = vec![rule("r1", &[("delivery", &["late"])], "penalty")];
        let report = check_completeness(&delivery(), &rules).unwrap();
        assert_eq!(report.universe, 4);
        assert_eq!(report.uncovered_total, 2);
        assert_eq!(
            report.uncovered,
            vec![
                Case(vec!["on-time".into(), "yes".into()]),
                Case(vec!["on-time".into(), "no".into()]),
            ]
        );
        let all = vec![rule("r1", &[], "x")];
        assert_eq!(
            check_completeness(&delivery(), &all)
                .unwrap()
                .uncovered_total,
            0
        );
    }

    #[test]
    fn waiver_conflicts_with_penalty_on_late_paid() {
        let rules = vec![
            rule("r1", &[("delivery", &["late"])], "penalty"),
            rule(
                "r2",
                &[("delivery", &["late"]), ("paid", &["yes"])],
                "waiver",
            ),
        ];
        let report = check_consistency(&delivery(), &rules).unwrap();
        assert_eq!(report.conflict_total, 1);
        assert_eq!(
            report.conflicts[0].case,
            Case(vec!["late".into(), "yes".into()])
        );
        assert_eq!(report.conflicts[0].rules, vec!["r1", "r2"]);

        let agreeing = vec![
            rule("r1", &[("delivery", &["late"])], "penalty"),
            rule("r2", &[("paid", &["no"])], "penalty"),
        ];
        assert_eq!(
            check_consistency(&delivery(), &agreeing)
                .unwrap()
                .conflict_total,
            0
        );
    }

    #[test]
    fn rejects_bad_rules() {
        let f = delivery();
        assert!(matches!(
            check_completeness(&f, &[rule("r", &[("weather", &["rain"])], "x")]),
            Err(CaseError::UnknownFactor { .. })
        ));
        assert!(matches!(
            check_completeness(&f, &[rule("r", &[("paid", &["maybe"])], "x")]),
            Err(CaseError::UnknownValue { .. })
        ));
        assert!(matches!(
            check_completeness(
                &f,
                &[rule("r", &[("paid", &["yes"]), ("paid", &["no"])], "x")]
            ),
            Err(CaseError::RepeatedFactor { .. })
        ));
        assert!(matches!(
            check_completeness(&f, &[rule("r", &[("paid", &[])], "x")]),
            Err(CaseError::EmptyAllowed { .. })
        ));
    }

    #[test]
    fn parses_text_format() {
        let text = "\
# toy
factor delivery = on-time | late
factor paid = yes | no

rule r1: delivery in {late} -> penalty
rule r2: delivery in {late} & paid in * -> waiver   # overlapping
rule r3: * -> default
";
        let set = RuleSet::parse(text).unwrap();
        assert_eq!(set.factors, delivery());
        assert_eq!(set.rules[1].condition[1].allowed.len(), 2);
        assert!(set.rules[2].condition.is_empty());
        assert_eq!(RuleSet::parse(&set.to_string()).unwrap(), set);
        assert!(matches!(
            RuleSet::parse("rule r1 delivery"),
            Err(CaseError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            RuleSet::parse("factor a = x | x"),
            Err(CaseError::BadDomain(_))
        ));
    }

    #[test]
    fn truncates_examples_but_counts_exactly() {
        let f: Vec<Factor> = (0..8)
            .map(|i| Factor::new(&format!("f{i}"), &["0", "1"]))
            .collect();
        let report = check_completeness(&f, &[]).unwrap();
        assert_eq!(report.uncovered_total, 256);
        assert_eq!(report.uncovered.len(), REPORT_LIMIT);
        assert_eq!(report.uncovered[0].0, vec!["0"; 8]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_agree() {
        let f: Vec<Factor> = (0..14)
            .map(|i| Factor::new(&format!("f{i}"), &["0", "1"]))
            .collect();
        let rules = vec![
            rule("a", &[("f0", &["1"])], "x"),
            rule("b", &[("f1", &["1"]), ("f3", &["0"])], "y"),
        ];
        assert_eq!(
            check_completeness_with(&f, &rules, Exec::Sequential),
            check_completeness_with(&f, &rules, Exec::Parallel)
        );
        assert_eq!(
            check_consistency_with(&f, &rules, Exec::Sequential),
            check_consistency_with(&f, &rules, Exec::Parallel)
        );
    }
}
