//! Parameter-rule predicates: `distinct(a,b)`, `defined(a)`, comparisons and `&&`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{is_valid_name, GenericDocument};
use crate::value::{ParamType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }

    fn ordered(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le)
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Param(String),
    /// Quoted literal, typed by the parameter on the other side.
    Literal(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Param(p) => f.write_str(p),
            Operand::Literal(l) => write!(f, "\"{l}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    Compare {
        op: CmpOp,
        lhs: Operand,
        rhs: Operand,
    },
    Distinct(String, String),
    Defined(String),
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Predicate::Distinct(a, b) => write!(f, "distinct({a},{b})"),
            Predicate::Defined(a) => write!(f, "defined({a})"),
        }
    }
}

/// A conjunction of predicates over parameter bindings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParamExpr {
    pub predicates: Vec<Predicate>,
}

impl ParamExpr {
    /// Every parameter mentioned, sorted.
    pub fn params(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for p in &self.predicates {
            match p {
                Predicate::Compare { lhs, rhs, .. } => {
                    for side in [lhs, rhs] {
                        if let Operand::Param(name) = side {
                            out.insert(name.as_str());
                        }
                    }
                }
                Predicate::Distinct(a, b) => {
                    out.insert(a.as_str());
                    out.insert(b.as_str());
                }
                Predicate::Defined(a) => {
                    out.insert(a.as_str());
                }
            }
        }
        out
    }

    /// Parameters required to be bound by `defined(..)`.
    pub fn required(&self) -> impl Iterator<Item = &str> {
        self.predicates.iter().filter_map(|p| match p {
            Predicate::Defined(a) => Some(a.as_str()),
            _ => None,
        })
    }

    /// Checks names and operand types against the document's declarations.
    pub fn validate(&self, doc: &GenericDocument) -> Result<(), String> {
        let ty = |name: &str| -> Result<&ParamType, String> {
            doc.parameter(name)
                .map(|d| &d.ptype)
                .ok_or_else(|| format!("unknown parameter `{name}`"))
        };
        for pred in &self.predicates {
            match pred {
                Predicate::Defined(a) => {
                    ty(a)?;
                }
                Predicate::Distinct(a, b) => {
                    if ty(a)?.name() != ty(b)?.name() {
                        return Err(format!("distinct({a},{b}) compares different types"));
                    }
                }
                Predicate::Compare { op, lhs, rhs } => {
                    let ptype = match (lhs, rhs) {
                        (Operand::Param(a), Operand::Param(b)) => {
                            let (ta, tb) = (ty(a)?, ty(b)?);
                            if ta.name() != tb.name() {
                                return Err(format!(
                                    "`{pred}` compares {} with {}",
                                    ta.name(),
                                    tb.name()
                                ));
                            }
                            ta
                        }
                        (Operand::Param(a), Operand::Literal(l))
                        | (Operand::Literal(l), Operand::Param(a)) => {
                            let ta = ty(a)?;
                            Value::parse(ta, l).map_err(|e| format!("in `{pred}`: {e}"))?;
                            ta
                        }
                        (Operand::Literal(_), Operand::Literal(_)) => {
                            return Err(format!("`{pred}` compares two literals"));
                        }
                    };
                    if op.ordered() && !ptype.is_ordered() {
                        return Err(format!(
                            "`{pred}` orders values of unordered type {}",
                            ptype.name()
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// `None` while any mentioned parameter is unbound, else the truth value.
    ///
    /// Incomparable operands (money in different currencies) make a
    /// comparison false.
    pub fn evaluate(
        &self,
        doc: &GenericDocument,
        bindings: &BTreeMap<String, Value>,
    ) -> Option<bool> {
        if self.params().iter().any(|p| !bindings.contains_key(*p)) {
            return None;
        }
        let resolve = |operand: &Operand, other: &Operand| -> Option<Value> {
            match operand {
                Operand::Param(p) => bindings.get(p).cloned(),
                Operand::Literal(l) => {
                    let Operand::Param(p) = other else {
                        return None;
                    };
                    Value::parse(&doc.parameter(p)?.ptype, l).ok()
                }
            }
        };
        Some(self.predicates.iter().all(|pred| match pred {
            Predicate::Defined(_) => true,
            Predicate::Distinct(a, b) => {
                bindings[a].compare(&bindings[b], false) != Some(Ordering::Equal)
            }
            Predicate::Compare { op, lhs, rhs } => match (resolve(lhs, rhs), resolve(rhs, lhs)) {
                (Some(l), Some(r)) => l.compare(&r, op.ordered()).is_some_and(|o| op.holds(o)),
                _ => false,
            },
        }))
    }
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(" && ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

fn parse_operand(s: &str) -> Result<Operand, String> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
        if inner.contains('"') {
            return Err(format!("bad literal {s}"));
        }
        return Ok(Operand::Literal(inner.to_string()));
    }
    if is_valid_name(s) {
        Ok(Operand::Param(s.to_string()))
    } else {
        Err(format!(
            "expected parameter name or quoted literal, found `{s}`"
        ))
    }
}

fn parse_call<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?
        .trim_start()
        .strip_prefix('(')?
        .strip_suffix(')')
}

fn parse_predicate(s: &str) -> Result<Predicate, String> {
    let s = s.trim();
    let name = |n: &str| -> Result<String, String> {
        let n = n.trim();
        if is_valid_name(n) {
            Ok(n.to_string())
        } else {
            Err(format!("invalid parameter name `{n}`"))
        }
    };
    if let Some(args) = parse_call(s, "distinct") {
        let (a, b) = args
            .split_once(',')
            .ok_or("distinct takes two parameters")?;
        return Ok(Predicate::Distinct(name(a)?, name(b)?));
    }
    if let Some(arg) = parse_call(s, "defined") {
        return Ok(Predicate::Defined(name(arg)?));
    }
    // Scan outside of quotes for the first operator.
    let bytes = s.as_bytes();
    let mut in_quote = false;
    for i in 0..bytes.len() {
        match bytes[i] {
            b'"' => in_quote = !in_quote,
            _ if in_quote => {}
            b'<' | b'=' | b'!' => {
                let (op, len) = match (bytes[i], bytes.get(i + 1)) {
                    (b'<', Some(b'=')) => (CmpOp::Le, 2),
                    (b'<', _) => (CmpOp::Lt, 1),
                    (b'!', Some(b'=')) => (CmpOp::Ne, 2),
                    (b'=', _) => (CmpOp::Eq, 1),
                    _ => return Err(format!("unexpected `!` in `{s}`")),
                };
                return Ok(Predicate::Compare {
                    op,
                    lhs: parse_operand(&s[..i])?,
                    rhs: parse_operand(&s[i + len..])?,
                });
            }
            _ => {}
        }
    }
    Err(format!("cannot parse predicate `{s}`"))
}

impl FromStr for ParamExpr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let predicates = s
            .split("&&")
            .map(parse_predicate)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ParamExpr { predicates })
    }
}

impl Serialize for ParamExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
