//! Parameter types and bound values.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Declared type of a document parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParamType {
    Text,
    Integer,
    Decimal,
    Date,
    Money,
    Party,
    Enum(Vec<String>),
}

impl ParamType {
    /// Short name used in manifests and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            ParamType::Text => "text",
            ParamType::Integer => "integer",
            ParamType::Decimal => "decimal",
            ParamType::Date => "date",
            ParamType::Money => "money",
            ParamType::Party => "party",
            ParamType::Enum(_) => "enum",
        }
    }

    /// Builds a type from its short name; `enum_values` is only consulted for `enum`.
    pub fn from_name(name: &str, enum_values: Option<Vec<String>>) -> Result<Self, ValueError> {
        Ok(match name {
            "text" => ParamType::Text,
            "integer" => ParamType::Integer,
            "decimal" => ParamType::Decimal,
            "date" => ParamType::Date,
            "money" => ParamType::Money,
            "party" => ParamType::Party,
            "enum" => ParamType::Enum(enum_values.unwrap_or_default()),
            other => return Err(ValueError::UnknownType(other.to_string())),
        })
    }

    /// Whether `<` and `<=` are meaningful between two values of this type.
    pub fn is_ordered(&self) -> bool {
        matches!(
            self,
            ParamType::Integer | ParamType::Decimal | ParamType::Date | ParamType::Money
        )
    }

    pub fn enum_values(&self) -> Option<&[String]> {
        match self {
            ParamType::Enum(values) => Some(values),
            _ => None,
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamType::Enum(values) => write!(f, "enum({})", values.join(",")),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("unknown parameter type `{0}`")]
    UnknownType(String),
    #[error("`{text}` is not a valid {ptype} value")]
    Malformed { ptype: &'static str, text: String },
    #[error("`{value}` is not one of the enum values [{allowed}]")]
    NotInEnum { value: String, allowed: String },
}

/// An amount of money in a single currency.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Money {
    pub amount: Decimal,
    pub currency: String,
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.amount, self.currency)
    }
}

/// A typed parameter value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Text(String),
    Integer(i64),
    Decimal(Decimal),
    Date(NaiveDate),
    Money(Money),
    Party(String),
    Enum(String),
}

impl Value {
    /// Parses `text` as a value of type `ptype`.
    ///
    /// Dates use ISO-8601 (`YYYY-MM-DD`); money is `<amount> <CODE>` with a
    /// three-letter upper-case currency code.
    pub fn parse(ptype: &ParamType, text: &str) -> Result<Value, ValueError> {
        let malformed = || ValueError::Malformed {
            ptype: ptype.name(),
            text: text.to_string(),
        };
        Ok(match ptype {
            ParamType::Text => Value::Text(text.to_string()),
            ParamType::Party => Value::Party(text.to_string()),
            ParamType::Integer => Value::Integer(text.parse().map_err(|_| malformed())?),
            ParamType::Decimal => Value::Decimal(parse_decimal(text).ok_or_else(malformed)?),
            ParamType::Date => {
                Value::Date(NaiveDate::parse_from_str(text, "%Y-%m-%d").map_err(|_| malformed())?)
            }
            ParamType::Money => {
                let (amount, currency) = text.split_once(' ').ok_or_else(malformed)?;
                let amount = parse_decimal(amount).ok_or_else(malformed)?;
                if currency.len() != 3 || !currency.bytes().all(|b| b.is_ascii_uppercase()) {
                    return Err(malformed());
                }
                Value::Money(Money {
                    amount,
                    currency: currency.to_string(),
                })
            }
            ParamType::Enum(values) => {
                if !values.iter().any(|v| v == text) {
                    return Err(ValueError::NotInEnum {
                        value: text.to_string(),
                        allowed: values.join(", "),
                    });
                }
                Value::Enum(text.to_string())
            }
        })
    }

    /// Whether this value inhabits `ptype`.
    pub fn matches(&self, ptype: &ParamType) -> bool {
        match (self, ptype) {
            (Value::Text(_), ParamType::Text)
            | (Value::Integer(_), ParamType::Integer)
            | (Value::Decimal(_), ParamType::Decimal)
            | (Value::Date(_), ParamType::Date)
            | (Value::Money(_), ParamType::Money)
            | (Value::Party(_), ParamType::Party) => true,
            (Value::Enum(v), ParamType::Enum(values)) => values.contains(v),
            _ => false,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Text(_) => "text",
            Value::Integer(_) => "integer",
            Value::Decimal(_) => "decimal",
            Value::Date(_) => "date",
            Value::Money(_) => "money",
            Value::Party(_) => "party",
            Value::Enum(_) => "enum",
        }
    }

    /// Canonical text form, as substituted into rendered fragments.
    pub fn canonical(&self) -> String {
        match self {
            Value::Text(s) | Value::Party(s) | Value::Enum(s) => s.clone(),
            Value::Integer(i) => i.to_string(),
            Value::Decimal(d) => d.to_string(),
            Value::Date(d) => d.format("%Y-%m-%d").to_string(),
            Value::Money(m) => m.to_string(),
        }
    }

    /// Compares two values of the same type.
    ///
    /// Returns `None` when the values are not comparable: different types,
    /// money in different currencies, or an ordering requested on an
    /// unordered type (`ordered == true`).
    pub fn compare(&self, other: &Value, ordered: bool) -> Option<Ordering> {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (Value::Decimal(a), Value::Decimal(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            (Value::Money(a), Value::Money(b)) if a.currency == b.currency => {
                Some(a.amount.cmp(&b.amount))
            }
            (Value::Text(a), Value::Text(b))
            | (Value::Party(a), Value::Party(b))
            | (Value::Enum(a), Value::Enum(b))
                if !ordered =>
            {
                Some(a.cmp(b))
            }
            _ => None,
        }
    }
}

fn parse_decimal(text: &str) -> Option<Decimal> {
    // Decimal::from_str accepts things like "1_000"; keep to plain digits.
    let body = text.strip_prefix('-').unwrap_or(text);
    let valid = !body.is_empty()
        && body.split('.').count() <= 2
        && body
            .split('.')
            .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
    if !valid {
        return None;
    }
    Decimal::from_str(text).ok()
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

#[derive(Serialize, Deserialize)]
struct TaggedValue {
    #[serde(rename = "type")]
    ty: String,
    value: String,
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TaggedValue {
            ty: self.type_name().to_string(),
            value: self.canonical(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tagged = TaggedValue::deserialize(deserializer)?;
        let ptype = if tagged.ty == "enum" {
            ParamType::Enum(vec![tagged.value.clone()])
        } else {
            ParamType::from_name(&tagged.ty, None).map_err(serde::de::Error::custom)?
        };
        Value::parse(&ptype, &tagged.value).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        let date = Value::parse(&ParamType::Date, "1997-03-01").unwrap();
        assert_eq!(date.canonical(), "1997-03-01");
        let money = Value::parse(&ParamType::Money, "1500.00 GBP").unwrap();
        assert_eq!(money.canonical(), "1500.00 GBP");
        assert_eq!(Value::Integer(-42).canonical(), "-42");
        assert_eq!(
            Value::parse(&ParamType::Decimal, "0.10")
                .unwrap()
                .canonical(),
            "0.10"
        );
    }

    #[test]
    fn rejects_malformed_values() {
        assert!(Value::parse(&ParamType::Date, "01/03/1997").is_err());
        assert!(Value::parse(&ParamType::Money, "1500 pounds").is_err());
        assert!(Value::parse(&ParamType::Money, "1500").is_err());
        assert!(Value::parse(&ParamType::Integer, "12a").is_err());
        assert!(Value::parse(&ParamType::Decimal, "1_000").is_err());
        let prio = ParamType::Enum(vec!["low".into(), "high".into()]);
        assert!(matches!(
            Value::parse(&prio, "medium"),
            Err(ValueError::NotInEnum { .. })
        ));
    }

    #[test]
    fn dates_compare_chronologically_and_money_only_within_currency() {
        let a = Value::parse(&ParamType::Date, "1997-03-01").unwrap();
        let b = Value::parse(&ParamType::Date, "1998-01-15").unwrap();
        assert_eq!(a.compare(&b, true), Some(Ordering::Less));
        let gbp = Value::parse(&ParamType::Money, "10 GBP").unwrap();
        let usd = Value::parse(&ParamType::Money, "10 USD").unwrap();
        assert_eq!(gbp.compare(&usd, false), None);
        let party = Value::Party("Acme".into());
        assert_eq!(party.compare(&party, false), Some(Ordering::Equal));
        assert_eq!(party.compare(&party, true), None);
    }

    #[test]
    fn serde_round_trip() {
        let v = Value::parse(&ParamType::Money, "99.5 EUR").unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"type":"money","value":"99.5 EUR"}"#);
        assert_eq!(serde_json::from_str::<Value>(&json).unwrap(), v);
    }
}
