//! Per-case brute force over the full factor product.

use std::collections::BTreeSet;

use contract_cad::cases::{CaseRule, Factor};

pub struct BruteForce {
    pub universe: u64,
    pub uncovered: Vec<Vec<String>>,
    /// Each conflicting case with the ids of every matching rule, in rule order.
    pub conflicts: Vec<(Vec<String>, Vec<String>)>,
}

pub fn brute_force(factors: &[Factor], rules: &[CaseRule]) -> BruteForce {
    let mut cases: Vec<Vec<String>> = vec![vec![]];
    for f in factors {
        cases = cases
            .into_iter()
            .flat_map(|c| {
                f.domain.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(v.clone());
                    c
                })
            })
            .collect();
    }
    let mut out = BruteForce {
        universe: cases.len() as u64,
        uncovered: Vec::new(),
        conflicts: Vec::new(),
    };
    for case in cases {
        let matches = |r: &&CaseRule| {
            r.condition.iter().all(|lit| {
                let i = factors
                    .iter()
                    .position(|f| f.name == lit.factor)
                    .expect("known factor");
                lit.allowed.contains(&case[i])
            })
        };
        let hits: Vec<&CaseRule> = rules.iter().filter(matches).collect();
        let outcomes: BTreeSet<&str> = hits.iter().map(|r| r.outcome.as_str()).collect();
        if hits.is_empty() {
            out.uncovered.push(case);
        } else if outcomes.len() > 1 {
            out.conflicts
                .push((case, hits.iter().map(|r| r.id.clone()).collect()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use contract_cad::cases::Literal;

    #[test]
    fn two_factor_toy() {
        let factors = [Factor::new("a", &["x", "y"]), Factor::new("b", &["p", "q"])];
        let rule = |id: &str, factor: &str, value: &str, outcome: &str| CaseRule {
            id: id.into(),
            condition: vec![Literal {
                factor: factor.into(),
                allowed: [value.to_string()].into(),
            }],
            outcome: outcome.into(),
        };
        let out = brute_force(
            &factors,
            &[rule("r1", "a", "x", "pay"), rule("r2", "b", "p", "refund")],
        );
        assert_eq!(out.universe, 4);
        assert_eq!(out.uncovered, [vec!["y".to_string(), "q".to_string()]]);
        assert_eq!(
            out.conflicts,
            [(vec!["x".into(), "p".into()], vec!["r1".into(), "r2".into()])]
        );
    }
}
