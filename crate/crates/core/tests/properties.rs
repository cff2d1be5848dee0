use std::collections::BTreeSet;
use std::fs;

use proptest::prelude::*;

use contract_cad::assembler::{apply_diff, diff, RenderOptions, Session};
use contract_cad::cases::{check_completeness_with, check_consistency_with, CaseRule, Factor};
use contract_cad::constraint::{EnforceOutcome, ViolationKind};
use contract_cad::model::{Mode, Tree};
use contract_cad::store::{Repository, StoreError};
use contract_cad::testing::{
    random_delta, random_document, random_instance, random_rule_set, rng, DocShape,
};
use contract_cad::{Checker, Constraint, Exec, GenericDocument};

fn small() -> DocShape {
    DocShape {
        max_units: 15,
        max_constraints: 20,
        ..DocShape::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incremental_check_equals_full_check(seed in any::<u64>(), steps in 1usize..120) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &DocShape::default());
        let checker = Checker::new(doc.clone());
        let tree = Tree::new(&doc);
        let mut inst = random_instance(&mut r, &doc, 0);
        let mut report = checker.check_full(&inst);
        for _ in 0..steps {
            let delta = random_delta(&mut r, &doc, &inst);
            let Ok(touched) = inst.apply(&doc, &tree, &delta) else { continue };
            report = checker.check_incremental(&inst, &touched, &report);
            prop_assert_eq!(&report, &checker.check_full(&inst), "after {:?}", delta);
        }
    }

    #[test]
    fn session_report_always_describes_the_instance(seed in any::<u64>(), steps in 1usize..60) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &small());
        let mode = if seed % 2 == 0 { Mode::Notify } else { Mode::Enforce };
        let mut s = Session::new(doc.clone(), "walk", mode).unwrap();
        for _ in 0..steps {
            let delta = random_delta(&mut r, &doc, s.instance());
            let before = s.revision();
            match s.apply_edit(&delta) {
                Ok(o) if !o.is_blocked() => prop_assert_eq!(s.revision(), before + 1),
                _ => prop_assert_eq!(s.revision(), before),
            }
            let mut full = s.checker().check_full(s.instance());
            full.full_recheck = s.report().full_recheck;
            prop_assert_eq!(s.report(), &full);
        }
        while s.undo().is_ok() {}
        prop_assert!(s.instance().same_content(s.initial()));
    }

    #[test]
    fn enforce_mode_never_introduces_exclusion_violations(seed in any::<u64>(), steps in 1usize..60) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &small());
        let mut s = Session::new(doc.clone(), "enf", Mode::Enforce).unwrap();
        for _ in 0..steps {
            let delta = random_delta(&mut r, &doc, s.instance());
            let before: BTreeSet<String> = excludes_violations(s.checker(), s.instance());
            let _ = s.apply_edit(&delta);
            let after = excludes_violations(s.checker(), s.instance());
            prop_assert!(after.is_subset(&before), "{:?} introduced {:?}", delta, &after - &before);
        }
    }

    #[test]
    fn enforce_closure_is_idempotent_and_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &small());
        let checker = Checker::new(doc.clone());
        let inst = random_instance(&mut r, &doc, 10);
        for unit in doc.units.keys() {
            if let EnforceOutcome::Added { added } = checker.enforce_include(&inst, unit).unwrap() {
                prop_assert!(added.is_disjoint(&inst.included));
                let mut grown = inst.clone();
                grown.included.extend(added.iter().cloned());
                match checker.enforce_include(&grown, unit).unwrap() {
                    EnforceOutcome::Added { added } => prop_assert!(added.is_empty()),
                    other => prop_assert!(false, "second closure of {unit} gave {other:?}"),
                }
                // Ancestor closure is kept.
                let tree = checker.tree();
                for u in &grown.included {
                    prop_assert!(tree.ancestors(u.as_str()).all(|a| grown.included.contains(a)));
                }
            }
        }
    }

    #[test]
    fn diff_then_apply_reproduces_the_target(seed in any::<u64>()) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &small());
        let a = random_instance(&mut r, &doc, 15);
        let b = random_instance(&mut r, &doc, 15);
        let entries = diff(&a, &b).unwrap();
        prop_assert!(apply_diff(&a, &entries).same_content(&b));
        prop_assert!(diff(&a, &a).unwrap().is_empty());
    }

    #[test]
    fn draft_render_is_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &small());
        let inst = random_instance(&mut r, &doc, 20);
        let s = Session::resume(doc.clone(), inst.clone()).unwrap();
        let t = Session::resume(doc, inst).unwrap();
        let opts = RenderOptions::default();
        match (s.render(&opts), t.render(&opts)) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(&x, &y);
                prop_assert!(x.text.ends_with('\n') && !x.text.ends_with("\n\n"));
                for w in x.spans.windows(2) {
                    prop_assert!(w[0].start <= w[1].start);
                }
            }
            (Err(x), Err(y)) => prop_assert_eq!(x, y),
            other => prop_assert!(false, "diverging renders {other:?}"),
        }
    }

    #[test]
    fn checking_is_pure_and_exclusion_is_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &small());
        let inst = random_instance(&mut r, &doc, 20);
        let checker = Checker::new(doc.clone());
        let copy = inst.clone();
        let first = checker.check_full(&inst);
        prop_assert_eq!(&inst, &copy);
        prop_assert_eq!(&first, &checker.check_full(&inst));

        let flipped = GenericDocument {
            constraints: doc.constraints.iter().map(flip).collect(),
            ..doc.clone()
        };
        prop_assert_eq!(first, Checker::new(flipped).check_full(&inst));
    }

    #[test]
    fn case_checks_agree_across_strategies_and_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (factors, rules) = random_rule_set(&mut r, 4, 5, 10);
        let (uncovered, conflicts) = brute_force(&factors, &rules);
        for exec in [Exec::Sequential, #[cfg(feature = "parallel")] Exec::Parallel] {
            let c = check_completeness_with(&factors, &rules, exec).unwrap();
            prop_assert_eq!(c.uncovered_total, uncovered.len() as u64);
            prop_assert!(c.uncovered.iter().map(|k| &k.0).eq(uncovered.iter().take(c.uncovered.len())));
            let k = check_consistency_with(&factors, &rules, exec).unwrap();
            prop_assert_eq!(k.conflict_total, conflicts.len() as u64);
            for (got, want) in k.conflicts.iter().zip(&conflicts) {
                prop_assert_eq!(&got.case.0, &want.0);
                prop_assert_eq!(&got.rules, &want.1);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn store_round_trips_and_detects_corruption(seed in any::<u64>(), flip in any::<usize>()) {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &small());
        let inst = random_instance(&mut r, &doc, 20);
        let dir = tempfile::tempdir().unwrap();
        let repo = Repository::open(dir.path());
        repo.save_generic(&doc).unwrap();
        repo.save_instance(&inst).unwrap();
        prop_assert_eq!(&repo.load_generic(&doc.id).unwrap(), &doc);
        let loaded = repo.load_instance(&inst.id).unwrap();
        prop_assert_eq!(&loaded.instance, &inst);
        prop_assert!(loaded.warnings.is_empty());

        let manifest = fs::read(repo.manifest_path(&doc.id)).unwrap();
        let instance = fs::read(repo.instance_path(&inst.id)).unwrap();
        repo.save_generic(&doc).unwrap();
        repo.save_instance(&inst).unwrap();
        prop_assert_eq!(manifest, fs::read(repo.manifest_path(&doc.id)).unwrap());
        prop_assert_eq!(instance, fs::read(repo.instance_path(&inst.id)).unwrap());

        let versions: Vec<_> = doc.all_versions().map(|v| v.id.clone()).collect();
        if !versions.is_empty() {
            let v = &versions[flip % versions.len()];
            let path = repo.fragment_path(&doc.id, v);
            let mut bytes = fs::read(&path).unwrap();
            let at = (flip / versions.len()) % bytes.len();
            bytes[at] ^= 1 << (flip % 8);
            fs::write(&path, bytes).unwrap();
            let err = repo.load_generic(&doc.id).unwrap_err();
            prop_assert!(matches!(err, StoreError::HashMismatch { .. }), "{err:?}");
        }
    }
}

fn excludes_violations(
    checker: &Checker,
    inst: &contract_cad::DocumentInstance,
) -> BTreeSet<String> {
    checker
        .check_full(inst)
        .violations
        .into_iter()
        .filter(|v| v.kind == ViolationKind::Excludes)
        .map(|v| v.constraint_id)
        .collect()
}

fn flip(c: &Constraint) -> Constraint {
    use contract_cad::ConstraintKind;
    match &c.kind {
        ConstraintKind::Excludes { a, b } => Constraint {
            kind: ConstraintKind::Excludes {
                a: b.clone(),
                b: a.clone(),
            },
            ..c.clone()
        },
        _ => c.clone(),
    }
}

type Conflicts = Vec<(Vec<String>, Vec<String>)>;

fn brute_force(factors: &[Factor], rules: &[CaseRule]) -> (Vec<Vec<String>>, Conflicts) {
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
    let mut uncovered = Vec::new();
    let mut conflicts = Vec::new();
    for case in cases {
        let hits: Vec<&CaseRule> = rules
            .iter()
            .filter(|r| {
                r.condition.iter().all(|lit| {
                    let i = factors.iter().position(|f| f.name == lit.factor).unwrap();
                    lit.allowed.contains(&case[i])
                })
            })
            .collect();
        let outcomes: BTreeSet<&str> = hits.iter().map(|r| r.outcome.as_str()).collect();
        if hits.is_empty() {
            uncovered.push(case);
        } else if outcomes.len() > 1 {
            conflicts.push((case, hits.iter().map(|r| r.id.clone()).collect()));
        }
    }
    (uncovered, conflicts)
}
