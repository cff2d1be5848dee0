//! Acceptance gate: one PASS/FAIL line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use contract_cad::assembler::RenderOptions;
use contract_cad::cases::{check_completeness_with, check_consistency_with, RuleSet};
use contract_cad::constraint::{EnforceOutcome, Gap, SatOutcome, ViolationKind};
use contract_cad::model::Tree;
use contract_cad::store::Repository;
use contract_cad::testing::{
    random_delta, random_document, random_instance, random_rule_set, rng, DocShape,
};
use contract_cad::{Checker, Delta, Exec, ParamType, Session, Value};
use contract_cad_acceptance::cases::brute_force;
use contract_cad_acceptance::enforce::naive_enforce_include;
use contract_cad_acceptance::sat::{acceptable, candidate_count, exhaustive};
use rand::Rng;

const BUDGET: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn execs() -> Vec<Exec> {
    vec![
        Exec::Sequential,
        #[cfg(feature = "parallel")]
        Exec::Parallel,
    ]
}

fn incremental_equals_full() -> Outcome {
    let mut deltas = 0;
    for seed in 0..1000u64 {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &DocShape::default());
        let checker = Checker::new(doc.clone());
        let tree = Tree::new(&doc);
        let mut inst = random_instance(&mut r, &doc, 0);
        let mut report = checker.check_full(&inst);
        for _ in 0..r.random_range(1..=200) {
            let delta = random_delta(&mut r, &doc, &inst);
            let Ok(touched) = inst.apply(&doc, &tree, &delta) else {
                continue;
            };
            deltas += 1;
            report = checker.check_incremental(&inst, &touched, &report);
            let full = checker.check_full(&inst);
            ensure!(
                report == full,
                "seed {seed}: after {delta:?} incremental {report:?} != full {full:?}"
            );
        }
    }
    Ok(format!("1000 sequences, {deltas} applied deltas"))
}

fn enforce_matches_fixpoint() -> Outcome {
    let shape = DocShape {
        max_units: 15,
        ..DocShape::default()
    };
    let (mut added, mut contradictions) = (0, 0);
    for seed in 0..500u64 {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &shape);
        let checker = Checker::new(doc.clone());
        let inst = random_instance(&mut r, &doc, 8);
        for unit in doc.units.keys() {
            let got = checker
                .enforce_include(&inst, unit)
                .map_err(|e| e.to_string())?;
            let want = naive_enforce_include(&checker, &inst, unit);
            ensure!(
                got == want,
                "seed {seed}, include {unit}: {got:?} != {want:?}"
            );
            match got {
                EnforceOutcome::Added { .. } => added += 1,
                EnforceOutcome::Contradiction { .. } => contradictions += 1,
            }
        }
    }
    Ok(format!(
        "500 documents, {added} closures, {contradictions} contradictions"
    ))
}

fn satisfiable_matches_enumeration() -> Outcome {
    // The second shape versions every non-root unit, up to twelve of them.
    let mixed = DocShape {
        max_units: 12,
        max_constraints: 12,
        ..DocShape::default()
    };
    let dense = DocShape {
        max_units: 13,
        versioned_ratio: 1.0,
        ..mixed.clone()
    };
    let (mut sat, mut unsat, mut candidates) = (0, 0, 0u128);
    for seed in 0..600u64 {
        let mut r = rng(seed);
        let doc = random_document(&mut r, if seed < 500 { &mixed } else { &dense });
        candidates += candidate_count(&doc);
        let checker = Checker::new(doc);
        let oracle = exhaustive(&checker);
        for exec in execs() {
            match (checker.satisfiable_with(exec), &oracle) {
                (SatOutcome::Witness(w), Some(_)) => {
                    let report = checker.check_full(&w);
                    ensure!(
                        report.violations.is_empty(),
                        "seed {seed}: witness violates {:?}",
                        report.violations
                    );
                    ensure!(
                        !report.gaps.iter().any(|g| matches!(
                            g,
                            Gap::MissingSelection { .. } | Gap::EmptyGroup { .. }
                        )),
                        "seed {seed}: witness incomplete {:?}",
                        report.gaps
                    );
                    ensure!(
                        acceptable(&checker, &w),
                        "seed {seed}: oracle rejects witness {w:?}"
                    );
                }
                (SatOutcome::Unsatisfiable, None) => {}
                (got, want) => {
                    return Err(format!(
                        "seed {seed} ({exec:?}): {got:?} but enumeration found {want:?}"
                    ))
                }
            }
        }
        if oracle.is_some() {
            sat += 1
        } else {
            unsat += 1
        }
    }
    Ok(format!(
        "600 documents ({sat} satisfiable, {unsat} not), candidate space {candidates}"
    ))
}

fn golden_render() -> Outcome {
    let golden = |name: &str| fs::read_to_string(fixtures().join("golden").join(name)).unwrap();
    let repo = Repository::open(fixtures().join("repos/clean"));
    let doc = repo.load_generic("iee-mf1").map_err(|e| e.to_string())?;
    let loaded = repo.load_instance("i1").map_err(|e| e.to_string())?;
    let fin = loaded.finalized.ok_or("i1 is not finalized")?;
    let text = fin
        .render(&doc, &RenderOptions::default())
        .map_err(|e| e.to_string())?
        .text;
    ensure!(
        text == golden("iee-i1.txt"),
        "render differs from iee-i1.txt"
    );
    ensure!(
        text.contains("Sub-Clause 33-1."),
        "cross-reference not resolved to 33-1"
    );

    let mut s = Session::resume(doc, loaded.instance).map_err(|e| e.to_string())?;
    s.apply_edit(&Delta::Exclude { unit: "p1".into() })
        .map_err(|e| e.to_string())?;
    let fin = s.finalize().map_err(|r| format!("{:?}", r.lines()))?;
    let text = fin
        .render(s.doc(), &RenderOptions::default())
        .map_err(|e| e.to_string())?
        .text;
    ensure!(
        text == golden("iee-i1-without-part1.txt"),
        "render without Part 1 differs from golden"
    );
    ensure!(
        text.contains("Sub-Clause 32-1."),
        "cross-reference not renumbered"
    );
    Ok("byte-identical; reference renumbers 33-1 to 32-1".into())
}

fn domain_rules() -> Outcome {
    let repo = Repository::open(fixtures().join("repos/breach"));
    let doc = repo.load_generic("sale").map_err(|e| e.to_string())?;
    let inst = repo
        .load_instance("i2")
        .map_err(|e| e.to_string())?
        .instance;
    let mut s = Session::resume(doc, inst).map_err(|e| e.to_string())?;
    let ids = |s: &Session| -> Vec<String> {
        s.report()
            .violations
            .iter()
            .map(|v| v.constraint_id.clone())
            .collect()
    };
    let bind = |s: &mut Session, param: &str, value: Value| {
        s.apply_edit(&Delta::Bind {
            param: param.into(),
            value,
        })
        .map(|_| ())
        .map_err(|e| e.to_string())
    };
    let date = |d: &str| Value::parse(&ParamType::Date, d).unwrap();

    ensure!(
        ids(&s) == ["parties-distinct"],
        "same buyer and seller: {:?}",
        ids(&s)
    );
    for early in ["2024-03-01", "2024-02-01"] {
        bind(&mut s, "seller", Value::Party("Borg plc".into()))?;
        bind(&mut s, "effectiveDate", date(early))?;
        let v = &s.report().violations;
        ensure!(
            v.len() == 1
                && v[0].constraint_id == "in-force-after-drafting"
                && v[0].kind == ViolationKind::ParamRule,
            "effectiveDate {early}: {:?}",
            ids(&s)
        );
        bind(&mut s, "seller", Value::Party("Acme Ltd".into()))?;
        ensure!(
            ids(&s).len() == 2,
            "both rules should fail together: {:?}",
            ids(&s)
        );
    }
    bind(&mut s, "seller", Value::Party("Borg plc".into()))?;
    bind(&mut s, "effectiveDate", date("2024-04-01"))?;
    ensure!(
        s.report().is_clean(),
        "corrected instance still reports {:?}",
        s.report().lines()
    );
    Ok("distinct and date rules fire alone and clear when corrected".into())
}

fn case_universe() -> Outcome {
    let mut totals = (0, 0, 0);
    for seed in 0..200u64 {
        let mut r = rng(seed);
        let (factors, rules) = random_rule_set(&mut r, 4, 5, 10);
        let want = brute_force(&factors, &rules);
        totals.0 += want.universe;
        totals.1 += want.uncovered.len();
        totals.2 += want.conflicts.len();
        for exec in execs() {
            let c = check_completeness_with(&factors, &rules, exec).map_err(|e| e.to_string())?;
            ensure!(
                c.universe == want.universe,
                "seed {seed}: universe {}",
                c.universe
            );
            ensure!(
                c.uncovered_total == want.uncovered.len() as u64,
                "seed {seed}: uncovered {}",
                c.uncovered_total
            );
            ensure!(
                c.uncovered
                    .iter()
                    .map(|k| &k.0)
                    .eq(want.uncovered.iter().take(c.uncovered.len())),
                "seed {seed}: uncovered examples differ"
            );
            let k = check_consistency_with(&factors, &rules, exec).map_err(|e| e.to_string())?;
            ensure!(
                k.conflict_total == want.conflicts.len() as u64,
                "seed {seed}: conflicts {}",
                k.conflict_total
            );
            ensure!(
                k.conflicts.iter().map(|x| (&x.case.0, &x.rules)).eq(want
                    .conflicts
                    .iter()
                    .take(k.conflicts.len())
                    .map(|(c, r)| (c, r))),
                "seed {seed}: conflict examples differ"
            );
        }
    }

    let dir = fixtures().join("cases");
    let set = RuleSet::parse(&fs::read_to_string(dir.join("pricing.rules")).unwrap())
        .map_err(|e| e.to_string())?;
    let expected: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("pricing.expected.json")).unwrap())
            .unwrap();
    let c = check_completeness_with(&set.factors, &set.rules, Exec::Sequential)
        .map_err(|e| e.to_string())?;
    let k = check_consistency_with(&set.factors, &set.rules, Exec::Sequential)
        .map_err(|e| e.to_string())?;
    let uncovered: Vec<Vec<String>> =
        serde_json::from_value(expected["uncovered"].clone()).unwrap();
    ensure!(
        c.universe == 24 && c.uncovered_total == 5,
        "pricing: {} cases, {} uncovered",
        c.universe,
        c.uncovered_total
    );
    ensure!(
        c.uncovered.iter().map(|k| &k.0).eq(uncovered.iter()),
        "pricing: uncovered cases differ"
    );
    ensure!(
        k.conflict_total == 2,
        "pricing: {} conflicts",
        k.conflict_total
    );
    for (got, want) in k
        .conflicts
        .iter()
        .zip(expected["conflicts"].as_array().unwrap())
    {
        let case: Vec<String> = serde_json::from_value(want["case"].clone()).unwrap();
        let rules: Vec<String> = serde_json::from_value(want["rules"].clone()).unwrap();
        let mut got_rules = got.rules.clone();
        got_rules.sort();
        ensure!(
            got.case.0 == case && got_rules == rules,
            "pricing: conflict {:?} differs",
            got.case.0
        );
    }
    Ok(format!(
        "200 rule sets ({} cases, {} uncovered, {} conflicts); pricing 24/5/2",
        totals.0, totals.1, totals.2
    ))
}

fn persistence() -> Outcome {
    let mut corrupted = 0;
    for seed in 0..500u64 {
        let mut r = rng(seed);
        let doc = random_document(&mut r, &DocShape::default());
        let inst = random_instance(&mut r, &doc, 30);
        let dir = tempfile::tempdir().unwrap();
        let repo = Repository::open(dir.path());
        repo.save_generic(&doc).map_err(|e| e.to_string())?;
        repo.save_instance(&inst).map_err(|e| e.to_string())?;
        ensure!(
            repo.load_generic(&doc.id).ok() == Some(doc.clone()),
            "seed {seed}: generic round trip"
        );
        ensure!(
            repo.load_instance(&inst.id).map(|l| l.instance).ok() == Some(inst.clone()),
            "seed {seed}: instance round trip"
        );
        let files = [repo.manifest_path(&doc.id), repo.instance_path(&inst.id)];
        let before: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
        repo.save_generic(&doc).map_err(|e| e.to_string())?;
        repo.save_instance(&inst).map_err(|e| e.to_string())?;
        let after: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
        ensure!(before == after, "seed {seed}: double save changed bytes");

        let versions: Vec<_> = doc.all_versions().map(|v| v.id.clone()).collect();
        if versions.is_empty() {
            continue;
        }
        let path = repo.fragment_path(&doc.id, &versions[r.random_range(0..versions.len())]);
        let mut bytes = fs::read(&path).unwrap();
        if bytes.is_empty() {
            bytes.push(b' ');
        } else {
            let at = r.random_range(0..bytes.len());
            bytes[at] ^= r.random_range(1..=255u8);
        }
        fs::write(&path, bytes).unwrap();
        ensure!(
            repo.load_generic(&doc.id).is_err(),
            "seed {seed}: corrupted {} loaded",
            path.display()
        );
        corrupted += 1;
    }
    Ok(format!("500 round trips, {corrupted} corruptions detected"))
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn cli_check_statuses() -> Outcome {
    let mut seen = Vec::new();
    for (repo, instance, status) in [
        ("clean", "i1", 0),
        ("breach", "i2", 1),
        ("corrupt", "i1", 2),
    ] {
        let dir = tempfile::tempdir().unwrap();
        copy_tree(&fixtures().join("repos").join(repo), dir.path());
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let args = [
            "ccad",
            "--repo",
            dir.path().to_str().unwrap(),
            "check",
            "--instance",
            instance,
        ];
        let code = contract_cad_cli::run(args, &mut out, &mut err);
        ensure!(code == status, "{repo}: exit {code}, wanted {status}");
        seen.push(format!("{repo}={code}"));
    }
    Ok(seen.join(" "))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("incremental-equals-full", incremental_equals_full),
        ("enforce-closure-oracle", enforce_matches_fixpoint),
        ("satisfiability-oracle", satisfiable_matches_enumeration),
        ("golden-render", golden_render),
        ("domain-rule-fixtures", domain_rules),
        ("case-universe-oracle", case_universe),
        ("persistence", persistence),
        ("cli-check-statuses", cli_check_statuses),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > BUDGET => Err(format!("took {:.1}s", elapsed.as_secs_f64())),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({:.1}s)", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({:.1}s)", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
