use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use contract_cad::cases::{
    check_completeness_with, check_consistency_with, CaseRule, Factor, Literal,
};
use contract_cad::model::NewVersion;
use contract_cad::{Atom, Checker, Constraint, Exec, GenericDocument, UnitKind};

const EXECS: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

/// `factors` factors of five values each, one rule per factor value.
fn rule_set(factors: usize) -> (Vec<Factor>, Vec<CaseRule>) {
    let values = ["a", "b", "c", "d", "e"];
    let fs: Vec<Factor> = (0..factors)
        .map(|i| Factor::new(&format!("f{i}"), &values))
        .collect();
    let mut rules = Vec::new();
    for (i, f) in fs.iter().enumerate() {
        for (k, v) in values.iter().enumerate().take(4) {
            rules.push(CaseRule {
                id: format!("r{i}-{k}"),
                condition: vec![Literal {
                    factor: f.name.clone(),
                    allowed: [v.to_string()].into(),
                }],
                outcome: if k % 2 == 0 { "pay" } else { "refund" }.to_string(),
            });
        }
    }
    (fs, rules)
}

/// Unsatisfiable only at the last unit, so the search visits the whole tree.
fn late_contradiction(versioned: usize) -> Checker {
    let mut doc = GenericDocument::new("bench", "Bench", "root");
    for i in 0..versioned {
        let id = format!("s{i}");
        doc.push_unit("root", UnitKind::Section, "Clause", &id)
            .unwrap();
        doc.add_version(&id, NewVersion::new("first")).unwrap();
        doc.add_version(&id, NewVersion::new("second")).unwrap();
    }
    doc.push_unit("root", UnitKind::Section, "Last", "z")
        .unwrap();
    doc.add_constraint(Constraint::requires(
        "need-z",
        Atom::UnitIncluded("root".into()),
        "z",
        "",
    ))
    .unwrap();
    doc.add_constraint(Constraint::excludes(
        "no-z",
        Atom::UnitIncluded("root".into()),
        Atom::UnitIncluded("z".into()),
        "",
    ))
    .unwrap();
    Checker::new(doc)
}

fn cases(c: &mut Criterion) {
    let mut group = c.benchmark_group("cases");
    group.sample_size(10);
    for factors in [6, 8] {
        let (fs, rules) = rule_set(factors);
        for (name, exec) in EXECS {
            group.bench_with_input(
                BenchmarkId::new(format!("completeness/{name}"), factors),
                &exec,
                |b, &exec| {
                    b.iter(|| {
                        check_completeness_with(black_box(&fs), black_box(&rules), exec).unwrap()
                    })
                },
            );
            group.bench_with_input(
                BenchmarkId::new(format!("consistency/{name}"), factors),
                &exec,
                |b, &exec| {
                    b.iter(|| {
                        check_consistency_with(black_box(&fs), black_box(&rules), exec).unwrap()
                    })
                },
            );
        }
    }
    group.finish();
}

fn sat(c: &mut Criterion) {
    let mut group = c.benchmark_group("satisfiable");
    group.sample_size(10);
    for versioned in [7, 9] {
        let checker = late_contradiction(versioned);
        for (name, exec) in EXECS {
            group.bench_with_input(BenchmarkId::new(name, versioned), &exec, |b, &exec| {
                b.iter(|| black_box(checker.satisfiable_with(exec)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, cases, sat);
criterion_main!(benches);
