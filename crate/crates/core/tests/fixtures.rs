//! The committed fixture repositories under `fixtures/repos` and the golden
//! renders under `fixtures/golden`.
//!
//! Run with `REGENERATE_FIXTURES=1` to rewrite the repositories from the
//! builders below. Golden files are produced separately by
//! `fixtures/golden/render_oracle.py` and are never written from here.

use std::fs;
use std::path::PathBuf;

use contract_cad::assembler::{RenderOptions, Session};
use contract_cad::cases::{check_completeness, check_consistency, RuleSet};
use contract_cad::constraint::Constraint;
use contract_cad::model::{Delta, NewVersion};
use contract_cad::store::{Repository, StoreError};
use contract_cad::{GenericDocument, Mode, ParamType, ParameterDecl, UnitId, UnitKind, Value};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

const S4_1_ORIGINAL: &str = "Unless otherwise provided in the Contract the Conditions as amended by the Letter of Acceptance shall prevail over any other document forming part of the Contract and in the case of conflict between the General Conditions the Special Conditions shall prevail. Subject thereto the Specification shall prevail over any other document forming part of the Contract.";
const S4_1_MODIFIED: &str = "The documents forming the Contract are to be taken as mutually explanatory of one another and in the case of ambiguities or discrepancies the same shall be explained and adjusted by the Engineer who shall thereupon issue to the Contractor appropriate instructions in writing.";
const S14_6_ORIGINAL: &str = "The Engineer shall notify the Contractor if the Engineer decides that the rate of progress of the Works or of any Section is too slow to meet the Time for Completion and that this is not due to a circumstance for which the Contractor is entitled to an extension of time under Sub-Clause {{ref cl-33-1}}.";

fn iee_document() -> GenericDocument {
    let mut doc = GenericDocument::new("iee-mf1", "Model Form MF/1 General Conditions", "root");
    for i in 1..=33 {
        doc.push_unit(
            "root",
            UnitKind::Part,
            &format!("Part {i}"),
            &format!("p{i}"),
        )
        .unwrap();
    }
    doc.push_unit("p4", UnitKind::Section, "Precedence of Documents", "s4-1")
        .unwrap();
    for i in 1..=5 {
        doc.push_unit(
            "p14",
            UnitKind::Section,
            "Other provision",
            &format!("s14-{i}"),
        )
        .unwrap();
    }
    doc.push_unit("p14", UnitKind::Section, "Rate of Progress", "s14-6")
        .unwrap();
    doc.push_unit("p33", UnitKind::Section, "Extension of Time", "cl-33-1")
        .unwrap();

    let v1 = doc
        .add_version(
            "s4-1",
            NewVersion::new(S4_1_ORIGINAL).provenance("IEE MF/1 (1988)"),
        )
        .unwrap();
    doc.add_version(
        "s4-1",
        NewVersion::new(S4_1_MODIFIED)
            .derived_from(v1)
            .rationale("read the documents together and let the Engineer resolve discrepancies")
            .provenance("executed contract"),
    )
    .unwrap();
    let v1 = doc
        .add_version(
            "s14-6",
            NewVersion::new(S14_6_ORIGINAL).provenance("IEE MF/1 (1988)"),
        )
        .unwrap();
    let softened = S14_6_ORIGINAL
        .replace("shall", "may")
        .replace("decides", "considers");
    doc.add_version(
        "s14-6",
        NewVersion::new(softened)
            .derived_from(v1)
            .rationale("soften the Engineer's duty to a discretion")
            .provenance("executed contract"),
    )
    .unwrap();
    doc
}

fn iee_instance(doc: &GenericDocument) -> Session {
    let mut s = Session::new(doc.clone(), "i1", Mode::Notify).unwrap();
    let mut units: Vec<&str> = vec!["s4-1", "s14-6", "cl-33-1"];
    let siblings: Vec<String> = (1..=5).map(|i| format!("s14-{i}")).collect();
    let parts: Vec<String> = (1..=33).map(|i| format!("p{i}")).collect();
    units.extend(siblings.iter().map(String::as_str));
    units.extend(parts.iter().map(String::as_str));
    for u in units {
        s.apply_edit(&Delta::Include { unit: u.into() }).unwrap();
    }
    s.apply_edit(&Delta::Select {
        unit: "s4-1".into(),
        version: "s4-1:v2".into(),
    })
    .unwrap();
    s.apply_edit(&Delta::Select {
        unit: "s14-6".into(),
        version: "s14-6:v1".into(),
    })
    .unwrap();
    s
}

fn sale_document() -> GenericDocument {
    let mut doc = GenericDocument::new("sale", "Sale of Goods Agreement", "root");
    doc.push_unit("root", UnitKind::Part, "Parties", "parties")
        .unwrap();
    doc.push_unit(
        "parties",
        UnitKind::Section,
        "Contracting Parties",
        "s-parties",
    )
    .unwrap();
    doc.push_unit("root", UnitKind::Part, "Term", "term")
        .unwrap();
    doc.push_unit("term", UnitKind::Section, "Commencement", "s-commence")
        .unwrap();
    for (name, ptype, desc) in [
        ("buyer", ParamType::Party, "the purchasing party"),
        ("seller", ParamType::Party, "the supplying party"),
        (
            "draftDate",
            ParamType::Date,
            "date the agreement was drafted",
        ),
        (
            "effectiveDate",
            ParamType::Date,
            "date the agreement comes into force",
        ),
    ] {
        doc.declare_parameter(ParameterDecl::new(name, ptype, desc))
            .unwrap();
    }
    doc.add_version(
        "s-parties",
        NewVersion::new("This agreement is made between {{param seller}} (the Seller) and {{param buyer}} (the Buyer)."),
    )
    .unwrap();
    doc.add_version(
        "s-commence",
        NewVersion::new("This agreement comes into force on {{param effectiveDate}}. It was drafted on {{param draftDate}}."),
    )
    .unwrap();
    doc.add_constraint(Constraint::param_rule(
        "parties-distinct",
        "distinct(buyer,seller)".parse().unwrap(),
        "the two contracting parties must be distinct",
    ))
    .unwrap();
    doc.add_constraint(Constraint::param_rule(
        "in-force-after-drafting",
        "defined(effectiveDate) && draftDate < effectiveDate"
            .parse()
            .unwrap(),
        "the agreement must come into force after it was drafted",
    ))
    .unwrap();
    doc
}

fn sale_instance(doc: &GenericDocument) -> Session {
    let mut s = Session::new(doc.clone(), "i2", Mode::Notify).unwrap();
    for (unit, version) in [
        ("s-parties", "s-parties:v1"),
        ("s-commence", "s-commence:v1"),
    ] {
        s.apply_edit(&Delta::Include { unit: unit.into() }).unwrap();
        s.apply_edit(&Delta::Select {
            unit: unit.into(),
            version: version.into(),
        })
        .unwrap();
    }
    let date = |d: &str| Value::parse(&ParamType::Date, d).unwrap();
    for (param, value) in [
        ("buyer", Value::Party("Acme Ltd".into())),
        ("seller", Value::Party("Acme Ltd".into())),
        ("draftDate", date("2024-03-01")),
        ("effectiveDate", date("2024-04-01")),
    ] {
        s.apply_edit(&Delta::Bind {
            param: param.into(),
            value,
        })
        .unwrap();
    }
    s
}

fn regenerate() {
    let repos = fixtures().join("repos");
    for name in ["clean", "breach", "corrupt"] {
        let _ = fs::remove_dir_all(repos.join(name));
    }
    let iee = iee_document();
    let fin = iee_instance(&iee).finalize().unwrap();
    for name in ["clean", "corrupt"] {
        let repo = Repository::open(repos.join(name));
        repo.save_generic(&iee).unwrap();
        repo.save_finalized(&fin).unwrap();
    }
    let corrupt = Repository::open(repos.join("corrupt"));
    let frag = corrupt.fragment_path("iee-mf1", &"s14-6:v1".into());
    let mut bytes = fs::read(&frag).unwrap();
    bytes[4] ^= 0x20;
    fs::write(&frag, bytes).unwrap();

    let sale = sale_document();
    let breach = Repository::open(repos.join("breach"));
    breach.save_generic(&sale).unwrap();
    breach
        .save_instance(sale_instance(&sale).instance())
        .unwrap();
}

fn golden(name: &str) -> String {
    fs::read_to_string(fixtures().join("golden").join(name)).unwrap()
}

#[test]
fn committed_repositories_match_builders() {
    if std::env::var_os("REGENERATE_FIXTURES").is_some() {
        regenerate();
    }
    let repos = fixtures().join("repos");
    let clean = Repository::open(repos.join("clean"));
    let iee = iee_document();
    assert_eq!(clean.load_generic("iee-mf1").unwrap(), iee);
    let loaded = clean.load_instance("i1").unwrap();
    assert!(loaded.instance.same_content(iee_instance(&iee).instance()));
    assert!(loaded.finalized.is_some());

    let breach = Repository::open(repos.join("breach"));
    let sale = sale_document();
    assert_eq!(breach.load_generic("sale").unwrap(), sale);
    assert!(breach
        .load_instance("i2")
        .unwrap()
        .instance
        .same_content(sale_instance(&sale).instance()));

    let corrupt = Repository::open(repos.join("corrupt"));
    match corrupt.load_generic("iee-mf1") {
        Err(StoreError::HashMismatch { version }) => assert_eq!(version.as_str(), "s14-6:v1"),
        other => panic!("expected hash mismatch, got {other:?}"),
    }
}

#[test]
fn finalized_iee_instance_renders_golden_text() {
    let repo = Repository::open(fixtures().join("repos/clean"));
    let doc = repo.load_generic("iee-mf1").unwrap();
    let fin = repo.load_instance("i1").unwrap().finalized.unwrap();
    let rendered = fin.render(&doc, &RenderOptions::default()).unwrap();
    let expected = golden("iee-i1.txt");
    assert_eq!(rendered.text, expected);
    assert!(rendered
        .text
        .contains("explained and adjusted by the Engineer"));
    assert!(rendered
        .text
        .contains("extension of time under Sub-Clause 33-1.\n"));
    assert!(!rendered.text.contains('⟨'));
}

#[test]
fn excluding_a_preceding_part_renumbers_the_cross_reference() {
    let repo = Repository::open(fixtures().join("repos/clean"));
    let doc = repo.load_generic("iee-mf1").unwrap();
    let inst = repo.load_instance("i1").unwrap().instance;
    let mut s = Session::resume(doc, inst).unwrap();
    s.apply_edit(&Delta::Exclude {
        unit: UnitId::from("p1"),
    })
    .unwrap();
    let fin = s.finalize().unwrap();
    let text = fin.render(s.doc(), &RenderOptions::default()).unwrap().text;
    assert_eq!(text, golden("iee-i1-without-part1.txt"));
    assert!(text.contains("under Sub-Clause 32-1."));
    assert!(text.contains("\n3-1 Precedence of Documents\n"));
    assert!(text.contains("\n13-6 Rate of Progress\n"));
}

#[test]
fn modified_rate_of_progress_differs_only_in_the_two_words() {
    let doc = iee_document();
    let v1 = &doc.version("s14-6:v1").unwrap().template;
    let v2 = doc.version("s14-6:v2").unwrap();
    assert_eq!(
        v2.derived_from.as_ref().map(|v| v.as_str()),
        Some("s14-6:v1")
    );
    assert!(v2
        .template
        .starts_with("The Engineer may notify the Contractor if the Engineer considers that"));
    assert_eq!(v1.split(' ').count(), v2.template.split(' ').count());
}

#[test]
fn pricing_toy_matches_its_brute_force_oracle() {
    let dir = fixtures().join("cases");
    let set = RuleSet::parse(&fs::read_to_string(dir.join("pricing.rules")).unwrap()).unwrap();
    let expected: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("pricing.expected.json")).unwrap())
            .unwrap();
    let cases =
        |v: &serde_json::Value| -> Vec<Vec<String>> { serde_json::from_value(v.clone()).unwrap() };

    let complete = check_completeness(&set.factors, &set.rules).unwrap();
    assert_eq!(complete.universe, 24);
    assert_eq!(complete.uncovered_total, 5);
    let uncovered: Vec<Vec<String>> = complete.uncovered.iter().map(|c| c.0.clone()).collect();
    assert_eq!(uncovered, cases(&expected["uncovered"]));

    let consistent = check_consistency(&set.factors, &set.rules).unwrap();
    assert_eq!(consistent.conflict_total, 2);
    let want = expected["conflicts"].as_array().unwrap();
    assert_eq!(consistent.conflicts.len(), want.len());
    for (got, want) in consistent.conflicts.iter().zip(want) {
        assert_eq!(got.case.0, cases(&serde_json::json!([want["case"]]))[0]);
        let mut rules = got.rules.clone();
        rules.sort();
        assert_eq!(rules, cases(&serde_json::json!([want["rules"]]))[0]);
    }
}
