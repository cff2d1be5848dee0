//! `ccad`: scripted access to a contract repository.
//!
//! Exit status: 0 when everything is in order, 1 when violations, gaps
//! (for `check`) or blocked edits were found, 2 on usage, I/O or
//! repository errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use contract_cad::assembler::{diff, DiffEntry, EditOutcome, RenderOptions, Session};
use contract_cad::cases::{check_completeness, check_consistency, RuleSet};
use contract_cad::constraint::{EnforceOutcome, ParamExpr, SatOutcome};
use contract_cad::model::NewVersion;
use contract_cad::store::Repository;
use contract_cad::{
    Atom, CheckReport, Checker, Constraint, Delta, GenericDocument, Mode, ParamType, ParameterDecl,
    UnitId, UnitKind, Value,
};

pub const OK: i32 = 0;
pub const FOUND: i32 = 1;
pub const FAILED: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "ccad",
    version,
    about = "Draft contracts from generic documents"
)]
struct Cli {
    /// Repository directory.
    #[arg(long, global = true, default_value = "./contracts")]
    repo: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Notify,
    Enforce,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct TemplateSource {
    /// Template text.
    #[arg(long)]
    text: Option<String>,
    /// File holding the template text.
    #[arg(long)]
    file: Option<PathBuf>,
}

impl TemplateSource {
    fn read(&self) -> Result<String, String> {
        match (&self.text, &self.file) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(p)) => fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display())),
            (None, None) => Err("no template given".into()),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create the repository layout, optionally with an empty generic document.
    Init {
        #[arg(long)]
        generic: Option<String>,
        #[arg(long, requires = "generic")]
        title: Option<String>,
        #[arg(long, default_value = "root")]
        root: String,
    },
    AddUnit {
        #[arg(long)]
        generic: String,
        #[arg(long)]
        parent: String,
        /// part, section, provision or sentence.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        heading: String,
        #[arg(long)]
        id: Option<String>,
        /// Index among the parent's children; appends by default.
        #[arg(long)]
        position: Option<usize>,
    },
    AddVersion {
        #[arg(long)]
        generic: String,
        #[arg(long)]
        unit: String,
        #[command(flatten)]
        template: TemplateSource,
        #[arg(long)]
        derived_from: Option<String>,
        #[arg(long, default_value = "")]
        rationale: String,
        #[arg(long, default_value = "")]
        provenance: String,
        #[arg(long)]
        created_at: Option<String>,
    },
    AddConstraint {
        #[arg(long)]
        generic: String,
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "")]
        message: String,
        #[command(subcommand)]
        kind: ConstraintArg,
    },
    DeclareParam {
        #[arg(long)]
        generic: String,
        #[arg(long)]
        name: String,
        /// text, party, integer, decimal, date, money or enum.
        #[arg(long = "type")]
        ptype: String,
        /// Allowed values of an enum parameter.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        #[arg(long, default_value = "")]
        description: String,
    },
    NewInstance {
        #[arg(long)]
        generic: String,
        #[arg(long)]
        id: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Notify)]
        mode: ModeArg,
    },
    Include {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        unit: String,
    },
    Exclude {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        unit: String,
    },
    /// Select a version; without `--version` the selection is cleared.
    Select {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        unit: String,
        #[arg(long)]
        version: Option<String>,
    },
    /// Bind a parameter; without `--value` the binding is removed.
    Bind {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        param: String,
        #[arg(long)]
        value: Option<String>,
    },
    Check {
        #[arg(long)]
        instance: String,
    },
    /// Include a unit together with everything it requires.
    EnforceInclude {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        unit: String,
    },
    Finalize {
        #[arg(long)]
        instance: String,
    },
    Render {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Diff {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        against: String,
    },
    /// Store edited text as a new version of a unit and select it.
    Promote {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        unit: String,
        #[command(flatten)]
        template: TemplateSource,
        #[arg(long)]
        rationale: String,
        #[arg(long)]
        created_at: Option<String>,
    },
    Satisfiable {
        #[arg(long)]
        generic: String,
    },
    CheckCases {
        rulefile: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum ConstraintArg {
    /// ANTECEDENT (a unit id, or a version id to mean "selected") requires UNIT.
    Requires {
        antecedent: String,
        unit: String,
    },
    Excludes {
        a: String,
        b: String,
    },
    ExactlyOne {
        #[arg(required = true, num_args = 2..)]
        units: Vec<String>,
    },
    Rule {
        expr: String,
    },
}

fn atom(s: &str) -> Atom {
    if s.contains(':') {
        Atom::VersionSelected(s.into())
    } else {
        Atom::UnitIncluded(s.into())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return OK;
        }
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return FAILED;
        }
    };
    let mut ctx = Ctx {
        repo: Repository::open(&cli.repo),
        format: cli.format,
        out,
        err,
    };
    match ctx.dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(ctx.err, "error: {message}");
            FAILED
        }
    }
}

type Outcome = Result<i32, String>;

fn fail(e: impl ToString) -> String {
    e.to_string()
}

struct Ctx<'a> {
    repo: Repository,
    format: Format,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn dispatch(&mut self, command: Command) -> Outcome {
        match command {
            Command::Init {
                generic,
                title,
                root,
            } => {
                self.repo.init().map_err(fail)?;
                if let Some(id) = generic {
                    if self.repo.list_generics().map_err(fail)?.contains(&id) {
                        return Err(format!("generic document `{id}` already exists"));
                    }
                    let title = title.unwrap_or_else(|| id.clone());
                    self.repo
                        .save_generic(&GenericDocument::new(&id, &title, &root))
                        .map_err(fail)?;
                    self.say(&format!("created generic document {id}"))?;
                } else {
                    self.say(&format!("initialised {}", self.repo.root().display()))?;
                }
                Ok(OK)
            }
            Command::AddUnit {
                generic,
                parent,
                kind,
                heading,
                id,
                position,
            } => {
                let kind = UnitKind::from_name(&kind)
                    .ok_or_else(|| format!("unknown unit kind `{kind}`"))?;
                let created = self.mutate_generic(&generic, |doc| {
                    let len = doc.unit(&parent).map_or(0, |u| u.children.len());
                    doc.add_unit(
                        &parent,
                        kind,
                        &heading,
                        position.unwrap_or(len),
                        id.as_deref(),
                    )
                    .map_err(fail)
                })?;
                self.say(&format!("added unit {created}"))?;
                Ok(OK)
            }
            Command::AddVersion {
                generic,
                unit,
                template,
                derived_from,
                rationale,
                provenance,
                created_at,
            } => {
                let text = template.read()?;
                let mut new = NewVersion::new(text)
                    .rationale(rationale)
                    .provenance(provenance)
                    .created_at(created_at.unwrap_or_else(now));
                if let Some(base) = derived_from {
                    new = new.derived_from(base);
                }
                let id =
                    self.mutate_generic(&generic, |doc| doc.add_version(&unit, new).map_err(fail))?;
                self.say(&format!("added version {id}"))?;
                Ok(OK)
            }
            Command::AddConstraint {
                generic,
                id,
                message,
                kind,
            } => {
                let c = match kind {
                    ConstraintArg::Requires { antecedent, unit } => {
                        Constraint::requires(&id, atom(&antecedent), &unit, &message)
                    }
                    ConstraintArg::Excludes { a, b } => {
                        Constraint::excludes(&id, atom(&a), atom(&b), &message)
                    }
                    ConstraintArg::ExactlyOne { units } => {
                        Constraint::exactly_one(&id, units.iter().map(String::as_str), &message)
                    }
                    ConstraintArg::Rule { expr } => {
                        let expr: ParamExpr = expr.parse().map_err(fail)?;
                        Constraint::param_rule(&id, expr, &message)
                    }
                };
                self.mutate_generic(&generic, |doc| doc.add_constraint(c).map_err(fail))?;
                self.say(&format!("added constraint {id}"))?;
                Ok(OK)
            }
            Command::DeclareParam {
                generic,
                name,
                ptype,
                values,
                description,
            } => {
                let ptype = ParamType::from_name(&ptype, values).map_err(fail)?;
                let decl = ParameterDecl::new(&name, ptype, &description);
                self.mutate_generic(&generic, |doc| doc.declare_parameter(decl).map_err(fail))?;
                self.say(&format!("declared parameter {name}"))?;
                Ok(OK)
            }
            Command::NewInstance { generic, id, mode } => {
                let repo = self.repo.clone();
                let lock = repo.lock().map_err(fail)?;
                if self.repo.list_instances().map_err(fail)?.contains(&id) {
                    return Err(format!("instance `{id}` already exists"));
                }
                let doc = self.repo.load_generic(&generic).map_err(fail)?;
                let mode = match mode {
                    ModeArg::Notify => Mode::Notify,
                    ModeArg::Enforce => Mode::Enforce,
                };
                let s = Session::new(doc, &id, mode).map_err(fail)?;
                lock.save_instance(s.instance()).map_err(fail)?;
                self.say(&format!("created instance {id} of {generic}"))?;
                self.summary(s.report())
            }
            Command::Include { instance, unit } => {
                self.edit(&instance, Delta::Include { unit: unit.into() })
            }
            Command::Exclude { instance, unit } => {
                self.edit(&instance, Delta::Exclude { unit: unit.into() })
            }
            Command::Select {
                instance,
                unit,
                version,
            } => {
                let delta = match version {
                    Some(v) => Delta::Select {
                        unit: unit.into(),
                        version: v.into(),
                    },
                    None => Delta::Deselect { unit: unit.into() },
                };
                self.edit(&instance, delta)
            }
            Command::Bind {
                instance,
                param,
                value,
            } => {
                let delta = match value {
                    Some(text) => {
                        let loaded = self.repo.load_instance(&instance).map_err(fail)?;
                        let doc = self
                            .repo
                            .load_generic(&loaded.instance.generic_id)
                            .map_err(fail)?;
                        let decl = doc
                            .parameter(&param)
                            .ok_or_else(|| format!("unknown parameter `{param}`"))?;
                        let value = Value::parse(&decl.ptype, &text).map_err(fail)?;
                        Delta::Bind { param, value }
                    }
                    None => Delta::Unbind { param },
                };
                self.edit(&instance, delta)
            }
            Command::Check { instance } => {
                let s = self.session(&instance, false)?;
                let report = s.report();
                if self.format == Format::Json {
                    self.json(&json!(report))?;
                } else if report.is_clean() {
                    self.say("no pathological features")?;
                } else {
                    for line in report.lines() {
                        self.say(&line)?;
                    }
                }
                Ok(if report.is_clean() { OK } else { FOUND })
            }
            Command::EnforceInclude { instance, unit } => {
                let repo = self.repo.clone();
                let lock = repo.lock().map_err(fail)?;
                let s = self.session(&instance, true)?;
                let mut inst = s.instance().clone();
                let outcome = s
                    .checker()
                    .enforce_include_apply(&mut inst, &UnitId::from(unit.as_str()))
                    .map_err(fail)?;
                if self.format == Format::Json {
                    self.json(&json!(outcome))?;
                }
                match outcome {
                    EnforceOutcome::Added { added } => {
                        lock.save_instance(&inst).map_err(fail)?;
                        if self.format == Format::Text {
                            let added: Vec<&str> = added.iter().map(UnitId::as_str).collect();
                            self.say(&format!("included: {}", added.join(", ")))?;
                        }
                        let report = s.checker().check_full(&inst);
                        self.summary(&report)
                    }
                    EnforceOutcome::Contradiction { chain } => {
                        if self.format == Format::Text {
                            self.say(&format!("contradiction including {unit}:"))?;
                            for step in chain {
                                self.say(&format!(
                                    "  {} via {}",
                                    step.atom,
                                    json!(step.via)["via"].as_str().unwrap_or("")
                                ))?;
                            }
                        }
                        Ok(FOUND)
                    }
                }
            }
            Command::Finalize { instance } => {
                let repo = self.repo.clone();
                let lock = repo.lock().map_err(fail)?;
                let s = self.session(&instance, true)?;
                match s.finalize() {
                    Ok(fin) => {
                        lock.save_finalized(&fin).map_err(fail)?;
                        if self.format == Format::Json {
                            self.json(&json!({"finalized": instance, "genericSha256": fin.generic_sha256()}))?;
                        } else {
                            self.say(&format!(
                                "finalized {instance} against snapshot {}",
                                fin.generic_sha256()
                            ))?;
                        }
                        Ok(OK)
                    }
                    Err(report) => {
                        if self.format == Format::Json {
                            self.json(&json!(report))?;
                        } else {
                            self.say(&format!("cannot finalize {instance}:"))?;
                            for line in report.lines() {
                                self.say(&format!("  {line}"))?;
                            }
                        }
                        Ok(FOUND)
                    }
                }
            }
            Command::Render { instance, out } => {
                let loaded = self.repo.load_instance(&instance).map_err(fail)?;
                self.warn(&loaded.warnings)?;
                let doc = self
                    .repo
                    .load_generic(&loaded.instance.generic_id)
                    .map_err(fail)?;
                let opts = RenderOptions::default();
                let rendered = match &loaded.finalized {
                    Some(fin) => fin.render(&doc, &opts),
                    None => Session::resume(doc, loaded.instance)
                        .map_err(fail)?
                        .render(&opts),
                };
                let rendered = match rendered {
                    Ok(r) => r,
                    Err(e) => {
                        writeln!(self.err, "cannot render {instance}: {e}").map_err(fail)?;
                        return Ok(FOUND);
                    }
                };
                match out {
                    Some(path) => fs::write(&path, &rendered.text)
                        .map_err(|e| format!("{}: {e}", path.display()))?,
                    None if self.format == Format::Json => self.json(&json!(rendered))?,
                    None => self.out.write_all(rendered.text.as_bytes()).map_err(fail)?,
                }
                Ok(OK)
            }
            Command::Diff { instance, against } => {
                let a = self.repo.load_instance(&instance).map_err(fail)?.instance;
                let b = self.repo.load_instance(&against).map_err(fail)?.instance;
                let entries = diff(&a, &b).map_err(fail)?;
                if self.format == Format::Json {
                    self.json(&json!(entries))?;
                } else {
                    for e in &entries {
                        self.say(&describe(e))?;
                    }
                }
                Ok(OK)
            }
            Command::Promote {
                instance,
                unit,
                template,
                rationale,
                created_at,
            } => {
                let text = template.read()?;
                let repo = self.repo.clone();
                let lock = repo.lock().map_err(fail)?;
                let mut s = self.session(&instance, true)?;
                let (version, outcome) = s
                    .promote_version(
                        &unit.into(),
                        &text,
                        &rationale,
                        &created_at.unwrap_or_else(now),
                    )
                    .map_err(fail)?;
                lock.save_generic(s.doc()).map_err(fail)?;
                lock.save_instance(s.instance()).map_err(fail)?;
                if self.format == Format::Text {
                    self.say(&format!("added version {version}"))?;
                }
                self.outcome(&outcome, s.report())
            }
            Command::Satisfiable { generic } => {
                let doc = self.repo.load_generic(&generic).map_err(fail)?;
                match Checker::new(doc).satisfiable() {
                    SatOutcome::Witness(w) => {
                        if self.format == Format::Json {
                            self.json(&json!({"satisfiable": true, "included": w.included, "selections": w.selections}))?;
                        } else {
                            self.say("satisfiable")?;
                            let units: Vec<&str> = w.included.iter().map(UnitId::as_str).collect();
                            self.say(&format!("  included: {}", units.join(", ")))?;
                            for (u, v) in &w.selections {
                                self.say(&format!("  {u} -> {v}"))?;
                            }
                        }
                        Ok(OK)
                    }
                    SatOutcome::Unsatisfiable => {
                        if self.format == Format::Json {
                            self.json(&json!({"satisfiable": false}))?;
                        } else {
                            self.say("unsatisfiable: no complete instance meets every constraint")?;
                        }
                        Ok(FOUND)
                    }
                    SatOutcome::InvalidDocument => Err(format!("generic document `{generic}` is structurally invalid")),
                    SatOutcome::TooLarge { units, versioned_units } => Err(format!(
                        "generic document `{generic}` is too large to search ({units} units, {versioned_units} with versions)"
                    )),
                }
            }
            Command::CheckCases { rulefile } => {
                let text = fs::read_to_string(&rulefile)
                    .map_err(|e| format!("{}: {e}", rulefile.display()))?;
                let set = RuleSet::parse(&text).map_err(fail)?;
                let complete = check_completeness(&set.factors, &set.rules).map_err(fail)?;
                let consistent = check_consistency(&set.factors, &set.rules).map_err(fail)?;
                if self.format == Format::Json {
                    self.json(&json!({"completeness": complete, "consistency": consistent}))?;
                } else {
                    self.say(&format!("universe: {} cases", complete.universe))?;
                    self.say(&format!("uncovered: {}", complete.uncovered_total))?;
                    for case in &complete.uncovered {
                        self.say(&format!("  {}", case.describe(&set.factors)))?;
                    }
                    self.say(&format!("conflicts: {}", consistent.conflict_total))?;
                    for c in &consistent.conflicts {
                        self.say(&format!(
                            "  {}: {}",
                            c.case.describe(&set.factors),
                            c.rules.join(", ")
                        ))?;
                    }
                }
                let clean = complete.uncovered_total == 0 && consistent.conflict_total == 0;
                Ok(if clean { OK } else { FOUND })
            }
        }
    }

    fn say(&mut self, line: &str) -> Result<(), String> {
        writeln!(self.out, "{line}").map_err(fail)
    }

    fn json(&mut self, value: &serde_json::Value) -> Result<(), String> {
        let text = serde_json::to_string_pretty(value).map_err(fail)?;
        self.say(&text)
    }

    fn warn(&mut self, warnings: &[String]) -> Result<(), String> {
        for w in warnings {
            writeln!(self.err, "warning: {w}").map_err(fail)?;
        }
        Ok(())
    }

    fn mutate_generic<T>(
        &mut self,
        id: &str,
        change: impl FnOnce(&mut GenericDocument) -> Result<T, String>,
    ) -> Result<T, String> {
        let repo = self.repo.clone();
        let lock = repo.lock().map_err(fail)?;
        let mut doc = repo.load_generic(id).map_err(fail)?;
        let result = change(&mut doc)?;
        lock.save_generic(&doc).map_err(fail)?;
        Ok(result)
    }

    /// Resumes a session; `editing` refuses finalized instances.
    fn session(&mut self, id: &str, editing: bool) -> Result<Session, String> {
        let loaded = self.repo.load_instance(id).map_err(fail)?;
        if editing && loaded.finalized.is_some() {
            return Err(format!(
                "instance `{id}` is finalized and cannot be changed"
            ));
        }
        self.warn(&loaded.warnings)?;
        let doc = self
            .repo
            .load_generic(&loaded.instance.generic_id)
            .map_err(fail)?;
        Session::resume(doc, loaded.instance).map_err(fail)
    }

    fn edit(&mut self, instance: &str, delta: Delta) -> Outcome {
        let repo = self.repo.clone();
        let lock = repo.lock().map_err(fail)?;
        let mut s = self.session(instance, true)?;
        let outcome = s.apply_edit(&delta).map_err(fail)?;
        if !outcome.is_blocked() {
            lock.save_instance(s.instance()).map_err(fail)?;
        }
        self.outcome(&outcome, s.report())
    }

    fn outcome(&mut self, outcome: &EditOutcome, report: &CheckReport) -> Outcome {
        if self.format == Format::Json {
            self.json(&json!(outcome))?;
        }
        match outcome {
            EditOutcome::Blocked { reason, .. } => {
                if self.format == Format::Text {
                    self.say(&format!("blocked: {reason}"))?;
                }
                Ok(FOUND)
            }
            EditOutcome::Applied { side_effects, .. } => {
                if self.format == Format::Text && !side_effects.is_empty() {
                    let units: Vec<&str> = side_effects.iter().map(UnitId::as_str).collect();
                    self.say(&format!("also included: {}", units.join(", ")))?;
                }
                self.summary(report)
            }
        }
    }

    /// Prints violation and gap counts; status 1 if anything is violated.
    fn summary(&mut self, report: &CheckReport) -> Outcome {
        if self.format == Format::Text {
            self.say(&format!(
                "violations: {}, gaps: {}",
                report.violations.len(),
                report.gaps.len()
            ))?;
        }
        Ok(if report.violations.is_empty() {
            OK
        } else {
            FOUND
        })
    }
}

fn describe(e: &DiffEntry) -> String {
    let show = |v: &Option<String>| v.clone().unwrap_or_else(|| "(none)".into());
    match e {
        DiffEntry::InclusionChanged {
            unit,
            included: true,
        } => format!("+ {unit}"),
        DiffEntry::InclusionChanged {
            unit,
            included: false,
        } => format!("- {unit}"),
        DiffEntry::SelectionChanged { unit, from, to } => format!(
            "~ {unit}: {} -> {}",
            show(&from.as_ref().map(|v| v.to_string())),
            show(&to.as_ref().map(|v| v.to_string()))
        ),
        DiffEntry::BindingChanged { param, from, to } => format!(
            "~ {param} = {} -> {}",
            show(&from.as_ref().map(|v| v.to_string())),
            show(&to.as_ref().map(|v| v.to_string()))
        ),
    }
}
