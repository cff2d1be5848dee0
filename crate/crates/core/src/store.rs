//! On-disk repository of generic documents and instances.
//!
//! ```text
//! <root>/generic/<docId>/manifest.json
//! <root>/generic/<docId>/fragments/<versionId>.txt
//! <root>/instances/<instanceId>.json
//! ```
//!
//! The manifest holds structure, parameters, constraints and version
//! metadata; each version's template text lives in its own fragment file
//! whose SHA-256 the manifest records. All JSON is written with sorted keys,
//! two-space indentation and a trailing newline, so output is a pure
//! function of the value.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assembler::FinalizedInstance;
use crate::constraint::{Constraint, Origin};
use crate::model::{
    validate_structure, DocumentInstance, GenericDocument, Mode, ParameterDecl, RoleTag,
    StructureFault, Unit, UnitId, UnitKind, Version, VersionId, SCHEMA_VERSION,
};
use crate::value::{ParamType, Value};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("refusing to save a structurally invalid document: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    Refused(Vec<StructureFault>),
    #[error("{path}: malformed file: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: unsupported schemaVersion {found} (this build reads {SCHEMA_VERSION})")]
    UnsupportedSchema { path: PathBuf, found: i64 },
    #[error("fragment for version `{version}` is missing ({path})")]
    MissingFragment { version: VersionId, path: PathBuf },
    #[error("fragment for version `{version}` does not match its recorded hash")]
    HashMismatch { version: VersionId },
    #[error("generic document `{0}` not found")]
    GenericNotFound(String),
    #[error("instance `{0}` not found")]
    InstanceNotFound(String),
    #[error("finalized instance `{instance}` was pinned to generic snapshot {expected}, but `{generic}` now hashes to {actual}")]
    SnapshotMismatch {
        instance: String,
        generic: String,
        expected: String,
        actual: String,
    },
    #[error(
        "repository is locked by another writer ({0}); remove the file if no writer is running"
    )]
    Locked(PathBuf),
}

impl StoreError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
        move |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with sorted object keys and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's Map is a BTreeMap (no preserve_order), so going through
    // Value sorts every object's keys.
    let v = serde_json::to_value(value).expect("in-memory values serialize");
    let mut s = serde_json::to_string_pretty(&v).expect("JSON values serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ManifestUnit {
    id: UnitId,
    kind: UnitKind,
    heading: String,
    children: Vec<UnitId>,
    role_tags: Vec<RoleTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ManifestParameter {
    name: String,
    ptype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    enum_values: Option<Vec<String>>,
    description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ManifestVersion {
    id: VersionId,
    unit_id: UnitId,
    fragment_sha256: String,
    rationale: String,
    provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    derived_from: Option<VersionId>,
    created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Manifest {
    id: String,
    title: String,
    schema_version: u32,
    root_id: UnitId,
    units: Vec<ManifestUnit>,
    parameters: Vec<ManifestParameter>,
    versions: Vec<ManifestVersion>,
    constraints: Vec<Constraint>,
}

fn manifest_of(doc: &GenericDocument) -> Manifest {
    Manifest {
        id: doc.id.clone(),
        title: doc.title.clone(),
        schema_version: doc.schema_version,
        root_id: doc.root.clone(),
        units: doc
            .units
            .values()
            .map(|u| ManifestUnit {
                id: u.id.clone(),
                kind: u.kind,
                heading: u.heading.clone(),
                children: u.children.clone(),
                role_tags: u.role_tags.iter().copied().collect(),
            })
            .collect(),
        parameters: doc
            .parameters
            .iter()
            .map(|p| ManifestParameter {
                name: p.name.clone(),
                ptype: p.ptype.name().to_string(),
                enum_values: p.ptype.enum_values().map(<[String]>::to_vec),
                description: p.description.clone(),
            })
            .collect(),
        versions: doc
            .all_versions()
            .map(|v| ManifestVersion {
                id: v.id.clone(),
                unit_id: v.unit_id.clone(),
                fragment_sha256: sha256_hex(v.template.as_bytes()),
                rationale: v.rationale.clone(),
                provenance: v.provenance.clone(),
                derived_from: v.derived_from.clone(),
                created_at: v.created_at.clone(),
            })
            .collect(),
        constraints: doc.constraints.clone(),
    }
}

/// Manifest bytes exactly as [`Repository::save_generic`] writes them.
pub fn manifest_bytes(doc: &GenericDocument) -> String {
    canonical_json(&manifest_of(doc))
}

/// Content hash identifying a generic document snapshot.
///
/// The manifest records every fragment's hash, so this covers the texts too.
pub fn snapshot_hash(doc: &GenericDocument) -> String {
    sha256_hex(manifest_bytes(doc).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct InstanceFile {
    id: String,
    generic_id: String,
    generic_schema_version: u32,
    generic_sha256: String,
    mode: Mode,
    included: BTreeSet<UnitId>,
    selections: BTreeMap<UnitId, VersionId>,
    bindings: BTreeMap<String, Value>,
    finalized: bool,
    #[serde(default)]
    revision: u64,
}

/// An instance read back from the repository.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInstance {
    pub instance: DocumentInstance,
    /// Present when the file was saved as finalized; its hash has been verified.
    pub finalized: Option<FinalizedInstance>,
    /// Non-fatal notes, e.g. a draft whose generic document has since changed.
    pub warnings: Vec<String>,
}

/// Held while writing; removed on drop. Writes made through the guard do
/// not re-acquire the lock, so a load-modify-save sequence stays exclusive.
#[derive(Debug)]
pub struct RepoLock<'a> {
    repo: &'a Repository,
    path: PathBuf,
}

impl RepoLock<'_> {
    pub fn save_generic(&self, doc: &GenericDocument) -> Result<(), StoreError> {
        self.repo.write_generic(doc)
    }

    pub fn save_instance(&self, inst: &DocumentInstance) -> Result<(), StoreError> {
        let hash = self.repo.stored_snapshot_hash(&inst.generic_id)?;
        self.repo.write_instance(inst, hash, false)
    }

    pub fn save_finalized(&self, fin: &FinalizedInstance) -> Result<(), StoreError> {
        self.repo.stored_snapshot_hash(&fin.instance().generic_id)?;
        self.repo
            .write_instance(fin.instance(), fin.generic_sha256().to_string(), true)
    }
}

impl Drop for RepoLock<'_> {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct Repository {
    root: PathBuf,
}

impl Repository {
    pub fn open(root: impl Into<PathBuf>) -> Repository {
        Repository { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates the directory layout if it is missing.
    pub fn init(&self) -> Result<(), StoreError> {
        for dir in [self.root.join("generic"), self.root.join("instances")] {
            fs::create_dir_all(&dir).map_err(StoreError::io(&dir))?;
        }
        Ok(())
    }

    fn generic_dir(&self, id: &str) -> PathBuf {
        self.root.join("generic").join(id)
    }

    pub fn manifest_path(&self, id: &str) -> PathBuf {
        self.generic_dir(id).join("manifest.json")
    }

    pub fn fragment_path(&self, doc_id: &str, version: &VersionId) -> PathBuf {
        self.generic_dir(doc_id)
            .join("fragments")
            .join(format!("{version}.txt"))
    }

    pub fn instance_path(&self, id: &str) -> PathBuf {
        self.root.join("instances").join(format!("{id}.json"))
    }

    /// Advisory single-writer lock.
    pub fn lock(&self) -> Result<RepoLock<'_>, StoreError> {
        self.init()?;
        let path = self.root.join(".lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RepoLock { repo: self, path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(path)),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }

    pub fn save_generic(&self, doc: &GenericDocument) -> Result<(), StoreError> {
        self.lock()?.save_generic(doc)
    }

    fn write_generic(&self, doc: &GenericDocument) -> Result<(), StoreError> {
        let faults = validate_structure(doc);
        if !faults.is_empty() {
            return Err(StoreError::Refused(faults));
        }
        let fragments = self.generic_dir(&doc.id).join("fragments");
        fs::create_dir_all(&fragments).map_err(StoreError::io(&fragments))?;
        for v in doc.all_versions() {
            write_atomic(&self.fragment_path(&doc.id, &v.id), v.template.as_bytes())?;
        }
        write_atomic(&self.manifest_path(&doc.id), manifest_bytes(doc).as_bytes())
    }

    /// Ids of stored generic documents, sorted.
    pub fn list_generics(&self) -> Result<Vec<String>, StoreError> {
        list_dir(&self.root.join("generic"), |p| {
            p.join("manifest.json")
                .is_file()
                .then(|| file_name(p))
                .flatten()
        })
    }

    /// Ids of stored instances, sorted.
    pub fn list_instances(&self) -> Result<Vec<String>, StoreError> {
        list_dir(&self.root.join("instances"), |p| {
            (p.extension().is_some_and(|e| e == "json"))
                .then(|| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .flatten()
        })
    }

    fn read_manifest(&self, id: &str) -> Result<(String, Manifest), StoreError> {
        let path = self.manifest_path(id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::GenericNotFound(id.to_string()))
            }
            Err(e) => return Err(StoreError::Io { path, source: e }),
        };
        let malformed = |message: String| StoreError::Malformed {
            path: path.clone(),
            message,
        };
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
        match raw.get("schemaVersion").and_then(serde_json::Value::as_i64) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(found) => return Err(StoreError::UnsupportedSchema { path, found }),
            None => return Err(malformed("missing integer schemaVersion".into())),
        }
        let manifest: Manifest =
            serde_json::from_value(raw).map_err(|e| malformed(e.to_string()))?;
        if manifest.id != id {
            return Err(malformed(format!(
                "manifest id `{}` does not match directory `{id}`",
                manifest.id
            )));
        }
        Ok((text, manifest))
    }

    /// Hash of the stored manifest, without reading fragments.
    pub fn stored_snapshot_hash(&self, id: &str) -> Result<String, StoreError> {
        let (text, _) = self.read_manifest(id)?;
        Ok(sha256_hex(text.as_bytes()))
    }

    /// Loads, re-hashes every fragment and validates the document.
    pub fn load_generic(&self, id: &str) -> Result<GenericDocument, StoreError> {
        let (_, m) = self.read_manifest(id)?;
        let path = self.manifest_path(id);
        let malformed = |message: String| StoreError::Malformed {
            path: path.clone(),
            message,
        };

        let mut units = BTreeMap::new();
        for u in m.units {
            let id = u.id.clone();
            let unit = Unit {
                id: u.id,
                kind: u.kind,
                heading: u.heading,
                children: u.children,
                role_tags: u.role_tags.into_iter().collect(),
            };
            if units.insert(id.clone(), unit).is_some() {
                return Err(malformed(format!("unit `{id}` listed twice")));
            }
        }
        let mut parameters = Vec::new();
        for p in m.parameters {
            let ptype = ParamType::from_name(&p.ptype, p.enum_values)
                .map_err(|e| malformed(e.to_string()))?;
            parameters.push(ParameterDecl {
                name: p.name,
                ptype,
                description: p.description,
            });
        }
        let mut versions: BTreeMap<UnitId, Vec<Version>> = BTreeMap::new();
        for v in m.versions {
            let fpath = self.fragment_path(id, &v.id);
            let bytes = match fs::read(&fpath) {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(StoreError::MissingFragment {
                        version: v.id,
                        path: fpath,
                    })
                }
                Err(e) => {
                    return Err(StoreError::Io {
                        path: fpath,
                        source: e,
                    })
                }
            };
            if sha256_hex(&bytes) != v.fragment_sha256 {
                return Err(StoreError::HashMismatch { version: v.id });
            }
            let template = String::from_utf8(bytes).map_err(|_| StoreError::HashMismatch {
                version: v.id.clone(),
            })?;
            versions
                .entry(v.unit_id.clone())
                .or_default()
                .push(Version {
                    id: v.id,
                    unit_id: v.unit_id,
                    template,
                    rationale: v.rationale,
                    provenance: v.provenance,
                    derived_from: v.derived_from,
                    created_at: v.created_at,
                });
        }
        if let Some(c) = m.constraints.iter().find(|c| c.origin != Origin::Authored) {
            return Err(malformed(format!(
                "constraint `{}` is not authored; derived constraints are not stored",
                c.id
            )));
        }
        let doc = GenericDocument {
            id: m.id,
            title: m.title,
            root: m.root_id,
            units,
            versions,
            parameters,
            constraints: m.constraints,
            schema_version: m.schema_version,
        };
        let faults = validate_structure(&doc);
        if !faults.is_empty() {
            return Err(malformed(
                faults
                    .iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ));
        }
        Ok(doc)
    }

    fn write_instance(
        &self,
        inst: &DocumentInstance,
        hash: String,
        finalized: bool,
    ) -> Result<(), StoreError> {
        let file = InstanceFile {
            id: inst.id.clone(),
            generic_id: inst.generic_id.clone(),
            generic_schema_version: inst.generic_schema_version,
            generic_sha256: hash,
            mode: inst.mode,
            included: inst.included.clone(),
            selections: inst.selections.clone(),
            bindings: inst.bindings.clone(),
            finalized,
            revision: inst.revision,
        };
        write_atomic(
            &self.instance_path(&inst.id),
            canonical_json(&file).as_bytes(),
        )
    }

    /// Saves a draft, recording the hash of the generic document as currently stored.
    pub fn save_instance(&self, inst: &DocumentInstance) -> Result<(), StoreError> {
        self.lock()?.save_instance(inst)
    }

    pub fn save_finalized(&self, fin: &FinalizedInstance) -> Result<(), StoreError> {
        self.lock()?.save_finalized(fin)
    }

    pub fn load_instance(&self, id: &str) -> Result<LoadedInstance, StoreError> {
        let path = self.instance_path(id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::InstanceNotFound(id.to_string()))
            }
            Err(e) => return Err(StoreError::Io { path, source: e }),
        };
        let file: InstanceFile =
            serde_json::from_str(&text).map_err(|e| StoreError::Malformed {
                path: path.clone(),
                message: e.to_string(),
            })?;
        let current = self.stored_snapshot_hash(&file.generic_id)?;
        let instance = DocumentInstance {
            id: file.id,
            generic_id: file.generic_id,
            generic_schema_version: file.generic_schema_version,
            included: file.included,
            selections: file.selections,
            bindings: file.bindings,
            mode: file.mode,
            revision: file.revision,
        };
        let mut warnings = Vec::new();
        let finalized = if file.finalized {
            if current != file.generic_sha256 {
                return Err(StoreError::SnapshotMismatch {
                    instance: instance.id,
                    generic: instance.generic_id,
                    expected: file.generic_sha256,
                    actual: current,
                });
            }
            Some(FinalizedInstance::from_parts(
                instance.clone(),
                file.generic_sha256,
            ))
        } else {
            if current != file.generic_sha256 {
                warnings.push(format!(
                    "generic document `{}` changed since instance `{}` was saved",
                    instance.generic_id, instance.id
                ));
            }
            None
        };
        Ok(LoadedInstance {
            instance,
            finalized,
            warnings,
        })
    }
}

fn file_name(p: &Path) -> Option<String> {
    p.file_name().map(|s| s.to_string_lossy().into_owned())
}

fn list_dir(dir: &Path, pick: impl Fn(&Path) -> Option<String>) -> Result<Vec<String>, StoreError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => {
            return Err(StoreError::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        }
    };
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(StoreError::io(dir))?;
        if let Some(name) = pick(&entry.path()) {
            out.push(name);
        }
    }
    out.sort();
    Ok(out)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().expect("repository paths have a parent");
    fs::create_dir_all(dir).map_err(StoreError::io(dir))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().expect("file path").to_string_lossy()
    ));
    let mut f = fs::File::create(&tmp).map_err(StoreError::io(&tmp))?;
    f.write_all(bytes).map_err(StoreError::io(&tmp))?;
    f.sync_all().map_err(StoreError::io(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(StoreError::io(path))
}
