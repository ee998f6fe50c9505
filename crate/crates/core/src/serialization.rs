//! Project persistence and interchange.
//!
//! The canonical document is compact UTF-8 JSON with a fixed key order:
//!
//! ```text
//! {"schema_version":"1.0",
//!  "project":{"pid","name","revision","next_id"},
//!  "attributes":[{"aid","name","anchor","input","options","default"?}...],
//!  "files":[{"fid","uri","media","dims"?,"duration"?}...],
//!  "metadata":[{"mid","file_id","z","xy"?,"av"}...]}
//! ```
//!
//! Sections keep insertion order, `av` maps are sorted by attribute id and
//! numbers use the shortest decimal form that parses back to the same
//! `f64`. Saving the same project therefore always yields the same bytes.
//! See FORMAT.md at the repository root for the full field reference.

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Shape;
use crate::model::{
    check_placement, Anchor, Attribute, AttributeSpec, EntryDraft, FileRef, InputType, Media, MetadataEntry,
    ModelError, Project, Value, Violation, SCHEMA_VERSION,
};

pub const CSV_HEADER: [&str; 6] = ["filename", "media", "metadata_id", "z", "shape", "attributes"];

#[derive(Debug, Error)]
pub enum SaveError {
    #[error("project has {} violation(s)", .0.len())]
    InvalidProject(Vec<Violation>),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported schema version {0:?}")]
    SchemaVersionUnsupported(String),
    #[error("document does not match the schema: {0}")]
    Schema(String),
    #[error("project has {} violation(s)", .0.len())]
    InvalidProject(Vec<Violation>),
}

impl LoadError {
    fn from_json(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => LoadError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
            Category::Data => LoadError::Schema(e.to_string()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    pid: String,
    name: String,
    revision: u64,
    next_id: u64,
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    schema_version: &'a str,
    project: Header,
    attributes: Vec<&'a Attribute>,
    files: Vec<&'a FileRef>,
    metadata: Vec<&'a MetadataEntry>,
}

#[derive(Deserialize)]
struct DocumentIn {
    #[allow(dead_code)]
    schema_version: String,
    project: Header,
    #[serde(default)]
    attributes: Vec<Attribute>,
    #[serde(default)]
    files: Vec<FileRef>,
    #[serde(default)]
    metadata: Vec<MetadataEntry>,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<String>,
}

/// A decoded document that has not been validated yet.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub project: Project,
    /// Paths of keys the loader did not recognise.
    pub warnings: Vec<String>,
    /// Ids that appeared more than once; only the first occurrence is kept.
    pub duplicates: Vec<Violation>,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub project: Project,
    pub warnings: Vec<String>,
}

/// Canonical bytes without the validity check. Stores and replicas use this
/// for equality comparisons.
pub fn canonical_bytes(p: &Project) -> Vec<u8> {
    let doc = DocumentOut {
        schema_version: &p.schema_version,
        project: Header {
            pid: p.pid.clone(),
            name: p.name.clone(),
            revision: p.revision,
            next_id: p.next_id,
        },
        attributes: p.attributes.values().collect(),
        files: p.files.values().collect(),
        metadata: p.metadata.values().collect(),
    };
    serde_json::to_vec(&doc).expect("project documents always serialize")
}

pub fn save_project(p: &Project) -> Result<Vec<u8>, SaveError> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(SaveError::InvalidProject(violations));
    }
    Ok(canonical_bytes(p))
}

/// Decodes a document without validating the result.
pub fn parse_project(doc: &[u8]) -> Result<Parsed, LoadError> {
    let probe: VersionProbe = serde_json::from_slice(doc).map_err(LoadError::from_json)?;
    match probe.schema_version.as_deref() {
        Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(LoadError::SchemaVersionUnsupported(other.to_owned())),
        None => return Err(LoadError::Schema("missing field `schema_version`".into())),
    }

    let mut warnings = Vec::new();
    let mut de = serde_json::Deserializer::from_slice(doc);
    let raw: DocumentIn = serde_ignored::deserialize(&mut de, |path| warnings.push(path.to_string()))
        .map_err(LoadError::from_json)?;
    de.end().map_err(LoadError::from_json)?;

    let mut duplicates = Vec::new();
    let mut attributes = IndexMap::new();
    for a in raw.attributes {
        if attributes.contains_key(&a.aid) {
            duplicates.push(Violation::DuplicateId(a.aid.to_string()));
        } else {
            attributes.insert(a.aid.clone(), a);
        }
    }
    let mut files = IndexMap::new();
    for f in raw.files {
        if files.contains_key(&f.fid) {
            duplicates.push(Violation::DuplicateId(f.fid.to_string()));
        } else {
            files.insert(f.fid.clone(), f);
        }
    }
    let mut metadata = IndexMap::new();
    for m in raw.metadata {
        if metadata.contains_key(&m.mid) {
            duplicates.push(Violation::DuplicateId(m.mid.to_string()));
        } else {
            metadata.insert(m.mid.clone(), m);
        }
    }

    Ok(Parsed {
        project: Project {
            pid: raw.project.pid,
            name: raw.project.name,
            schema_version: SCHEMA_VERSION.to_owned(),
            attributes,
            files,
            metadata,
            revision: raw.project.revision,
            next_id: raw.project.next_id,
        },
        warnings,
        duplicates,
    })
}

/// Decodes and validates a document. Unknown keys are tolerated and
/// reported in `warnings`.
pub fn load_project(doc: &[u8]) -> Result<Loaded, LoadError> {
    let Parsed {
        project,
        warnings,
        mut duplicates,
    } = parse_project(doc)?;
    duplicates.extend(project.validate());
    if !duplicates.is_empty() {
        return Err(LoadError::InvalidProject(duplicates));
    }
    Ok(Loaded { project, warnings })
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

/// One row per metadata entry, sorted by `(filename, metadata_id)`.
///
/// `z`, `shape` and `attributes` cells hold compact JSON; `attributes` is
/// keyed by attribute name so the file can be imported into another project.
pub fn export_csv(p: &Project) -> Result<Vec<u8>, SaveError> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(SaveError::InvalidProject(violations));
    }
    let mut rows: Vec<[String; 6]> = p
        .metadata
        .values()
        .map(|e| {
            let file = &p.files[&e.file_id];
            let named: BTreeMap<&str, &Value> = e
                .av
                .iter()
                .map(|(aid, v)| (p.attributes[aid].name.as_str(), v))
                .collect();
            [
                file.uri.clone(),
                file.media.as_str().to_owned(),
                e.mid.to_string(),
                serde_json::to_string(&e.z).expect("z serializes"),
                e.xy.as_ref()
                    .map(|s| serde_json::to_string(s).expect("shape serializes"))
                    .unwrap_or_default(),
                serde_json::to_string(&named).expect("attributes serialize"),
            ]
        })
        .collect();
    rows.sort_by(|a, b| (&a[0], &a[2]).cmp(&(&b[0], &b[2])));

    let mut w = csv_writer();
    w.write_record(CSV_HEADER).expect("in-memory write");
    for row in &rows {
        w.write_record(row).expect("in-memory write");
    }
    Ok(w.into_inner().expect("in-memory flush"))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ImportOptions {
    /// Fail the whole import on any row error or warning.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {cause}")]
pub struct RowError {
    pub line: u64,
    pub cause: String,
}

#[derive(Debug, Clone)]
pub struct ImportOutcome {
    pub project: Project,
    pub imported: usize,
    pub row_errors: Vec<RowError>,
    /// Attributes and files created on the fly.
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("CSV header does not match `{}`", CSV_HEADER.join(","))]
    HeaderMismatch,
    #[error("{} row error(s); first: {}", .0.len(), .0[0])]
    Rows(Vec<RowError>),
    #[error("strict import refused {} warning(s); first: {}", .0.len(), .0[0])]
    Warnings(Vec<String>),
    #[error("target project is invalid")]
    InvalidProject(Vec<Violation>),
}

struct RowPlan {
    uri: String,
    media: Media,
    draft: EntryDraft,
    named: BTreeMap<String, Value>,
}

fn parse_row(record: &csv::StringRecord) -> Result<RowPlan, String> {
    let cell = |i: usize| record.get(i).unwrap_or("");
    let uri = cell(0).to_owned();
    if uri.is_empty() {
        return Err("empty filename".into());
    }
    let media = Media::parse(cell(1)).ok_or_else(|| format!("unknown media {:?}", cell(1)))?;
    let z: Vec<f64> = if cell(3).is_empty() {
        Vec::new()
    } else {
        serde_json::from_str(cell(3)).map_err(|e| format!("malformed z cell: {e}"))?
    };
    let xy: Option<Shape> = if cell(4).is_empty() {
        None
    } else {
        Some(serde_json::from_str(cell(4)).map_err(|e| format!("malformed shape cell: {e}"))?)
    };
    let named: BTreeMap<String, Value> = if cell(5).is_empty() {
        BTreeMap::new()
    } else {
        serde_json::from_str(cell(5)).map_err(|e| format!("malformed attributes cell: {e}"))?
    };
    check_placement(media, &z, xy.as_ref()).map_err(|e| e.to_string())?;
    Ok(RowPlan {
        uri,
        media,
        draft: EntryDraft {
            z,
            xy,
            ..Default::default()
        },
        named,
    })
}

/// Appends every row of an exported CSV to a copy of `into`.
///
/// Files are matched by filename and registered when missing. Attributes are
/// matched by name under the anchor the row implies; unknown names become
/// new text attributes (reported as warnings). Bad rows are collected in
/// `row_errors` and skipped, unless `strict` is set.
pub fn import_csv(doc: &[u8], into: &Project, opts: ImportOptions) -> Result<ImportOutcome, ImportError> {
    let violations = into.validate();
    if !violations.is_empty() {
        return Err(ImportError::InvalidProject(violations));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(doc);
    let header = reader.headers().map_err(|_| ImportError::HeaderMismatch)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ImportError::HeaderMismatch);
    }

    let mut project = into.clone();
    let mut row_errors = Vec::new();
    let mut warnings = Vec::new();
    let mut imported = 0;
    let mut seen_attrs: HashSet<(Anchor, String)> = HashSet::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                row_errors.push(RowError {
                    line,
                    cause: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let fail = |cause: String| RowError { line, cause };
        if record.len() != CSV_HEADER.len() {
            row_errors.push(fail(format!("expected {} fields, found {}", CSV_HEADER.len(), record.len())));
            continue;
        }
        let plan = match parse_row(&record) {
            Ok(plan) => plan,
            Err(cause) => {
                row_errors.push(fail(cause));
                continue;
            }
        };
        match import_row(&mut project, plan, &mut warnings, &mut seen_attrs) {
            Ok(()) => imported += 1,
            Err(cause) => row_errors.push(fail(cause)),
        }
    }

    if opts.strict {
        if !row_errors.is_empty() {
            return Err(ImportError::Rows(row_errors));
        }
        if !warnings.is_empty() {
            return Err(ImportError::Warnings(warnings));
        }
    }
    Ok(ImportOutcome {
        project,
        imported,
        row_errors,
        warnings,
    })
}

// Everything that can fail is checked before the project is touched, so a
// rejected row leaves no stray files or attributes behind.
fn import_row(
    project: &mut Project,
    plan: RowPlan,
    warnings: &mut Vec<String>,
    seen_attrs: &mut HashSet<(Anchor, String)>,
) -> Result<(), String> {
    let existing = project.file_by_uri(&plan.uri).map(|f| (f.fid.clone(), f.media));
    if let Some((_, media)) = &existing {
        if *media != plan.media {
            return Err(format!(
                "{} is registered as {} but the row says {}",
                plan.uri,
                media.as_str(),
                plan.media.as_str()
            ));
        }
    }
    let anchor = plan.draft.anchor();
    let mut resolved = Vec::with_capacity(plan.named.len());
    for (name, value) in plan.named {
        match project.attribute_by_name(&name, anchor) {
            Some(attr) => {
                attr.check_value(&value)
                    .map_err(|why| format!("attribute {name:?}: {why}"))?;
                resolved.push((Some(attr.aid.clone()), name, value));
            }
            None => {
                if !matches!(value, Value::Text(_)) {
                    return Err(format!(
                        "attribute {name:?} does not exist and only text values can create it"
                    ));
                }
                resolved.push((None, name, value));
            }
        }
    }

    let fid = match existing {
        Some((fid, _)) => fid,
        None => {
            let fid = project.add_file(&plan.uri, plan.media).map_err(|e| e.to_string())?;
            warnings.push(format!("registered file {fid} for {:?}", plan.uri));
            fid
        }
    };
    let mut draft = plan.draft;
    draft.file_id = fid;
    for (aid, name, value) in resolved {
        let aid = match aid {
            Some(aid) => aid,
            None => {
                let aid = project
                    .add_attribute(AttributeSpec::new(name.clone(), anchor, InputType::Text))
                    .map_err(|e| e.to_string())?;
                if seen_attrs.insert((anchor, name.clone())) {
                    warnings.push(format!("created text attribute {aid} {name:?} for anchor {anchor}"));
                }
                aid
            }
        };
        draft.av.insert(aid, value);
    }
    project
        .insert_metadata(draft)
        .map(|_| ())
        .map_err(|e: ModelError| e.to_string())
}
