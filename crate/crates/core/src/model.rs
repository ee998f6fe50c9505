//! The project aggregate: attribute schema, file registry and metadata
//! entries, plus every validated mutation on them.
//!
//! Each successful mutation bumps `revision` by exactly one. A failed
//! mutation leaves the project untouched.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Shape, ShapeViolation};

/// Version tag written into every project document.
pub const SCHEMA_VERSION: &str = "1.0";

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            fn counter(&self) -> Option<u64> {
                self.0.strip_prefix($prefix).and_then(|n| n.parse().ok())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_type!(AttributeId, "a");
id_type!(FileId, "f");
id_type!(MetadataId, "m");

/// Key of an attribute option. Option ids are chosen by whoever defines the
/// attribute ("1", "2", ...).
pub type OptionId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    File,
    SpatialRegion,
    TemporalSegment,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::File => "file",
            Anchor::SpatialRegion => "spatial_region",
            Anchor::TemporalSegment => "temporal_segment",
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputType {
    Text,
    Checkbox,
    Radio,
    Dropdown,
    /// Behaves like `Radio`; option labels are image URIs.
    Image,
}

impl InputType {
    pub fn uses_options(self) -> bool {
        !matches!(self, InputType::Text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Media {
    Image,
    Audio,
    Video,
}

impl Media {
    pub fn as_str(self) -> &'static str {
        match self {
            Media::Image => "image",
            Media::Audio => "audio",
            Media::Video => "video",
        }
    }

    pub fn parse(s: &str) -> Option<Media> {
        match s {
            "image" => Some(Media::Image),
            "audio" => Some(Media::Audio),
            "video" => Some(Media::Video),
            _ => None,
        }
    }
}

/// An attribute answer: free text or a single option id for every input
/// type except `Checkbox`, which stores a set of option ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Text(String),
    Set(BTreeSet<OptionId>),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn set<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Value::Set(ids.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Set(ids) => {
                let joined: Vec<&str> = ids.iter().map(String::as_str).collect();
                write!(f, "{{{}}}", joined.join(","))
            }
        }
    }
}

/// A named, typed question whose answers describe files, regions or
/// segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub aid: AttributeId,
    pub name: String,
    pub anchor: Anchor,
    pub input: InputType,
    #[serde(default)]
    pub options: IndexMap<OptionId, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

/// Everything needed to define an attribute; the id is minted on insert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub anchor: Anchor,
    pub input: InputType,
    #[serde(default)]
    pub options: IndexMap<OptionId, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, anchor: Anchor, input: InputType) -> Self {
        Self {
            name: name.into(),
            anchor,
            input,
            options: IndexMap::new(),
            default: None,
        }
    }

    pub fn option(mut self, id: impl Into<String>, label: impl Into<String>) -> Self {
        self.options.insert(id.into(), label.into());
        self
    }

    pub fn with_default(mut self, value: Value) -> Self {
        self.default = Some(value);
        self
    }
}

impl Attribute {
    /// Checks `value` against the input type and the option list.
    pub fn check_value(&self, value: &Value) -> Result<(), String> {
        match (self.input, value) {
            (InputType::Text, Value::Text(_)) => Ok(()),
            (InputType::Text, Value::Set(_)) => Err("text attribute takes a string".into()),
            (InputType::Checkbox, Value::Set(ids)) => match ids.iter().find(|id| !self.options.contains_key(*id)) {
                Some(id) => Err(format!("unknown option {id:?}")),
                None => Ok(()),
            },
            (InputType::Checkbox, Value::Text(_)) => Err("checkbox attribute takes a set of option ids".into()),
            (_, Value::Text(id)) if self.options.contains_key(id) => Ok(()),
            (_, Value::Text(id)) => Err(format!("unknown option {id:?}")),
            (_, Value::Set(_)) => Err("attribute takes exactly one option id".into()),
        }
    }

    pub fn option_by_label(&self, label: &str) -> Option<&str> {
        self.options
            .iter()
            .find(|(_, l)| l.as_str() == label)
            .map(|(id, _)| id.as_str())
    }

    /// Human-readable form of a value: option labels instead of ids.
    pub fn display_value(&self, value: &Value) -> String {
        let label = |id: &String| self.options.get(id).cloned().unwrap_or_else(|| id.clone());
        match (self.input, value) {
            (InputType::Text, Value::Text(s)) => s.clone(),
            (_, Value::Text(id)) => label(id),
            (_, Value::Set(ids)) => ids.iter().map(label).collect::<Vec<_>>().join("|"),
        }
    }

    fn check_definition(&self) -> Result<(), ModelError> {
        if self.input.uses_options() && self.options.is_empty() {
            return Err(ModelError::InvalidOptions(format!(
                "{:?} input needs a non-empty option list",
                self.input
            )));
        }
        if !self.input.uses_options() && !self.options.is_empty() {
            return Err(ModelError::InvalidOptions("text input takes no options".into()));
        }
        if let Some(default) = &self.default {
            self.check_value(default).map_err(ModelError::InvalidDefault)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub fid: FileId,
    pub uri: String,
    pub media: Media,
    /// (width, height) in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<(u32, u32)>,
    /// Seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSpec {
    pub uri: String,
    pub media: Media,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl FileSpec {
    pub fn new(uri: impl Into<String>, media: Media) -> Self {
        Self {
            uri: uri.into(),
            media,
            dims: None,
            duration: None,
        }
    }

    pub fn dims(mut self, width: u32, height: u32) -> Self {
        self.dims = Some((width, height));
        self
    }

    pub fn duration(mut self, seconds: f64) -> Self {
        self.duration = Some(seconds);
        self
    }
}

impl FileRef {
    fn check_fields(&self) -> Result<(), String> {
        if self.media == Media::Image && self.duration.is_some() {
            return Err("image files carry no duration".into());
        }
        if self.media == Media::Audio && self.dims.is_some() {
            return Err("audio files carry no dimensions".into());
        }
        if let Some((w, h)) = self.dims {
            if w == 0 || h == 0 {
                return Err("dimensions must be positive".into());
            }
        }
        if let Some(d) = self.duration {
            if !(d.is_finite() && d >= 0.0) {
                return Err("duration must be a finite number of seconds >= 0".into());
            }
        }
        Ok(())
    }
}

/// One annotation on a file.
///
/// `z` holds 0, 1 or 2 timestamps: none for whole-file or still-image
/// annotations, one for a video frame time, two for a `[start, end)`
/// temporal segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub mid: MetadataId,
    pub file_id: FileId,
    #[serde(default)]
    pub z: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xy: Option<Shape>,
    #[serde(default)]
    pub av: BTreeMap<AttributeId, Value>,
}

/// A metadata entry without its id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EntryDraft {
    pub file_id: FileId,
    #[serde(default)]
    pub z: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xy: Option<Shape>,
    #[serde(default)]
    pub av: BTreeMap<AttributeId, Value>,
}

impl EntryDraft {
    pub fn new(file_id: FileId) -> Self {
        Self {
            file_id,
            ..Default::default()
        }
    }

    pub fn segment(mut self, start: f64, end: f64) -> Self {
        self.z = vec![start, end];
        self
    }

    pub fn frame(mut self, t: f64) -> Self {
        self.z = vec![t];
        self
    }

    pub fn region(mut self, shape: Shape) -> Self {
        self.xy = Some(shape);
        self
    }

    pub fn value(mut self, aid: &AttributeId, value: Value) -> Self {
        self.av.insert(aid.clone(), value);
        self
    }

    pub fn anchor(&self) -> Anchor {
        entry_anchor(&self.z, self.xy.as_ref())
    }
}

impl MetadataEntry {
    pub fn anchor(&self) -> Anchor {
        entry_anchor(&self.z, self.xy.as_ref())
    }

    pub fn to_draft(&self) -> EntryDraft {
        EntryDraft {
            file_id: self.file_id.clone(),
            z: self.z.clone(),
            xy: self.xy.clone(),
            av: self.av.clone(),
        }
    }

    fn from_draft(mid: MetadataId, draft: EntryDraft) -> Self {
        Self {
            mid,
            file_id: draft.file_id,
            z: draft.z,
            xy: draft.xy,
            av: draft.av,
        }
    }
}

/// Regions win over segments: an entry with a shape is spatial, one with a
/// `[start, end)` pair and no shape is temporal, anything else describes the
/// file (or a single frame of it).
fn entry_anchor(z: &[f64], xy: Option<&Shape>) -> Anchor {
    match (xy, z.len()) {
        (Some(_), _) => Anchor::SpatialRegion,
        (None, 2) => Anchor::TemporalSegment,
        _ => Anchor::File,
    }
}

/// Checks the timestamp list and shape of an entry against the media of the
/// file it lives on.
pub fn check_placement(media: Media, z: &[f64], xy: Option<&Shape>) -> Result<(), ModelError> {
    if z.len() > 2 {
        return Err(ModelError::BadZ(format!("expected at most 2 timestamps, got {}", z.len())));
    }
    if z.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(ModelError::BadZ("timestamps must be finite and >= 0".into()));
    }
    if z.len() == 2 && z[0] >= z[1] {
        return Err(ModelError::BadZ(format!("segment start {} is not before end {}", z[0], z[1])));
    }
    if !z.is_empty() && media == Media::Image {
        return Err(ModelError::BadZ("image files take no timestamps".into()));
    }
    if let Some(shape) = xy {
        if media == Media::Audio {
            return Err(ModelError::ShapeOnAudio);
        }
        if z.len() == 2 {
            return Err(ModelError::BadZ("a region takes at most one frame timestamp".into()));
        }
        let errors: Vec<ShapeViolation> =
            shape.validate().into_iter().filter(|v| !v.is_warning()).collect();
        if !errors.is_empty() {
            return Err(ModelError::InvalidShape(errors));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("name is empty")]
    EmptyName,
    #[error("uri is empty")]
    EmptyUri,
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("invalid default: {0}")]
    InvalidDefault(String),
    #[error("an attribute named {name:?} already exists for anchor {anchor}")]
    DuplicateName { name: String, anchor: Anchor },
    #[error("invalid file: {0}")]
    InvalidFile(String),
    #[error("unknown file {0}")]
    UnknownFile(FileId),
    #[error("unknown attribute {0}")]
    UnknownAttribute(AttributeId),
    #[error("unknown metadata {0}")]
    UnknownMetadata(MetadataId),
    #[error("attribute {aid} is anchored to {expected}, entry is {found}")]
    AnchorMismatch {
        aid: AttributeId,
        expected: Anchor,
        found: Anchor,
    },
    #[error("invalid value for {aid}: {reason}")]
    InvalidValue { aid: AttributeId, reason: String },
    #[error("bad timestamps: {0}")]
    BadZ(String),
    #[error("audio entries cannot carry a region")]
    ShapeOnAudio,
    #[error("invalid shape: {0:?}")]
    InvalidShape(Vec<ShapeViolation>),
}

/// A broken invariant found by [`Project::validate`]. The `Display` form is
/// `<rule> <ids...>: <detail>`, one line, stable for scripting.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyProjectName,
    DuplicateId(String),
    IdAheadOfCounter(String),
    EmptyAttributeName(AttributeId),
    InvalidAttribute(AttributeId, String),
    DuplicateAttributeName(AttributeId, String),
    EmptyUri(FileId),
    InvalidFile(FileId, String),
    DanglingFile(MetadataId, FileId),
    DanglingAttribute(MetadataId, AttributeId),
    AnchorMismatch(MetadataId, AttributeId),
    InvalidValue(MetadataId, AttributeId, String),
    BadZ(MetadataId, String),
    ShapeOnAudio(MetadataId),
    InvalidShape(MetadataId, String),
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::EmptyProjectName => "empty-project-name",
            Violation::DuplicateId(_) => "duplicate-id",
            Violation::IdAheadOfCounter(_) => "id-ahead-of-counter",
            Violation::EmptyAttributeName(_) => "empty-attribute-name",
            Violation::InvalidAttribute(..) => "invalid-attribute",
            Violation::DuplicateAttributeName(..) => "duplicate-attribute-name",
            Violation::EmptyUri(_) => "empty-uri",
            Violation::InvalidFile(..) => "invalid-file",
            Violation::DanglingFile(..) => "dangling-file",
            Violation::DanglingAttribute(..) => "dangling-attribute",
            Violation::AnchorMismatch(..) => "anchor-mismatch",
            Violation::InvalidValue(..) => "invalid-value",
            Violation::BadZ(..) => "bad-z",
            Violation::ShapeOnAudio(_) => "shape-on-audio",
            Violation::InvalidShape(..) => "invalid-shape",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = self.rule();
        match self {
            Violation::EmptyProjectName => write!(f, "{rule}"),
            Violation::DuplicateId(id) | Violation::IdAheadOfCounter(id) => write!(f, "{rule} {id}"),
            Violation::EmptyAttributeName(aid) => write!(f, "{rule} {aid}"),
            Violation::InvalidAttribute(aid, why) => write!(f, "{rule} {aid}: {why}"),
            Violation::DuplicateAttributeName(aid, name) => write!(f, "{rule} {aid}: {name:?}"),
            Violation::EmptyUri(fid) => write!(f, "{rule} {fid}"),
            Violation::InvalidFile(fid, why) => write!(f, "{rule} {fid}: {why}"),
            Violation::DanglingFile(mid, fid) => write!(f, "{rule} {mid} {fid}"),
            Violation::DanglingAttribute(mid, aid) | Violation::AnchorMismatch(mid, aid) => {
                write!(f, "{rule} {mid} {aid}")
            }
            Violation::InvalidValue(mid, aid, why) => write!(f, "{rule} {mid} {aid}: {why}"),
            Violation::BadZ(mid, why) | Violation::InvalidShape(mid, why) => write!(f, "{rule} {mid}: {why}"),
            Violation::ShapeOnAudio(mid) => write!(f, "{rule} {mid}"),
        }
    }
}

/// Root aggregate of an annotation project.
#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub(crate) pid: String,
    pub(crate) name: String,
    pub(crate) schema_version: String,
    pub(crate) attributes: IndexMap<AttributeId, Attribute>,
    pub(crate) files: IndexMap<FileId, FileRef>,
    pub(crate) metadata: IndexMap<MetadataId, MetadataEntry>,
    pub(crate) revision: u64,
    /// Shared counter behind every minted id; only ever grows.
    pub(crate) next_id: u64,
}

impl Project {
    /// Creates an empty project with a fresh random pid.
    pub fn create(name: &str) -> Result<Project, ModelError> {
        Project::with_pid(uuid::Uuid::new_v4().simple().to_string(), name)
    }

    /// Creates an empty project with a caller-chosen pid.
    pub fn with_pid(pid: impl Into<String>, name: &str) -> Result<Project, ModelError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(ModelError::EmptyName);
        }
        Ok(Project {
            pid: pid.into(),
            name: name.to_owned(),
            schema_version: SCHEMA_VERSION.to_owned(),
            attributes: IndexMap::new(),
            files: IndexMap::new(),
            metadata: IndexMap::new(),
            revision: 0,
            next_id: 1,
        })
    }

    pub fn pid(&self) -> &str {
        &self.pid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn attributes(&self) -> &IndexMap<AttributeId, Attribute> {
        &self.attributes
    }

    pub fn files(&self) -> &IndexMap<FileId, FileRef> {
        &self.files
    }

    pub fn metadata(&self) -> &IndexMap<MetadataId, MetadataEntry> {
        &self.metadata
    }

    pub fn attribute(&self, aid: &str) -> Option<&Attribute> {
        self.attributes.get(aid)
    }

    pub fn attribute_by_name(&self, name: &str, anchor: Anchor) -> Option<&Attribute> {
        self.attributes
            .values()
            .find(|a| a.name == name && a.anchor == anchor)
    }

    pub fn file(&self, fid: &str) -> Option<&FileRef> {
        self.files.get(fid)
    }

    pub fn file_by_uri(&self, uri: &str) -> Option<&FileRef> {
        self.files.values().find(|f| f.uri == uri)
    }

    pub fn entry(&self, mid: &str) -> Option<&MetadataEntry> {
        self.metadata.get(mid)
    }

    fn mint(&mut self) -> u64 {
        let n = self.next_id;
        self.next_id += 1;
        n
    }

    pub fn add_attribute(&mut self, spec: AttributeSpec) -> Result<AttributeId, ModelError> {
        let name = spec.name.trim();
        if name.is_empty() {
            return Err(ModelError::EmptyName);
        }
        if self.attribute_by_name(name, spec.anchor).is_some() {
            return Err(ModelError::DuplicateName {
                name: name.to_owned(),
                anchor: spec.anchor,
            });
        }
        let mut attr = Attribute {
            aid: AttributeId::new(String::new()),
            name: name.to_owned(),
            anchor: spec.anchor,
            input: spec.input,
            options: spec.options,
            default: spec.default,
        };
        attr.check_definition()?;
        attr.aid = AttributeId(format!("{}{}", AttributeId::PREFIX, self.mint()));
        let aid = attr.aid.clone();
        self.attributes.insert(aid.clone(), attr);
        self.revision += 1;
        Ok(aid)
    }

    pub fn add_file(&mut self, uri: &str, media: Media) -> Result<FileId, ModelError> {
        self.add_file_with(FileSpec::new(uri, media))
    }

    pub fn add_file_with(&mut self, spec: FileSpec) -> Result<FileId, ModelError> {
        if spec.uri.is_empty() {
            return Err(ModelError::EmptyUri);
        }
        let mut file = FileRef {
            fid: FileId(String::new()),
            uri: spec.uri,
            media: spec.media,
            dims: spec.dims,
            duration: spec.duration,
        };
        file.check_fields().map_err(ModelError::InvalidFile)?;
        file.fid = FileId(format!("{}{}", FileId::PREFIX, self.mint()));
        let fid = file.fid.clone();
        self.files.insert(fid.clone(), file);
        self.revision += 1;
        Ok(fid)
    }

    /// Checks a draft against the files and attributes of this project.
    pub fn check_draft(&self, draft: &EntryDraft) -> Result<(), ModelError> {
        let file = self
            .files
            .get(&draft.file_id)
            .ok_or_else(|| ModelError::UnknownFile(draft.file_id.clone()))?;
        check_placement(file.media, &draft.z, draft.xy.as_ref())?;
        let kind = draft.anchor();
        for (aid, value) in &draft.av {
            let attr = self
                .attributes
                .get(aid)
                .ok_or_else(|| ModelError::UnknownAttribute(aid.clone()))?;
            if attr.anchor != kind {
                return Err(ModelError::AnchorMismatch {
                    aid: aid.clone(),
                    expected: attr.anchor,
                    found: kind,
                });
            }
            attr.check_value(value).map_err(|reason| ModelError::InvalidValue {
                aid: aid.clone(),
                reason,
            })?;
        }
        Ok(())
    }

    /// Inserts `draft` under a fresh id when `mid` is `None`, otherwise
    /// replaces the existing entry `mid` in place.
    pub fn upsert_metadata(
        &mut self,
        mid: Option<&MetadataId>,
        draft: EntryDraft,
    ) -> Result<MetadataId, ModelError> {
        if let Some(mid) = mid {
            if !self.metadata.contains_key(mid) {
                return Err(ModelError::UnknownMetadata(mid.clone()));
            }
        }
        self.check_draft(&draft)?;
        let mid = match mid {
            Some(mid) => mid.clone(),
            None => MetadataId(format!("{}{}", MetadataId::PREFIX, self.mint())),
        };
        self.metadata
            .insert(mid.clone(), MetadataEntry::from_draft(mid.clone(), draft));
        self.revision += 1;
        Ok(mid)
    }

    pub fn insert_metadata(&mut self, draft: EntryDraft) -> Result<MetadataId, ModelError> {
        self.upsert_metadata(None, draft)
    }

    pub fn delete_metadata(&mut self, mid: &MetadataId) -> Result<MetadataEntry, ModelError> {
        let removed = self
            .metadata
            .shift_remove(mid)
            .ok_or_else(|| ModelError::UnknownMetadata(mid.clone()))?;
        self.revision += 1;
        Ok(removed)
    }

    /// Reports every broken invariant. Self-intersecting polygons are
    /// warnings and are not reported here.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push(Violation::EmptyProjectName);
        }
        let ahead = |n: Option<u64>| n.is_some_and(|n| n >= self.next_id);
        for aid in self.attributes.keys().filter(|a| ahead(a.counter())) {
            out.push(Violation::IdAheadOfCounter(aid.to_string()));
        }
        for fid in self.files.keys().filter(|f| ahead(f.counter())) {
            out.push(Violation::IdAheadOfCounter(fid.to_string()));
        }
        for mid in self.metadata.keys().filter(|m| ahead(m.counter())) {
            out.push(Violation::IdAheadOfCounter(mid.to_string()));
        }

        let mut names: HashMap<(Anchor, &str), &AttributeId> = HashMap::new();
        for (aid, attr) in &self.attributes {
            if attr.name.trim().is_empty() {
                out.push(Violation::EmptyAttributeName(aid.clone()));
            } else if names.insert((attr.anchor, attr.name.as_str()), aid).is_some() {
                out.push(Violation::DuplicateAttributeName(aid.clone(), attr.name.clone()));
            }
            if let Err(e) = attr.check_definition() {
                out.push(Violation::InvalidAttribute(aid.clone(), e.to_string()));
            }
        }

        for (fid, file) in &self.files {
            if file.uri.is_empty() {
                out.push(Violation::EmptyUri(fid.clone()));
            }
            if let Err(why) = file.check_fields() {
                out.push(Violation::InvalidFile(fid.clone(), why));
            }
        }

        for (mid, entry) in &self.metadata {
            match self.files.get(&entry.file_id) {
                None => out.push(Violation::DanglingFile(mid.clone(), entry.file_id.clone())),
                Some(file) => match check_placement(file.media, &entry.z, entry.xy.as_ref()) {
                    Ok(()) => {}
                    Err(ModelError::ShapeOnAudio) => out.push(Violation::ShapeOnAudio(mid.clone())),
                    Err(ModelError::InvalidShape(v)) => {
                        let why = v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
                        out.push(Violation::InvalidShape(mid.clone(), why));
                    }
                    Err(e) => out.push(Violation::BadZ(mid.clone(), e.to_string())),
                },
            }
            let kind = entry.anchor();
            for (aid, value) in &entry.av {
                match self.attributes.get(aid) {
                    None => out.push(Violation::DanglingAttribute(mid.clone(), aid.clone())),
                    Some(attr) if attr.anchor != kind => {
                        out.push(Violation::AnchorMismatch(mid.clone(), aid.clone()))
                    }
                    Some(attr) => {
                        if let Err(why) = attr.check_value(value) {
                            out.push(Violation::InvalidValue(mid.clone(), aid.clone(), why));
                        }
                    }
                }
            }
        }
        out
    }
}
