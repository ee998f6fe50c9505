//! Core of the `annotate` toolkit: a typed project model for spatial regions
//! on images and temporal segments on audio and video, deterministic JSON and
//! CSV persistence, a group-review workflow, and a revision-based sync
//! service for teams of annotators.

pub mod cli;
pub mod collab;
pub mod geometry;
pub mod gridview;
pub mod model;
pub mod serialization;
pub mod timeline;

pub use geometry::{BBox, Point, Shape, ShapeKind, ShapeViolation};
pub use model::{
    Anchor, Attribute, AttributeId, AttributeSpec, EntryDraft, FileId, FileRef, FileSpec, InputType, Media,
    MetadataEntry, MetadataId, ModelError, Project, Value, Violation,
};
