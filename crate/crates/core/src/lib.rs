//! Core of the intra-site archaeological information system.
//!
//! Records describing photos, drawings, texts, plans and 3D models are
//! stored as canonical XML files with a derived, queryable index
//! ([`store::Store`]). On top of the store sit faceted search
//! ([`query`]), schema revision with record migration ([`evolution`]),
//! 3D scene composition ([`scene`]) and 2D plan and photo-montage
//! composition ([`plan`]).

pub mod error;
pub mod evolution;
#[cfg(feature = "fixture")]
pub mod fixture;
pub mod html;
pub mod index;
pub mod model;
pub mod plan;
pub mod query;
pub mod scene;
pub mod store;
pub mod validate;
pub mod xml;

pub use error::{Result, SiaError};
pub use model::{
    AttrEntry, AttrValue, AttributeNode, AttributeValues, ContentRef, Coordinates, DocumentKind,
    DocumentRecord, KindTag, LegacyValue, MetadataSchema, Period, PlanSubkind, Place, Point2,
    RecordDraft, RecordPatch, ReferenceData, Role, ValueType, Vocabulary,
};
pub use store::{FaultPoint, Snapshot, Store, StoreLayout};
