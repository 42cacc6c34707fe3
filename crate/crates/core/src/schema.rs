//! Target schema model: object types, their attributes, and the source columns
//! that get mapped onto them.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ner::EntityLabel;

/// Attribute id reserved for columns the matcher could not resolve.
pub const UNMAPPED: &str = "unmapped";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataType {
    String,
    Integer,
    Float,
    Boolean,
    Date,
    Timestamp,
}

impl DataType {
    pub const ALL: [DataType; 6] = [
        DataType::String,
        DataType::Integer,
        DataType::Float,
        DataType::Boolean,
        DataType::Date,
        DataType::Timestamp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::String => "string",
            DataType::Integer => "integer",
            DataType::Float => "float",
            DataType::Boolean => "boolean",
            DataType::Date => "date",
            DataType::Timestamp => "timestamp",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown data type `{0}`")]
pub struct UnknownDataType(pub String);

impl FromStr for DataType {
    type Err = UnknownDataType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "string" | "str" | "text" => Ok(DataType::String),
            "integer" | "int" | "int32" | "int64" => Ok(DataType::Integer),
            "float" | "double" | "float32" | "float64" => Ok(DataType::Float),
            "boolean" | "bool" => Ok(DataType::Boolean),
            "date" => Ok(DataType::Date),
            "timestamp" | "datetime" => Ok(DataType::Timestamp),
            _ => Err(UnknownDataType(s.to_string())),
        }
    }
}

impl Serialize for DataType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for DataType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// A destination attribute: the option text plus the exemplar names that
/// describe it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAttribute {
    pub id: String,
    pub name: String,
    pub dtype: DataType,
    #[serde(default = "default_label")]
    pub entity_label: EntityLabel,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub node_path: Vec<String>,
}

fn default_label() -> EntityLabel {
    EntityLabel::FreeText
}

impl TargetAttribute {
    /// Depth of the attribute in its object type's tree; a bare leaf counts as 1.
    pub fn depth(&self) -> usize {
        self.node_path.len().max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectType {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub attributes: Vec<TargetAttribute>,
}

impl ObjectType {
    pub fn attribute(&self, id: &str) -> Option<&TargetAttribute> {
        self.attributes.iter().find(|a| a.id == id)
    }
}

/// A column of the input table: header name `k` and sampled values `v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceColumn {
    pub name: String,
    #[serde(default, rename = "dtype", skip_serializing_if = "Option::is_none")]
    pub declared_dtype: Option<DataType>,
    #[serde(default)]
    pub samples: Vec<String>,
}

impl SourceColumn {
    pub fn new(name: impl Into<String>, samples: Vec<String>) -> Self {
        Self {
            name: name.into(),
            declared_dtype: None,
            samples,
        }
    }

    pub fn with_dtype(mut self, dtype: DataType) -> Self {
        self.declared_dtype = Some(dtype);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Llm,
    Oracle,
    HumanOverride,
}

/// Outcome of mapping one source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingResult {
    pub source: String,
    pub object_type: String,
    #[serde(with = "attribute_or_unmapped")]
    pub predicted_attribute: Option<String>,
    pub confidence: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MappingResult {
    pub fn unmapped(source: &str, object_type: &str, provenance: Provenance) -> Self {
        Self {
            source: source.to_string(),
            object_type: object_type.to_string(),
            predicted_attribute: None,
            confidence: 0.0,
            provenance,
            error: None,
        }
    }

    pub fn is_unmapped(&self) -> bool {
        self.predicted_attribute.is_none()
    }
}

mod attribute_or_unmapped {
    use super::UNMAPPED;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<String>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(value.as_deref().unwrap_or(UNMAPPED))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
        let raw = Option::<String>::deserialize(d)?;
        Ok(raw.filter(|s| s != UNMAPPED))
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read schema config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema config parse error at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate attribute id `{id}` in object type `{object_type}`")]
    DuplicateId { object_type: String, id: String },
    #[error("duplicate attribute name `{name}` in object type `{object_type}`")]
    DuplicateName { object_type: String, name: String },
    #[error("duplicate object type `{0}`")]
    DuplicateObjectType(String),
    #[error("object type `{0}` has no attributes")]
    EmptyObjectType(String),
    #[error("schema declares no object types")]
    NoObjectTypes,
    #[error("attribute in object type `{object_type}` has an empty {field}")]
    EmptyField { object_type: String, field: &'static str },
    #[error("attribute id `{UNMAPPED}` is reserved (object type `{0}`)")]
    ReservedId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDocument {
    pub object_types: Vec<ObjectType>,
}

pub fn load_target_schema(path: impl AsRef<Path>) -> Result<Vec<ObjectType>, SchemaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_target_schema(&text)
}

pub fn parse_target_schema(text: &str) -> Result<Vec<ObjectType>, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: SchemaDocument = serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        SchemaError::Parse {
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    validate(&doc.object_types)?;
    Ok(doc.object_types)
}

pub fn schema_to_json(object_types: &[ObjectType]) -> String {
    let doc = SchemaDocument {
        object_types: object_types.to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("schema serializes")
}

pub fn validate(object_types: &[ObjectType]) -> Result<(), SchemaError> {
    if object_types.is_empty() {
        return Err(SchemaError::NoObjectTypes);
    }
    let mut type_names = HashSet::new();
    for ot in object_types {
        if !type_names.insert(ot.name.as_str()) {
            return Err(SchemaError::DuplicateObjectType(ot.name.clone()));
        }
        if ot.attributes.is_empty() {
            return Err(SchemaError::EmptyObjectType(ot.name.clone()));
        }
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for attr in &ot.attributes {
            for (field, value) in [("id", &attr.id), ("name", &attr.name)] {
                if value.trim().is_empty() {
                    return Err(SchemaError::EmptyField {
                        object_type: ot.name.clone(),
                        field,
                    });
                }
            }
            if attr.id == UNMAPPED {
                return Err(SchemaError::ReservedId(ot.name.clone()));
            }
            if !ids.insert(attr.id.as_str()) {
                return Err(SchemaError::DuplicateId {
                    object_type: ot.name.clone(),
                    id: attr.id.clone(),
                });
            }
            if !names.insert(attr.name.as_str()) {
                return Err(SchemaError::DuplicateName {
                    object_type: ot.name.clone(),
                    name: attr.name.clone(),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ATTRS: &str = r#"{"object_types":[{"name":"Profile","description":"people",
        "attributes":[
          {"id":"first","name":"FirstName","dtype":"String","entity_label":"FirstName","aliases":["fname","first"]},
          {"id":"biz","name":"BusinessName","dtype":"string","entity_label":"BusinessName","aliases":["company"]}
        ]}]}"#;

    #[test]
    fn loads_declared_content() {
        let types = parse_target_schema(TWO_ATTRS).unwrap();
        assert_eq!(types.len(), 1);
        assert_eq!(types[0].attributes.len(), 2);
        assert_eq!(types[0].attributes[0].aliases, vec!["fname", "first"]);
        assert_eq!(types[0].attributes[1].entity_label, EntityLabel::BusinessName);
    }

    #[test]
    fn defaults_label_and_aliases() {
        let text = r#"{"object_types":[{"name":"T","attributes":[{"id":"a","name":"A","dtype":"integer"}]}]}"#;
        let types = parse_target_schema(text).unwrap();
        let attr = &types[0].attributes[0];
        assert_eq!(attr.entity_label, EntityLabel::FreeText);
        assert!(attr.aliases.is_empty());
        assert_eq!(attr.depth(), 1);
    }

    #[test]
    fn rejects_duplicate_id() {
        let text = r#"{"object_types":[{"name":"T","attributes":[
            {"id":"a1","name":"A","dtype":"string"},{"id":"a1","name":"B","dtype":"string"}]}]}"#;
        assert!(matches!(
            parse_target_schema(text),
            Err(SchemaError::DuplicateId { id, .. }) if id == "a1"
        ));
    }

    #[test]
    fn unknown_label_reports_field_path() {
        let text = "{\"object_types\":[{\"name\":\"T\",\n\"attributes\":[{\"id\":\"a\",\"name\":\"A\",\"dtype\":\"string\",\"entity_label\":\"Planet\"}]}]}";
        match parse_target_schema(text) {
            Err(SchemaError::Parse { field, line, .. }) => {
                assert_eq!(field, "object_types[0].attributes[0].entity_label");
                assert_eq!(line, 2);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_dtype_is_a_parse_error() {
        let text = r#"{"object_types":[{"name":"T","attributes":[{"id":"a","name":"A"}]}]}"#;
        assert!(matches!(parse_target_schema(text), Err(SchemaError::Parse { .. })));
    }

    #[test]
    fn reserved_and_empty_ids() {
        let text = r#"{"object_types":[{"name":"T","attributes":[{"id":"unmapped","name":"A","dtype":"string"}]}]}"#;
        assert!(matches!(parse_target_schema(text), Err(SchemaError::ReservedId(_))));
        let text = r#"{"object_types":[{"name":"T","attributes":[]}]}"#;
        assert!(matches!(
            parse_target_schema(text),
            Err(SchemaError::EmptyObjectType(_))
        ));
    }

    #[test]
    fn unmapped_round_trips_as_sentinel() {
        let r = MappingResult::unmapped("col", "Profile", Provenance::Llm);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["predicted_attribute"], "unmapped");
        let back: MappingResult = serde_json::from_value(json).unwrap();
        assert!(back.is_unmapped());
    }
}
