//! Parametric digital twin: a typed graph over a small subset of the Brick
//! vocabulary that places sensing points in the building hierarchy and binds
//! them to time series.
//!
//! The class list is a reconstruction. Brick was extended for the sensor types
//! deployed in the building (particulate, noise, light, groundwater level) and
//! for outdoor weather; the exact classes added for weather are not published,
//! so `OutdoorWeatherStation` stands in for them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current value of the `twin_schema` field.
pub const TWIN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwinError {
    #[error("entity id must be non-empty")]
    EmptyId,
    #[error("duplicate entity id {0:?}")]
    DuplicateId(String),
    #[error("unknown entity class {0:?}")]
    InvalidClass(String),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("hasPart {subject:?} -> {object:?} would create a cycle")]
    CycleDetected { subject: String, object: String },
    #[error("{object:?} already has a parent; hasPart must form a forest")]
    MultipleParents { object: String },
    #[error("{predicate} is not valid from {subject} to {object}")]
    PredicateClassMismatch {
        predicate: Predicate,
        subject: EntityClass,
        object: EntityClass,
    },
    #[error("entity {0:?} is not a sensor")]
    NotASensor(String),
    #[error("series {series:?} is already bound to {point:?}")]
    DuplicateBinding { point: String, series: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("twin schema version {found} is not supported (expected {TWIN_SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: u32 },
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident, $err:expr, { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = TwinError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(($err)(other.to_string())),
                }
            }
        }
    };
}

string_enum!(
    /// Closed set of entity classes, version 1.
    EntityClass, TwinError::InvalidClass, {
        Building => "Building",
        Floor => "Floor",
        Room => "Room",
        TemperatureSensor => "TemperatureSensor",
        HumiditySensor => "HumiditySensor",
        Co2Sensor => "CO2Sensor",
        ParticulateSensor => "ParticulateSensor",
        NoiseSensor => "NoiseSensor",
        LightSensor => "LightSensor",
        GroundwaterLevelSensor => "GroundwaterLevelSensor",
        OutdoorWeatherStation => "OutdoorWeatherStation",
        HeatingSystem => "HeatingSystem",
    }
);

string_enum!(
    Predicate, |p: String| TwinError::Parse { line: 0, column: 0, message: format!("unknown predicate {p:?}") }, {
        HasPart => "hasPart",
        IsPointOf => "isPointOf",
        Feeds => "feeds",
        HasLocation => "hasLocation",
    }
);

impl EntityClass {
    pub fn is_sensor(self) -> bool {
        matches!(
            self,
            EntityClass::TemperatureSensor
                | EntityClass::HumiditySensor
                | EntityClass::Co2Sensor
                | EntityClass::ParticulateSensor
                | EntityClass::NoiseSensor
                | EntityClass::LightSensor
                | EntityClass::GroundwaterLevelSensor
                | EntityClass::OutdoorWeatherStation
        )
    }

    pub fn is_location(self) -> bool {
        matches!(self, EntityClass::Building | EntityClass::Floor | EntityClass::Room)
    }
}

impl Predicate {
    /// Whether `subject --predicate--> object` is allowed for these classes.
    pub fn allows(self, subject: EntityClass, object: EntityClass) -> bool {
        use EntityClass::*;
        match self {
            Predicate::HasPart => subject.is_location() && matches!(object, Floor | Room),
            Predicate::IsPointOf => subject.is_sensor() && (object.is_location() || object == HeatingSystem),
            Predicate::Feeds => subject == HeatingSystem && object.is_location(),
            Predicate::HasLocation => (subject.is_sensor() || subject == HeatingSystem) && object.is_location(),
        }
    }
}

/// Flat attribute value; nested structures are rejected by the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entity {
    pub id: String,
    pub class: EntityClass,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, AttrValue>,
}

impl Entity {
    pub fn new(id: impl Into<String>, class: EntityClass, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            class,
            label: label.into(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: AttrValue) -> Self {
        self.attributes.insert(key.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relationship {
    pub subject: String,
    pub predicate: Predicate,
    pub object: String,
}

impl Relationship {
    pub fn new(subject: impl Into<String>, predicate: Predicate, object: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            predicate,
            object: object.into(),
        }
    }
}

string_enum!(
    /// Physical unit of a bound series.
    Unit, |u: String| TwinError::Parse { line: 0, column: 0, message: format!("unknown unit {u:?}") }, {
        Celsius => "°C",
        PercentRh => "%RH",
        Ppm => "ppm",
        Lux => "lux",
        RelativeCounts => "counts",
        Meters => "m",
        Millimeters => "mm",
        MetersPerSecond => "m/s",
        Degrees => "deg",
        WattsPerSquareMeter => "W/m2",
    }
);

impl Unit {
    /// Lenient parser for command-line use: also accepts ASCII spellings.
    pub fn parse_lenient(s: &str) -> Result<Self, TwinError> {
        match s {
            "degC" | "C" | "celsius" => Ok(Unit::Celsius),
            "percent" | "pctRH" | "RH" => Ok(Unit::PercentRh),
            other => other.parse(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesBinding {
    pub point_id: String,
    pub series_id: String,
    pub unit: Unit,
}

/// Reference to an entity stored in a [`TwinGraph`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRef(String);

impl EntityRef {
    pub fn id(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TwinGraph {
    entities: BTreeMap<String, Entity>,
    relations: BTreeSet<Relationship>,
    bindings: BTreeSet<SeriesBinding>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwinDocument {
    twin_schema: u32,
    entities: Vec<Entity>,
    relations: Vec<Relationship>,
    bindings: Vec<SeriesBinding>,
}

#[derive(Deserialize)]
struct VersionProbe {
    twin_schema: u32,
}

impl TwinGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<EntityRef, TwinError> {
        if entity.id.is_empty() {
            return Err(TwinError::EmptyId);
        }
        if self.entities.contains_key(&entity.id) {
            return Err(TwinError::DuplicateId(entity.id));
        }
        let id = entity.id.clone();
        self.entities.insert(id.clone(), entity);
        Ok(EntityRef(id))
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn resolve(&self, r: &EntityRef) -> Option<&Entity> {
        self.entities.get(&r.0)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relationship> {
        self.relations.iter()
    }

    pub fn bindings(&self) -> impl Iterator<Item = &SeriesBinding> {
        self.bindings.iter()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    fn class_of(&self, id: &str) -> Result<EntityClass, TwinError> {
        self.entities
            .get(id)
            .map(|e| e.class)
            .ok_or_else(|| TwinError::UnknownEntity(id.to_string()))
    }

    fn has_part_children<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.relations
            .iter()
            .filter(move |r| r.predicate == Predicate::HasPart && r.subject == parent)
            .map(|r| r.object.as_str())
    }

    /// `location` and everything below it along hasPart edges.
    pub fn descendants(&self, location: &str) -> Result<BTreeSet<String>, TwinError> {
        self.class_of(location)?;
        let mut seen = BTreeSet::new();
        let mut stack = vec![location.to_string()];
        while let Some(node) = stack.pop() {
            if seen.insert(node.clone()) {
                stack.extend(self.has_part_children(&node).map(str::to_string));
            }
        }
        Ok(seen)
    }

    pub fn add_relation(&mut self, rel: Relationship) -> Result<(), TwinError> {
        let subject = self.class_of(&rel.subject)?;
        let object = self.class_of(&rel.object)?;
        if !rel.predicate.allows(subject, object) {
            return Err(TwinError::PredicateClassMismatch {
                predicate: rel.predicate,
                subject,
                object,
            });
        }
        if self.relations.contains(&rel) {
            return Ok(());
        }
        if rel.predicate == Predicate::HasPart {
            if self.descendants(&rel.object)?.contains(&rel.subject) {
                return Err(TwinError::CycleDetected {
                    subject: rel.subject,
                    object: rel.object,
                });
            }
            let has_parent = self
                .relations
                .iter()
                .any(|r| r.predicate == Predicate::HasPart && r.object == rel.object);
            if has_parent {
                return Err(TwinError::MultipleParents { object: rel.object });
            }
        }
        self.relations.insert(rel);
        Ok(())
    }

    /// Sensors pointing into `location` or any of its hasPart descendants, sorted by id.
    pub fn query_points(&self, location: &str, class_filter: Option<EntityClass>) -> Result<Vec<&Entity>, TwinError> {
        let scope = self.descendants(location)?;
        let ids: BTreeSet<&str> = self
            .relations
            .iter()
            .filter(|r| r.predicate == Predicate::IsPointOf && scope.contains(&r.object))
            .map(|r| r.subject.as_str())
            .collect();
        Ok(ids
            .into_iter()
            .filter_map(|id| self.entities.get(id))
            .filter(|e| class_filter.is_none_or(|c| e.class == c))
            .collect())
    }

    pub fn bind_series(&mut self, binding: SeriesBinding) -> Result<(), TwinError> {
        let class = self.class_of(&binding.point_id)?;
        if !class.is_sensor() {
            return Err(TwinError::NotASensor(binding.point_id));
        }
        let duplicate = self
            .bindings
            .iter()
            .any(|b| b.point_id == binding.point_id && b.series_id == binding.series_id);
        if duplicate {
            return Err(TwinError::DuplicateBinding {
                point: binding.point_id,
                series: binding.series_id,
            });
        }
        self.bindings.insert(binding);
        Ok(())
    }

    pub fn bindings_of(&self, point_id: &str) -> Vec<&SeriesBinding> {
        self.bindings.iter().filter(|b| b.point_id == point_id).collect()
    }

    /// Canonical JSON document: entities, relations and bindings sorted.
    pub fn to_json(&self) -> String {
        let doc = TwinDocument {
            twin_schema: TWIN_SCHEMA_VERSION,
            entities: self.entities.values().cloned().collect(),
            relations: self.relations.iter().cloned().collect(),
            bindings: self.bindings.iter().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("twin document serializes")
    }

    /// Parses and validates a document; every entity, relation and binding is
    /// re-checked exactly as if it had been added through the mutation API.
    pub fn from_json(text: &str) -> Result<Self, TwinError> {
        let parse_err = |e: serde_json::Error| TwinError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        };
        let probe: VersionProbe = serde_json::from_str(text).map_err(parse_err)?;
        if probe.twin_schema != TWIN_SCHEMA_VERSION {
            return Err(TwinError::SchemaVersionMismatch {
                found: probe.twin_schema,
            });
        }
        let doc: TwinDocument = serde_json::from_str(text).map_err(parse_err)?;
        let mut graph = TwinGraph::new();
        for e in doc.entities {
            graph.add_entity(e)?;
        }
        for r in doc.relations {
            graph.add_relation(r)?;
        }
        for b in doc.bindings {
            graph.bind_series(b)?;
        }
        Ok(graph)
    }

    /// Building with four floors, one room each (basement to second floor).
    pub fn lofstad_layout() -> Self {
        let mut g = TwinGraph::new();
        g.add_entity(Entity::new(
            "lofstad",
            EntityClass::Building,
            "Löfstad Castle main building",
        ))
        .expect("fresh graph");
        for (idx, (floor, room)) in LOFSTAD_ROOMS.iter().enumerate() {
            let floor_id = format!("floor_{floor}");
            g.add_entity(
                Entity::new(&floor_id, EntityClass::Floor, *floor)
                    .with_attr("level", AttrValue::Number(idx as f64 - 1.0)),
            )
            .expect("unique");
            g.add_entity(
                Entity::new(*room, EntityClass::Room, format!("Room {}", &room[1..]))
                    .with_attr("heated", AttrValue::Bool(*floor == "1F")),
            )
            .expect("unique");
            g.add_relation(Relationship::new("lofstad", Predicate::HasPart, &floor_id))
                .expect("valid");
            g.add_relation(Relationship::new(&floor_id, Predicate::HasPart, *room))
                .expect("valid");
        }
        g
    }

    /// [`Self::lofstad_layout`] plus temperature, humidity and CO2 points in each
    /// room, an outdoor weather station, and series bindings named
    /// `<room>_temperature`, `<room>_relative_humidity` and `<room>_co2`.
    pub fn lofstad_instrumented() -> Self {
        let mut g = Self::lofstad_layout();
        for (_, room) in LOFSTAD_ROOMS {
            for (suffix, class, series, unit) in [
                ("temp", EntityClass::TemperatureSensor, "temperature", Unit::Celsius),
                ("rh", EntityClass::HumiditySensor, "relative_humidity", Unit::PercentRh),
                ("co2", EntityClass::Co2Sensor, "co2", Unit::Ppm),
            ] {
                let id = format!("{room}_{suffix}");
                g.add_entity(Entity::new(&id, class, format!("{room} {series}")))
                    .expect("unique");
                g.add_relation(Relationship::new(&id, Predicate::IsPointOf, room))
                    .expect("valid");
                g.bind_series(SeriesBinding {
                    point_id: id,
                    series_id: format!("{room}_{series}"),
                    unit,
                })
                .expect("unique");
            }
        }
        g.add_entity(Entity::new(
            "weather_station",
            EntityClass::OutdoorWeatherStation,
            "Meteorological station",
        ))
        .expect("unique");
        g.add_relation(Relationship::new("weather_station", Predicate::IsPointOf, "lofstad"))
            .expect("valid");
        g.add_entity(Entity::new(
            "radiators_1f",
            EntityClass::HeatingSystem,
            "Electric radiant heating",
        ))
        .expect("unique");
        g.add_relation(Relationship::new("radiators_1f", Predicate::Feeds, "R103"))
            .expect("valid");
        g
    }
}

/// `(floor tag, room id)` of the four studied rooms.
pub const LOFSTAD_ROOMS: [(&str, &str); 4] = [("BF", "R05"), ("GF", "R3"), ("1F", "R103"), ("2F", "R205")];

#[cfg(test)]
mod tests {
    use super::*;

    fn room(id: &str) -> Entity {
        Entity::new(id, EntityClass::Room, id)
    }

    #[test]
    fn singleton_insert_and_duplicate() {
        let mut g = TwinGraph::new();
        let r = g.add_entity(room("R103")).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.resolve(&r).unwrap().id, "R103");
        assert_eq!(g.add_entity(room("R103")), Err(TwinError::DuplicateId("R103".into())));
        assert_eq!(g.add_entity(room("")), Err(TwinError::EmptyId));
    }

    #[test]
    fn layout_has_nine_entities() {
        let g = TwinGraph::lofstad_layout();
        assert_eq!(g.len(), 9);
        let rooms: Vec<_> = g.entities().filter(|e| e.class == EntityClass::Room).collect();
        assert_eq!(rooms.len(), 4);
    }

    #[test]
    fn unknown_class_rejected() {
        assert_eq!(
            "Chandelier".parse::<EntityClass>(),
            Err(TwinError::InvalidClass("Chandelier".into()))
        );
        assert_eq!("CO2Sensor".parse::<EntityClass>(), Ok(EntityClass::Co2Sensor));
    }

    #[test]
    fn two_cycle_detected() {
        let mut g = TwinGraph::new();
        g.add_entity(room("A")).unwrap();
        g.add_entity(room("B")).unwrap();
        g.add_relation(Relationship::new("A", Predicate::HasPart, "B")).unwrap();
        assert!(matches!(
            g.add_relation(Relationship::new("B", Predicate::HasPart, "A")),
            Err(TwinError::CycleDetected { .. })
        ));
        assert!(matches!(
            g.add_relation(Relationship::new("A", Predicate::HasPart, "A")),
            Err(TwinError::CycleDetected { .. })
        ));
    }

    #[test]
    fn point_of_requires_sensor_subject() {
        let mut g = TwinGraph::new();
        g.add_entity(room("R103")).unwrap();
        g.add_entity(room("R3")).unwrap();
        g.add_entity(Entity::new("t", EntityClass::TemperatureSensor, ""))
            .unwrap();
        g.add_relation(Relationship::new("t", Predicate::IsPointOf, "R103"))
            .unwrap();
        assert!(matches!(
            g.add_relation(Relationship::new("R3", Predicate::IsPointOf, "R103")),
            Err(TwinError::PredicateClassMismatch { .. })
        ));
        assert!(matches!(
            g.add_relation(Relationship::new("t", Predicate::IsPointOf, "nowhere")),
            Err(TwinError::UnknownEntity(_))
        ));
    }

    #[test]
    fn query_with_filters() {
        let g = TwinGraph::lofstad_instrumented();
        let temp = g.query_points("R103", Some(EntityClass::TemperatureSensor)).unwrap();
        assert_eq!(temp.len(), 1);
        assert_eq!(temp[0].id, "R103_temp");
        assert_eq!(g.query_points("R103", None).unwrap().len(), 3);
        // 4 rooms x 3 sensors + the weather station
        assert_eq!(g.query_points("lofstad", None).unwrap().len(), 13);
        let bare = TwinGraph::lofstad_layout();
        assert!(bare.query_points("R3", None).unwrap().is_empty());
        assert!(matches!(g.query_points("R999", None), Err(TwinError::UnknownEntity(_))));
    }

    #[test]
    fn bind_series_rules() {
        let mut g = TwinGraph::lofstad_layout();
        g.add_entity(Entity::new("t103", EntityClass::TemperatureSensor, ""))
            .unwrap();
        let b = SeriesBinding {
            point_id: "t103".into(),
            series_id: "r103_temp".into(),
            unit: Unit::Celsius,
        };
        g.bind_series(b.clone()).unwrap();
        assert_eq!(g.bindings_of("t103"), vec![&b]);
        assert!(matches!(g.bind_series(b), Err(TwinError::DuplicateBinding { .. })));
        assert_eq!(
            g.bind_series(SeriesBinding {
                point_id: "R103".into(),
                series_id: "x".into(),
                unit: Unit::Celsius
            }),
            Err(TwinError::NotASensor("R103".into()))
        );
    }

    #[test]
    fn documents_round_trip_and_validate() {
        let empty = TwinGraph::new();
        assert_eq!(TwinGraph::from_json(&empty.to_json()).unwrap(), empty);

        let g = TwinGraph::lofstad_instrumented();
        let text = g.to_json();
        let back = TwinGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);

        let truncated = &text[..text.len() / 2];
        assert!(matches!(TwinGraph::from_json(truncated), Err(TwinError::Parse { .. })));

        let v2 = text.replacen("\"twin_schema\": 1", "\"twin_schema\": 2", 1);
        assert_eq!(
            TwinGraph::from_json(&v2),
            Err(TwinError::SchemaVersionMismatch { found: 2 })
        );

        let nested = r#"{"twin_schema":1,"entities":[{"id":"a","class":"Room","attributes":{"x":{"y":1}}}],"relations":[],"bindings":[]}"#;
        assert!(matches!(TwinGraph::from_json(nested), Err(TwinError::Parse { .. })));

        let bad_class = r#"{"twin_schema":1,"entities":[{"id":"a","class":"Attic"}],"relations":[],"bindings":[]}"#;
        match TwinGraph::from_json(bad_class) {
            Err(TwinError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }
}
