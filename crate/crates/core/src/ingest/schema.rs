//! Tool schema validation, repair and de-duplication.
//!
//! The repair set is closed:
//! - insert a missing root `"type": "object"`
//! - create an empty `"properties"` map when absent
//! - backfill required-but-undeclared properties as `{"type": "string", "description": ""}`
//! - coerce a bare parameter list (`[{"name": ..., "type": ..., "required": bool}]`) into a property map
//!
//! Any other defect makes the schema unrepairable.

use crate::model::{SchemaDefect, ToolSchema};
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RepairAction {
    InsertedObjectType,
    CreatedProperties,
    BackfilledRequired { property: String },
    CoercedParameterList,
    RemovedDuplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairEntry {
    pub schema: String,
    #[serde(flatten)]
    pub action: RepairAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unrepairable {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SchemaValidation {
    pub schemas: Vec<ToolSchema>,
    pub log: Vec<RepairEntry>,
    pub unrepairable: Vec<Unrepairable>,
}

impl SchemaValidation {
    pub fn repaired_count(&self) -> usize {
        self.log
            .iter()
            .filter(|e| e.action != RepairAction::RemovedDuplicate)
            .map(|e| e.schema.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    }

    pub fn deduped_count(&self) -> usize {
        self.log
            .iter()
            .filter(|e| e.action == RepairAction::RemovedDuplicate)
            .count()
    }
}

/// Validates untrusted schema objects, repairing what the closed repair set
/// allows. Output keeps input order; exact duplicates (same name and same
/// parameters) keep their first occurrence.
pub fn validate_schemas(raw: &[Value]) -> SchemaValidation {
    let mut out = SchemaValidation::default();
    for value in raw {
        match repair_one(value, &mut out.log) {
            Ok(schema) => match out.schemas.iter().find(|s| s.name == schema.name) {
                Some(existing) if existing.parameters == schema.parameters => {
                    out.log.push(RepairEntry {
                        schema: schema.name.clone(),
                        action: RepairAction::RemovedDuplicate,
                    });
                }
                Some(_) => out.unrepairable.push(Unrepairable {
                    name: schema.name,
                    reason: "name already declared with different parameters".into(),
                }),
                None => out.schemas.push(schema),
            },
            Err(u) => out.unrepairable.push(u),
        }
    }
    out
}

const ROOT_KEYWORDS: [&str; 7] = ["type", "properties", "required", "description", "title", "additionalProperties", "$schema"];

fn repair_one(value: &Value, log: &mut Vec<RepairEntry>) -> Result<ToolSchema, Unrepairable> {
    let unrepairable = |name: &str, reason: String| Unrepairable {
        name: name.to_string(),
        reason,
    };
    let mut obj = value
        .as_object()
        .ok_or_else(|| unrepairable("", "schema is not a JSON object".into()))?;
    // {"type": "function", "function": {...}} wrapper
    if obj.get("type").and_then(Value::as_str) == Some("function") {
        if let Some(inner) = obj.get("function").and_then(Value::as_object) {
            obj = inner;
        }
    }
    let name = match obj.get("name") {
        Some(Value::String(n)) if !n.trim().is_empty() => n.clone(),
        _ => return Err(unrepairable("", "missing tool name".into())),
    };
    let description = match obj.get("description") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(d)) => d.clone(),
        Some(_) => return Err(unrepairable(&name, "description is not a string".into())),
    };
    let mut note = |action| {
        log.push(RepairEntry {
            schema: name.clone(),
            action,
        })
    };

    let mut params = match obj.get("parameters") {
        None | Some(Value::Null) => {
            note(RepairAction::InsertedObjectType);
            note(RepairAction::CreatedProperties);
            let mut p = Map::new();
            p.insert("type".into(), Value::String("object".into()));
            p.insert("properties".into(), Value::Object(Map::new()));
            p
        }
        Some(Value::Array(items)) => {
            note(RepairAction::CoercedParameterList);
            coerce_parameter_list(items).map_err(|r| unrepairable(&name, r))?
        }
        Some(Value::Object(p)) => p.clone(),
        Some(_) => return Err(unrepairable(&name, "parameters is not an object".into())),
    };

    if !params.contains_key("properties") {
        // a bare property map is not in the repair set
        if let Some(stray) = params.keys().find(|k| !ROOT_KEYWORDS.contains(&k.as_str())) {
            return Err(unrepairable(&name, format!("unexpected key {stray:?} at parameters root")));
        }
    }
    match params.get("type") {
        None => {
            note(RepairAction::InsertedObjectType);
            params.insert("type".into(), Value::String("object".into()));
        }
        Some(Value::String(t)) if t == "object" => {}
        Some(other) => {
            return Err(unrepairable(&name, format!("parameters root type is {other}")));
        }
    }
    if !params.contains_key("properties") {
        note(RepairAction::CreatedProperties);
        params.insert("properties".into(), Value::Object(Map::new()));
    }
    if let Some(Value::Array(required)) = params.get("required") {
        let missing: Vec<String> = {
            let props = params.get("properties").and_then(Value::as_object);
            required
                .iter()
                .filter_map(Value::as_str)
                .filter(|r| !props.is_some_and(|p| p.contains_key(*r)))
                .map(str::to_string)
                .collect()
        };
        if let Some(Value::Object(props)) = params.get_mut("properties") {
            for property in missing {
                let mut stub = Map::new();
                stub.insert("type".into(), Value::String("string".into()));
                stub.insert("description".into(), Value::String(String::new()));
                props.insert(property.clone(), Value::Object(stub));
                note(RepairAction::BackfilledRequired { property });
            }
        }
    }

    let schema = ToolSchema {
        name: name.clone(),
        description,
        parameters: params,
    };
    schema
        .check()
        .map_err(|d: SchemaDefect| unrepairable(&name, d.to_string()))?;
    Ok(schema)
}

fn coerce_parameter_list(items: &[Value]) -> Result<Map<String, Value>, String> {
    let mut properties = Map::new();
    let mut required = Vec::new();
    for item in items {
        let mut entry = item
            .as_object()
            .cloned()
            .ok_or_else(|| "parameter list entry is not an object".to_string())?;
        let name = match entry.remove("name") {
            Some(Value::String(n)) if !n.is_empty() => n,
            _ => return Err("parameter list entry has no name".into()),
        };
        match entry.remove("required") {
            Some(Value::Bool(true)) => required.push(Value::String(name.clone())),
            None | Some(Value::Bool(false)) => {}
            Some(_) => return Err(format!("parameter {name:?} has non-boolean required flag")),
        }
        if properties.insert(name.clone(), Value::Object(entry)).is_some() {
            return Err(format!("parameter {name:?} listed twice"));
        }
    }
    let mut params = Map::new();
    params.insert("type".into(), Value::String("object".into()));
    params.insert("properties".into(), Value::Object(properties));
    if !required.is_empty() {
        params.insert("required".into(), Value::Array(required));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn actions(v: &SchemaValidation) -> Vec<RepairAction> {
        v.log.iter().map(|e| e.action.clone()).collect()
    }

    #[test]
    fn exact_duplicates_collapse() {
        let s = json!({"name": "f", "description": "d", "parameters": {"type": "object", "properties": {}}});
        let v = validate_schemas(&[s.clone(), s]);
        assert_eq!(v.schemas.len(), 1);
        assert_eq!(actions(&v), vec![RepairAction::RemovedDuplicate]);
        assert_eq!(v.deduped_count(), 1);
    }

    #[test]
    fn inserts_root_type() {
        let v = validate_schemas(&[json!({"name": "f", "parameters": {"properties": {"a": {"type": "string"}}}})]);
        assert_eq!(actions(&v), vec![RepairAction::InsertedObjectType]);
        assert!(v.schemas[0].check().is_ok());
        assert_eq!(v.schemas[0].parameters["type"], "object");
    }

    #[test]
    fn backfills_required() {
        let v = validate_schemas(&[json!({
            "name": "f",
            "parameters": {"type": "object", "properties": {}, "required": ["city"]}
        })]);
        assert_eq!(
            actions(&v),
            vec![RepairAction::BackfilledRequired {
                property: "city".into()
            }]
        );
        let s = &v.schemas[0];
        assert!(s.check().is_ok());
        assert_eq!(s.properties().unwrap()["city"], json!({"type": "string", "description": ""}));
    }

    #[test]
    fn coerces_parameter_list() {
        let v = validate_schemas(&[json!({
            "name": "f",
            "parameters": [
                {"name": "a", "type": "string", "required": true},
                {"name": "b", "type": "integer"}
            ]
        })]);
        assert_eq!(actions(&v), vec![RepairAction::CoercedParameterList]);
        let s = &v.schemas[0];
        assert_eq!(s.required(), vec!["a"]);
        assert_eq!(s.property_types("b"), vec!["integer"]);
    }

    #[test]
    fn missing_parameters_become_empty_object() {
        let v = validate_schemas(&[json!({"name": "ping"})]);
        assert_eq!(
            actions(&v),
            vec![RepairAction::InsertedObjectType, RepairAction::CreatedProperties]
        );
        assert!(v.schemas[0].check().is_ok());
    }

    #[test]
    fn unwraps_function_objects() {
        let v = validate_schemas(&[json!({
            "type": "function",
            "function": {"name": "f", "description": "x", "parameters": {"type": "object", "properties": {}}}
        })]);
        assert!(v.log.is_empty());
        assert_eq!(v.schemas[0].name, "f");
    }

    #[test]
    fn outside_the_repair_set_is_dropped() {
        let v = validate_schemas(&[
            json!({"name": "f", "parameters": {"type": "dict", "properties": {}}}),
            json!({"name": "g", "parameters": {"type": "object", "properties": {"a": {"type": "str"}}}}),
            json!({"parameters": {}}),
            json!("f"),
        ]);
        assert!(v.schemas.is_empty());
        assert_eq!(v.unrepairable.len(), 4);
    }

    #[test]
    fn conflicting_names_drop_the_later_schema() {
        let v = validate_schemas(&[
            json!({"name": "f", "parameters": {"type": "object", "properties": {}}}),
            json!({"name": "f", "parameters": {"type": "object", "properties": {"x": {}}}}),
        ]);
        assert_eq!(v.schemas.len(), 1);
        assert_eq!(v.unrepairable.len(), 1);
    }

    fn raw_schema() -> impl Strategy<Value = Value> {
        let name = prop_oneof![Just("a"), Just("b"), Just("c")];
        let props = proptest::collection::btree_map("[p-s]", prop_oneof![Just(json!({"type": "string"})), Just(json!({}))], 0..3);
        let required = proptest::collection::vec("[p-u]", 0..3);
        (name, props, required, any::<bool>(), any::<bool>()).prop_map(|(n, props, req, with_type, with_props)| {
            let mut params = Map::new();
            if with_type {
                params.insert("type".into(), json!("object"));
            }
            if with_props {
                params.insert("properties".into(), json!(props));
            }
            params.insert("required".into(), json!(req));
            json!({"name": n, "parameters": params})
        })
    }

    proptest! {
        #[test]
        fn idempotent(raw in proptest::collection::vec(raw_schema(), 0..6)) {
            let first = validate_schemas(&raw);
            for s in &first.schemas {
                prop_assert!(s.check().is_ok());
            }
            let again: Vec<Value> = first.schemas.iter().map(|s| serde_json::to_value(s).unwrap()).collect();
            let second = validate_schemas(&again);
            prop_assert!(second.log.is_empty());
            prop_assert!(second.unrepairable.is_empty());
            prop_assert_eq!(second.schemas, first.schemas);
        }
    }
}
