//! Independent brute-force scorer and random case generator. Works on raw
//! JSON values with exact rationals and shares no code with the library.

#![allow(dead_code)]

use num_rational::Ratio;
use rand::Rng;
use serde_json::{json, Map, Value};

pub type Q = Ratio<i64>;

fn leaf_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::String(x), Value::String(y)) => x.to_lowercase() == y.to_lowercase(),
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Null, Value::Null) => true,
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && (0..x.len()).all(|i| leaf_eq(&x[i], &y[i])),
        (Value::Object(x), Value::Object(y)) => {
            let mut kx: Vec<&String> = x.keys().collect();
            let mut ky: Vec<&String> = y.keys().collect();
            kx.sort();
            ky.sort();
            kx == ky && kx.iter().all(|k| leaf_eq(&x[*k], &y[*k]))
        }
        _ => false,
    }
}

/// Key-sorted serialization with numbers kept verbatim; equal strings mean identical calls.
fn canonical(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys.iter().map(|k| format!("{:?}:{}", k, canonical(&m[*k]))).collect();
            format!("{{{}}}", inner.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(canonical).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

fn args_sim(a: &Map<String, Value>, b: &Map<String, Value>) -> Q {
    let mut union: Vec<&String> = a.keys().chain(b.keys()).collect();
    union.sort();
    union.dedup();
    if union.is_empty() {
        return Q::from_integer(1);
    }
    let mut hits = 0i64;
    for k in &union {
        if let (Some(x), Some(y)) = (a.get(*k), b.get(*k)) {
            if leaf_eq(x, y) {
                hits += 1;
            }
        }
    }
    Q::new(hits, union.len() as i64)
}

/// Calls are `{"name": .., "arguments": {..}}` objects.
pub fn oracle_score(gt: &[Value], pred: &[Value]) -> Q {
    if gt.is_empty() && pred.is_empty() {
        return Q::from_integer(1);
    }
    if gt.len() != pred.len() {
        return Q::from_integer(0);
    }
    for i in 0..pred.len() {
        for j in 0..i {
            if canonical(&pred[i]) == canonical(&pred[j]) {
                return Q::from_integer(0);
            }
        }
    }
    let mut total = Q::from_integer(0);
    for g in gt {
        let mut best = Q::from_integer(0);
        for p in pred {
            if g["name"] == p["name"] {
                let s = args_sim(g["arguments"].as_object().unwrap(), p["arguments"].as_object().unwrap());
                if s > best {
                    best = s;
                }
            }
        }
        total += best;
    }
    total / Q::from_integer(gt.len() as i64)
}

const NAMES: [&str; 3] = ["get_weather", "search", "book"];
const KEYS: [&str; 5] = ["city", "unit", "limit", "tags", "opts"];
const WORDS: [&str; 4] = ["Paris", "paris", "PARIS", "London"];

fn random_value<R: Rng>(rng: &mut R, depth: u32) -> Value {
    match rng.random_range(0..if depth > 0 { 8 } else { 6 }) {
        0 | 1 => json!(WORDS[rng.random_range(0..WORDS.len())]),
        2 => json!(rng.random_range(0..3)),
        3 => json!([1.0, 2.5][rng.random_range(0..2)]),
        4 => json!(rng.random_bool(0.5)),
        5 => Value::Null,
        6 => Value::Array((0..rng.random_range(0..3)).map(|_| random_value(rng, depth - 1)).collect()),
        _ => {
            let mut m = Map::new();
            for _ in 0..rng.random_range(0..3) {
                m.insert(["x", "y"][rng.random_range(0..2)].to_string(), random_value(rng, depth - 1));
            }
            Value::Object(m)
        }
    }
}

fn random_call<R: Rng>(rng: &mut R) -> Value {
    let mut args = Map::new();
    for _ in 0..rng.random_range(0..=4) {
        args.insert(KEYS[rng.random_range(0..KEYS.len())].to_string(), random_value(rng, 2));
    }
    json!({"name": NAMES[rng.random_range(0..NAMES.len())], "arguments": args})
}

/// Copies a call with small edits so that partial matches are common.
fn perturb<R: Rng>(rng: &mut R, call: &Value) -> Value {
    let mut out = call.clone();
    if rng.random_bool(0.15) {
        out["name"] = json!(NAMES[rng.random_range(0..NAMES.len())]);
    }
    let args = out["arguments"].as_object_mut().unwrap();
    let keys: Vec<String> = args.keys().cloned().collect();
    for k in keys {
        match rng.random_range(0..6) {
            0 => {
                args.remove(&k);
            }
            1 => {
                args.insert(k, random_value(rng, 1));
            }
            2 => {
                if let Some(Value::String(s)) = args.get(&k).cloned() {
                    args.insert(k, json!(s.to_uppercase()));
                }
            }
            3 => {
                if let Some(Value::Number(n)) = args.get(&k).cloned() {
                    if let Some(i) = n.as_i64() {
                        args.insert(k, json!(i as f64));
                    }
                }
            }
            _ => {}
        }
    }
    if rng.random_bool(0.2) {
        args.insert(KEYS[rng.random_range(0..KEYS.len())].to_string(), random_value(rng, 1));
    }
    out
}

pub fn random_calls<R: Rng>(rng: &mut R) -> (Vec<Value>, Vec<Value>) {
    let gt: Vec<Value> = (0..rng.random_range(0..=4)).map(|_| random_call(rng)).collect();
    let mut pred: Vec<Value> = match rng.random_range(0..10) {
        0 => (0..rng.random_range(0..=4)).map(|_| random_call(rng)).collect(),
        _ => gt.iter().map(|c| perturb(rng, c)).collect(),
    };
    if !pred.is_empty() && rng.random_bool(0.1) {
        let dup = pred[rng.random_range(0..pred.len())].clone();
        let at = rng.random_range(0..pred.len());
        pred[at] = dup;
    }
    if pred.len() > 1 && rng.random_bool(0.3) {
        let (i, j) = (rng.random_range(0..pred.len()), rng.random_range(0..pred.len()));
        pred.swap(i, j);
    }
    (gt, pred)
}

pub fn to_text(calls: &[Value]) -> String {
    calls
        .iter()
        .map(|c| format!("<tool_call>\n{}\n</tool_call>", serde_json::to_string(c).unwrap()))
        .collect::<Vec<_>>()
        .join("\n")
}
