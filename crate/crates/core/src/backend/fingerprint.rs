use serde_json::Value;
use sha2::{Digest, Sha256};

use super::Role;

/// JSON with object keys sorted at every depth and no insignificant
/// whitespace. Two bodies that differ only in key order canonicalize equal.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// SHA-256 hex of `"{role}\n{canonical body}"`.
pub fn fingerprint(role: Role, body: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(role.to_string().as_bytes());
    hasher.update(b"\n");
    hasher.update(canonical_json(body).as_bytes());
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn key_order_does_not_matter() {
        let a: Value = serde_json::from_str(r#"{"question":"q","context":"c","n":{"b":1,"a":[2,{"y":0,"x":1}]}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"n":{"a":[2,{"x":1,"y":0}],"b":1},"context":"c","question":"q"}"#).unwrap();
        assert_eq!(canonical_json(&a), canonical_json(&b));
        assert_eq!(fingerprint(Role::Reader, &a), fingerprint(Role::Reader, &b));
    }

    #[test]
    fn role_is_part_of_the_fingerprint() {
        let body = json!({"context": "c"});
        assert_ne!(fingerprint(Role::Qg, &body), fingerprint(Role::Reader, &body));
        assert_eq!(fingerprint(Role::Qg, &body).len(), 64);
    }

    #[test]
    fn canonical_form_is_compact() {
        assert_eq!(canonical_json(&json!({"b": "é\"", "a": [1, null]})), r#"{"a":[1,null],"b":"é\""}"#);
    }
}
