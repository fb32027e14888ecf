//! Byte-field encodings and canonical JSON.
//!
//! Every byte field that crosses a serialization boundary is written as
//! unpadded base64url. Canonical JSON means object keys in lexicographic
//! order with no insignificant whitespace.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::Serialize;

pub fn b64_encode(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub fn b64_decode(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
    URL_SAFE_NO_PAD.decode(text)
}

/// Serializes `value` with sorted object keys.
///
/// Round-tripping through [`serde_json::Value`] sorts keys because the
/// default map type is ordered.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("value serializes to JSON");
    serde_json::to_vec(&value).expect("JSON value serializes")
}

pub fn canonical_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(canonical_json(value)).expect("JSON is UTF-8")
}

/// serde adapter for fixed-size byte arrays.
pub mod b64_array {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        bytes: &[u8; N],
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&super::b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        deserializer: D,
    ) -> Result<[u8; N], D::Error> {
        let text = String::deserialize(deserializer)?;
        let raw = super::b64_decode(&text).map_err(D::Error::custom)?;
        raw.try_into()
            .map_err(|v: Vec<u8>| D::Error::custom(format!("expected {N} bytes, got {}", v.len())))
    }
}

/// serde adapter for variable-length byte vectors.
pub mod b64_vec {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&super::b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(deserializer)?;
        super::b64_decode(&text).map_err(D::Error::custom)
    }
}
