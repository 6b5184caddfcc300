//! Serde adapter for captured process output: a JSON string when the bytes
//! are UTF-8, otherwise `{"hex": "..."}`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Text(String),
    Hex { hex: String },
}

pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    match core::str::from_utf8(bytes) {
        Ok(text) => s.serialize_str(text),
        Err(_) => Repr::Hex {
            hex: hex::encode(bytes),
        }
        .serialize(s),
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    match Repr::deserialize(d)? {
        Repr::Text(t) => Ok(t.into_bytes()),
        Repr::Hex { hex } => hex::decode(hex).map_err(serde::de::Error::custom),
    }
}
