//! Canonical JSON.
//!
//! Output rules: object keys sorted by code point, no insignificant
//! whitespace, every byte ASCII (non-ASCII escaped as `\uXXXX`, UTF-16 code
//! units, lowercase hex), integers without exponent or fraction. Serializing
//! is implemented as a `serde::Serializer` so typed structs and
//! `serde_json::Value` go through exactly the same path, and non-finite
//! floats or non-string map keys are rejected instead of silently coerced.

use std::collections::BTreeMap;
use std::fmt::{self, Display};

use serde::ser::{self, Impossible, Serialize};
use thiserror::Error;

use super::{hash, Digest32};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonicalError {
    #[error("non-finite number cannot be canonicalized")]
    NonFiniteNumber,
    #[error("map keys must be strings")]
    NonStringKey,
    #[error("duplicate object key {0:?}")]
    DuplicateKey(String),
    #[error("not valid JSON: {0}")]
    Parse(String),
    #[error("{0}")]
    Custom(String),
}

impl ser::Error for CanonicalError {
    fn custom<T: Display>(msg: T) -> Self {
        CanonicalError::Custom(msg.to_string())
    }
}

/// Canonical serialization of a structured value.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CanonicalDocument(Vec<u8>);

impl CanonicalDocument {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn as_str(&self) -> &str {
        // only ASCII is ever written
        std::str::from_utf8(&self.0).expect("canonical output is ASCII")
    }

    pub fn digest(&self) -> Digest32 {
        hash(&self.0)
    }
}

impl fmt::Debug for CanonicalDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalDocument({})", self.as_str())
    }
}

impl Display for CanonicalDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn canonicalize(value: &serde_json::Value) -> Result<CanonicalDocument, CanonicalError> {
    to_canonical_bytes(value).map(CanonicalDocument)
}

pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::new();
    value.serialize(ValueSerializer { out: &mut out })?;
    Ok(out)
}

pub fn parse_canonical(bytes: &[u8]) -> Result<serde_json::Value, CanonicalError> {
    serde_json::from_slice(bytes).map_err(|e| CanonicalError::Parse(e.to_string()))
}

/// True iff `bytes` parse as JSON and re-canonicalize to themselves.
pub fn is_canonical(bytes: &[u8]) -> bool {
    match parse_canonical(bytes) {
        Ok(v) => canonicalize(&v).is_ok_and(|doc| doc.as_bytes() == bytes),
        Err(_) => false,
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.push(b'"');
    for c in s.chars() {
        match c {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c if c.is_ascii() => out.push(c as u8),
            c => {
                let mut units = [0u16; 2];
                for unit in c.encode_utf16(&mut units) {
                    out.extend_from_slice(format!("\\u{unit:04x}").as_bytes());
                }
            }
        }
    }
    out.push(b'"');
}

fn write_f64(out: &mut Vec<u8>, v: f64) -> Result<(), CanonicalError> {
    if !v.is_finite() {
        return Err(CanonicalError::NonFiniteNumber);
    }
    if v == 0.0 {
        out.push(b'0');
    } else if v.fract() == 0.0 && v.abs() < 1e21 {
        out.extend_from_slice(format!("{v:.0}").as_bytes());
    } else {
        // shortest round-trip representation, never in exponent form
        out.extend_from_slice(format!("{v}").as_bytes());
    }
    Ok(())
}

struct ValueSerializer<'a> {
    out: &'a mut Vec<u8>,
}

macro_rules! serialize_integer {
    ($($method:ident: $ty:ty),*) => {
        $(fn $method(self, v: $ty) -> Result<(), CanonicalError> {
            self.out.extend_from_slice(v.to_string().as_bytes());
            Ok(())
        })*
    };
}

impl<'a> ser::Serializer for ValueSerializer<'a> {
    type Ok = ();
    type Error = CanonicalError;
    type SerializeSeq = SeqWriter<'a>;
    type SerializeTuple = SeqWriter<'a>;
    type SerializeTupleStruct = SeqWriter<'a>;
    type SerializeTupleVariant = SeqWriter<'a>;
    type SerializeMap = ObjectWriter<'a>;
    type SerializeStruct = ObjectWriter<'a>;
    type SerializeStructVariant = ObjectWriter<'a>;

    fn serialize_bool(self, v: bool) -> Result<(), CanonicalError> {
        self.out
            .extend_from_slice(if v { b"true" as &[u8] } else { b"false" });
        Ok(())
    }

    serialize_integer!(
        serialize_i8: i8, serialize_i16: i16, serialize_i32: i32, serialize_i64: i64,
        serialize_i128: i128, serialize_u8: u8, serialize_u16: u16, serialize_u32: u32,
        serialize_u64: u64, serialize_u128: u128
    );

    fn serialize_f32(self, v: f32) -> Result<(), CanonicalError> {
        write_f64(self.out, f64::from(v))
    }

    fn serialize_f64(self, v: f64) -> Result<(), CanonicalError> {
        write_f64(self.out, v)
    }

    fn serialize_char(self, v: char) -> Result<(), CanonicalError> {
        write_str(self.out, v.encode_utf8(&mut [0u8; 4]));
        Ok(())
    }

    fn serialize_str(self, v: &str) -> Result<(), CanonicalError> {
        write_str(self.out, v);
        Ok(())
    }

    fn serialize_bytes(self, v: &[u8]) -> Result<(), CanonicalError> {
        use ser::SerializeSeq;
        let mut seq = self.serialize_seq(Some(v.len()))?;
        for b in v {
            seq.serialize_element(b)?;
        }
        seq.end()
    }

    fn serialize_none(self) -> Result<(), CanonicalError> {
        self.serialize_unit()
    }

    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<(), CanonicalError> {
        value.serialize(self)
    }

    fn serialize_unit(self) -> Result<(), CanonicalError> {
        self.out.extend_from_slice(b"null");
        Ok(())
    }

    fn serialize_unit_struct(self, _name: &'static str) -> Result<(), CanonicalError> {
        self.serialize_unit()
    }

    fn serialize_unit_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
    ) -> Result<(), CanonicalError> {
        self.serialize_str(variant)
    }

    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        value: &T,
    ) -> Result<(), CanonicalError> {
        value.serialize(self)
    }

    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        value: &T,
    ) -> Result<(), CanonicalError> {
        self.out.push(b'{');
        write_str(self.out, variant);
        self.out.push(b':');
        value.serialize(ValueSerializer { out: self.out })?;
        self.out.push(b'}');
        Ok(())
    }

    fn serialize_seq(self, _len: Option<usize>) -> Result<SeqWriter<'a>, CanonicalError> {
        self.out.push(b'[');
        Ok(SeqWriter {
            out: self.out,
            first: true,
            wrapped: false,
        })
    }

    fn serialize_tuple(self, len: usize) -> Result<SeqWriter<'a>, CanonicalError> {
        self.serialize_seq(Some(len))
    }

    fn serialize_tuple_struct(
        self,
        _name: &'static str,
        len: usize,
    ) -> Result<SeqWriter<'a>, CanonicalError> {
        self.serialize_seq(Some(len))
    }

    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        _len: usize,
    ) -> Result<SeqWriter<'a>, CanonicalError> {
        self.out.push(b'{');
        write_str(self.out, variant);
        self.out.extend_from_slice(b":[");
        Ok(SeqWriter {
            out: self.out,
            first: true,
            wrapped: true,
        })
    }

    fn serialize_map(self, _len: Option<usize>) -> Result<ObjectWriter<'a>, CanonicalError> {
        Ok(ObjectWriter::new(self.out, false))
    }

    fn serialize_struct(
        self,
        _name: &'static str,
        _len: usize,
    ) -> Result<ObjectWriter<'a>, CanonicalError> {
        Ok(ObjectWriter::new(self.out, false))
    }

    fn serialize_struct_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
        _len: usize,
    ) -> Result<ObjectWriter<'a>, CanonicalError> {
        self.out.push(b'{');
        write_str(self.out, variant);
        self.out.push(b':');
        Ok(ObjectWriter::new(self.out, true))
    }
}

struct SeqWriter<'a> {
    out: &'a mut Vec<u8>,
    first: bool,
    wrapped: bool,
}

impl SeqWriter<'_> {
    fn element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonicalError> {
        if !self.first {
            self.out.push(b',');
        }
        self.first = false;
        value.serialize(ValueSerializer { out: self.out })
    }

    fn finish(self) -> Result<(), CanonicalError> {
        self.out.push(b']');
        if self.wrapped {
            self.out.push(b'}');
        }
        Ok(())
    }
}

impl ser::SerializeSeq for SeqWriter<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), Self::Error> {
        self.element(value)
    }

    fn end(self) -> Result<(), Self::Error> {
        self.finish()
    }
}

impl ser::SerializeTuple for SeqWriter<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), Self::Error> {
        self.element(value)
    }

    fn end(self) -> Result<(), Self::Error> {
        self.finish()
    }
}

impl ser::SerializeTupleStruct for SeqWriter<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), Self::Error> {
        self.element(value)
    }

    fn end(self) -> Result<(), Self::Error> {
        self.finish()
    }
}

impl ser::SerializeTupleVariant for SeqWriter<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), Self::Error> {
        self.element(value)
    }

    fn end(self) -> Result<(), Self::Error> {
        self.finish()
    }
}

/// Buffers members so they can be emitted in sorted key order.
struct ObjectWriter<'a> {
    out: &'a mut Vec<u8>,
    members: BTreeMap<String, Vec<u8>>,
    pending_key: Option<String>,
    wrapped: bool,
}

impl<'a> ObjectWriter<'a> {
    fn new(out: &'a mut Vec<u8>, wrapped: bool) -> Self {
        ObjectWriter {
            out,
            members: BTreeMap::new(),
            pending_key: None,
            wrapped,
        }
    }

    fn member<T: Serialize + ?Sized>(
        &mut self,
        key: String,
        value: &T,
    ) -> Result<(), CanonicalError> {
        let mut buf = Vec::new();
        value.serialize(ValueSerializer { out: &mut buf })?;
        if self.members.contains_key(&key) {
            return Err(CanonicalError::DuplicateKey(key));
        }
        self.members.insert(key, buf);
        Ok(())
    }

    fn finish(self) -> Result<(), CanonicalError> {
        self.out.push(b'{');
        for (i, (key, value)) in self.members.iter().enumerate() {
            if i > 0 {
                self.out.push(b',');
            }
            write_str(self.out, key);
            self.out.push(b':');
            self.out.extend_from_slice(value);
        }
        self.out.push(b'}');
        if self.wrapped {
            self.out.push(b'}');
        }
        Ok(())
    }
}

impl ser::SerializeMap for ObjectWriter<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> Result<(), Self::Error> {
        self.pending_key = Some(key.serialize(KeySerializer)?);
        Ok(())
    }

    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), Self::Error> {
        let key = self
            .pending_key
            .take()
            .ok_or_else(|| CanonicalError::Custom("map value without key".into()))?;
        self.member(key, value)
    }

    fn end(self) -> Result<(), Self::Error> {
        self.finish()
    }
}

impl ser::SerializeStruct for ObjectWriter<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> Result<(), Self::Error> {
        self.member(key.to_string(), value)
    }

    fn end(self) -> Result<(), Self::Error> {
        self.finish()
    }
}

impl ser::SerializeStructVariant for ObjectWriter<'_> {
    type Ok = ();
    type Error = CanonicalError;

    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> Result<(), Self::Error> {
        self.member(key.to_string(), value)
    }

    fn end(self) -> Result<(), Self::Error> {
        self.finish()
    }
}

/// Accepts only string-like keys.
struct KeySerializer;

macro_rules! reject_key {
    ($($method:ident($($arg:ty),*)),*) => {
        $(fn $method(self, $(_: $arg),*) -> Result<String, CanonicalError> {
            Err(CanonicalError::NonStringKey)
        })*
    };
}

impl ser::Serializer for KeySerializer {
    type Ok = String;
    type Error = CanonicalError;
    type SerializeSeq = Impossible<String, CanonicalError>;
    type SerializeTuple = Impossible<String, CanonicalError>;
    type SerializeTupleStruct = Impossible<String, CanonicalError>;
    type SerializeTupleVariant = Impossible<String, CanonicalError>;
    type SerializeMap = Impossible<String, CanonicalError>;
    type SerializeStruct = Impossible<String, CanonicalError>;
    type SerializeStructVariant = Impossible<String, CanonicalError>;

    fn serialize_str(self, v: &str) -> Result<String, CanonicalError> {
        Ok(v.to_string())
    }

    fn serialize_char(self, v: char) -> Result<String, CanonicalError> {
        Ok(v.to_string())
    }

    fn serialize_unit_variant(
        self,
        _name: &'static str,
        _index: u32,
        variant: &'static str,
    ) -> Result<String, CanonicalError> {
        Ok(variant.to_string())
    }

    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        value: &T,
    ) -> Result<String, CanonicalError> {
        value.serialize(self)
    }

    reject_key!(
        serialize_bool(bool),
        serialize_i8(i8),
        serialize_i16(i16),
        serialize_i32(i32),
        serialize_i64(i64),
        serialize_u8(u8),
        serialize_u16(u16),
        serialize_u32(u32),
        serialize_u64(u64),
        serialize_f32(f32),
        serialize_f64(f64),
        serialize_bytes(&[u8]),
        serialize_none(),
        serialize_unit(),
        serialize_unit_struct(&'static str)
    );

    fn serialize_some<T: Serialize + ?Sized>(self, _value: &T) -> Result<String, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _value: &T,
    ) -> Result<String, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_seq(self, _len: Option<usize>) -> Result<Self::SerializeSeq, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_tuple(self, _len: usize) -> Result<Self::SerializeTuple, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_tuple_struct(
        self,
        _name: &'static str,
        _len: usize,
    ) -> Result<Self::SerializeTupleStruct, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> Result<Self::SerializeTupleVariant, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_map(self, _len: Option<usize>) -> Result<Self::SerializeMap, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_struct(
        self,
        _name: &'static str,
        _len: usize,
    ) -> Result<Self::SerializeStruct, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }

    fn serialize_struct_variant(
        self,
        _name: &'static str,
        _index: u32,
        _variant: &'static str,
        _len: usize,
    ) -> Result<Self::SerializeStructVariant, CanonicalError> {
        Err(CanonicalError::NonStringKey)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;
    use std::collections::HashMap;

    fn canon(v: serde_json::Value) -> String {
        canonicalize(&v).unwrap().as_str().to_string()
    }

    #[test]
    fn keys_are_sorted() {
        assert_eq!(canon(json!({"b": 1, "a": 2})), r#"{"a":2,"b":1}"#);
        assert_eq!(canon(json!({})), "{}");
        assert_eq!(
            canon(json!({"z": {"y": [1, {"b": null, "a": true}]}, "a": []})),
            r#"{"a":[],"z":{"y":[1,{"a":true,"b":null}]}}"#
        );
    }

    #[test]
    fn non_ascii_is_escaped() {
        // python: json.dumps({"k":"é"}, ensure_ascii=True, separators=(",",":"))
        assert_eq!(canon(json!({"k": "é"})), r#"{"k":"\u00e9"}"#);
        // supplementary plane encodes as a surrogate pair
        assert_eq!(canon(json!("😀")), r#""\ud83d\ude00""#);
        assert_eq!(canon(json!("a\"b\\c\n\u{1}")), r#""a\"b\\c\n\u0001""#);
        assert!(canon(json!({"ключ": "值"})).is_ascii());
    }

    #[test]
    fn integers_have_no_exponent_or_fraction() {
        assert_eq!(
            canon(json!([1, -5, 0, 18446744073709551615u64])),
            "[1,-5,0,18446744073709551615]"
        );
        assert_eq!(canon(json!(1e20)), "100000000000000000000");
        assert_eq!(canon(json!(2.0)), "2");
        assert_eq!(canon(json!(-0.0)), "0");
        assert_eq!(canon(json!(0.5)), "0.5");
    }

    #[test]
    fn non_finite_and_non_string_keys_rejected() {
        assert_eq!(
            to_canonical_bytes(&f64::NAN),
            Err(CanonicalError::NonFiniteNumber)
        );
        assert_eq!(
            to_canonical_bytes(&[1.0, f64::INFINITY]),
            Err(CanonicalError::NonFiniteNumber)
        );
        let mut m = HashMap::new();
        m.insert(1u32, "x");
        assert_eq!(to_canonical_bytes(&m), Err(CanonicalError::NonStringKey));
    }

    #[test]
    fn typed_structs_match_value_route() {
        #[derive(serde::Serialize)]
        struct S {
            zeta: u32,
            alpha: &'static str,
            opt: Option<u8>,
        }
        let s = S {
            zeta: 3,
            alpha: "x",
            opt: None,
        };
        let typed = to_canonical_bytes(&s).unwrap();
        let via_value = canonicalize(&serde_json::to_value(&s).unwrap()).unwrap();
        assert_eq!(typed, via_value.as_bytes());
        assert_eq!(typed, br#"{"alpha":"x","opt":null,"zeta":3}"#);
    }

    #[test]
    fn is_canonical_detects_whitespace_and_order() {
        assert!(is_canonical(br#"{"a":1,"b":2}"#));
        assert!(!is_canonical(br#"{"b":2,"a":1}"#));
        assert!(!is_canonical(br#"{"a": 1}"#));
        assert!(!is_canonical(br#"{"a":1,"a":1}"#));
        assert!(!is_canonical(b"{not json"));
    }

    fn arb_json() -> impl Strategy<Value = serde_json::Value> {
        let leaf = prop_oneof![
            Just(serde_json::Value::Null),
            any::<bool>().prop_map(serde_json::Value::Bool),
            any::<i64>().prop_map(|i| json!(i)),
            (-1e9f64..1e9).prop_map(|f| json!(f)),
            "\\PC{0,8}".prop_map(serde_json::Value::String),
        ];
        leaf.prop_recursive(3, 32, 6, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..5).prop_map(serde_json::Value::Array),
                prop::collection::btree_map("\\PC{0,6}", inner, 0..5)
                    .prop_map(|m| serde_json::Value::Object(m.into_iter().collect())),
            ]
        })
    }

    proptest! {
        #[test]
        fn canonical_is_idempotent_and_ascii(v in arb_json()) {
            let once = canonicalize(&v).unwrap();
            prop_assert!(once.as_bytes().is_ascii());
            let reparsed = parse_canonical(once.as_bytes()).unwrap();
            let twice = canonicalize(&reparsed).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(is_canonical(once.as_bytes()));
            prop_assert_eq!(once, canonicalize(&v).unwrap());
        }
    }
}
