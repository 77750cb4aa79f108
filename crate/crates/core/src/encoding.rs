//! Serde adapters that render scalars, elements and byte strings as lowercase hex.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

use crate::group::{decode_hex, element_from_hex, element_to_hex, scalar_from_hex, scalar_to_hex};
use crate::group::{GroupEncoding, ScalarField};

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer, T: ScalarField>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&scalar_to_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: ScalarField>(d: D) -> Result<T, D::Error> {
        scalar_from_hex(&String::deserialize(d)?).map_err(D::Error::custom)
    }
}

pub mod element {
    use super::*;

    pub fn serialize<S: Serializer, T: GroupEncoding>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&element_to_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: GroupEncoding>(d: D) -> Result<T, D::Error> {
        element_from_hex(&String::deserialize(d)?).map_err(D::Error::custom)
    }
}

pub mod elements {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer, T: GroupEncoding>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for e in v {
            seq.serialize_element(&element_to_hex(e))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>, T: GroupEncoding>(
        d: D,
    ) -> Result<Vec<T>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| element_from_hex(s).map_err(D::Error::custom))
            .collect()
    }
}

pub mod bytes {
    use super::*;

    pub fn serialize<S: Serializer, T: AsRef<[u8]>>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        decode_hex(&String::deserialize(d)?).map_err(D::Error::custom)
    }
}
