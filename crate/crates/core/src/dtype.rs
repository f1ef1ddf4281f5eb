use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Token;

/// Element type of the `.bin` payload, identified in the index by a one-byte code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Uint8,
    Int8,
    Int16,
    Int32,
    Int64,
    Float32,
    Float64,
    Uint16,
}

impl DType {
    pub const ALL: [DType; 8] = [
        DType::Uint8,
        DType::Int8,
        DType::Int16,
        DType::Int32,
        DType::Int64,
        DType::Float32,
        DType::Float64,
        DType::Uint16,
    ];

    pub fn code(self) -> u8 {
        match self {
            DType::Uint8 => 1,
            DType::Int8 => 2,
            DType::Int16 => 3,
            DType::Int32 => 4,
            DType::Int64 => 5,
            DType::Float32 => 6,
            DType::Float64 => 7,
            DType::Uint16 => 8,
        }
    }

    pub fn from_code(code: u8) -> Option<DType> {
        DType::ALL.into_iter().find(|d| d.code() == code)
    }

    pub fn width(self) -> usize {
        match self {
            DType::Uint8 | DType::Int8 => 1,
            DType::Int16 | DType::Uint16 => 2,
            DType::Int32 | DType::Float32 => 4,
            DType::Int64 | DType::Float64 => 8,
        }
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, DType::Float32 | DType::Float64)
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::Uint8 => "uint8",
            DType::Int8 => "int8",
            DType::Int16 => "int16",
            DType::Int32 => "int32",
            DType::Int64 => "int64",
            DType::Float32 => "float32",
            DType::Float64 => "float64",
            DType::Uint16 => "uint16",
        }
    }

    /// Inclusive range of token values representable by this dtype.
    pub fn token_range(self) -> (Token, Token) {
        match self {
            DType::Uint8 => (0, u8::MAX as Token),
            DType::Int8 => (i8::MIN as Token, i8::MAX as Token),
            DType::Int16 => (i16::MIN as Token, i16::MAX as Token),
            DType::Uint16 => (0, u16::MAX as Token),
            DType::Int32 => (i32::MIN as Token, i32::MAX as Token),
            DType::Int64 | DType::Float32 | DType::Float64 => (Token::MIN, Token::MAX),
        }
    }

    pub fn fits(self, token: Token) -> bool {
        let (lo, hi) = self.token_range();
        (lo..=hi).contains(&token)
    }

    pub fn check(self, token: Token) -> Result<()> {
        if self.fits(token) {
            Ok(())
        } else {
            Err(Error::TokenOverflowsDType { token, dtype: self })
        }
    }

    /// Default token dtype for a corpus whose largest id is `max_token`.
    pub fn for_max_token(max_token: Token) -> DType {
        if (0..65536).contains(&max_token) {
            DType::Uint16
        } else {
            DType::Int32
        }
    }

    pub(crate) fn require_integer(self) -> Result<DType> {
        if self.is_integer() {
            Ok(self)
        } else {
            Err(Error::NonIntegerDType(self))
        }
    }

    /// Decodes one little-endian element. `bytes` must be exactly `width()` long.
    #[inline]
    pub fn decode(self, bytes: &[u8]) -> Token {
        match self {
            DType::Uint8 => bytes[0] as Token,
            DType::Int8 => bytes[0] as i8 as Token,
            DType::Int16 => i16::from_le_bytes([bytes[0], bytes[1]]) as Token,
            DType::Uint16 => u16::from_le_bytes([bytes[0], bytes[1]]) as Token,
            DType::Int32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as Token,
            DType::Int64 => i64::from_le_bytes(bytes[..8].try_into().unwrap()),
            // Float payloads are rejected before any token is read.
            DType::Float32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as Token,
            DType::Float64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()) as Token,
        }
    }

    pub fn decode_slice(self, bytes: &[u8], out: &mut Vec<Token>) {
        out.extend(bytes.chunks_exact(self.width()).map(|b| self.decode(b)));
    }

    /// Appends the little-endian encoding of `token`; the caller has checked `fits`.
    #[inline]
    pub fn encode(self, token: Token, out: &mut Vec<u8>) {
        match self {
            DType::Uint8 | DType::Int8 => out.push(token as u8),
            DType::Int16 | DType::Uint16 => out.extend_from_slice(&(token as u16).to_le_bytes()),
            DType::Int32 => out.extend_from_slice(&(token as i32).to_le_bytes()),
            DType::Int64 => out.extend_from_slice(&token.to_le_bytes()),
            DType::Float32 => out.extend_from_slice(&(token as f32).to_le_bytes()),
            DType::Float64 => out.extend_from_slice(&(token as f64).to_le_bytes()),
        }
    }

    /// Checks and encodes a whole token slice.
    pub fn encode_all(self, tokens: &[Token], out: &mut Vec<u8>) -> Result<()> {
        out.reserve(tokens.len() * self.width());
        for &t in tokens {
            self.check(t)?;
            self.encode(t, out);
        }
        Ok(())
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DType::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown dtype {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip_and_widths_match() {
        for d in DType::ALL {
            assert_eq!(DType::from_code(d.code()), Some(d));
            assert!([1, 2, 4, 8].contains(&d.width()));
        }
        assert_eq!(DType::from_code(0), None);
        assert_eq!(DType::from_code(9), None);
        assert_eq!(DType::Uint16.code(), 8);
        assert_eq!(DType::Int32.width(), 4);
    }

    #[test]
    fn only_integer_codes_hold_tokens() {
        let ints: Vec<u8> = DType::ALL
            .into_iter()
            .filter(|d| d.is_integer())
            .map(DType::code)
            .collect();
        assert_eq!(ints, vec![1, 2, 3, 4, 5, 8]);
    }

    #[test]
    fn encode_decode_signed_and_unsigned() {
        for (d, t) in [
            (DType::Int8, -5),
            (DType::Uint8, 250),
            (DType::Int16, -30000),
            (DType::Uint16, 65535),
            (DType::Int32, -7),
            (DType::Int64, i64::MIN),
        ] {
            let mut buf = Vec::new();
            d.encode_all(&[t], &mut buf).unwrap();
            assert_eq!(buf.len(), d.width());
            assert_eq!(d.decode(&buf), t);
        }
    }

    #[test]
    fn overflow_is_rejected() {
        let mut buf = Vec::new();
        let err = DType::Uint16.encode_all(&[65536], &mut buf).unwrap_err();
        assert_eq!(err.code(), "TokenOverflowsDType");
        assert!(DType::Uint8.check(-1).is_err());
    }

    #[test]
    fn default_dtype_split() {
        assert_eq!(DType::for_max_token(65535), DType::Uint16);
        assert_eq!(DType::for_max_token(65536), DType::Int32);
    }
}
