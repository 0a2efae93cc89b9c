//! Primitive domain types shared by every layer: addresses, digests and
//! token amounts.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// Name of the digest algorithm used for block, genesis and subject hashes.
/// Recorded in every trace header so runs stay comparable.
pub const HASH_ALGORITHM: &str = "sha256";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseHexError {
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("hex characters must be lowercase")]
    NotLowercase,
    #[error("invalid hex: {0}")]
    Invalid(String),
}

fn parse_fixed<const N: usize>(s: &str) -> Result<[u8; N], ParseHexError> {
    let body = s.strip_prefix("0x").ok_or(ParseHexError::MissingPrefix)?;
    if body.chars().any(|c| c.is_ascii_uppercase()) {
        return Err(ParseHexError::NotLowercase);
    }
    let bytes = hex::decode(body).map_err(|e| ParseHexError::Invalid(e.to_string()))?;
    let found = bytes.len();
    bytes.try_into().map_err(|_| ParseHexError::Length { expected: N, found })
}

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub const fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                format!("0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                // Short form keeps assertion output readable.
                write!(f, "{}({}…)", stringify!($name), &self.to_hex()[..10])
            }
        }

        impl FromStr for $name {
            type Err = ParseHexError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                parse_fixed::<$len>(s).map(Self)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(de::Error::custom)
            }
        }
    };
}

/// A 20-byte account or contract identifier, rendered as lowercase hex.
///
/// The space holds 16^40 distinct values, so label-derived addresses in
/// scenarios never collide in practice.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address([u8; 20]);

hex_newtype!(Address, 20);

impl Address {
    pub const ZERO: Address = Address([0; 20]);

    /// Deterministic address derived from a human label: the first 20 bytes
    /// of SHA-256(label).
    pub fn from_label(label: &str) -> Self {
        let digest = Sha256::digest(label.as_bytes());
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest[..20]);
        Address(out)
    }
}

/// A 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest([u8; 32]);

hex_newtype!(Digest, 32);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }
}

/// Identifier of a chain. Chain ids share the address format.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainId(pub Address);

impl ChainId {
    pub fn from_label(label: &str) -> Self {
        ChainId(Address::from_label(label))
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChainId({}…)", &self.0.to_hex()[..10])
    }
}

impl FromStr for ChainId {
    type Err = ParseHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(ChainId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AmountError {
    #[error("token amount overflow: {0} + {1}")]
    Overflow(u64, u64),
    #[error("token amount underflow: {0} - {1}")]
    Underflow(u64, u64),
}

/// Count of the smallest indivisible token unit.
///
/// Arithmetic is checked: operations that would overflow or go negative
/// return an error instead of wrapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenAmount(pub u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub fn checked_add(self, other: TokenAmount) -> Result<TokenAmount, AmountError> {
        self.0.checked_add(other.0).map(TokenAmount).ok_or(AmountError::Overflow(self.0, other.0))
    }

    pub fn checked_sub(self, other: TokenAmount) -> Result<TokenAmount, AmountError> {
        self.0.checked_sub(other.0).map(TokenAmount).ok_or(AmountError::Underflow(self.0, other.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for TokenAmount {
    fn from(v: u64) -> Self {
        TokenAmount(v)
    }
}
