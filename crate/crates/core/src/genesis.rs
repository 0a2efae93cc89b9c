//! Pre-defined side chain genesis records and their static validation.
//!
//! Field names are fixed by the on-disk format: a gasless side chain carries
//! `Chain_ID`, `SC_Register`, `Bal_Resv`, `SC_Inter`, `SC_Bank`, `Bal_Bank`,
//! `Wit_Addr_List`; a native-gas side chain carries `Chain_ID`,
//! `SC_Register`, `SC_Trading`, `Wit_Addr_List`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::{self, CanonicalError};
use crate::types::{Address, ChainId, Digest, TokenAmount};

pub const GASLESS_FIELDS: [&str; 7] =
    ["Chain_ID", "SC_Register", "Bal_Resv", "SC_Inter", "SC_Bank", "Bal_Bank", "Wit_Addr_List"];

pub const NATIVE_GAS_FIELDS: [&str; 4] = ["Chain_ID", "SC_Register", "SC_Trading", "Wit_Addr_List"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideVariant {
    Gasless,
    NativeGas,
}

impl fmt::Display for SideVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SideVariant::Gasless => "gasless",
            SideVariant::NativeGas => "native_gas",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaslessGenesis {
    #[serde(rename = "Chain_ID")]
    pub chain_id: ChainId,
    #[serde(rename = "SC_Register")]
    pub sc_register: Address,
    #[serde(rename = "Bal_Resv")]
    pub bal_resv: TokenAmount,
    #[serde(rename = "SC_Inter")]
    pub sc_inter: Address,
    #[serde(rename = "SC_Bank")]
    pub sc_bank: Address,
    #[serde(rename = "Bal_Bank")]
    pub bal_bank: TokenAmount,
    #[serde(rename = "Wit_Addr_List")]
    pub wit_addr_list: Vec<Address>,
}

/// Native-gas genesis. The `SC_Register` field names the contract that
/// handles both registration and consensus on such a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NativeGasGenesis {
    #[serde(rename = "Chain_ID")]
    pub chain_id: ChainId,
    #[serde(rename = "SC_Register")]
    pub sc_register: Address,
    #[serde(rename = "SC_Trading")]
    pub sc_trading: Address,
    #[serde(rename = "Wit_Addr_List")]
    pub wit_addr_list: Vec<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GenesisSpec {
    Gasless(GaslessGenesis),
    NativeGas(NativeGasGenesis),
}

/// One static-validation finding, naming the offending field and rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub rule: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, rule: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { field: field.into(), rule: rule.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.field, self.rule, self.message)
    }
}

impl GenesisSpec {
    pub fn chain_id(&self) -> ChainId {
        match self {
            GenesisSpec::Gasless(g) => g.chain_id,
            GenesisSpec::NativeGas(g) => g.chain_id,
        }
    }

    pub fn variant(&self) -> SideVariant {
        match self {
            GenesisSpec::Gasless(_) => SideVariant::Gasless,
            GenesisSpec::NativeGas(_) => SideVariant::NativeGas,
        }
    }

    pub fn witnesses(&self) -> &[Address] {
        match self {
            GenesisSpec::Gasless(g) => &g.wit_addr_list,
            GenesisSpec::NativeGas(g) => &g.wit_addr_list,
        }
    }

    /// The balance a registration request must match: `Bal_Resv` for a
    /// gasless chain. Native-gas genesis carries no balance.
    pub fn reserved_balance(&self) -> Option<TokenAmount> {
        match self {
            GenesisSpec::Gasless(g) => Some(g.bal_resv),
            GenesisSpec::NativeGas(_) => None,
        }
    }

    pub fn to_canonical(&self) -> String {
        canonical::to_canonical(self).expect("genesis serializes infallibly")
    }

    /// Parse a genesis object of a known variant, reporting every missing,
    /// mistyped or unknown field.
    pub fn from_value(variant: SideVariant, value: &Value) -> Result<GenesisSpec, Vec<Diagnostic>> {
        let Some(obj) = value.as_object() else {
            return Err(vec![Diagnostic::new("genesis", "object", "genesis must be a JSON object")]);
        };
        let expected: &[&str] = match variant {
            SideVariant::Gasless => &GASLESS_FIELDS,
            SideVariant::NativeGas => &NATIVE_GAS_FIELDS,
        };
        let mut diags = Vec::new();
        for field in expected {
            if !obj.contains_key(*field) {
                diags.push(Diagnostic::new(
                    *field,
                    "required-field",
                    format!("{variant} genesis is missing required field {field}"),
                ));
            }
        }
        for key in obj.keys() {
            if !expected.contains(&key.as_str()) {
                diags.push(Diagnostic::new(
                    key.as_str(),
                    "unknown-field",
                    format!("field {key} is not part of a {variant} genesis"),
                ));
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }
        let parsed = match variant {
            SideVariant::Gasless => serde_json::from_value::<GaslessGenesis>(value.clone()).map(GenesisSpec::Gasless),
            SideVariant::NativeGas => {
                serde_json::from_value::<NativeGasGenesis>(value.clone()).map(GenesisSpec::NativeGas)
            }
        };
        parsed.map_err(|e| vec![Diagnostic::new("genesis", "field-type", e.to_string())])
    }

    /// Parse a canonical genesis file. The variant is inferred from the
    /// presence of `SC_Trading`.
    pub fn from_canonical(text: &str) -> Result<GenesisSpec, CanonicalError> {
        let value: Value = canonical::parse_canonical(text)?;
        let variant = if value.get("SC_Trading").is_some() { SideVariant::NativeGas } else { SideVariant::Gasless };
        GenesisSpec::from_value(variant, &value).map_err(|_| CanonicalError::NotCanonical)
    }

    /// Static invariants that need the token chain's total supply and the
    /// configured entrance fee minimum.
    pub fn validate(&self, total_supply: TokenAmount, entrance_fee_minimum: TokenAmount) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let list = self.witnesses();
        if list.is_empty() {
            diags.push(Diagnostic::new("Wit_Addr_List", "non-empty", "at least one witness is required"));
        }
        if list.iter().collect::<BTreeSet<_>>().len() != list.len() {
            diags.push(Diagnostic::new("Wit_Addr_List", "distinct", "witness addresses must be distinct"));
        }
        match self {
            GenesisSpec::Gasless(g) => {
                let sum = g.bal_resv.0 as u128 + g.bal_bank.0 as u128;
                if sum != total_supply.0 as u128 {
                    diags.push(Diagnostic::new(
                        "Bal_Resv+Bal_Bank",
                        "reserve-plus-bank-equals-total-supply",
                        format!(
                            "Bal_Resv ({}) + Bal_Bank ({}) = {} but the token chain total supply is {}",
                            g.bal_resv, g.bal_bank, sum, total_supply
                        ),
                    ));
                }
                if g.bal_resv < entrance_fee_minimum {
                    diags.push(Diagnostic::new(
                        "Bal_Resv",
                        "entrance-fee-minimum",
                        format!("Bal_Resv {} is below the entrance fee minimum {}", g.bal_resv, entrance_fee_minimum),
                    ));
                }
                let addrs = [g.sc_register, g.sc_inter, g.sc_bank];
                if addrs.iter().collect::<BTreeSet<_>>().len() != 3 {
                    diags.push(Diagnostic::new(
                        "SC_Register/SC_Inter/SC_Bank",
                        "distinct-contracts",
                        "contract addresses must be distinct",
                    ));
                }
                if list.iter().any(|w| addrs.contains(w)) {
                    diags.push(Diagnostic::new(
                        "Wit_Addr_List",
                        "witness-not-contract",
                        "a witness address collides with a contract address",
                    ));
                }
            }
            GenesisSpec::NativeGas(g) => {
                if g.sc_register == g.sc_trading {
                    diags.push(Diagnostic::new(
                        "SC_Register/SC_Trading",
                        "distinct-contracts",
                        "contract addresses must be distinct",
                    ));
                }
            }
        }
        diags
    }
}

/// Digest of the canonical genesis serialization.
pub fn genesis_hash(genesis: &GenesisSpec) -> Digest {
    Digest::of(genesis.to_canonical().as_bytes())
}

/// Digest of a genesis file's bytes, which must already be canonical.
pub fn genesis_file_hash(text: &str) -> Result<Digest, CanonicalError> {
    let _: Value = canonical::parse_canonical(text)?;
    Ok(Digest::of(text.as_bytes()))
}

/// Token chain genesis file, fetched by witnesses alongside the side chain's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenGenesis {
    #[serde(rename = "Chain_ID")]
    pub chain_id: ChainId,
    #[serde(rename = "Total_Supply")]
    pub total_supply: TokenAmount,
}
