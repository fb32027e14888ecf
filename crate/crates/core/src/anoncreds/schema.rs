use serde::{Deserialize, Serialize};

use super::AnonCredsError;
use crate::crypto::{KeyPair, PublicKey};

pub const SIGNATURE_TYPE: &str = "CL";
pub const ACCUMULATOR_TYPE: &str = "CL_ACCUM";

pub fn schema_id(issuer_did: &str, name: &str, version: &str) -> String {
    format!("{issuer_did}:2:{name}:{version}")
}

pub fn cred_def_id(issuer_did: &str, schema_seq_no: u64, tag: &str) -> String {
    format!("{issuer_did}:3:{SIGNATURE_TYPE}:{schema_seq_no}:{tag}")
}

pub fn rev_reg_id(issuer_did: &str, cred_def_id: &str, tag: &str) -> String {
    format!("{issuer_did}:4:{cred_def_id}:{ACCUMULATOR_TYPE}:{tag}")
}

/// Parsed form of a credential definition id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredDefIdParts {
    pub issuer_did: String,
    pub schema_seq_no: u64,
    pub tag: String,
}

pub fn parse_cred_def_id(id: &str) -> Option<CredDefIdParts> {
    let mut parts = id.splitn(5, ':');
    let issuer_did = parts.next()?.to_owned();
    if parts.next()? != "3" || parts.next()? != SIGNATURE_TYPE {
        return None;
    }
    let schema_seq_no = parts.next()?.parse().ok()?;
    let tag = parts.next()?.to_owned();
    if issuer_did.is_empty() || tag.is_empty() {
        return None;
    }
    Some(CredDefIdParts {
        issuer_did,
        schema_seq_no,
        tag,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Schema {
    pub schema_id: String,
    pub name: String,
    pub version: String,
    /// Sorted and unique.
    pub attr_names: Vec<String>,
}

impl Schema {
    pub fn position_of(&self, attr: &str) -> Option<usize> {
        self.attr_names.binary_search_by(|a| a.as_str().cmp(attr)).ok()
    }

    pub fn has_attr(&self, attr: &str) -> bool {
        self.position_of(attr).is_some()
    }

    /// Checks the invariants a schema read back from anywhere must hold.
    pub fn validate(&self) -> Result<(), AnonCredsError> {
        validate_name_version(&self.name, &self.version)?;
        if self.attr_names.is_empty() {
            return Err(AnonCredsError::InvalidSchema("no attributes".into()));
        }
        if self.attr_names.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnonCredsError::InvalidSchema(
                "attributes must be sorted and unique".into(),
            ));
        }
        Ok(())
    }
}

fn validate_name_version(name: &str, version: &str) -> Result<(), AnonCredsError> {
    if name.is_empty() || name.contains(':') {
        return Err(AnonCredsError::InvalidSchema(format!("bad schema name {name:?}")));
    }
    let mut parts = version.split('.');
    let well_formed = matches!(
        (parts.next(), parts.next(), parts.next()),
        (Some(major), Some(minor), None)
            if !major.is_empty() && !minor.is_empty()
                && major.chars().chain(minor.chars()).all(|c| c.is_ascii_digit())
    );
    if !well_formed {
        return Err(AnonCredsError::InvalidSchema(format!(
            "version {version:?} is not major.minor"
        )));
    }
    Ok(())
}

/// Builds a ledger-ready schema. Attribute names are sorted; duplicates and
/// empty lists are refused.
pub fn create_schema<S: AsRef<str>>(
    issuer_did: &str,
    name: &str,
    version: &str,
    attr_names: &[S],
) -> Result<Schema, AnonCredsError> {
    validate_name_version(name, version)?;
    if attr_names.is_empty() {
        return Err(AnonCredsError::InvalidSchema("attribute list is empty".into()));
    }
    let mut sorted: Vec<String> = attr_names.iter().map(|a| a.as_ref().to_owned()).collect();
    if sorted.iter().any(|a| a.is_empty()) {
        return Err(AnonCredsError::InvalidSchema("empty attribute name".into()));
    }
    sorted.sort();
    if let Some(dup) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(AnonCredsError::InvalidSchema(format!(
            "duplicate attribute {:?}",
            dup[0]
        )));
    }
    Ok(Schema {
        schema_id: schema_id(issuer_did, name, version),
        name: name.to_owned(),
        version: version.to_owned(),
        attr_names: sorted,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CredentialDefinition {
    pub cred_def_id: String,
    pub schema_id: String,
    pub issuer_did: String,
    pub tag: String,
    pub issuer_public_key: PublicKey,
    pub supports_revocation: bool,
}

/// Creates a credential definition over a schema that was committed at
/// `schema_seq_no`, together with the fresh signing key it certifies.
pub fn create_cred_def(
    issuer_did: &str,
    schema: &Schema,
    schema_seq_no: u64,
    tag: &str,
    supports_revocation: bool,
) -> (CredentialDefinition, KeyPair) {
    let key = KeyPair::random();
    let def = CredentialDefinition {
        cred_def_id: cred_def_id(issuer_did, schema_seq_no, tag),
        schema_id: schema.schema_id.clone(),
        issuer_did: issuer_did.to_owned(),
        tag: tag.to_owned(),
        issuer_public_key: key.public_key(),
        supports_revocation,
    };
    (def, key)
}
