use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::revocation::RevocationRegistry;
use super::{AnonCredsError, CredentialDefinition, Schema};
use crate::crypto::{self, Digest, Domain, KeyPair, MerkleProof, PublicKey, Salt, Signature};
use crate::encoding::b64_array;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeValue {
    pub value: String,
    #[serde(with = "b64_array")]
    pub salt: Salt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Credential {
    pub cred_def_id: String,
    pub schema_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rev_reg_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rev_index: Option<u64>,
    pub attributes: BTreeMap<String, AttributeValue>,
    pub holder_binding_key: PublicKey,
    #[serde(with = "b64_array")]
    pub credential_root: Digest,
    pub issuer_signature: Signature,
}

pub fn holder_binding_leaf(key: &PublicKey) -> Digest {
    crypto::tagged_hash(Domain::HolderBinding, &[key.as_bytes()])
}

/// Leaf tying a credential to its revocation slot. Credentials without a
/// registry commit to the bare domain tag.
pub fn revocation_binding_leaf(rev_reg_id: Option<&str>, rev_index: Option<u64>) -> Digest {
    match (rev_reg_id, rev_index) {
        (Some(id), Some(index)) => crypto::tagged_hash(
            Domain::RevocationBinding,
            &[&(id.len() as u32).to_be_bytes(), id.as_bytes(), &index.to_be_bytes()],
        ),
        _ => crypto::tagged_hash(Domain::RevocationBinding, &[]),
    }
}

impl Credential {
    /// Leaves in credential-root order: one commitment per attribute in
    /// name order, then the holder binding, then the revocation binding.
    pub fn leaves(&self) -> Vec<Digest> {
        let mut leaves: Vec<Digest> = self
            .attributes
            .iter()
            .map(|(name, attr)| crypto::commitment_digest(name, &attr.value, &attr.salt))
            .collect();
        leaves.push(holder_binding_leaf(&self.holder_binding_key));
        leaves.push(revocation_binding_leaf(self.rev_reg_id.as_deref(), self.rev_index));
        leaves
    }

    pub fn holder_leaf_index(&self) -> usize {
        self.attributes.len()
    }

    pub fn revocation_leaf_index(&self) -> usize {
        self.attributes.len() + 1
    }

    pub fn prove_leaf(&self, index: usize) -> MerkleProof {
        crypto::merkle_prove(&self.leaves(), index).expect("index within credential leaves")
    }

    pub fn values(&self) -> BTreeMap<String, String> {
        self.attributes
            .iter()
            .map(|(k, v)| (k.clone(), v.value.clone()))
            .collect()
    }

    /// Recomputes the root from the stored salts and checks the issuer
    /// signature and the attribute set against the schema.
    pub fn check(&self, cred_def: &CredentialDefinition, schema: &Schema) -> bool {
        self.cred_def_id == cred_def.cred_def_id
            && self.schema_id == schema.schema_id
            && self.attributes.keys().eq(schema.attr_names.iter())
            && crypto::merkle_root(&self.leaves()).ok() == Some(self.credential_root)
            && crypto::verify(
                &cred_def.issuer_public_key,
                &self.credential_root,
                &self.issuer_signature,
            )
    }
}

/// Issues a credential over `values`, which must name exactly the schema's
/// attributes. Revocable definitions need a registry with a free slot.
pub fn issue(
    cred_def: &CredentialDefinition,
    issuer_key: &KeyPair,
    schema: &Schema,
    rev_reg: Option<&mut RevocationRegistry>,
    holder_binding_key: PublicKey,
    values: &BTreeMap<String, String>,
) -> Result<Credential, AnonCredsError> {
    if cred_def.schema_id != schema.schema_id {
        return Err(AnonCredsError::SchemaMismatch(format!(
            "credential definition is over {}, not {}",
            cred_def.schema_id, schema.schema_id
        )));
    }
    check_values(schema, values)?;
    if issuer_key.public_key() != cred_def.issuer_public_key {
        return Err(AnonCredsError::InvalidRequest(
            "issuer key does not match the credential definition".into(),
        ));
    }
    let (rev_reg_id, rev_index) = match (cred_def.supports_revocation, rev_reg) {
        (true, Some(reg)) => {
            if reg.cred_def_id != cred_def.cred_def_id {
                return Err(AnonCredsError::InvalidRegistry(
                    "registry belongs to another credential definition".into(),
                ));
            }
            let index = reg.allocate_index()?;
            (Some(reg.rev_reg_id.clone()), Some(index))
        }
        (true, None) => {
            return Err(AnonCredsError::InvalidRegistry(
                "revocable credential definition needs a registry".into(),
            ))
        }
        (false, _) => (None, None),
    };
    let attributes = values
        .iter()
        .map(|(name, value)| {
            (
                name.clone(),
                AttributeValue {
                    value: value.clone(),
                    salt: crypto::random_bytes(),
                },
            )
        })
        .collect();
    let mut credential = Credential {
        cred_def_id: cred_def.cred_def_id.clone(),
        schema_id: schema.schema_id.clone(),
        rev_reg_id,
        rev_index,
        attributes,
        holder_binding_key,
        credential_root: [0; 32],
        issuer_signature: Signature([0; 64]),
    };
    credential.credential_root =
        crypto::merkle_root(&credential.leaves()).expect("credential has leaves");
    credential.issuer_signature = issuer_key.sign(&credential.credential_root);
    Ok(credential)
}

pub fn check_values(schema: &Schema, values: &BTreeMap<String, String>) -> Result<(), AnonCredsError> {
    if let Some(missing) = schema.attr_names.iter().find(|a| !values.contains_key(*a)) {
        return Err(AnonCredsError::SchemaMismatch(format!("missing attribute {missing}")));
    }
    if let Some(extra) = values.keys().find(|k| !schema.has_attr(k)) {
        return Err(AnonCredsError::SchemaMismatch(format!("unknown attribute {extra}")));
    }
    Ok(())
}
