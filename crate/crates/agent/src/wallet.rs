//! Agent wallet and its passphrase-encrypted export format.

use std::collections::BTreeMap;
use std::path::Path;

use bdimhs_core::anoncreds::{CredentialDefinition, RevocationRegistry};
use bdimhs_core::crypto::{self, Domain, KeyPair, Nonce, NONCE_LEN};
use bdimhs_core::encoding::b64_array;
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;
use uuid::Uuid;

use crate::records::{Connection, CredentialExchange, PresentationExchange, StoredCredential};

pub const EXPORT_FORMAT: &str = "bdimhs-wallet/1";
pub const KDF_ITERATIONS: u32 = 100_000;
const MIN_ITERATIONS: u32 = 10_000;
const MAX_ITERATIONS: u32 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WalletError {
    #[error("wrong passphrase or corrupted export")]
    WrongPassphrase,
    #[error("malformed wallet export: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(String),
}

/// Issuer-side material for one credential definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IssuerCredDef {
    pub definition: CredentialDefinition,
    pub key: KeyPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<RevocationRegistry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Wallet {
    pub label: String,
    /// On-ledger DID (Verinym), once enrolled or seeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public_did: Option<String>,
    pub keys: BTreeMap<String, KeyPair>,
    pub credentials: Vec<StoredCredential>,
    pub connections: BTreeMap<Uuid, Connection>,
    pub credential_exchanges: BTreeMap<Uuid, CredentialExchange>,
    pub presentation_exchanges: BTreeMap<Uuid, PresentationExchange>,
    pub cred_defs: BTreeMap<String, IssuerCredDef>,
}

impl Wallet {
    pub fn new(label: &str) -> Self {
        Wallet {
            label: label.to_owned(),
            ..Default::default()
        }
    }

    /// Generates and stores a fresh key, returning a copy.
    pub fn create_key(&mut self) -> KeyPair {
        let key = KeyPair::random();
        self.keys.insert(key.did(), key.clone());
        key
    }

    pub fn insert_key(&mut self, key: KeyPair) {
        self.keys.insert(key.did(), key);
    }

    pub fn key(&self, did: &str) -> Option<&KeyPair> {
        self.keys.get(did)
    }

    pub fn public_key(&self) -> Option<&KeyPair> {
        self.public_did.as_deref().and_then(|did| self.keys.get(did))
    }

    pub fn credential(&self, id: Uuid) -> Option<&StoredCredential> {
        self.credentials.iter().find(|c| c.credential_id == id)
    }

    pub fn export(&self, passphrase: &str) -> Vec<u8> {
        self.export_with(passphrase, KDF_ITERATIONS)
    }

    pub fn export_with(&self, passphrase: &str, iterations: u32) -> Vec<u8> {
        let salt: [u8; 16] = crypto::random_bytes();
        let nonce: Nonce = crypto::random_bytes();
        let cipher = cipher(passphrase, &salt, iterations);
        let plaintext = serde_json::to_vec(self).expect("wallet serializes");
        let ciphertext = cipher
            .encrypt(
                XNonce::from_slice(&nonce),
                Payload {
                    msg: &plaintext,
                    aad: &header_aad(&salt, iterations),
                },
            )
            .expect("encryption cannot fail");
        serde_json::to_vec(&ExportBlob {
            format: EXPORT_FORMAT.into(),
            kdf: "pbkdf2-sha256".into(),
            iterations,
            salt,
            nonce,
            ciphertext,
        })
        .expect("blob serializes")
    }

    /// Decrypts an export. Any failure yields an error and no wallet data.
    pub fn import(blob: &[u8], passphrase: &str) -> Result<Wallet, WalletError> {
        let blob: ExportBlob =
            serde_json::from_slice(blob).map_err(|e| WalletError::Malformed(e.to_string()))?;
        if blob.format != EXPORT_FORMAT || blob.kdf != "pbkdf2-sha256" {
            return Err(WalletError::Malformed(format!("unsupported format {}", blob.format)));
        }
        if !(MIN_ITERATIONS..=MAX_ITERATIONS).contains(&blob.iterations) {
            return Err(WalletError::Malformed("iteration count out of range".into()));
        }
        let cipher = cipher(passphrase, &blob.salt, blob.iterations);
        let plaintext = cipher
            .decrypt(
                XNonce::from_slice(&blob.nonce),
                Payload {
                    msg: &blob.ciphertext,
                    aad: &header_aad(&blob.salt, blob.iterations),
                },
            )
            .map_err(|_| WalletError::WrongPassphrase)?;
        serde_json::from_slice(&plaintext).map_err(|e| WalletError::Malformed(e.to_string()))
    }

    pub fn save(&self, path: &Path, passphrase: &str) -> Result<(), WalletError> {
        std::fs::write(path, self.export(passphrase)).map_err(|e| WalletError::Io(e.to_string()))
    }

    pub fn load(path: &Path, passphrase: &str) -> Result<Wallet, WalletError> {
        let blob = std::fs::read(path).map_err(|e| WalletError::Io(e.to_string()))?;
        Wallet::import(&blob, passphrase)
    }
}

#[derive(Serialize, Deserialize)]
struct ExportBlob {
    format: String,
    kdf: String,
    iterations: u32,
    #[serde(with = "b64_array")]
    salt: [u8; 16],
    #[serde(with = "b64_array")]
    nonce: [u8; NONCE_LEN],
    #[serde(with = "bdimhs_core::encoding::b64_vec")]
    ciphertext: Vec<u8>,
}

fn cipher(passphrase: &str, salt: &[u8; 16], iterations: u32) -> XChaCha20Poly1305 {
    let mut key = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, iterations, &mut key);
    XChaCha20Poly1305::new(&key.into())
}

/// Binds the KDF parameters so they cannot be swapped under the ciphertext.
fn header_aad(salt: &[u8; 16], iterations: u32) -> [u8; 32] {
    crypto::tagged_hash(
        Domain::WalletKey,
        &[EXPORT_FORMAT.as_bytes(), salt, &iterations.to_be_bytes()],
    )
}
