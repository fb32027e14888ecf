//! Signatures, hashing, salted commitments, Merkle trees and sealed envelopes.
//!
//! Signatures are Ed25519 and the hash is SHA-256 throughout. Every hash
//! input is prefixed by a one-byte [`Domain`] tag so that digests produced
//! for one purpose can never be replayed as digests for another.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::encoding::{b64_array, b64_vec};

/// Signature scheme used for every key in the system. Recorded in the
/// genesis file header so that pools built with another scheme are refused.
pub const SIGNATURE_SCHEME_ID: &str = "ed25519";
pub const HASH_ALGORITHM_ID: &str = "sha256";

pub const SEED_LEN: usize = 32;
pub const SALT_LEN: usize = 16;
pub const NONCE_LEN: usize = 24;

pub type Digest = [u8; 32];
pub type Salt = [u8; SALT_LEN];
pub type Nonce = [u8; NONCE_LEN];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("seed must be {SEED_LEN} bytes, got {0}")]
    InvalidSeed(usize),
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexError { index: usize, len: usize },
    #[error("cannot build a Merkle tree without leaves")]
    EmptyTree,
    #[error("envelope failed authentication")]
    AuthenticationFailure,
    #[error("malformed public key")]
    InvalidKey,
}

/// Hash domain separation tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Commitment = 0x01,
    MerkleNode = 0x02,
    TxnChain = 0x03,
    RevocationLeaf = 0x04,
    HolderBinding = 0x05,
    RevocationBinding = 0x06,
    EnvelopeKey = 0x07,
    Puzzle = 0x08,
    PresentationBinding = 0x09,
    NodeAck = 0x0a,
    NodeSeed = 0x0b,
    WalletKey = 0x0c,
}

pub fn tagged_hash(domain: Domain, parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update([domain as u8]);
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// Fixed filler digest for padding Merkle trees up to a power of two.
pub fn pad_digest() -> Digest {
    Sha256::digest(b"EMPTY-LEAF").into()
}

pub fn random_bytes<const N: usize>() -> [u8; N] {
    let mut out = [0u8; N];
    OsRng.fill_bytes(&mut out);
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PublicKey(#[serde(with = "b64_array")] pub [u8; 32]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Base58 of the first 16 key bytes.
    pub fn did(&self) -> String {
        bs58::encode(&self.0[..16]).into_string()
    }

    /// Base58 of the full key.
    pub fn verkey(&self) -> String {
        bs58::encode(&self.0).into_string()
    }

    pub fn from_verkey(verkey: &str) -> Result<Self, CryptoError> {
        let raw = bs58::decode(verkey)
            .into_vec()
            .map_err(|_| CryptoError::InvalidKey)?;
        let bytes: [u8; 32] = raw.try_into().map_err(|_| CryptoError::InvalidKey)?;
        VerifyingKey::from_bytes(&bytes).map_err(|_| CryptoError::InvalidKey)?;
        Ok(PublicKey(bytes))
    }

    fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_bytes(&self.0).ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.verkey())
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.verkey())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(#[serde(with = "b64_array")] pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", crate::encoding::b64_encode(&self.0[..8]))
    }
}

/// An Ed25519 key pair held together with the seed it was derived from.
#[derive(Clone)]
pub struct KeyPair {
    seed: [u8; SEED_LEN],
    signing: SigningKey,
}

impl KeyPair {
    /// Derives a key pair from `seed`, or from fresh OS randomness when no
    /// seed is given.
    pub fn generate(seed: Option<&[u8]>) -> Result<Self, CryptoError> {
        let seed: [u8; SEED_LEN] = match seed {
            Some(bytes) => bytes
                .try_into()
                .map_err(|_| CryptoError::InvalidSeed(bytes.len()))?,
            None => random_bytes(),
        };
        Ok(Self::from_seed(seed))
    }

    pub fn random() -> Self {
        Self::from_seed(random_bytes())
    }

    pub fn from_seed(seed: [u8; SEED_LEN]) -> Self {
        KeyPair {
            seed,
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn seed(&self) -> &[u8; SEED_LEN] {
        &self.seed
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn did(&self) -> String {
        self.public_key().did()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &self.public_key())
            .finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
    }
}

impl Eq for KeyPair {}

impl Serialize for KeyPair {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            #[serde(with = "b64_array")]
            seed: &'a [u8; SEED_LEN],
        }
        Repr { seed: &self.seed }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KeyPair {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            #[serde(with = "b64_array")]
            seed: [u8; SEED_LEN],
        }
        Ok(KeyPair::from_seed(Repr::deserialize(deserializer)?.seed))
    }
}

/// Never panics; malformed keys and signatures simply fail.
pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Some(key) = public_key.verifying_key() else {
        return false;
    };
    let signature = ed25519_dalek::Signature::from_bytes(&signature.0);
    key.verify(message, &signature).is_ok()
}

// ---------------------------------------------------------------------------
// Salted commitments

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaltedCommitment {
    pub attr_name: String,
    pub value: String,
    #[serde(with = "b64_array")]
    pub salt: Salt,
    #[serde(with = "b64_array")]
    pub digest: Digest,
}

impl SaltedCommitment {
    pub fn new(attr_name: &str, value: &str) -> Self {
        Self::with_salt(attr_name, value, random_bytes())
    }

    pub fn with_salt(attr_name: &str, value: &str, salt: Salt) -> Self {
        SaltedCommitment {
            attr_name: attr_name.to_owned(),
            value: value.to_owned(),
            salt,
            digest: commitment_digest(attr_name, value, &salt),
        }
    }

    pub fn recompute(&self) -> bool {
        commitment_digest(&self.attr_name, &self.value, &self.salt) == self.digest
    }
}

/// Name and value are length-prefixed so that moving bytes across the
/// name/value boundary changes the digest.
pub fn commitment_digest(attr_name: &str, value: &str, salt: &Salt) -> Digest {
    tagged_hash(
        Domain::Commitment,
        &[
            &(attr_name.len() as u32).to_be_bytes(),
            attr_name.as_bytes(),
            &(value.len() as u32).to_be_bytes(),
            value.as_bytes(),
            salt,
        ],
    )
}

// ---------------------------------------------------------------------------
// Merkle trees

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProofStep {
    #[serde(with = "b64_array")]
    pub sibling: Digest,
    /// Which side the sibling sits on.
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub path: Vec<ProofStep>,
}

impl MerkleProof {
    /// Leaf index implied by the side bits of the path.
    pub fn implied_index(&self) -> u64 {
        self.path
            .iter()
            .enumerate()
            .filter(|(_, step)| step.side == Side::Left)
            .fold(0u64, |acc, (level, _)| acc | (1u64 << level))
    }
}

pub fn merkle_node(left: &Digest, right: &Digest) -> Digest {
    tagged_hash(Domain::MerkleNode, &[left, right])
}

/// Leaf count after padding; never below two so that even a single leaf
/// is hashed against the pad.
pub fn padded_width(leaf_count: usize) -> usize {
    leaf_count.next_power_of_two().max(2)
}

fn padded_level(leaves: &[Digest]) -> Vec<Digest> {
    let mut level = leaves.to_vec();
    level.resize(padded_width(leaves.len()), pad_digest());
    level
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks_exact(2)
        .map(|pair| merkle_node(&pair[0], &pair[1]))
        .collect()
}

pub fn merkle_root(leaves: &[Digest]) -> Result<Digest, CryptoError> {
    if leaves.is_empty() {
        return Err(CryptoError::EmptyTree);
    }
    let mut level = padded_level(leaves);
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(level[0])
}

pub fn merkle_prove(leaves: &[Digest], index: usize) -> Result<MerkleProof, CryptoError> {
    if leaves.is_empty() {
        return Err(CryptoError::EmptyTree);
    }
    if index >= leaves.len() {
        return Err(CryptoError::IndexError {
            index,
            len: leaves.len(),
        });
    }
    let mut level = padded_level(leaves);
    let mut position = index;
    let mut path = Vec::new();
    while level.len() > 1 {
        let (sibling, side) = if position % 2 == 0 {
            (level[position + 1], Side::Right)
        } else {
            (level[position - 1], Side::Left)
        };
        path.push(ProofStep { sibling, side });
        level = next_level(&level);
        position /= 2;
    }
    Ok(MerkleProof {
        leaf_index: index as u64,
        path,
    })
}

/// Checks that `leaf` sits at `proof.leaf_index` under `root`.
pub fn merkle_verify(root: &Digest, leaf: &Digest, proof: &MerkleProof) -> bool {
    if proof.path.len() >= 64 || proof.implied_index() != proof.leaf_index {
        return false;
    }
    let computed = proof.path.iter().fold(*leaf, |acc, step| match step.side {
        Side::Left => merkle_node(&step.sibling, &acc),
        Side::Right => merkle_node(&acc, &step.sibling),
    });
    &computed == root
}

// ---------------------------------------------------------------------------
// Sealed envelopes

/// Authenticated encryption of one message from a sender key to a
/// recipient key. The key exchange runs X25519 over the Montgomery forms of
/// the two Ed25519 keys, and the AEAD is XChaCha20-Poly1305 keyed by a hash
/// of the shared secret. Sender, recipient, nonce and timestamp are bound as
/// associated data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SealedEnvelope {
    pub sender_key: PublicKey,
    pub recipient_key: PublicKey,
    #[serde(with = "b64_array")]
    pub nonce: Nonce,
    pub timestamp: u64,
    #[serde(with = "b64_vec")]
    pub ciphertext: Vec<u8>,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock after epoch")
        .as_millis() as u64
}

fn envelope_cipher(
    own: &KeyPair,
    peer: &PublicKey,
    sender: &PublicKey,
    recipient: &PublicKey,
) -> Result<XChaCha20Poly1305, CryptoError> {
    let peer_point = peer
        .verifying_key()
        .ok_or(CryptoError::AuthenticationFailure)?
        .to_montgomery();
    let shared = peer_point * own.signing.to_scalar();
    let key = tagged_hash(
        Domain::EnvelopeKey,
        &[shared.as_bytes(), sender.as_bytes(), recipient.as_bytes()],
    );
    Ok(XChaCha20Poly1305::new((&key).into()))
}

fn envelope_aad(sender: &PublicKey, recipient: &PublicKey, nonce: &Nonce, timestamp: u64) -> Vec<u8> {
    let mut aad = Vec::with_capacity(32 + 32 + NONCE_LEN + 8);
    aad.extend_from_slice(sender.as_bytes());
    aad.extend_from_slice(recipient.as_bytes());
    aad.extend_from_slice(nonce);
    aad.extend_from_slice(&timestamp.to_be_bytes());
    aad
}

pub fn seal(sender: &KeyPair, recipient: &PublicKey, message: &[u8]) -> SealedEnvelope {
    seal_at(sender, recipient, message, now_ms())
}

pub fn seal_at(
    sender: &KeyPair,
    recipient: &PublicKey,
    message: &[u8],
    timestamp: u64,
) -> SealedEnvelope {
    let sender_key = sender.public_key();
    let nonce: Nonce = random_bytes();
    let cipher = envelope_cipher(sender, recipient, &sender_key, recipient)
        .expect("recipient key is a valid curve point");
    let aad = envelope_aad(&sender_key, recipient, &nonce, timestamp);
    let ciphertext = cipher
        .encrypt(
            XNonce::from_slice(&nonce),
            Payload {
                msg: message,
                aad: &aad,
            },
        )
        .expect("in-memory encryption does not fail");
    SealedEnvelope {
        sender_key,
        recipient_key: *recipient,
        nonce,
        timestamp,
        ciphertext,
    }
}

pub fn open(recipient: &KeyPair, envelope: &SealedEnvelope) -> Result<Vec<u8>, CryptoError> {
    if recipient.public_key() != envelope.recipient_key {
        return Err(CryptoError::AuthenticationFailure);
    }
    let cipher = envelope_cipher(
        recipient,
        &envelope.sender_key,
        &envelope.sender_key,
        &envelope.recipient_key,
    )?;
    let aad = envelope_aad(
        &envelope.sender_key,
        &envelope.recipient_key,
        &envelope.nonce,
        envelope.timestamp,
    );
    cipher
        .decrypt(
            XNonce::from_slice(&envelope.nonce),
            Payload {
                msg: &envelope.ciphertext,
                aad: &aad,
            },
        )
        .map_err(|_| CryptoError::AuthenticationFailure)
}
