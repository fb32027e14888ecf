#![allow(dead_code)]

use std::collections::BTreeMap;

use bdimhs_core::anoncreds::{self, CredentialDefinition, RevocationRegistry, Schema};
use bdimhs_core::crypto::KeyPair;
use bdimhs_core::ledger::{
    GenesisConfig, GenesisNym, LedgerPool, LedgerReader, NymPayload, Receipt, Role, TxnKind,
    TxnRequest,
};

pub const STEWARD_SEED: [u8; 32] = *b"000000000000000000000000Steward1";
pub const TRUSTEE_SEED: [u8; 32] = *b"000000000000000000000000Trustee1";

pub struct Actor {
    pub key: KeyPair,
}

impl Actor {
    pub fn new(key: KeyPair) -> Self {
        Actor { key }
    }

    pub fn random() -> Self {
        Actor::new(KeyPair::random())
    }

    pub fn did(&self) -> String {
        self.key.did()
    }

    pub fn request<P: serde::Serialize>(&self, kind: TxnKind, payload: &P) -> TxnRequest {
        TxnRequest::new(kind, payload, &self.did(), &self.key)
    }
}

pub fn steward() -> Actor {
    Actor::new(KeyPair::from_seed(STEWARD_SEED))
}

pub fn trustee() -> Actor {
    Actor::new(KeyPair::from_seed(TRUSTEE_SEED))
}

pub fn genesis(nodes: usize) -> GenesisConfig {
    let mut g = GenesisConfig::desk(nodes, 9701, &[steward().key.public_key()]);
    let t = trustee().key.public_key();
    g.nyms.push(GenesisNym {
        did: t.did(),
        verkey: t.verkey(),
        role: Role::Trustee,
    });
    g
}

pub fn pool(nodes: usize) -> LedgerPool {
    LedgerPool::bootstrap(genesis(nodes)).unwrap()
}

pub fn nym(target: &KeyPair, role: Option<Role>) -> NymPayload {
    NymPayload {
        dest: target.did(),
        verkey: target.public_key(),
        role,
    }
}

/// Registers a fresh actor holding `role` (written by the genesis steward).
pub fn onboard(pool: &LedgerPool, role: Role) -> Actor {
    let actor = Actor::random();
    pool.submit(steward().request(TxnKind::Nym, &nym(&actor.key, Some(role))))
        .unwrap();
    actor
}

pub fn pid_attrs() -> [&'static str; 5] {
    ["licenseNumber", "licenseExpiryDate", "designation", "medicalDiploma", "fullName"]
}

pub fn pid_values() -> BTreeMap<String, String> {
    [
        ("licenseNumber", "LIC-99812"),
        ("licenseExpiryDate", "2027-12-31"),
        ("designation", "physician"),
        ("medicalDiploma", "MBBS, University of Dhaka"),
        ("fullName", "Nadia Rahman"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

pub struct IssuerSetup {
    pub issuer: Actor,
    pub schema: Schema,
    pub schema_receipt: Receipt,
    pub cred_def: CredentialDefinition,
    pub cred_def_key: KeyPair,
    pub registry: Option<RevocationRegistry>,
}

/// Registers PID schema, credential definition and (optionally) a
/// revocation registry for a fresh endorser.
pub fn issuer_setup(pool: &LedgerPool, revocable: bool, max_cred_num: u64) -> IssuerSetup {
    let issuer = onboard(pool, Role::Endorser);
    let schema = anoncreds::create_schema(&issuer.did(), "PID", "1.0", &pid_attrs()).unwrap();
    let schema_receipt = pool.submit(issuer.request(TxnKind::Schema, &schema)).unwrap();
    let (cred_def, cred_def_key) =
        anoncreds::create_cred_def(&issuer.did(), &schema, schema_receipt.seq_no, "default", revocable);
    pool.submit(issuer.request(TxnKind::CredDef, &cred_def)).unwrap();
    let registry = revocable.then(|| {
        let reg =
            RevocationRegistry::new(&issuer.did(), &cred_def.cred_def_id, "r1", max_cred_num).unwrap();
        pool.submit(issuer.request(TxnKind::RevRegDef, &reg.definition()))
            .unwrap();
        reg
    });
    assert_eq!(pool.get_schema(&schema.schema_id).unwrap(), schema);
    IssuerSetup {
        issuer,
        schema,
        schema_receipt,
        cred_def,
        cred_def_key,
        registry,
    }
}
