use bdimhs_core::crypto::{
    self, merkle_prove, merkle_root, merkle_verify, open, seal_at, KeyPair, PublicKey,
    SaltedCommitment,
};
use proptest::prelude::*;

fn keypair(seed: [u8; 32]) -> KeyPair {
    KeyPair::from_seed(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn envelope_round_trip(
        a in any::<[u8; 32]>(),
        b in any::<[u8; 32]>(),
        msg in proptest::collection::vec(any::<u8>(), 0..=64 * 1024),
        ts in any::<u64>(),
    ) {
        let sender = keypair(a);
        let recipient = keypair(b);
        let env = seal_at(&sender, &recipient.public_key(), &msg, ts);
        prop_assert_eq!(open(&recipient, &env).unwrap(), msg);
    }

    #[test]
    fn envelope_tamper_detected(
        msg in proptest::collection::vec(any::<u8>(), 1..2048),
        flip in any::<prop::sample::Index>(),
        field in 0usize..4,
    ) {
        let sender = KeyPair::random();
        let recipient = KeyPair::random();
        let mut env = seal_at(&sender, &recipient.public_key(), &msg, 1_700_000_000_000);
        match field {
            0 => { let i = flip.index(env.ciphertext.len()); env.ciphertext[i] ^= 1; }
            1 => { let i = flip.index(env.nonce.len()); env.nonce[i] ^= 1; }
            2 => env.timestamp ^= 1,
            _ => env.sender_key = KeyPair::random().public_key(),
        }
        prop_assert!(open(&recipient, &env).is_err());
    }

    #[test]
    fn envelope_wrong_recipient_rejected(msg in proptest::collection::vec(any::<u8>(), 0..512)) {
        let sender = KeyPair::random();
        let env = seal_at(&sender, &KeyPair::random().public_key(), &msg, 5);
        let mut redirected = env.clone();
        let eve = KeyPair::random();
        redirected.recipient_key = eve.public_key();
        prop_assert!(open(&eve, &env).is_err());
        prop_assert!(open(&eve, &redirected).is_err());
    }

    #[test]
    fn merkle_every_leaf_proves(leaves in proptest::collection::vec(any::<[u8; 32]>(), 1..70)) {
        let root = merkle_root(&leaves).unwrap();
        for (i, leaf) in leaves.iter().enumerate() {
            let proof = merkle_prove(&leaves, i).unwrap();
            prop_assert_eq!(proof.leaf_index, i as u64);
            prop_assert!(merkle_verify(&root, leaf, &proof));
        }
    }

    #[test]
    fn merkle_proofs_do_not_transfer(
        leaves in proptest::collection::vec(any::<[u8; 32]>(), 2..40),
        i in any::<prop::sample::Index>(),
        j in any::<prop::sample::Index>(),
    ) {
        let (i, j) = (i.index(leaves.len()), j.index(leaves.len()));
        prop_assume!(leaves[i] != leaves[j]);
        let root = merkle_root(&leaves).unwrap();
        let proof = merkle_prove(&leaves, i).unwrap();
        prop_assert!(!merkle_verify(&root, &leaves[j], &proof));
        let mut moved = proof.clone();
        moved.leaf_index = j as u64;
        prop_assume!(i != j);
        prop_assert!(!merkle_verify(&root, &leaves[i], &moved));
    }

    #[test]
    fn merkle_root_changes_with_any_leaf(
        leaves in proptest::collection::vec(any::<[u8; 32]>(), 1..40),
        k in any::<prop::sample::Index>(),
    ) {
        let k = k.index(leaves.len());
        let mut changed = leaves.clone();
        changed[k][0] ^= 0x80;
        prop_assert_ne!(merkle_root(&leaves).unwrap(), merkle_root(&changed).unwrap());
    }

    #[test]
    fn commitments_bind_name_value_and_salt(
        name in "[a-zA-Z]{1,12}",
        value in ".{0,40}",
        other in ".{0,40}",
    ) {
        let c = SaltedCommitment::new(&name, &value);
        prop_assert!(c.recompute());
        prop_assume!(other != value);
        let forged = SaltedCommitment { value: other, ..c.clone() };
        prop_assert!(!forged.recompute());
        let resalted = SaltedCommitment { salt: crypto::random_bytes(), ..c.clone() };
        prop_assert!(!resalted.recompute());
    }

    #[test]
    fn seeded_keys_are_deterministic(seed in any::<[u8; 32]>(), msg in proptest::collection::vec(any::<u8>(), 0..256)) {
        let a = keypair(seed);
        let b = keypair(seed);
        prop_assert_eq!(a.public_key(), b.public_key());
        prop_assert_eq!(a.did(), b.did());
        prop_assert_eq!(a.did().len() >= 21, true);
        let sig = a.sign(&msg);
        prop_assert!(crypto::verify(&b.public_key(), &msg, &sig));
        prop_assert_eq!(PublicKey::from_verkey(&a.public_key().verkey()).unwrap(), a.public_key());
    }
}

#[test]
fn name_value_boundary_is_unambiguous() {
    let salt = [7u8; 16];
    let a = SaltedCommitment::with_salt("ab", "c", salt);
    let b = SaltedCommitment::with_salt("a", "bc", salt);
    assert_ne!(a.digest, b.digest);
}
