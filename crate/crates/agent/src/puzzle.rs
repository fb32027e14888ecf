//! Hashcash-style client puzzle attached to invitations.

use bdimhs_core::crypto::{tagged_hash, Domain, Nonce};

pub const MAX_DIFFICULTY: u8 = 24;

pub fn leading_zero_bits(digest: &[u8]) -> u32 {
    let mut bits = 0;
    for byte in digest {
        if *byte == 0 {
            bits += 8;
        } else {
            return bits + byte.leading_zeros();
        }
    }
    bits
}

fn attempt(challenge: &[u8; 16], invitation_nonce: &Nonce, counter: u64) -> [u8; 32] {
    tagged_hash(
        Domain::Puzzle,
        &[challenge, invitation_nonce, &counter.to_be_bytes()],
    )
}

pub fn check(challenge: &[u8; 16], invitation_nonce: &Nonce, difficulty: u8, solution: u64) -> bool {
    leading_zero_bits(&attempt(challenge, invitation_nonce, solution)) >= u32::from(difficulty)
}

/// Smallest counter meeting the difficulty.
pub fn solve(challenge: &[u8; 16], invitation_nonce: &Nonce, difficulty: u8) -> u64 {
    (0u64..)
        .find(|c| check(challenge, invitation_nonce, difficulty, *c))
        .expect("a solution exists")
}
