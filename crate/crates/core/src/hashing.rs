//! Stable 64-bit hashing used for feature hashing and seed derivation.
//!
//! The algorithm is frozen: FNV-1a over the input bytes, followed by the
//! SplitMix64 finalizer. Changing it changes every reference embedding.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= b as u64;
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of `bytes` under `seed`: `splitmix64(fnv1a(seed_le ++ bytes))`.
pub fn seeded_hash(seed: u64, bytes: &[u8]) -> u64 {
    let state = fnv1a(&seed.to_le_bytes(), FNV_OFFSET);
    splitmix64(fnv1a(bytes, state))
}

/// Seed for the `k`-th generated image of turn `turn` in session
/// `session_id`.
pub fn generation_seed(seed_base: u64, session_id: &str, turn: usize, k: usize) -> u64 {
    let mut state = fnv1a(&seed_base.to_le_bytes(), FNV_OFFSET);
    state = fnv1a(session_id.as_bytes(), state);
    // separator so ("a", 12) and ("a1", 2) cannot collide structurally
    state = fnv1a(&[0xff], state);
    state = fnv1a(&(turn as u64).to_le_bytes(), state);
    state = fnv1a(&(k as u64).to_le_bytes(), state);
    splitmix64(state)
}
