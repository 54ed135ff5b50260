//! Seed derivation for participants and trials.
//!
//! Every random stream in a run descends from one 64-bit base seed:
//!
//! * participant seed = `split(base, fnv1a64(participant_id))`
//! * trial seed       = `split(participant_seed, TRIAL_STREAM + trial_index)`
//! * observer seed    = `split(participant_seed, OBSERVER_STREAM)`
//! * schedule seed    = `split(participant_seed, SCHEDULE_STREAM + study tag)`
//!
//! where `split(a, b) = splitmix64(a ^ splitmix64(b))`. Streams are then fed
//! to ChaCha8, so outputs are independent of thread scheduling and platform.

use rand::RngCore;

pub const TRIAL_STREAM: u64 = 0x7472_6961_6c00_0000;
pub const OBSERVER_STREAM: u64 = 0x6f62_7365_7276_6572;
pub const SCHEDULE_STREAM: u64 = 0x7363_6865_6400_0000;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn split(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

/// FNV-1a, 64-bit.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn participant_seed(base: u64, participant_id: &str) -> u64 {
    split(base, label_hash(participant_id))
}

pub fn trial_seed(participant_seed: u64, trial_index: usize) -> u64 {
    split(participant_seed, TRIAL_STREAM.wrapping_add(trial_index as u64))
}

pub fn observer_seed(participant_seed: u64) -> u64 {
    split(participant_seed, OBSERVER_STREAM)
}

/// Unbiased index in `0..n` (Lemire's multiply-and-reject).
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "empty range");
    let n = n as u64;
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

/// Fisher-Yates shuffle driven by [`uniform_index`].
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}
