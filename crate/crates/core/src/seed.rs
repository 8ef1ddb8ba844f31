//! Named sub-seeds.
//!
//! Every random stream in a run is seeded with `derive(global, name)`:
//! the FNV-1a hash of `name` is xored into the global seed and the result
//! is passed through one SplitMix64 finalisation round. Names are stable
//! strings such as `"synth.spec"` or `"train.stage.full"`, so adding a new
//! stream never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(global: u64, name: &str) -> u64 {
    splitmix64(global ^ fnv1a(name.as_bytes()))
}

pub fn rng(global: u64, name: &str) -> Rng {
    Rng::seed_from_u64(derive(global, name))
}
