//! Deterministic random substreams keyed by seed, stage, purpose, iteration and view.
//!
//! Every draw in a run comes from its own ChaCha stream, so results do not depend on
//! thread scheduling or on how many other draws happened before.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Deform = 1,
    Texture = 2,
    Refine = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Camera = 1,
    Timestep = 2,
    Noise = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for one `(stage, purpose, iteration, view)` draw under `seed`.
pub fn substream(seed: u64, stage: Stage, purpose: Purpose, iteration: u64, view: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut key = splitmix(stage as u64);
    key = splitmix(key ^ purpose as u64);
    key = splitmix(key ^ iteration);
    key = splitmix(key ^ view);
    rng.set_stream(key);
    rng
}
