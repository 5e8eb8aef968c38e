//! Counter-based random streams.
//!
//! Every random draw in the simulator comes from a stream keyed by
//! `(master_seed, trial, role, index)`. The key picks a ChaCha8 key and
//! stream id, so two workers never share generator state and the numbers a
//! trial sees do not depend on how trials are scheduled.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;

/// What a stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Users,
    Items,
    /// A user's noisy survey of the items (organic model).
    ItemNoise,
    /// The system's noisy sample of a user (recommender model).
    UserNoise,
    Bootstrap,
    Shuffle,
    Init,
    Split,
    /// Free for tests and ad hoc tools.
    Aux,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Users => 1,
            Role::Items => 2,
            Role::ItemNoise => 3,
            Role::UserNoise => 4,
            Role::Bootstrap => 5,
            Role::Shuffle => 6,
            Role::Init => 7,
            Role::Split => 8,
            Role::Aux => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub trial: u64,
    pub role: Role,
    /// Sub-stream within a role, e.g. the user index for per-user noise.
    pub index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, trial: u64, role: Role) -> Self {
        Self {
            master_seed,
            trial,
            role,
            index: 0,
        }
    }

    pub fn with_index(self, index: u64) -> Self {
        Self { index, ..self }
    }

    pub fn with_role(self, role: Role) -> Self {
        Self { role, ..self }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut state = self.master_seed;
        let mut mix = splitmix64(&mut state) ^ self.trial.wrapping_mul(0xD1B5_4A32_D192_ED03);
        mix = splitmix64(&mut mix) ^ self.role.tag().wrapping_mul(0x8CB9_2BA7_2F3D_8DD7);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut mix).to_le_bytes());
        }
        let mut rng = StreamRng::from_seed(seed);
        rng.set_stream(self.index);
        rng
    }
}
