use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SimConfig;

/// One independent generator per source of randomness.
#[derive(Debug, Clone)]
pub struct Streams {
    pub outages: ChaCha8Rng,
    pub overload_trials: ChaCha8Rng,
    pub bursts: ChaCha8Rng,
    pub recovery: ChaCha8Rng,
    pub daily_factor: ChaCha8Rng,
}

impl Streams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Streams {
            outages: ChaCha8Rng::seed_from_u64(cfg.seed_outages),
            overload_trials: ChaCha8Rng::seed_from_u64(cfg.seed_overload_trials),
            bursts: ChaCha8Rng::seed_from_u64(cfg.seed_bursts),
            recovery: ChaCha8Rng::seed_from_u64(cfg.seed_recovery),
            daily_factor: ChaCha8Rng::seed_from_u64(cfg.seed_daily_factor),
        }
    }
}

/// Largest seed a config file can hold (TOML integers are signed).
pub const MAX_SEED: u64 = i64::MAX as u64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `seed` for replica `replica`; replica 0 keeps the seed.
/// Mixed seeds stay below 2^63 so they remain valid config values.
pub fn replica_seed(seed: u64, replica: u32) -> u64 {
    if replica == 0 {
        seed
    } else {
        splitmix64(seed ^ splitmix64(replica as u64)) & MAX_SEED
    }
}

/// Copy of `cfg` with every stochastic stream reseeded for `replica`. The
/// synthesis seed is kept so all replicas share one grid.
pub fn replica_config(cfg: &SimConfig, replica: u32) -> SimConfig {
    SimConfig {
        seed_outages: replica_seed(cfg.seed_outages, replica),
        seed_overload_trials: replica_seed(cfg.seed_overload_trials, replica),
        seed_bursts: replica_seed(cfg.seed_bursts, replica),
        seed_recovery: replica_seed(cfg.seed_recovery, replica),
        seed_daily_factor: replica_seed(cfg.seed_daily_factor, replica),
        ..cfg.clone()
    }
}
