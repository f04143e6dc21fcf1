//! Per-trial seed derivation. A trial's streams depend only on the master
//! seed, the experiment id and the (SNR index, trial index) pair, so results
//! do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn trial_seed(master: u64, experiment: &str, snr_index: u64, trial_index: u64) -> u64 {
    let mut h = splitmix64(master);
    for v in [fnv1a(experiment.as_bytes()), snr_index, trial_index] {
        h = splitmix64(h ^ v);
    }
    h
}

/// Independent generators for the three random inputs of a trial, so that
/// e.g. changing the receiver set never perturbs the channel draw.
pub struct TrialRngs {
    pub data: ChaCha8Rng,
    pub channel: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl TrialRngs {
    pub fn new(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        TrialRngs {
            data: stream(1),
            channel: stream(2),
            noise: stream(3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference generator seeded with 0: the state
        // advances by the golden gamma before mixing.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(GOLDEN), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn seeds_differ_across_indices() {
        let a = trial_seed(1, "ber", 0, 0);
        assert_ne!(a, trial_seed(1, "ber", 0, 1));
        assert_ne!(a, trial_seed(1, "ber", 1, 0));
        assert_ne!(a, trial_seed(2, "ber", 0, 0));
        assert_ne!(a, trial_seed(1, "tap", 0, 0));
        assert_eq!(a, trial_seed(1, "ber", 0, 0));
    }

    #[test]
    fn streams_are_independent() {
        let mut r = TrialRngs::new(7);
        let d: u64 = r.data.random();
        let c: u64 = r.channel.random();
        let n: u64 = r.noise.random();
        assert!(d != c && c != n && d != n);
        let mut again = TrialRngs::new(7);
        assert_eq!(again.data.random::<u64>(), d);
    }
}
