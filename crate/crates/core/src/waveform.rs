//! Square M-QAM with Gray mapping and frequency-domain OFDM symbol grids.
//!
//! Bit mapping (part of the result wire format): for `M = 2^k` the first
//! `k/2` bits of a symbol select the in-phase level and the remaining `k/2`
//! the quadrature level, most significant bit first. Each half is a
//! binary-reflected Gray code `g`; its decoded index `i` maps to the level
//! `(√M − 1 − 2i)·s`, where `s` normalizes the constellation to unit average
//! energy. So the all-zero word is the `(+,+)` corner nearest the origin
//! diagonal, e.g. QPSK `00 → (1+j)/√2`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::C64;

pub const SUPPORTED_ORDERS: [usize; 4] = [4, 16, 64, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: usize,
    side: usize,
    bits_per_axis: usize,
    scale: f64,
    points: Vec<C64>,
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self> {
        if !SUPPORTED_ORDERS.contains(&order) {
            return Err(Error::invalid(format!(
                "unsupported QAM order {order}; expected one of {SUPPORTED_ORDERS:?}"
            )));
        }
        let side = (order as f64).sqrt().round() as usize;
        let bits_per_axis = side.trailing_zeros() as usize;
        // Mean energy of the odd-integer grid is 2(M−1)/3.
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let mut c = QamConstellation {
            order,
            side,
            bits_per_axis,
            scale,
            points: Vec::with_capacity(order),
        };
        c.points = (0..order).map(|w| c.point_of_word(w)).collect();
        Ok(c)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    /// Points indexed by their bit word (first bit = MSB of the index).
    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Amplitude scale of the unit grid step (half the minimum distance).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The maximum-energy `(+,+)` corner point.
    pub fn corner(&self) -> C64 {
        let a = (self.side - 1) as f64 * self.scale;
        C64::new(a, a)
    }

    fn level_of_gray(&self, g: usize) -> f64 {
        let i = gray_decode(g);
        (self.side as f64 - 1.0 - 2.0 * i as f64) * self.scale
    }

    fn point_of_word(&self, word: usize) -> C64 {
        let gi = word >> self.bits_per_axis;
        let gq = word & (self.side - 1);
        C64::new(self.level_of_gray(gi), self.level_of_gray(gq))
    }

    /// Ascending level index on one axis, ties toward the smaller level.
    fn slice_axis(&self, v: f64) -> usize {
        let t = (v / self.scale + (self.side as f64 - 1.0)) / 2.0;
        let a = (t - 0.5).ceil();
        if a.is_nan() || a < 0.0 {
            0
        } else {
            (a as usize).min(self.side - 1)
        }
    }

    fn word_of_nearest(&self, z: C64) -> usize {
        let ai = self.slice_axis(z.re);
        let aq = self.slice_axis(z.im);
        let gi = gray_encode(self.side - 1 - ai);
        let gq = gray_encode(self.side - 1 - aq);
        (gi << self.bits_per_axis) | gq
    }

    /// Nearest point; exact ties go to the smaller real part, then the
    /// smaller imaginary part.
    pub fn nearest(&self, z: C64) -> C64 {
        self.points[self.word_of_nearest(z)]
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(Error::invalid(format!(
                "{} bits is not a multiple of {k} bits per {}-QAM symbol",
                bits.len(),
                self.order
            )));
        }
        Ok(bits
            .chunks_exact(k)
            .map(|chunk| {
                let word = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
                self.points[word]
            })
            .collect())
    }

    pub fn demodulate_into(&self, z: C64, out: &mut Vec<u8>) {
        let word = self.word_of_nearest(z);
        let k = self.bits_per_symbol();
        for b in (0..k).rev() {
            out.push(((word >> b) & 1) as u8);
        }
    }

    pub fn demodulate(&self, symbols: &[C64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for &z in symbols {
            self.demodulate_into(z, &mut out);
        }
        out
    }
}

fn gray_encode(i: usize) -> usize {
    i ^ (i >> 1)
}

fn gray_decode(mut g: usize) -> usize {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

pub fn qam_modulate(bits: &[u8], m: usize) -> Result<Vec<C64>> {
    QamConstellation::new(m)?.modulate(bits)
}

pub fn qam_demodulate(symbols: &[C64], m: usize) -> Result<Vec<u8>> {
    Ok(QamConstellation::new(m)?.demodulate(symbols))
}

pub fn nearest_constellation_point(z: C64, m: usize) -> Result<C64> {
    Ok(QamConstellation::new(m)?.nearest(z))
}

/// Known symbols on reserved subcarriers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PilotSpec {
    positions: Vec<usize>,
    values: Vec<C64>,
}

impl PilotSpec {
    pub fn new(positions: Vec<usize>, values: Vec<C64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} pilot positions but {} pilot values",
                positions.len(),
                values.len()
            )));
        }
        let mut pairs: Vec<(usize, C64)> = positions.into_iter().zip(values).collect();
        pairs.sort_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!(
                "pilot position {} used more than once",
                w[0].0
            )));
        }
        Ok(PilotSpec {
            positions: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// One pilot at `⌊n/2⌋` carrying the constellation's corner point.
    pub fn center(n: usize, constellation: &QamConstellation) -> Self {
        PilotSpec {
            positions: vec![n / 2],
            values: vec![constellation.corner()],
        }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.positions.iter().copied().zip(self.values.iter().copied())
    }
}

/// One user's frequency-domain OFDM symbol (the diagonal of `X_f`).
#[derive(Debug, Clone, PartialEq)]
pub struct FreqSymbolGrid {
    pub n: usize,
    pub symbols: Vec<C64>,
    pub pilots: PilotSpec,
    /// Subcarriers this user leaves empty (other users' pilots).
    pub silent: Vec<usize>,
    /// Data subcarriers in ascending order.
    pub data_positions: Vec<usize>,
    /// Payload bits, `bits_per_symbol` per data subcarrier in `data_positions` order.
    pub bits: Vec<u8>,
}

impl FreqSymbolGrid {
    /// Fills every subcarrier that is neither a pilot nor silent with a
    /// uniformly drawn constellation point.
    pub fn build<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        constellation: &QamConstellation,
        pilots: &PilotSpec,
        silent: &[usize],
    ) -> Result<Self> {
        let mut role = vec![0u8; n];
        for &p in pilots.positions() {
            if p >= n {
                return Err(Error::invalid(format!("pilot position {p} outside [0, {n})")));
            }
            role[p] = 1;
        }
        for &s in silent {
            if s >= n {
                return Err(Error::invalid(format!("silent subcarrier {s} outside [0, {n})")));
            }
            if role[s] == 1 {
                return Err(Error::invalid(format!(
                    "subcarrier {s} is both a pilot and silent"
                )));
            }
            role[s] = 2;
        }
        let k = constellation.bits_per_symbol();
        let mut symbols = vec![C64::new(0.0, 0.0); n];
        let mut data_positions = Vec::with_capacity(n);
        let mut bits = Vec::with_capacity(n * k);
        for (pos, &r) in role.iter().enumerate() {
            if r != 0 {
                continue;
            }
            let word = rng.random_range(0..constellation.order());
            for b in (0..k).rev() {
                bits.push(((word >> b) & 1) as u8);
            }
            symbols[pos] = constellation.points()[word];
            data_positions.push(pos);
        }
        for (p, v) in pilots.iter() {
            symbols[p] = v;
        }
        let mut silent = silent.to_vec();
        silent.sort_unstable();
        silent.dedup();
        Ok(FreqSymbolGrid {
            n,
            symbols,
            pilots: pilots.clone(),
            silent,
            data_positions,
            bits,
        })
    }

    /// Fraction of subcarriers carrying payload.
    pub fn utilization(&self) -> f64 {
        self.data_positions.len() as f64 / self.n as f64
    }
}

/// Single-user grid with `pilots` and data everywhere else.
pub fn build_tx_symbol<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    pilots: &PilotSpec,
) -> Result<FreqSymbolGrid> {
    let c = QamConstellation::new(m)?;
    FreqSymbolGrid::build(rng, n, &c, pilots, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn qpsk_zero_word_is_first_quadrant() {
        let s = qam_modulate(&[0, 0], 4).unwrap();
        assert!((s[0] - C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn unit_average_energy() {
        for m in SUPPORTED_ORDERS {
            let c = QamConstellation::new(m).unwrap();
            let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((e - 1.0).abs() < 1e-12, "M={m}: {e}");
        }
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        for m in SUPPORTED_ORDERS {
            let c = QamConstellation::new(m).unwrap();
            let step = 2.0 * c.scale();
            for (wa, a) in c.points().iter().enumerate() {
                for (wb, b) in c.points().iter().enumerate() {
                    if ((a - b).norm() - step).abs() < 1e-9 {
                        assert_eq!((wa ^ wb).count_ones(), 1, "M={m} {a} {b}");
                    }
                }
            }
            let mut words: Vec<usize> = c.points().iter().map(|&p| c.word_of_nearest(p)).collect();
            words.sort_unstable();
            assert_eq!(words, (0..m).collect::<Vec<_>>());
        }
    }

    #[test]
    fn exact_points_demodulate_to_own_bits() {
        for m in SUPPORTED_ORDERS {
            let c = QamConstellation::new(m).unwrap();
            for (w, &p) in c.points().iter().enumerate() {
                let bits = c.demodulate(&[p]);
                let back = bits.iter().fold(0usize, |a, &b| (a << 1) | b as usize);
                assert_eq!(back, w);
                assert_eq!(c.nearest(p), p);
            }
        }
    }

    #[test]
    fn origin_tie_breaks_to_smaller_real_then_imag() {
        let c = QamConstellation::new(4).unwrap();
        let p = c.nearest(C64::new(0.0, 0.0));
        assert!((p - C64::new(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2)).norm() < 1e-15);
        assert_eq!(qam_demodulate(&[C64::new(0.0, 0.0)], 4).unwrap(), vec![1, 1]);
        // Halfway between two 16-QAM columns on the real axis only.
        let c16 = QamConstellation::new(16).unwrap();
        let s = c16.scale();
        let q = c16.nearest(C64::new(2.0 * s, 3.0 * s));
        assert!((q - C64::new(s, 3.0 * s)).norm() < 1e-12);
    }

    #[test]
    fn nearest_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for m in SUPPORTED_ORDERS {
            let c = QamConstellation::new(m).unwrap();
            for _ in 0..2000 {
                let z = C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let brute = c
                    .points()
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        (a - z)
                            .norm_sqr()
                            .total_cmp(&(b - z).norm_sqr())
                            .then(a.re.total_cmp(&b.re))
                            .then(a.im.total_cmp(&b.im))
                    })
                    .unwrap();
                assert_eq!(c.nearest(z), brute);
            }
        }
    }

    #[test]
    fn modulate_rejects_partial_symbol() {
        assert!(qam_modulate(&[0, 1, 1], 4).is_err());
        assert!(qam_modulate(&[0; 6], 8).is_err());
    }

    #[test]
    fn grid_pins_pilot_and_records_bits() {
        let c = QamConstellation::new(4).unwrap();
        let pilots = PilotSpec::new(vec![0], vec![C64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = FreqSymbolGrid::build(&mut rng, 8, &c, &pilots, &[]).unwrap();
        assert_eq!(g.symbols[0], pilots.values()[0]);
        assert_eq!(g.data_positions.len(), 7);
        assert_eq!(g.bits.len(), 14);
        let data: Vec<C64> = g.data_positions.iter().map(|&p| g.symbols[p]).collect();
        assert_eq!(c.demodulate(&data), g.bits);
    }

    #[test]
    fn single_pilot_utilization() {
        let c = QamConstellation::new(64).unwrap();
        let pilots = PilotSpec::center(1024, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = build_tx_symbol(&mut rng, 1024, 64, &pilots).unwrap();
        assert_eq!(g.data_positions.len(), 1023);
        assert_eq!(format!("{:.1}", 100.0 * g.utilization()), "99.9");
        assert_eq!(g.symbols[512], c.corner());
    }

    #[test]
    fn same_seed_same_grid() {
        let c = QamConstellation::new(16).unwrap();
        let pilots = PilotSpec::center(64, &c);
        let a = FreqSymbolGrid::build(&mut ChaCha8Rng::seed_from_u64(3), 64, &c, &pilots, &[]).unwrap();
        let b = FreqSymbolGrid::build(&mut ChaCha8Rng::seed_from_u64(3), 64, &c, &pilots, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_pilot_rejected() {
        let v = C64::new(1.0, 0.0);
        assert!(PilotSpec::new(vec![3, 3], vec![v, v]).is_err());
        let c = QamConstellation::new(4).unwrap();
        let p = PilotSpec::new(vec![2], vec![v]).unwrap();
        assert!(FreqSymbolGrid::build(&mut ChaCha8Rng::seed_from_u64(0), 4, &c, &p, &[2]).is_err());
        assert!(FreqSymbolGrid::build(&mut ChaCha8Rng::seed_from_u64(0), 2, &c, &p, &[]).is_err());
    }

    #[test]
    fn average_transmit_energy_is_unity() {
        let c = QamConstellation::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = FreqSymbolGrid::build(&mut rng, 100_000, &c, &PilotSpec::default(), &[]).unwrap();
        let e = g.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / g.n as f64;
        assert!((e - 1.0).abs() < 0.01, "{e}");
    }
}
