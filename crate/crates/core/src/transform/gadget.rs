//! Route words and the arithmetic bit-flip gadget.
//!
//! A route word packs a walk through the target graph:
//!
//! ```text
//! bits 0..6    L  hops until the next active node (1..=55; 0 only for the
//!                initial word, whose active node is the entry itself)
//! bits 6..9    e  extra passive hops walked past the active node
//! bit  63-i       stored direction bit of hop i, for i < L + e
//! ```
//!
//! Stored bits are pre-images under the per-node flip; the runtime applies
//! the flip of the node being left before branching.

use rand::Rng;

use crate::embed::MAX_ROUTE_HOPS;

pub const MAX_EXTRA_HOPS: usize = 7;
pub const EXTRA_SHIFT: u32 = 6;
pub const LEN_MASK: u64 = 0x3f;
pub const EXTRA_MASK: u64 = 0x7;
/// Newton iterations for the inverse of an odd word modulo 2^64.
pub const INVERSE_ROUNDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteWord {
    pub to_active: usize,
    pub extra: usize,
    /// Raw (already stored, i.e. pre-flip) bits, one per hop.
    pub bits: Vec<bool>,
}

impl RouteWord {
    pub fn total(&self) -> usize {
        self.to_active + self.extra
    }

    /// Unused bit positions are filled from `rng`.
    pub fn encode<R: Rng>(&self, rng: &mut R) -> u64 {
        assert!(self.to_active <= LEN_MASK as usize && self.extra <= MAX_EXTRA_HOPS);
        assert!(self.bits.len() == self.total() && self.total() <= MAX_ROUTE_HOPS);
        let mut w = rng.gen::<u64>() & !(LEN_MASK | (EXTRA_MASK << EXTRA_SHIFT));
        for (i, &b) in self.bits.iter().enumerate() {
            let bit = 1u64 << (63 - i);
            if b {
                w |= bit;
            } else {
                w &= !bit;
            }
        }
        w | self.to_active as u64 | ((self.extra as u64) << EXTRA_SHIFT)
    }

    pub fn decode(w: u64) -> RouteWord {
        let to_active = (w & LEN_MASK) as usize;
        let extra = ((w >> EXTRA_SHIFT) & EXTRA_MASK) as usize;
        let n = (to_active + extra).min(MAX_ROUTE_HOPS);
        RouteWord { to_active, extra, bits: (0..n).map(|i| w >> (63 - i) & 1 == 1).collect() }
    }
}

/// Modular inverse of an odd word by Newton iteration, as the gadget does it.
pub fn inverse_odd(a: u64) -> u64 {
    debug_assert!(a & 1 == 1);
    let mut x = a;
    for _ in 0..INVERSE_ROUNDS {
        x = x.wrapping_mul(2u64.wrapping_sub(a.wrapping_mul(x)));
    }
    x
}

/// `t = c·a + r·a; r' = (t / a) mod 2` in wrapping arithmetic, with `a` forced odd.
/// An odd `c` flips `r`, an even `c` keeps it.
pub fn flip_gadget(c: u64, r: u64, a: u64) -> u64 {
    let a = a | 1;
    let t = c.wrapping_mul(a).wrapping_add(r.wrapping_mul(a));
    t.wrapping_mul(inverse_odd(a)) & 1
}

/// Same gadget over the rationals, as written with real division.
pub fn flip_gadget_rational(c: u64, r: u64, a: u64) -> u64 {
    let a = u128::from(a.max(1));
    let t = u128::from(c) * a + u128::from(r) * a;
    ((t / a) % 2) as u64
}

/// Gadget constant: odd for a flip, even for identity, otherwise random.
pub fn gadget_constant<R: Rng>(flip: bool, rng: &mut R) -> u64 {
    let c = rng.gen_range(2u64..1 << 16) & !1;
    c | u64::from(flip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gadget_with_five_flips_both_bits() {
        for a in [1u64, 2, 3, 12345, u64::MAX, 0x8000_0000_0000_0000] {
            assert_eq!(flip_gadget(5, 0, a), 1);
            assert_eq!(flip_gadget(5, 1, a), 0);
            assert_eq!(flip_gadget(4, 0, a), 0);
            assert_eq!(flip_gadget(4, 1, a), 1);
        }
        assert_eq!(flip_gadget_rational(5, 0, 77), 1);
        assert_eq!(flip_gadget_rational(5, 1, 77), 0);
    }

    #[test]
    fn newton_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = rng.gen::<u64>() | 1;
            assert_eq!(a.wrapping_mul(inverse_odd(a)), 1);
        }
    }

    #[test]
    fn route_word_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in [0usize, 1, 5, 40] {
            let extra = n.min(7) / 2;
            let bits: Vec<bool> = (0..n + extra).map(|_| rng.gen()).collect();
            let rw = RouteWord { to_active: n, extra, bits };
            assert_eq!(RouteWord::decode(rw.encode(&mut rng)), rw);
        }
    }

    #[test]
    fn constants_have_requested_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(gadget_constant(true, &mut rng) & 1, 1);
            assert_eq!(gadget_constant(false, &mut rng) & 1, 0);
        }
    }
}
