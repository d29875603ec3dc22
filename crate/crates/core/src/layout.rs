//! Fixed VM memory map shared by the interpreter and the rewriter.
//!
//! Addresses are byte addresses; every access is one aligned 64-bit word.
//!
//! ```text
//! 0x00000 .. 0x7e000   program data, stack grows down from 0x7e000
//! 0x7e000 .. 0x7f000   context slab: routing words, saved registers, spills
//! 0x7f000 .. 0x80000   trash region (absorbs passive writes)
//! ```

pub const WORD: u64 = 8;
pub const MEM_WORDS: usize = 1 << 16;
pub const MEM_BYTES: u64 = (MEM_WORDS as u64) * WORD;

pub const TRASH_BASE: u64 = MEM_BYTES - 0x1000;
pub const TRASH_END: u64 = MEM_BYTES;
/// Midpoint of the trash region; every masked passive access lands here.
pub const TRASH_ADDR: u64 = TRASH_BASE + 0x800;
/// A trash word that is never written: reads as an empty output record.
pub const EMPTY_RECORD: u64 = TRASH_BASE;

pub const RESERVED_BASE: u64 = TRASH_BASE - 0x1000;
/// Initial stack pointer; the first push writes `STACK_TOP - 8`.
pub const STACK_TOP: u64 = RESERVED_BASE;

/// Route word currently being consumed.
pub const PATH_SLOT: u64 = RESERVED_BASE;
/// Masked route word installed at the next swap.
pub const NEXT_SLOT: u64 = RESERVED_BASE + 0x08;
/// Hops already consumed from the current route word.
pub const HOP_SLOT: u64 = RESERVED_BASE + 0x10;
/// Activity mask of the node being entered, XORed with that node's polarity.
pub const MASK_SLOT: u64 = RESERVED_BASE + 0x18;
/// Unfolded activity mask of the current node (0 active, all-ones passive).
pub const MCUR_SLOT: u64 = RESERVED_BASE + 0x20;
pub const NOTM_SLOT: u64 = RESERVED_BASE + 0x28;
/// Difference of the last captured comparison.
pub const CMP_SLOT: u64 = RESERVED_BASE + 0x30;
pub const SPILL_SLOTS: [u64; 4] = [
    RESERVED_BASE + 0x40,
    RESERVED_BASE + 0x48,
    RESERVED_BASE + 0x50,
    RESERVED_BASE + 0x58,
];
/// Two-word output record `[len, value]` used by active output calls.
pub const OUT_RECORD: u64 = RESERVED_BASE + 0x60;
/// Saved register file `r0..r7, sp`.
pub const REG_SLAB: u64 = RESERVED_BASE + 0x80;

pub fn reg_slot(index: usize) -> u64 {
    REG_SLAB + WORD * index as u64
}

pub fn is_trash(addr: u64) -> bool {
    (TRASH_BASE..TRASH_END).contains(&addr)
}

/// Context slab or trash: memory owned by the rewriter rather than the program.
pub fn is_reserved(addr: u64) -> bool {
    addr >= RESERVED_BASE
}

/// Routing machinery slots.
pub fn is_routing_slot(addr: u64) -> bool {
    (PATH_SLOT..SPILL_SLOTS[0]).contains(&addr) || (OUT_RECORD..REG_SLAB).contains(&addr)
        || SPILL_SLOTS.contains(&addr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_do_not_overlap() {
        assert!(reg_slot(8) + WORD <= TRASH_BASE);
        assert!(is_trash(TRASH_ADDR) && is_trash(EMPTY_RECORD));
        assert!(!is_reserved(STACK_TOP - WORD));
        assert!(is_routing_slot(PATH_SLOT) && is_routing_slot(SPILL_SLOTS[3]));
        assert!(!is_routing_slot(reg_slot(0)));
        assert_eq!(TRASH_ADDR % WORD, 0);
    }
}
