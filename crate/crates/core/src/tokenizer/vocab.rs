//! Frozen id layout of the 5389-token vocabulary.
//!
//! | ids         | kind                         |
//! |-------------|------------------------------|
//! | 0..=4       | PAD, MASK, BOS, EOS, PLAY    |
//! | 5..=132     | pitch 0..=127                |
//! | 133..=260   | velocity 0..=127             |
//! | 261..=5260  | timing 0..=4999 ms           |
//! | 5261..=5388 | pedal 0..=127                |

use std::ops::RangeInclusive;

pub type TokenId = u16;

pub const PAD: TokenId = 0;
pub const MASK: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
/// Reserved; never emitted.
pub const PLAY: TokenId = 4;

pub const PITCH_BASE: TokenId = 5;
pub const VELOCITY_BASE: TokenId = 133;
pub const TIMING_BASE: TokenId = 261;
pub const PEDAL_BASE: TokenId = 5261;
pub const VOCAB_SIZE: usize = 5389;

pub const PITCH_VALUES: u16 = 128;
pub const VELOCITY_VALUES: u16 = 128;
pub const TIMING_VALUES: u16 = 5000;
pub const PEDAL_VALUES: u16 = 128;

pub const MAX_DURATION_MS: u16 = 4999;
pub const MAX_IOI_MS: u16 = 4990;

pub const TOKENS_PER_NOTE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Pad,
    Mask,
    Bos,
    Eos,
    Play,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Special(Special),
    Pitch(u8),
    Velocity(u8),
    Timing(u16),
    Pedal(u8),
}

impl TokenKind {
    pub fn from_id(id: TokenId) -> Option<TokenKind> {
        Some(match id {
            PAD => TokenKind::Special(Special::Pad),
            MASK => TokenKind::Special(Special::Mask),
            BOS => TokenKind::Special(Special::Bos),
            EOS => TokenKind::Special(Special::Eos),
            PLAY => TokenKind::Special(Special::Play),
            5..=132 => TokenKind::Pitch((id - PITCH_BASE) as u8),
            133..=260 => TokenKind::Velocity((id - VELOCITY_BASE) as u8),
            261..=5260 => TokenKind::Timing(id - TIMING_BASE),
            5261..=5388 => TokenKind::Pedal((id - PEDAL_BASE) as u8),
            _ => return None,
        })
    }

    /// Panics if a value lies outside its block.
    pub fn id(self) -> TokenId {
        match self {
            TokenKind::Special(s) => match s {
                Special::Pad => PAD,
                Special::Mask => MASK,
                Special::Bos => BOS,
                Special::Eos => EOS,
                Special::Play => PLAY,
            },
            TokenKind::Pitch(v) => {
                assert!(v < 128);
                PITCH_BASE + v as u16
            }
            TokenKind::Velocity(v) => {
                assert!(v < 128);
                VELOCITY_BASE + v as u16
            }
            TokenKind::Timing(v) => {
                assert!(v < TIMING_VALUES);
                TIMING_BASE + v
            }
            TokenKind::Pedal(v) => {
                assert!(v < 128);
                PEDAL_BASE + v as u16
            }
        }
    }
}

/// Position of a token inside its 8-token note frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Pitch,
    Ioi,
    Velocity,
    Duration,
    /// Pedal sample 0..=3.
    Pedal(u8),
}

impl Slot {
    pub const ALL: [Slot; TOKENS_PER_NOTE] = [
        Slot::Pitch,
        Slot::Ioi,
        Slot::Velocity,
        Slot::Duration,
        Slot::Pedal(0),
        Slot::Pedal(1),
        Slot::Pedal(2),
        Slot::Pedal(3),
    ];

    pub fn of_position(pos: usize) -> Slot {
        Slot::ALL[pos % TOKENS_PER_NOTE]
    }

    /// Ids a token in this slot may take.
    pub fn legal_range(self) -> RangeInclusive<TokenId> {
        match self {
            Slot::Pitch => PITCH_BASE..=PITCH_BASE + PITCH_VALUES - 1,
            Slot::Ioi => TIMING_BASE..=TIMING_BASE + MAX_IOI_MS,
            Slot::Velocity => VELOCITY_BASE..=VELOCITY_BASE + VELOCITY_VALUES - 1,
            Slot::Duration => TIMING_BASE..=TIMING_BASE + MAX_DURATION_MS,
            Slot::Pedal(_) => PEDAL_BASE..=PEDAL_BASE + PEDAL_VALUES - 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::Pitch => "Pitch",
            Slot::Ioi => "IOI",
            Slot::Velocity => "Velocity",
            Slot::Duration => "Duration",
            Slot::Pedal(_) => "Pedal",
        }
    }

    /// Value carried by `id` in this slot, if legal.
    pub fn value_of(self, id: TokenId) -> Option<u16> {
        let range = self.legal_range();
        range.contains(&id).then(|| id - range.start())
    }

    pub fn token(self, value: u16) -> TokenId {
        let id = self.legal_range().start() + value;
        debug_assert!(self.legal_range().contains(&id));
        id
    }
}

/// FNV-1a over the layout table; stored in shard headers to detect vocabulary drift.
pub fn vocabulary_checksum() -> u64 {
    let table: [(u16, u16); 5] = [
        (PAD, 5),
        (PITCH_BASE, PITCH_VALUES),
        (VELOCITY_BASE, VELOCITY_VALUES),
        (TIMING_BASE, TIMING_VALUES),
        (PEDAL_BASE, PEDAL_VALUES),
    ];
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for (base, size) in table {
        for b in base.to_le_bytes().into_iter().chain(size.to_le_bytes()) {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}
