// SPDX-License-Identifier: Apache-2.0

//! Bit-accurate model of a low-voltage-swing SerDes link used as a
//! microcontroller peripheral.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: the 8b/10b codec, TX and RX datapaths, the bang-bang CDR
//! loop, the behavioral channel, the two-chip link simulation and the
//! duty-cycled energy model. File formats and the command-line front end live
//! in the `swinglink` crate.

#![no_std]
#![warn(rust_2018_idioms, missing_copy_implementations)]
// Code groups are written as the 6b and 4b sub-blocks, `abcdei_fghj`.
#![allow(clippy::unusual_byte_groupings)]

extern crate alloc;

pub mod cdr;
pub mod channel;
pub mod codec;
pub mod detector;
pub mod energy;
pub mod link;
pub mod rx;
pub mod time;
pub mod trace;
pub mod tx;
pub mod waveform;
pub mod word;

pub use codec::{ByteSymbol, CodeGroup, CodecError, Disparity};
pub use word::{encode_word, Word40, WordKind};
