//! Behavioral model of a 64×64 XNOR-RRAM in-memory-computing macro.
//!
//! The crate covers the full compute path of the macro:
//!
//! * [`device`]: stochastic 1T1R cell programming with write-verify loops,
//! * [`array`]: the XNOR bitcell array and its resistive-divider bitline,
//! * [`adc`]: the 3-bit flash ADC, reference calibration and quantizers,
//! * [`mapper`]: tiling of binarized layers onto 64×64 macros,
//! * [`emulator`]: binarized-network inference at three fidelity levels,
//! * [`perf`]: throughput / figure-of-merit arithmetic and divider power.
//!
//! Everything here is `no_std` + `alloc`. File formats, datasets and the
//! command-line front end live in the `xrram` companion crate.

#![no_std]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adc;
pub mod array;
pub mod device;
pub mod emulator;
pub mod error;
pub mod mapper;
pub mod perf;
pub mod rng;

pub use error::{Error, Result};

/// A binary value as stored in weights and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    #[inline]
    pub fn from_bool(plus: bool) -> Self {
        if plus {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    #[inline]
    pub fn is_plus(self) -> bool {
        matches!(self, Sign::Plus)
    }

    #[inline]
    pub fn value(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    /// XNOR in the ±1 domain: +1 iff both signs agree.
    #[inline]
    pub fn xnor(self, other: Sign) -> Sign {
        Sign::from_bool(self == other)
    }
}

impl core::ops::Neg for Sign {
    type Output = Sign;

    fn neg(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}
