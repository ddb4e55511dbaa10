// SPDX-License-Identifier: Apache-2.0

//! Arithmetic in F2[a]/(a^8 + a^2 + 1).
//!
//! The modulus factors as (a^4 + a + 1)^2, so this is a ring rather than a
//! field: zero divisors exist. Everything downstream that needs invertibility
//! (the diffusion matrix, modifier solving) checks it explicitly over GF(2).

use std::fmt;
use std::ops::{Add, AddAssign, Mul};

use serde::{Deserialize, Serialize};

/// Low byte of the reduction polynomial a^8 + a^2 + 1.
pub const REDUCTION: u8 = 0x05;

/// An element of the ring; bit `i` is the coefficient of a^i.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RingElem(pub u8);

impl RingElem {
    pub const ZERO: RingElem = RingElem(0);
    pub const ONE: RingElem = RingElem(1);
    /// The generator a.
    pub const ALPHA: RingElem = RingElem(2);

    /// Multiply by a: shift left, fold the carried-out a^8 back as a^2 + 1.
    #[inline]
    pub fn mul_alpha(self) -> RingElem {
        let carry = self.0 >> 7;
        RingElem((self.0 << 1) ^ (carry * REDUCTION))
    }

    /// Shift-and-add multiplication, reducing as it goes.
    pub fn times(self, rhs: RingElem) -> RingElem {
        let mut acc = 0u8;
        let mut a = self;
        let mut b = rhs.0;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a.0;
            }
            a = a.mul_alpha();
            b >>= 1;
        }
        RingElem(acc)
    }

    pub fn pow(self, mut e: u32) -> RingElem {
        let mut base = self;
        let mut acc = RingElem::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.times(base);
            }
            base = base.times(base);
            e >>= 1;
        }
        acc
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// 8x8 GF(2) matrix of `x -> self * x`, column `j` is `self * a^j`.
    pub fn bit_matrix(self) -> [u8; 8] {
        let mut cols = [0u8; 8];
        let mut basis = RingElem::ONE;
        for col in cols.iter_mut() {
            *col = self.times(basis).0;
            basis = basis.mul_alpha();
        }
        cols
    }
}

// Addition in characteristic 2 is XOR.
impl Add for RingElem {
    type Output = RingElem;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: RingElem) -> RingElem {
        RingElem(self.0 ^ rhs.0)
    }
}

impl AddAssign for RingElem {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: RingElem) {
        self.0 ^= rhs.0;
    }
}

impl Mul for RingElem {
    type Output = RingElem;
    #[inline]
    fn mul(self, rhs: RingElem) -> RingElem {
        self.times(rhs)
    }
}

impl fmt::Debug for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RingElem({:#04x})", self.0)
    }
}

impl fmt::Display for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return write!(f, "0");
        }
        let mut first = true;
        for i in (0..8).rev() {
            if self.0 >> i & 1 == 1 {
                if !first {
                    write!(f, "+")?;
                }
                first = false;
                match i {
                    0 => write!(f, "1")?,
                    1 => write!(f, "a")?,
                    _ => write!(f, "a^{i}")?,
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`RingElem::times`].
pub fn ring_mul(a: RingElem, b: RingElem) -> RingElem {
    a.times(b)
}
