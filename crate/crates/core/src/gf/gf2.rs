// SPDX-License-Identifier: Apache-2.0

//! Dense bit vectors and matrices over GF(2), with a Gauss-Jordan solver.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Little-endian packed bit vector. Bit `i` lives in word `i / 64`.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            v.set(i, true);
        }
        v
    }

    /// Lowest `len` bits of `value`.
    pub fn from_u64(value: u64, len: usize) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len.min(64) {
            v.set(i, value >> i & 1 == 1);
        }
        v
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.get(i);
        self.set(i, !v);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn and_popcount(&self, other: &BitVec) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn hamming(&self, other: &BitVec) -> u32 {
        assert_eq!(self.len, other.len, "width mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Low 64 bits as an integer.
    pub fn to_u64(&self) -> u64 {
        self.words.first().copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Big-endian hex with `0x` prefix, padded to whole nibbles.
    pub fn to_hex(&self) -> String {
        let nibbles = self.len.div_ceil(4).max(1);
        let mut s = String::with_capacity(nibbles + 2);
        s.push_str("0x");
        for n in (0..nibbles).rev() {
            let mut d = 0u8;
            for b in 0..4 {
                let i = n * 4 + b;
                if i < self.len && self.get(i) {
                    d |= 1 << b;
                }
            }
            s.push(char::from_digit(d as u32, 16).unwrap());
        }
        s
    }

    pub fn from_hex(s: &str, len: usize) -> Option<Self> {
        let digits = s.strip_prefix("0x").unwrap_or(s);
        let mut v = Self::zeros(len);
        for (n, c) in digits.chars().rev().enumerate() {
            let d = c.to_digit(16)?;
            for b in 0..4 {
                if d >> b & 1 == 1 {
                    let i = n * 4 + b;
                    if i >= len {
                        return None;
                    }
                    v.set(i, true);
                }
            }
        }
        Some(v)
    }

    /// Concatenate, `self` in the low positions.
    pub fn concat(&self, hi: &BitVec) -> BitVec {
        let mut out = BitVec::zeros(self.len + hi.len);
        for i in 0..self.len {
            out.set(i, self.get(i));
        }
        for i in 0..hi.len {
            out.set(self.len + i, hi.get(i));
        }
        out
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec[{}]", self.len)?;
        for i in (0..self.len).rev() {
            write!(f, "{}", self.get(i) as u8)?;
        }
        Ok(())
    }
}

/// Row-major bit matrix.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BitMatrix {
    cols: usize,
    rows: Vec<BitVec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolveError {
    #[error("system is inconsistent: row {row} reduces to 0 = 1 (rank {rank} of {rows} rows)")]
    NoSolution {
        row: usize,
        rank: usize,
        rows: usize,
    },
    #[error("dimension mismatch: matrix has {rows} rows, right-hand side has {rhs}")]
    Dimension { rows: usize, rhs: usize },
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix {
            cols,
            rows: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_rows(cols: usize, rows: Vec<BitVec>) -> Self {
        for r in &rows {
            assert_eq!(r.len(), cols);
        }
        BitMatrix { cols, rows }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &BitVec {
        &self.rows[r]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.rows[r].set(c, v)
    }

    pub fn mul_vec(&self, x: &BitVec) -> BitVec {
        assert_eq!(x.len(), self.cols);
        let mut out = BitVec::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            out.set(i, row.and_popcount(x) & 1 == 1);
        }
        out
    }

    /// Sub-matrix of the selected rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> BitMatrix {
        let mut out = BitMatrix::zeros(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out.set(i, j, self.get(r, c));
            }
        }
        out
    }

    pub fn rank(&self) -> usize {
        let mut rows = self.rows.clone();
        let mut rank = 0;
        for c in 0..self.cols {
            let Some(p) = (rank..rows.len()).find(|&r| rows[r].get(c)) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row.get(c) {
                    row.xor_assign(&pivot);
                }
            }
            rank += 1;
        }
        rank
    }

    /// Solve `self * x = b`. Free variables are set to zero; `self` and `b`
    /// are left untouched.
    pub fn solve(&self, b: &BitVec) -> Result<BitVec, SolveError> {
        if b.len() != self.rows.len() {
            return Err(SolveError::Dimension {
                rows: self.rows.len(),
                rhs: b.len(),
            });
        }
        // Augmented rows: coefficients followed by the rhs bit.
        let mut aug: Vec<(BitVec, bool)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), b.get(i)))
            .collect();
        // Track original row index for diagnostics.
        let mut origin: Vec<usize> = (0..aug.len()).collect();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for c in 0..self.cols {
            let Some(p) = (rank..aug.len()).find(|&r| aug[r].0.get(c)) else {
                continue;
            };
            aug.swap(rank, p);
            origin.swap(rank, p);
            let (prow, pbit) = aug[rank].clone();
            for (r, (row, bit)) in aug.iter_mut().enumerate() {
                if r != rank && row.get(c) {
                    row.xor_assign(&prow);
                    *bit ^= pbit;
                }
            }
            pivots.push(c);
            rank += 1;
        }
        if let Some(r) = (rank..aug.len()).find(|&r| aug[r].1) {
            return Err(SolveError::NoSolution {
                row: origin[r],
                rank,
                rows: self.rows.len(),
            });
        }
        let mut x = BitVec::zeros(self.cols);
        for (r, &c) in pivots.iter().enumerate() {
            x.set(c, aug[r].1);
        }
        Ok(x)
    }
}

pub fn solve_gf2(a: &BitMatrix, b: &BitVec) -> Result<BitVec, SolveError> {
    a.solve(b)
}
