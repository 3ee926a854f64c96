//! Pauli words in symplectic form.
//!
//! A word on `n` qubits is stored as two bitmasks: bit `q` of `x` and `z`
//! selects the single-qubit operator on qubit `q`:
//!
//! | x | z | op |
//! |---|---|----|
//! | 0 | 0 | I  |
//! | 1 | 0 | X  |
//! | 0 | 1 | Z  |
//! | 1 | 1 | Y  |
//!
//! Commutation checks and products reduce to popcounts over the masks.

use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PauliError {
    #[error("qubit count mismatch: {0} vs {1}")]
    QubitMismatch(usize, usize),
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    IndexOutOfRange { index: usize, n_qubits: usize },
    #[error("qubit {0} appears more than once")]
    DuplicateQubit(usize),
    #[error("unknown Pauli token `{0}`")]
    BadToken(String),
}

/// One of the four phases `{+1, +i, -1, -i}`, stored as a power of `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: i64) -> Phase {
        Phase(k.rem_euclid(4) as u8)
    }

    /// Exponent `k` with phase `i^k`, in `0..4`.
    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0.is_multiple_of(2)
    }

    /// `Some(±1.0)` for real phases.
    pub fn as_real(self) -> Option<f64> {
        match self.0 {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }

    pub fn as_complex(self) -> num_complex::Complex64 {
        use num_complex::Complex64;
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.0 {
            0 => "+1",
            1 => "+i",
            2 => "-1",
            _ => "-i",
        })
    }
}

/// Single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Z => (false, true),
            Pauli::Y => (true, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (false, true) => Pauli::Z,
            (true, true) => Pauli::Y,
        }
    }

    fn letter(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliWord {
    n_qubits: usize,
    x: Vec<u64>,
    z: Vec<u64>,
}

fn blocks_for(n_qubits: usize) -> usize {
    n_qubits.div_ceil(BLOCK).max(1)
}

impl PauliWord {
    pub fn identity(n_qubits: usize) -> Self {
        let b = blocks_for(n_qubits);
        PauliWord { n_qubits, x: vec![0; b], z: vec![0; b] }
    }

    /// Builds a word from `(qubit, op)` pairs.
    pub fn from_ops(n_qubits: usize, ops: &[(usize, Pauli)]) -> Result<Self, PauliError> {
        let mut w = PauliWord::identity(n_qubits);
        let mut seen = vec![false; n_qubits];
        for &(q, op) in ops {
            if q >= n_qubits {
                return Err(PauliError::IndexOutOfRange { index: q, n_qubits });
            }
            if seen[q] {
                return Err(PauliError::DuplicateQubit(q));
            }
            seen[q] = true;
            w.set(q, op);
        }
        Ok(w)
    }

    /// Parses whitespace separated tokens such as `"X0 Z2"`. Token order is
    /// irrelevant and an empty string is the identity.
    pub fn parse(text: &str, n_qubits: usize) -> Result<Self, PauliError> {
        let mut ops = Vec::new();
        for tok in text.split_whitespace() {
            let mut chars = tok.chars();
            let op = match chars.next() {
                Some('X') => Pauli::X,
                Some('Y') => Pauli::Y,
                Some('Z') => Pauli::Z,
                _ => return Err(PauliError::BadToken(tok.to_string())),
            };
            let index: usize =
                chars.as_str().parse().map_err(|_| PauliError::BadToken(tok.to_string()))?;
            ops.push((index, op));
        }
        PauliWord::from_ops(n_qubits, &ops)
    }

    /// Builds a word directly from low-order masks (at most 64 qubits).
    pub fn from_masks(n_qubits: usize, x: u64, z: u64) -> Self {
        assert!(n_qubits <= BLOCK, "from_masks supports up to 64 qubits");
        let keep = if n_qubits == BLOCK { u64::MAX } else { (1u64 << n_qubits) - 1 };
        PauliWord { n_qubits, x: vec![x & keep], z: vec![z & keep] }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_blocks(&self) -> &[u64] {
        &self.x
    }

    pub fn z_blocks(&self) -> &[u64] {
        &self.z
    }

    /// Low 64 bits of the X mask; enough for any statevector-sized register.
    pub fn x_mask(&self) -> u64 {
        self.x[0]
    }

    pub fn z_mask(&self) -> u64 {
        self.z[0]
    }

    pub fn get(&self, q: usize) -> Pauli {
        let (b, s) = (q / BLOCK, q % BLOCK);
        Pauli::from_bits((self.x[b] >> s) & 1 == 1, (self.z[b] >> s) & 1 == 1)
    }

    fn set(&mut self, q: usize, op: Pauli) {
        let (b, s) = (q / BLOCK, q % BLOCK);
        let (x, z) = op.bits();
        self.x[b] = (self.x[b] & !(1 << s)) | ((x as u64) << s);
        self.z[b] = (self.z[b] & !(1 << s)) | ((z as u64) << s);
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&b| b == 0)
    }

    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(x, z)| (x | z).count_ones() as usize).sum()
    }

    /// Number of Y factors.
    pub fn y_count(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(x, z)| (x & z).count_ones() as usize).sum()
    }

    fn check(&self, other: &PauliWord) -> Result<(), PauliError> {
        if self.n_qubits != other.n_qubits {
            return Err(PauliError::QubitMismatch(self.n_qubits, other.n_qubits));
        }
        Ok(())
    }

    /// Full commutation: the symplectic product `x_p·z_q + z_p·x_q` is even.
    pub fn commutes_fc(&self, other: &PauliWord) -> Result<bool, PauliError> {
        self.check(other)?;
        Ok(self.commutes_fc_unchecked(other))
    }

    pub(crate) fn commutes_fc_unchecked(&self, other: &PauliWord) -> bool {
        let mut parity = 0u32;
        for i in 0..self.x.len() {
            parity ^= ((self.x[i] & other.z[i]) ^ (self.z[i] & other.x[i])).count_ones() & 1;
        }
        parity == 0
    }

    /// Qubit-wise commutation: on every qubit one side is the identity or both agree.
    pub fn commutes_qwc(&self, other: &PauliWord) -> Result<bool, PauliError> {
        self.check(other)?;
        Ok(self.commutes_qwc_unchecked(other))
    }

    pub(crate) fn commutes_qwc_unchecked(&self, other: &PauliWord) -> bool {
        (0..self.x.len()).all(|i| {
            let both = (self.x[i] | self.z[i]) & (other.x[i] | other.z[i]);
            let differ = (self.x[i] ^ other.x[i]) | (self.z[i] ^ other.z[i]);
            both & differ == 0
        })
    }

    /// Operator product `self · other = phase · word`.
    pub fn multiply(&self, other: &PauliWord) -> Result<(Phase, PauliWord), PauliError> {
        self.check(other)?;
        Ok(self.multiply_unchecked(other))
    }

    pub(crate) fn multiply_unchecked(&self, other: &PauliWord) -> (Phase, PauliWord) {
        // X·Y = iZ, Y·Z = iX, Z·X = iY and the reversed orders carry -i.
        let mut exp: i64 = 0;
        let mut x = Vec::with_capacity(self.x.len());
        let mut z = Vec::with_capacity(self.x.len());
        for i in 0..self.x.len() {
            let (x1, z1, x2, z2) = (self.x[i], self.z[i], other.x[i], other.z[i]);
            let (px, py, pz) = (x1 & !z1, x1 & z1, !x1 & z1);
            let (qx, qy, qz) = (x2 & !z2, x2 & z2, !x2 & z2);
            let plus = (px & qy) | (py & qz) | (pz & qx);
            let minus = (px & qz) | (py & qx) | (pz & qy);
            exp += plus.count_ones() as i64 - minus.count_ones() as i64;
            x.push(x1 ^ x2);
            z.push(z1 ^ z2);
        }
        (Phase::from_exponent(exp), PauliWord { n_qubits: self.n_qubits, x, z })
    }

    /// Canonical token text, ascending qubit index (`"X0 Y3"`; empty for identity).
    pub fn to_tokens(&self) -> String {
        let mut out = String::new();
        for q in 0..self.n_qubits {
            let op = self.get(q);
            if op != Pauli::I {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push(op.letter());
                out.push_str(&q.to_string());
            }
        }
        out
    }

    /// Dense label such as `"XIZY"`, qubit 0 first.
    pub fn to_label(&self) -> String {
        (0..self.n_qubits).map(|q| self.get(q).letter()).collect()
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            f.write_str("I")
        } else {
            f.write_str(&self.to_tokens())
        }
    }
}
