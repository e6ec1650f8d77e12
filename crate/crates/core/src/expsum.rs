//! Finite sums of fixed-frequency exponentials
//! `sum_k c_k (hbar/2omega)^{n/2} exp(-i omega sum_j sigma_kj t_j)`.
//!
//! A `+` sign marks an annihilation operator (`e^{-i omega t}`), a `-` sign a
//! creation operator.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{argument, Error, Result};
use crate::params::PhysicalParams;
use crate::scalar::Scalar;
use crate::C64;

pub const MAX_ARITY: usize = 64;

/// Packed sign sequence; bit `j` set means `sigma_j = +1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignVector {
    len: u8,
    bits: u64,
}

impl SignVector {
    pub fn new(signs: &[i8]) -> Result<Self> {
        if signs.is_empty() || signs.len() > MAX_ARITY {
            return Err(argument(format!("sign vector length {} outside 1..={MAX_ARITY}", signs.len())));
        }
        let mut bits = 0u64;
        for (j, &s) in signs.iter().enumerate() {
            match s {
                1 => bits |= 1 << j,
                -1 => {}
                other => return Err(argument(format!("sign entries must be +1 or -1, got {other}"))),
            }
        }
        Ok(Self { len: signs.len() as u8, bits })
    }

    pub(crate) fn from_bits(len: usize, bits: u64) -> Self {
        debug_assert!((1..=MAX_ARITY).contains(&len));
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Self { len: len as u8, bits: bits & mask }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_plus(&self, j: usize) -> bool {
        self.bits >> j & 1 == 1
    }

    pub fn sign(&self, j: usize) -> i8 {
        if self.is_plus(j) {
            1
        } else {
            -1
        }
    }

    pub fn plus_count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn minus_count(&self) -> usize {
        self.len() - self.plus_count()
    }

    pub fn flipped(&self) -> Self {
        Self::from_bits(self.len(), !self.bits)
    }

    pub fn iter(&self) -> impl Iterator<Item = i8> + '_ {
        (0..self.len()).map(|j| self.sign(j))
    }
}

impl fmt::Display for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len() {
            f.write_str(if self.is_plus(j) { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for SignVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let signs: Vec<i8> = s
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::Parse(format!("unexpected sign character {other:?}"))),
            })
            .collect::<Result<_>>()?;
        Self::new(&signs)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpSum<S> {
    arity: usize,
    terms: BTreeMap<SignVector, S>,
}

impl<S: Scalar> ExpSum<S> {
    pub fn zero(arity: usize) -> Result<Self> {
        if arity == 0 || arity > MAX_ARITY {
            return Err(argument(format!("arity {arity} outside 1..={MAX_ARITY}")));
        }
        Ok(Self { arity, terms: BTreeMap::new() })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, sigma: &SignVector) -> S {
        self.terms.get(sigma).cloned().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SignVector, &S)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, sigma: SignVector, c: S) -> Result<()> {
        if sigma.len() != self.arity {
            return Err(argument(format!("sign vector of length {} added to arity {}", sigma.len(), self.arity)));
        }
        self.add_unchecked(sigma, c);
        Ok(())
    }

    fn add_unchecked(&mut self, sigma: SignVector, c: S) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(sigma).or_insert_with(S::zero);
        *slot = slot.clone() + c;
        if slot.is_zero() {
            self.terms.remove(&sigma);
        }
    }

    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if other.arity != self.arity {
            return Err(argument(format!("cannot add arity {} to arity {}", other.arity, self.arity)));
        }
        for (sigma, c) in &other.terms {
            self.add_unchecked(*sigma, c.clone());
        }
        Ok(())
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.accumulate(other)?;
        Ok(out)
    }

    pub fn scale(&self, c: &S) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(s, v)| (*s, v.clone() * c.clone()))
            .filter(|(_, v)| !v.is_zero())
            .collect();
        Self { arity: self.arity, terms }
    }

    /// Flips every sign and conjugates every coefficient.
    pub fn conj_map(&self) -> Self {
        let terms = self.terms.iter().map(|(s, v)| (s.flipped(), v.conj())).collect();
        Self { arity: self.arity, terms }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> ExpSum<T> {
        let terms = self
            .terms
            .iter()
            .map(|(s, v)| (*s, f(v)))
            .filter(|(_, v)| !v.is_zero())
            .collect();
        ExpSum { arity: self.arity, terms }
    }

    /// Product of factors living on disjoint slot subsets of an arity-`arity`
    /// sequence. Each factor is paired with the slot positions of its
    /// arguments, in argument order.
    pub fn embedded_product(arity: usize, factors: &[(&Self, &[usize])]) -> Result<Self> {
        let mut out = Self::zero(arity)?;
        let mut used = 0u64;
        for (e, positions) in factors {
            if e.arity != positions.len() {
                return Err(argument("factor arity does not match its slot list"));
            }
            for &p in positions.iter() {
                if p >= arity || used >> p & 1 == 1 {
                    return Err(argument(format!("slot {p} repeated or out of range")));
                }
                used |= 1 << p;
            }
        }
        let mut acc: Vec<(u64, S)> = vec![(0, S::one())];
        for (e, positions) in factors {
            let mut next = Vec::with_capacity(acc.len() * e.terms.len());
            for (bits, c) in &acc {
                for (sigma, v) in &e.terms {
                    let mut b = *bits;
                    for (k, &p) in positions.iter().enumerate() {
                        if sigma.is_plus(k) {
                            b |= 1 << p;
                        }
                    }
                    next.push((b, c.clone() * v.clone()));
                }
            }
            acc = next;
        }
        for (bits, c) in acc {
            out.add_unchecked(SignVector::from_bits(arity, bits), c);
        }
        Ok(out)
    }

    pub fn eval(&self, times: &[f64], p: &PhysicalParams) -> Result<C64> {
        if times.len() != self.arity {
            return Err(argument(format!("{} times supplied for arity {}", times.len(), self.arity)));
        }
        let prefactor = p.propagator_scale().powf(self.arity as f64 / 2.0);
        let total: C64 = self
            .terms
            .iter()
            .map(|(sigma, c)| {
                let phase: f64 = sigma.iter().zip(times).map(|(s, t)| s as f64 * t).sum();
                c.to_c64() * C64::from_polar(1.0, -p.omega() * phase)
            })
            .sum();
        Ok(total * prefactor)
    }

    /// Largest coefficient distance to `other`, term by term.
    pub fn max_coeff_distance(&self, other: &Self) -> f64 {
        self.terms
            .keys()
            .chain(other.terms.keys())
            .unique()
            .map(|s| (self.coeff(s).to_c64() - other.coeff(s).to_c64()).norm())
            .fold(0.0, f64::max)
    }
}

impl ExpSum<C64> {
    /// Drops coefficients whose magnitude is at most `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let terms = self.terms.iter().filter(|(_, v)| v.norm() > tol).map(|(s, v)| (*s, *v)).collect();
        Self { arity: self.arity, terms }
    }

    /// Rounds every coefficient to the nearest multiple of `quantum`.
    pub fn rounded(&self, quantum: f64) -> Self {
        let round = |x: f64| {
            let r = (x / quantum).round() * quantum;
            if r == 0.0 {
                0.0
            } else {
                r
            }
        };
        let terms = self
            .terms
            .iter()
            .map(|(s, v)| (*s, C64::new(round(v.re), round(v.im))))
            .filter(|(_, v)| *v != C64::new(0.0, 0.0))
            .collect();
        Self { arity: self.arity, terms }
    }
}

/// Single exponential `f_sigma` with unit coefficient.
pub fn make_f<S: Scalar>(sigma: SignVector) -> ExpSum<S> {
    let mut terms = BTreeMap::new();
    terms.insert(sigma, S::one());
    ExpSum { arity: sigma.len(), terms }
}

/// Sum of `f_sigma` over all placements of `k` plus signs among `n` slots.
pub fn make_big_f<S: Scalar>(n: usize, k: usize) -> Result<ExpSum<S>> {
    if k > n {
        return Err(argument(format!("plus count {k} exceeds arity {n}")));
    }
    let mut out = ExpSum::zero(n)?;
    for plus in (0..n).combinations(k) {
        let bits = plus.iter().fold(0u64, |b, &j| b | 1 << j);
        out.terms.insert(SignVector::from_bits(n, bits), S::one());
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct TermWire {
    signs: String,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct ExpSumWire {
    arity: usize,
    terms: Vec<TermWire>,
}

impl Serialize for ExpSum<C64> {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        let wire = ExpSumWire {
            arity: self.arity,
            terms: self
                .terms
                .iter()
                .map(|(s, c)| TermWire { signs: s.to_string(), re: c.re, im: c.im })
                .collect(),
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExpSum<C64> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = ExpSumWire::deserialize(deserializer)?;
        let mut out = ExpSum::zero(wire.arity).map_err(D::Error::custom)?;
        for t in wire.terms {
            let sigma: SignVector = t.signs.parse().map_err(D::Error::custom)?;
            out.add_term(sigma, C64::new(t.re, t.im)).map_err(D::Error::custom)?;
        }
        Ok(out)
    }
}
