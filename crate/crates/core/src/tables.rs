//! Triangular coefficient tables indexed by `(m, n)` with `m + n <= N`.
//!
//! `m` counts creation operators and `n` annihilation operators, so a moment
//! table holds `<(a^dag)^m a^n>` and a cumulant table the matching cumulant
//! coefficients.

use std::fmt;
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::json::TableEntry;
use crate::scalar::Scalar;
use crate::C64;

pub trait TableKind {
    const NAME: &'static str;
}

/// Normal-ordered moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Xi {}

/// Cumulant coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chi {}

impl TableKind for Xi {
    const NAME: &'static str = "xi";
}

impl TableKind for Chi {
    const NAME: &'static str = "chi";
}

#[derive(Clone, PartialEq)]
pub struct Table<S, K> {
    max_order: usize,
    entries: Vec<S>,
    kind: PhantomData<K>,
}

pub type XiTable<S> = Table<S, Xi>;
pub type ChiTable<S> = Table<S, Chi>;

fn index(m: usize, n: usize) -> usize {
    let d = m + n;
    d * (d + 1) / 2 + m
}

impl<S: Scalar, K: TableKind> Table<S, K> {
    /// Builds a table from `f(m, n)`; the `(0, 0)` entry must be one.
    pub fn from_fn(max_order: usize, mut f: impl FnMut(usize, usize) -> S) -> Result<Self> {
        let mut entries = Vec::with_capacity(index(0, max_order + 1));
        for d in 0..=max_order {
            for m in 0..=d {
                entries.push(f(m, d - m));
            }
        }
        Self::from_entries(max_order, entries)
    }

    fn from_entries(max_order: usize, entries: Vec<S>) -> Result<Self> {
        if !entries[0].is_near(&S::one()) {
            return Err(Error::Normalization {
                what: if K::NAME == "xi" { "xi_00" } else { "chi_00" },
                found: format!("{:?}", entries[0]),
            });
        }
        Ok(Self { max_order, entries, kind: PhantomData })
    }

    /// All entries zero except the unit `(0, 0)` entry.
    pub fn unit(max_order: usize) -> Self {
        let mut entries = vec![S::zero(); index(0, max_order + 1)];
        entries[0] = S::one();
        Self { max_order, entries, kind: PhantomData }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn get(&self, m: usize, n: usize) -> Option<&S> {
        (m + n <= self.max_order).then(|| &self.entries[index(m, n)])
    }

    pub fn coeff(&self, m: usize, n: usize) -> Result<S> {
        self.get(m, n).cloned().ok_or_else(|| {
            argument(format!("{}_{m}{n} requested from a table of order {}", K::NAME, self.max_order))
        })
    }

    /// Entries as `(m, n, value)` in order of increasing total degree.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &S)> {
        (0..=self.max_order)
            .flat_map(|d| (0..=d).map(move |m| (m, d - m)))
            .zip(&self.entries)
            .map(|((m, n), v)| (m, n, v))
    }

    pub fn truncated(&self, max_order: usize) -> Result<Self> {
        if max_order > self.max_order {
            return Err(argument(format!("cannot extend a table of order {} to {max_order}", self.max_order)));
        }
        Ok(Self {
            max_order,
            entries: self.entries[..index(0, max_order + 1)].to_vec(),
            kind: PhantomData,
        })
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Table<T, K> {
        Table { max_order: self.max_order, entries: self.entries.iter().map(f).collect(), kind: PhantomData }
    }

    /// Largest `|t_nm - conj(t_mn)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.iter()
            .map(|(m, n, v)| (self.entries[index(n, m)].to_c64() - v.conj().to_c64()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_distance(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a.to_c64() - b.to_c64()).norm())
            .fold(0.0, f64::max)
    }
}

impl<K: TableKind> Table<C64, K> {
    pub fn to_entries(&self) -> Vec<TableEntry> {
        self.iter().map(|(m, n, v)| TableEntry { m, n, re: v.re, im: v.im }).collect()
    }

    /// Missing entries are zero; `(0, 0)` defaults to one when absent.
    pub fn from_entry_list(max_order: usize, list: &[TableEntry]) -> Result<Self> {
        let mut entries = vec![C64::new(0.0, 0.0); index(0, max_order + 1)];
        entries[0] = C64::new(1.0, 0.0);
        for e in list {
            if e.m + e.n > max_order {
                return Err(argument(format!("entry ({}, {}) exceeds max_order {max_order}", e.m, e.n)));
            }
            entries[index(e.m, e.n)] = C64::new(e.re, e.im);
        }
        Self::from_entries(max_order, entries)
    }
}

impl<S: Scalar, K: TableKind> fmt::Debug for Table<S, K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut map = f.debug_map();
        for (m, n, v) in self.iter() {
            map.entry(&format_args!("{}_{m}{n}", K::NAME), v);
        }
        map.finish()
    }
}

#[derive(Serialize, Deserialize)]
struct TableWire {
    max_order: usize,
    entries: Vec<TableEntry>,
}

impl<K: TableKind> Serialize for Table<C64, K> {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        TableWire { max_order: self.max_order, entries: self.to_entries() }.serialize(s)
    }
}

impl<'de, K: TableKind> Deserialize<'de> for Table<C64, K> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = TableWire::deserialize(d)?;
        Self::from_entry_list(wire.max_order, &wire.entries).map_err(serde::de::Error::custom)
    }
}
