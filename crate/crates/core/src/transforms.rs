//! Moment/cumulant conversion through the generating functions
//! `Z_P = sum lambda^m conj(lambda)^n / (m! n!) xi_mn` and `Z_chi = ln Z_P`.

use crate::error::{argument, Error, Result};
use crate::scalar::{factorial, Scalar};
use crate::tables::{ChiTable, XiTable};

/// Largest order accepted; keeps `m! n!` inside `i64`.
pub const MAX_SERIES_ORDER: usize = 20;

/// Truncated series in `(lambda, conj(lambda))`, stored with plain monomial
/// coefficients `a_mn = c_mn / (m! n!)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BivariateSeries<S> {
    max_order: usize,
    plain: Vec<Vec<S>>,
}

impl<S: Scalar> BivariateSeries<S> {
    /// From factorially normalized coefficients `c(m, n)`.
    pub fn from_normalized(max_order: usize, c: impl Fn(usize, usize) -> S) -> Result<Self> {
        if max_order > MAX_SERIES_ORDER {
            return Err(argument(format!("series order {max_order} exceeds {MAX_SERIES_ORDER}")));
        }
        let plain = (0..=max_order)
            .map(|m| {
                (0..=max_order - m)
                    .map(|n| c(m, n) / (factorial::<S>(m) * factorial::<S>(n)))
                    .collect()
            })
            .collect();
        Ok(Self { max_order, plain })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Factorially normalized coefficient `c_mn`.
    pub fn normalized(&self, m: usize, n: usize) -> S {
        self.plain[m][n].clone() * factorial::<S>(m) * factorial::<S>(n)
    }

    fn zeros(max_order: usize) -> Vec<Vec<S>> {
        (0..=max_order).map(|m| vec![S::zero(); max_order - m + 1]).collect()
    }

    /// Sum over `(i, j) <= (m, n)` with `i + j = k` of `k a_ij b_{m-i, n-j}`.
    fn graded_convolution(a: &[Vec<S>], b: &[Vec<S>], m: usize, n: usize, k: usize) -> S {
        let mut acc = S::zero();
        for i in k.saturating_sub(n)..=k.min(m) {
            let j = k - i;
            acc = acc + a[i][j].clone() * b[m - i][n - j].clone();
        }
        acc * S::from_int(k as i64)
    }

    /// Logarithm of a series with unit constant term. Uses the Euler-operator
    /// recurrence `D Z = Z D L` degree by degree.
    pub fn log(&self) -> Result<Self> {
        let z = &self.plain;
        if !z[0][0].is_near(&S::one()) {
            return Err(Error::Normalization { what: "series constant term", found: format!("{:?}", z[0][0]) });
        }
        let mut l = Self::zeros(self.max_order);
        for d in 1..=self.max_order {
            let deg = S::from_int(d as i64);
            for m in 0..=d {
                let n = d - m;
                let mut rhs = deg.clone() * z[m][n].clone();
                for k in 1..d {
                    rhs = rhs - Self::graded_convolution(&l, z, m, n, k);
                }
                l[m][n] = rhs / deg.clone();
            }
        }
        Ok(Self { max_order: self.max_order, plain: l })
    }

    /// Exponential of a series; its constant term is ignored (treated as 0).
    pub fn exp(&self) -> Self {
        let l = &self.plain;
        let mut e = Self::zeros(self.max_order);
        e[0][0] = S::one();
        for d in 1..=self.max_order {
            let deg = S::from_int(d as i64);
            for m in 0..=d {
                let n = d - m;
                let mut rhs = S::zero();
                for k in 1..=d {
                    rhs = rhs + Self::graded_convolution(l, &e, m, n, k);
                }
                e[m][n] = rhs / deg.clone();
            }
        }
        Self { max_order: self.max_order, plain: e }
    }
}

pub fn xi_to_chi<S: Scalar>(xi: &XiTable<S>) -> Result<ChiTable<S>> {
    let z = BivariateSeries::from_normalized(xi.max_order(), |m, n| {
        if m + n == 0 {
            S::one()
        } else {
            xi.get(m, n).cloned().unwrap_or_else(S::zero)
        }
    })?;
    let l = z.log()?;
    ChiTable::from_fn(xi.max_order(), |m, n| if m + n == 0 { S::one() } else { l.normalized(m, n) })
}

pub fn chi_to_xi<S: Scalar>(chi: &ChiTable<S>) -> Result<XiTable<S>> {
    let l = BivariateSeries::from_normalized(chi.max_order(), |m, n| {
        if m + n == 0 {
            S::zero()
        } else {
            chi.get(m, n).cloned().unwrap_or_else(S::zero)
        }
    })?;
    let e = l.exp();
    XiTable::from_fn(chi.max_order(), |m, n| e.normalized(m, n))
}
