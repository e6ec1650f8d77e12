//! Free-oscillator Wightman correlators.
//!
//! Two symbolic routes produce the same exponential sum: the generalized Wick
//! partition sum over cumulants, and normal ordering of
//! `prod_j (a e^{-i omega t_j} + a^dag e^{i omega t_j})` weighted by
//! moments. A numeric subset recursion evaluates the partition sum directly
//! at given times, which is what the perturbative code calls in its inner
//! loop.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{argument, Result};
use crate::expsum::{make_big_f, make_f, ExpSum, SignVector};
use crate::labels::TimeLabel;
use crate::params::PhysicalParams;
use crate::scalar::Scalar;
use crate::tables::{ChiTable, XiTable};
use crate::C64;

pub const MAX_PARTITION_SIZE: usize = 10;
pub const MAX_NUMERIC_ARITY: usize = 20;

/// Blocks of 0-based slot indices, each sorted, ordered by first element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SetPartition {
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            let items: Vec<String> = b.iter().map(|j| (j + 1).to_string()).collect();
            write!(f, "{{{}}}", items.join(","))?;
        }
        Ok(())
    }
}

/// One position in a Wightman sequence; the sequence order is never
/// re-sorted by time value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorSlot {
    pub label: TimeLabel,
    pub time: f64,
}

fn generate_partitions(n: usize) -> Vec<SetPartition> {
    fn rec(j: usize, n: usize, rgs: &mut Vec<usize>, max: usize, out: &mut Vec<SetPartition>) {
        if j == n {
            let mut blocks = vec![Vec::new(); max];
            for (i, &b) in rgs.iter().enumerate() {
                blocks[b].push(i);
            }
            out.push(SetPartition { blocks });
            return;
        }
        for b in 0..=max {
            rgs.push(b);
            rec(j + 1, n, rgs, max.max(b + 1), out);
            rgs.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::with_capacity(n), 0, &mut out);
    out
}

/// All set partitions of `n` slots via restricted-growth strings.
pub fn set_partitions(n: usize) -> Result<Arc<Vec<SetPartition>>> {
    static CACHE: [OnceLock<Arc<Vec<SetPartition>>>; MAX_PARTITION_SIZE + 1] =
        [const { OnceLock::new() }; MAX_PARTITION_SIZE + 1];
    if n == 0 || n > MAX_PARTITION_SIZE {
        return Err(argument(format!("partition size {n} outside 1..={MAX_PARTITION_SIZE}")));
    }
    Ok(CACHE[n].get_or_init(|| Arc::new(generate_partitions(n))).clone())
}

/// The `n`-th cumulant `C_n = sum_m chi_{m,n-m} F_{n,n-m} + [n = 2] f_{+-}`.
pub fn cumulant_expsum<S: Scalar>(n: usize, chi: &ChiTable<S>) -> Result<ExpSum<S>> {
    if n == 0 {
        return Err(argument("cumulant order must be at least 1"));
    }
    if chi.max_order() < n {
        return Err(argument(format!("cumulant of order {n} needs a table of order {n}, have {}", chi.max_order())));
    }
    let mut out = ExpSum::zero(n)?;
    for minus in 0..=n {
        let c = chi.coeff(minus, n - minus)?;
        if !c.is_zero() {
            out.accumulate(&make_big_f::<S>(n, n - minus)?.scale(&c))?;
        }
    }
    if n == 2 {
        out.accumulate(&make_f(SignVector::new(&[1, -1])?))?;
    }
    Ok(out)
}

/// Generalized Wick sum over set partitions of an `n`-slot sequence; each
/// block keeps the left-to-right order of its slots.
pub fn wightman_free<S: Scalar>(n: usize, chi: &ChiTable<S>) -> Result<ExpSum<S>> {
    let partitions = set_partitions(n)?;
    let cumulants: Vec<ExpSum<S>> = (1..=n).map(|k| cumulant_expsum(k, chi)).collect::<Result<_>>()?;
    let mut out = ExpSum::zero(n)?;
    for part in partitions.iter() {
        let factors: Vec<(&ExpSum<S>, &[usize])> =
            part.blocks().iter().map(|b| (&cumulants[b.len() - 1], b.as_slice())).collect();
        if factors.iter().any(|(e, _)| e.is_empty()) {
            continue;
        }
        out.accumulate(&ExpSum::embedded_product(n, &factors)?)?;
    }
    Ok(out)
}

/// Normal ordering route: every way of contracting an annihilator with a
/// creator to its right contributes one commutator, and the remaining
/// normal-ordered monomial `(a^dag)^m a^n` is weighted by `xi_mn`.
pub fn wightman_free_xi<S: Scalar>(n: usize, xi: &XiTable<S>) -> Result<ExpSum<S>> {
    if n == 0 {
        return Err(argument("correlator needs at least one slot"));
    }
    if xi.max_order() < n {
        return Err(argument(format!("{n}-point correlator needs a moment table of order {n}, have {}", xi.max_order())));
    }
    // counts[(bits, free_minus, free_plus)] = number of contraction patterns
    let mut counts = std::collections::BTreeMap::<(u64, usize, usize), i64>::new();
    fn rec(
        j: usize,
        n: usize,
        bits: u64,
        open: u32,
        free: (usize, usize),
        counts: &mut std::collections::BTreeMap<(u64, usize, usize), i64>,
    ) {
        if j == n {
            if open == 0 {
                *counts.entry((bits, free.0, free.1)).or_default() += 1;
            }
            return;
        }
        let plus = bits | 1 << j;
        rec(j + 1, n, plus, open, (free.0, free.1 + 1), counts);
        rec(j + 1, n, plus, open + 1, free, counts);
        rec(j + 1, n, bits, open, (free.0 + 1, free.1), counts);
        if open > 0 {
            // the creator may close any one of the open annihilators
            for _ in 0..open {
                rec(j + 1, n, bits, open - 1, free, counts);
            }
        }
    }
    rec(0, n, 0, 0, (0, 0), &mut counts);
    let mut out = ExpSum::zero(n)?;
    for ((bits, m, k), count) in counts {
        let w = xi.coeff(m, k)? * S::from_int(count);
        out.add_term(SignVector::from_bits(n, bits), w)?;
    }
    Ok(out)
}

/// Numeric cumulant blocks for a fixed state, evaluated at real times.
#[derive(Clone, Debug)]
pub struct CumulantEvaluator {
    scale: f64,
    omega: f64,
    /// `coeffs[k][m] = chi_{m, k-m}` for block size `k`.
    coeffs: Vec<Vec<C64>>,
    active: Vec<bool>,
    max_active: usize,
}

impl CumulantEvaluator {
    pub fn new(chi: &ChiTable<C64>, p: &PhysicalParams) -> Self {
        let order = chi.max_order();
        let coeffs: Vec<Vec<C64>> = (0..=order)
            .map(|k| (0..=k).map(|m| *chi.get(m, k - m).expect("within order")).collect())
            .collect();
        let active: Vec<bool> = (0..=order)
            .map(|k| k >= 1 && (k == 2 || coeffs[k].iter().any(|c| *c != C64::new(0.0, 0.0))))
            .collect();
        let max_active = active.iter().rposition(|&a| a).unwrap_or(0);
        Self { scale: p.propagator_scale(), omega: p.omega(), coeffs, active, max_active }
    }

    pub fn max_order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `C_k` at the given ordered times.
    pub fn block(&self, times: &[f64]) -> C64 {
        let mut phases = [C64::new(0.0, 0.0); MAX_NUMERIC_ARITY];
        for (z, &t) in phases.iter_mut().zip(times) {
            *z = C64::from_polar(1.0, -self.omega * t);
        }
        self.block_from_phases(&phases[..times.len()], true)
    }

    /// The cumulant part of `C_k` alone: for `k = 2` the free propagator is
    /// left out. Requires `k <= max_order()`.
    pub fn blob(&self, times: &[f64]) -> C64 {
        let mut phases = [C64::new(0.0, 0.0); MAX_NUMERIC_ARITY];
        for (z, &t) in phases.iter_mut().zip(times) {
            *z = C64::from_polar(1.0, -self.omega * t);
        }
        self.block_from_phases(&phases[..times.len()], false)
    }

    /// Whether blobs of arity `k` can be nonzero.
    pub fn blob_active(&self, k: usize) -> bool {
        k >= 1 && k < self.coeffs.len() && self.coeffs[k].iter().any(|c| *c != C64::new(0.0, 0.0))
    }

    /// `C_k` from the phases `e^{-i omega t}` of its slots.
    fn block_from_phases(&self, phases: &[C64], with_propagator: bool) -> C64 {
        let k = phases.len();
        let mut poly = [C64::new(0.0, 0.0); MAX_NUMERIC_ARITY + 1];
        poly[0] = C64::new(1.0, 0.0);
        for (i, &z) in phases.iter().enumerate() {
            let w = z.conj();
            for j in (0..=i + 1).rev() {
                let keep = poly[j] * z;
                poly[j] = if j > 0 { keep + poly[j - 1] * w } else { keep };
            }
        }
        let mut v: C64 = self.coeffs[k].iter().zip(&poly[..=k]).map(|(c, e)| c * e).sum();
        if k == 2 && with_propagator {
            v += phases[0] * phases[1].conj();
        }
        v * self.scale.powf(k as f64 / 2.0)
    }

    /// Sum over set partitions of products of blocks, by recursion on the
    /// block containing the lowest remaining slot.
    pub fn correlator(&self, times: &[f64]) -> Result<C64> {
        let n = times.len();
        if n == 0 {
            return Ok(C64::new(1.0, 0.0));
        }
        if n > MAX_NUMERIC_ARITY {
            return Err(argument(format!("numeric correlator limited to {MAX_NUMERIC_ARITY} slots")));
        }
        if n > self.max_order() {
            return Err(argument(format!("{n}-point correlator needs a table of order {n}, have {}", self.max_order())));
        }
        let full = (1usize << n) - 1;
        let mut block = vec![C64::new(0.0, 0.0); full + 1];
        let mut phases = [C64::new(0.0, 0.0); MAX_NUMERIC_ARITY];
        for (z, &t) in phases.iter_mut().zip(times) {
            *z = C64::from_polar(1.0, -self.omega * t);
        }
        let mut buf = [C64::new(0.0, 0.0); MAX_NUMERIC_ARITY];
        for k in 1..=self.max_active.min(n) {
            if !self.active[k] {
                continue;
            }
            let mut mask: usize = (1 << k) - 1;
            while mask <= full {
                let mut len = 0;
                let mut rest = mask;
                while rest != 0 {
                    buf[len] = phases[rest.trailing_zeros() as usize];
                    len += 1;
                    rest &= rest - 1;
                }
                block[mask] = self.block_from_phases(&buf[..len], true);
                // next mask with the same popcount
                let c = mask & mask.wrapping_neg();
                let r = mask + c;
                mask = (((r ^ mask) >> 2) / c) | r;
            }
        }
        let mut memo = vec![C64::new(0.0, 0.0); full + 1];
        memo[0] = C64::new(1.0, 0.0);
        let small = self.max_active <= 2;
        for s in 1..=full {
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            let mut acc = block[low] * memo[rest];
            if small {
                let mut r = rest;
                while r != 0 {
                    let bit = r & r.wrapping_neg();
                    acc += block[low | bit] * memo[rest ^ bit];
                    r ^= bit;
                }
            } else {
                let mut sub = rest;
                while sub != 0 {
                    if (sub.count_ones() as usize) < self.max_active {
                        acc += block[low | sub] * memo[rest ^ sub];
                    }
                    sub = (sub - 1) & rest;
                }
            }
            memo[s] = acc;
        }
        Ok(memo[full])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::exact;
    use crate::transforms::xi_to_chi;
    use crate::ExactComplex;
    use proptest::prelude::*;

    fn sv(s: &str) -> SignVector {
        s.parse().unwrap()
    }

    fn generic_xi(order: usize) -> XiTable<ExactComplex> {
        XiTable::from_fn(order, |m, n| {
            if m + n == 0 {
                exact(1, 1, 0, 1)
            } else if m == n {
                exact((3 * m + 1) as i64, (n + 2) as i64, 0, 1)
            } else if m < n {
                exact((m + 2 * n) as i64, 7, (n as i64) - (m as i64), 5)
            } else {
                exact((n + 2 * m) as i64, 7, (n as i64) - (m as i64), 5)
            }
        })
        .unwrap()
    }

    #[test]
    fn bell_numbers() {
        let bell = [1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975];
        for (n, b) in (1..=10).zip(bell) {
            assert_eq!(set_partitions(n).unwrap().len(), b);
        }
        assert!(set_partitions(0).is_err());
        assert!(set_partitions(11).is_err());
        let p = set_partitions(3).unwrap();
        for part in p.iter() {
            let mut seen: Vec<usize> = part.blocks().iter().flatten().copied().collect();
            seen.sort();
            assert_eq!(seen, vec![0, 1, 2]);
        }
    }

    #[test]
    fn generic_third_cumulant() {
        let chi = xi_to_chi(&generic_xi(3)).unwrap();
        let c3 = cumulant_expsum(3, &chi).unwrap();
        let mut want = ExpSum::zero(3).unwrap();
        for (minus, plus) in [(0, 3), (1, 2), (2, 1), (3, 0)] {
            want.accumulate(&make_big_f(3, plus).unwrap().scale(&chi.coeff(minus, plus).unwrap())).unwrap();
        }
        assert_eq!(c3, want);
        assert!(cumulant_expsum(4, &chi).is_err());
    }

    #[test]
    fn two_point_normal_ordering() {
        let xi = generic_xi(2);
        let e = wightman_free_xi(2, &xi).unwrap();
        let x = |m, n| xi.coeff(m, n).unwrap();
        assert_eq!(e.coeff(&sv("++")), x(0, 2));
        assert_eq!(e.coeff(&sv("--")), x(2, 0));
        assert_eq!(e.coeff(&sv("-+")), x(1, 1));
        assert_eq!(e.coeff(&sv("+-")), x(1, 1) + exact(1, 1, 0, 1));
        assert_eq!(e.len(), 4);
    }

    #[test]
    fn three_and_four_point_normal_ordering() {
        let xi = generic_xi(4);
        let x = |m, n| xi.coeff(m, n).unwrap();
        let int = |k: i64| exact(k, 1, 0, 1);
        let e3 = wightman_free_xi(3, &xi).unwrap();
        assert_eq!(e3.coeff(&sv("++-")), x(1, 2) + int(2) * x(0, 1));
        let e4 = wightman_free_xi(4, &xi).unwrap();
        // pure-commutator part of the coefficients
        let unit_only = wightman_free_xi(4, &XiTable::<ExactComplex>::unit(4)).unwrap();
        assert_eq!(unit_only.coeff(&sv("+-+-")), int(1));
        assert_eq!(unit_only.coeff(&sv("++--")), int(2));
        assert_eq!(unit_only.len(), 2);
        assert_eq!(e4.coeff(&sv("+++-")), x(1, 3) + int(3) * x(0, 2));
        assert_eq!(e4.coeff(&sv("++--")), x(2, 2) + int(4) * x(1, 1) + int(2));
        assert_eq!(e4.coeff(&sv("-+-+")), x(2, 2) + x(1, 1));
    }

    #[test]
    fn partition_route_equals_normal_ordering_exactly() {
        for n in 1..=6 {
            let xi = generic_xi(n);
            let chi = xi_to_chi(&xi).unwrap();
            assert_eq!(wightman_free(n, &chi).unwrap(), wightman_free_xi(n, &xi).unwrap(), "n = {n}");
        }
    }

    #[test]
    fn vacuum_correlators() {
        let chi = ChiTable::<ExactComplex>::unit(5);
        assert_eq!(wightman_free(2, &chi).unwrap(), make_f(sv("+-")));
        assert!(wightman_free(3, &chi).unwrap().is_empty());
        assert!(wightman_free(5, &chi).unwrap().is_empty());
    }

    #[test]
    fn three_point_partition_structure() {
        // C3 + three C1 C2 terms + C1^3
        let parts = set_partitions(3).unwrap();
        let shapes: Vec<Vec<usize>> = parts
            .iter()
            .map(|p| {
                let mut s: Vec<usize> = p.blocks().iter().map(Vec::len).collect();
                s.sort();
                s
            })
            .collect();
        assert_eq!(shapes.iter().filter(|s| **s == vec![3]).count(), 1);
        assert_eq!(shapes.iter().filter(|s| **s == vec![1, 2]).count(), 3);
        assert_eq!(shapes.iter().filter(|s| **s == vec![1, 1, 1]).count(), 1);
    }

    #[test]
    fn coherent_cumulants() {
        let phi = C64::new(0.6, -0.3);
        let chi = ChiTable::from_fn(3, |m, n| match (m, n) {
            (0, 0) => C64::new(1.0, 0.0),
            (0, 1) => phi,
            (1, 0) => phi.conj(),
            _ => C64::new(0.0, 0.0),
        })
        .unwrap();
        assert_eq!(cumulant_expsum(2, &chi).unwrap(), make_f(sv("+-")));
        assert!(cumulant_expsum(3, &chi).unwrap().is_empty());
    }

    fn random_chi(order: usize, raw: &[(f64, f64)]) -> ChiTable<C64> {
        let mut k = 0;
        let mut vals = std::collections::HashMap::new();
        for d in 1..=order {
            for m in 0..=d {
                let n = d - m;
                if m <= n {
                    let (re, im) = raw[k % raw.len()];
                    k += 1;
                    let v = if m == n { C64::new(re, 0.0) } else { C64::new(re, im) };
                    vals.insert((m, n), v);
                    vals.insert((n, m), v.conj());
                }
            }
        }
        ChiTable::from_fn(order, |m, n| if m + n == 0 { C64::new(1.0, 0.0) } else { vals[&(m, n)] }).unwrap()
    }

    proptest! {
        #[test]
        fn numeric_recursion_matches_symbolic(
            n in 1usize..=6,
            raw in prop::collection::vec((-0.8f64..0.8, -0.8f64..0.8), 1..30),
            times in prop::collection::vec(-5.0f64..5.0, 6),
            gaussian in any::<bool>(),
        ) {
            let mut chi = random_chi(6, &raw);
            if gaussian {
                chi = ChiTable::from_fn(6, |m, k| if m + k <= 2 { *chi.get(m, k).unwrap() } else { C64::new(0.0, 0.0) }).unwrap();
            }
            let p = PhysicalParams::new(1.1, 0.9).unwrap();
            let symbolic = wightman_free(n, &chi).unwrap().eval(&times[..n], &p).unwrap();
            let numeric = CumulantEvaluator::new(&chi, &p).correlator(&times[..n]).unwrap();
            prop_assert!((symbolic - numeric).norm() < 1e-10 * (1.0 + symbolic.norm()));
        }

        #[test]
        fn reversed_sequence_conjugates(
            raw in prop::collection::vec((-0.8f64..0.8, -0.8f64..0.8), 1..30),
            times in prop::collection::vec(-5.0f64..5.0, 5),
        ) {
            let chi = random_chi(5, &raw);
            let p = PhysicalParams::default();
            let e = wightman_free(5, &chi).unwrap();
            let fwd = e.eval(&times, &p).unwrap();
            let rev: Vec<f64> = times.iter().rev().copied().collect();
            let back = e.eval(&rev, &p).unwrap();
            prop_assert!((fwd.conj() - back).norm() < 1e-10 * (1.0 + fwd.norm()));
        }

        #[test]
        fn connected_two_point_is_symmetric(raw in prop::collection::vec((-0.8f64..0.8, -0.8f64..0.8), 1..10)) {
            let chi = random_chi(2, &raw);
            let c2 = cumulant_expsum(2, &chi).unwrap();
            let mut connected = c2.clone();
            connected.add_term(sv("+-"), C64::new(-1.0, 0.0)).unwrap();
            let swapped = {
                let mut s = ExpSum::zero(2).unwrap();
                for (sigma, c) in connected.iter() {
                    let bits = (sigma.is_plus(0) as u64) << 1 | sigma.is_plus(1) as u64;
                    s.add_term(SignVector::from_bits(2, bits), *c).unwrap();
                }
                s
            };
            prop_assert!(connected.max_coeff_distance(&swapped) < 1e-15);
        }
    }
}
