//! Direct interaction-picture expansion of anharmonic correlators.
//!
//! Each `x(t_j)` is dressed as `U^dag(t_j, t0) x(t_j) U(t_j, t0)`. Expanding
//! the inverse evolution operator places insertions of `x^4` at `+` points to
//! the left of `x(t_j)`, expanding `U` places them at `-` points to its right.
//! Every insertion carries `(+-i lambda / hbar) / 4!` and runs over
//! `[t0, t_j]`; `k` insertions in one slot also carry the Dyson `1/k!`.

use std::fmt;

use rayon::prelude::*;

use crate::error::{argument, Error, Result};
use crate::labels::{Branch, InternalLabel};
use crate::params::PhysicalParams;
use crate::quadrature::{integrate, QuadratureSpec, ThetaConstraint};
use crate::tables::ChiTable;
use crate::wick::CumulantEvaluator;
use crate::C64;

pub const MAX_ORDER: usize = 2;

/// Distribution of `K` insertions over the `2n` internal points.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InsertionPlan {
    /// `counts[j] = [k_{j+}, k_{j-}]`.
    counts: Vec<[usize; 2]>,
}

fn branch_index(b: Branch) -> usize {
    match b {
        Branch::Plus => 0,
        Branch::Minus => 1,
    }
}

impl InsertionPlan {
    pub fn empty(n: usize) -> Self {
        Self { counts: vec![[0; 2]; n] }
    }

    /// Plan with one insertion per listed label.
    pub fn from_labels(n: usize, labels: &[InternalLabel]) -> Result<Self> {
        let mut plan = Self::empty(n);
        for l in labels {
            if l.slot >= n {
                return Err(argument(format!("label {l} outside a {n}-point correlator")));
            }
            plan.counts[l.slot][branch_index(l.branch)] += 1;
        }
        Ok(plan)
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn order(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, label: InternalLabel) -> usize {
        self.counts[label.slot][branch_index(label.branch)]
    }

    /// One entry per insertion copy, in ordering sequence.
    pub fn copies(&self) -> Vec<InternalLabel> {
        InternalLabel::all(self.n()).flat_map(|l| std::iter::repeat_n(l, self.count(l))).collect()
    }

    /// `prod (+i)^{k_{j+}} (-i)^{k_{j-}}`.
    pub fn sign_factor(&self) -> C64 {
        let plus: usize = self.counts.iter().map(|c| c[0]).sum();
        let minus: usize = self.counts.iter().map(|c| c[1]).sum();
        C64::i().powu(plus as u32) * (-C64::i()).powu(minus as u32)
    }

    /// `1 / prod k_{jb}!`.
    pub fn dyson_weight(&self) -> f64 {
        let fact = |k: usize| (1..=k).product::<usize>() as f64;
        1.0 / self.counts.iter().flatten().map(|&k| fact(k)).product::<f64>()
    }

    /// Everything multiplying the free correlator of the dressed sequence.
    pub fn prefactor(&self, p: &PhysicalParams) -> C64 {
        let k = self.order() as i32;
        self.sign_factor() * (p.lambda() / (p.hbar() * 24.0)).powi(k) * self.dyson_weight()
    }
}

impl fmt::Display for InsertionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.copies().iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", labels.join(", "))
    }
}

/// All ways of placing `order` insertions on the `2n` internal points.
pub fn enumerate_insertions(n: usize, order: usize) -> Result<Vec<InsertionPlan>> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    let labels: Vec<InternalLabel> = InternalLabel::all(n).collect();
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(order);
    fn rec(labels: &[InternalLabel], start: usize, left: usize, chosen: &mut Vec<InternalLabel>, n: usize, out: &mut Vec<InsertionPlan>) {
        if left == 0 {
            out.push(InsertionPlan::from_labels(n, chosen).expect("labels in range"));
            return;
        }
        for i in start..labels.len() {
            chosen.push(labels[i]);
            rec(labels, i, left - 1, chosen, n, out);
            chosen.pop();
        }
    }
    rec(&labels, 0, order, &mut chosen, n, &mut out);
    Ok(out)
}

fn check_times(times: &[f64], p: &PhysicalParams) -> Result<()> {
    if times.is_empty() {
        return Err(argument("at least one time is required"));
    }
    for &t in times {
        if !t.is_finite() {
            return Err(argument("times must be finite"));
        }
        if t < p.t0() {
            return Err(Error::Domain { value: t, lo: p.t0(), hi: f64::INFINITY });
        }
    }
    Ok(())
}

/// Operator times of the dressed sequence. Within a `+` point earlier
/// insertions stand to the left, within a `-` point later ones do, which
/// resolves the step functions of the (anti-)time-ordered products.
pub fn build_sequence(plan: &InsertionPlan, internal_times: &[f64], times: &[f64], p: &PhysicalParams) -> Result<Vec<f64>> {
    let copies = plan.copies();
    if internal_times.len() != copies.len() || times.len() != plan.n() {
        return Err(argument("internal and external times do not match the plan"));
    }
    for (l, &s) in copies.iter().zip(internal_times) {
        let hi = times[l.slot];
        if !(p.t0() <= s && s <= hi) {
            return Err(Error::Domain { value: s, lo: p.t0(), hi });
        }
    }
    let mut seq = Vec::with_capacity(times.len() + 4 * copies.len());
    let mut group = Vec::new();
    let push = |group: &mut Vec<f64>, seq: &mut Vec<f64>, later_left: bool| {
        if later_left {
            group.sort_by(|a, b| b.total_cmp(a));
        } else {
            group.sort_by(|a, b| a.total_cmp(b));
        }
        for &s in group.iter() {
            seq.extend([s; 4]);
        }
        group.clear();
    };
    for (j, &t) in times.iter().enumerate() {
        for branch in [Branch::Plus, Branch::Minus] {
            let label = InternalLabel::new(j, branch);
            group.extend(copies.iter().zip(internal_times).filter(|(l, _)| **l == label).map(|(_, &s)| s));
            if branch == Branch::Plus {
                push(&mut group, &mut seq, false);
                seq.push(t);
            } else {
                push(&mut group, &mut seq, true);
            }
        }
    }
    Ok(seq)
}

/// Integrand of one plan: prefactor times the free correlator of the dressed
/// sequence. `eval` must hold cumulants up to order `n + 4K`.
pub fn build_integrand(
    plan: &InsertionPlan,
    internal_times: &[f64],
    times: &[f64],
    eval: &CumulantEvaluator,
    p: &PhysicalParams,
) -> Result<C64> {
    let seq = build_sequence(plan, internal_times, times, p)?;
    Ok(plan.prefactor(p) * eval.correlator(&seq)?)
}

/// Cumulant order needed for an `n`-point correlator at order `K`.
pub fn required_order(n: usize, order: usize) -> usize {
    n + 4 * order
}

/// Integrated contribution of one plan.
pub fn plan_contribution(
    plan: &InsertionPlan,
    times: &[f64],
    eval: &CumulantEvaluator,
    p: &PhysicalParams,
    quad: &QuadratureSpec,
) -> Result<C64> {
    check_times(times, p)?;
    let copies = plan.copies();
    if copies.is_empty() {
        return build_integrand(plan, &[], times, eval, p);
    }
    if eval.max_order() < required_order(plan.n(), copies.len()) {
        return Err(argument(format!(
            "order-{} terms of a {}-point correlator need cumulants up to order {}",
            copies.len(),
            plan.n(),
            required_order(plan.n(), copies.len())
        )));
    }
    let region: Vec<(f64, f64)> = copies.iter().map(|l| (p.t0(), times[l.slot])).collect();
    // each same-point pair is split into its two orderings
    let mut cells: Vec<Vec<ThetaConstraint>> = vec![vec![]];
    for i in 0..copies.len() {
        for j in i + 1..copies.len() {
            if copies[i] == copies[j] {
                cells = cells
                    .into_iter()
                    .flat_map(|c| {
                        let mut a = c.clone();
                        a.push(ThetaConstraint { later: i, earlier: j });
                        let mut b = c;
                        b.push(ThetaConstraint { later: j, earlier: i });
                        [a, b]
                    })
                    .collect();
            }
        }
    }
    let mut total = C64::new(0.0, 0.0);
    for cell in &cells {
        let f = |s: &[f64]| build_integrand(plan, s, times, eval, p).unwrap_or(C64::new(f64::NAN, f64::NAN));
        let r = integrate(&region, cell, quad, f)?;
        if !r.value.is_finite() {
            return Err(argument("integrand could not be evaluated on the integration region"));
        }
        total += r.value;
    }
    Ok(total)
}

/// Contributions of orders `0..=order`, each summed over its plans.
pub fn perturbative_orders(
    chi: &ChiTable<C64>,
    times: &[f64],
    p: &PhysicalParams,
    order: usize,
    quad: &QuadratureSpec,
) -> Result<Vec<C64>> {
    if order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    check_times(times, p)?;
    quad.validate()?;
    if order > 0 && p.coupling_ratio() > 0.1 {
        log::warn!("coupling lambda hbar / omega^3 = {} is outside the perturbative regime", p.coupling_ratio());
    }
    let eval = CumulantEvaluator::new(chi, p);
    (0..=order)
        .map(|k| {
            let plans = enumerate_insertions(times.len(), k)?;
            plans
                .par_iter()
                .map(|plan| plan_contribution(plan, times, &eval, p, quad))
                .try_reduce(|| C64::new(0.0, 0.0), |a, b| Ok(a + b))
        })
        .collect()
}

/// Correlator through order `order` in the coupling.
pub fn correlator_perturbative(
    chi: &ChiTable<C64>,
    times: &[f64],
    p: &PhysicalParams,
    order: usize,
    quad: &QuadratureSpec,
) -> Result<C64> {
    Ok(perturbative_orders(chi, times, p, order, quad)?.into_iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::wightman_exact_anharmonic;
    use crate::states::{chi_table, StateSpec};

    fn label(slot: usize, branch: Branch) -> InternalLabel {
        InternalLabel::new(slot, branch)
    }

    #[test]
    fn plan_counts() {
        assert_eq!(enumerate_insertions(2, 1).unwrap().len(), 4);
        assert_eq!(enumerate_insertions(2, 0).unwrap(), vec![InsertionPlan::empty(2)]);
        assert_eq!(enumerate_insertions(1, 2).unwrap().len(), 3);
        assert_eq!(enumerate_insertions(4, 2).unwrap().len(), 36);
        assert_eq!(enumerate_insertions(2, 3).unwrap_err(), Error::UnsupportedOrder(3));
        for plan in enumerate_insertions(3, 2).unwrap() {
            assert_eq!(plan.order(), 2);
        }
    }

    #[test]
    fn plan_factors() {
        let plan = InsertionPlan::from_labels(2, &[label(0, Branch::Plus), label(0, Branch::Plus)]).unwrap();
        assert_eq!(plan.sign_factor(), C64::new(-1.0, 0.0));
        assert_eq!(plan.dyson_weight(), 0.5);
        let plan = InsertionPlan::from_labels(2, &[label(0, Branch::Minus)]).unwrap();
        assert_eq!(plan.sign_factor(), C64::new(0.0, -1.0));
        assert_eq!(plan.to_string(), "{t_{1-}}");
        let p = PhysicalParams::new(1.0, 2.0).unwrap().with_lambda(0.48).unwrap();
        assert!((plan.prefactor(&p) - C64::new(0.0, -0.01)).norm() < 1e-15);
    }

    #[test]
    fn dressed_sequence_layout() {
        let p = PhysicalParams::default();
        let plan = InsertionPlan::from_labels(2, &[label(1, Branch::Plus), label(0, Branch::Minus)]).unwrap();
        let seq = build_sequence(&plan, &[0.2, 0.3], &[1.0, 2.0], &p).unwrap();
        assert_eq!(seq, vec![1.0, 0.2, 0.2, 0.2, 0.2, 0.3, 0.3, 0.3, 0.3, 2.0]);
        let twice_plus = InsertionPlan::from_labels(1, &[label(0, Branch::Plus); 2]).unwrap();
        let seq = build_sequence(&twice_plus, &[0.7, 0.1], &[1.0], &p).unwrap();
        assert_eq!(seq, vec![0.1, 0.1, 0.1, 0.1, 0.7, 0.7, 0.7, 0.7, 1.0]);
        let twice_minus = InsertionPlan::from_labels(1, &[label(0, Branch::Minus); 2]).unwrap();
        let seq = build_sequence(&twice_minus, &[0.1, 0.7], &[1.0], &p).unwrap();
        assert_eq!(seq[1], 0.7);
        assert_eq!(seq[8], 0.1);
        assert!(matches!(build_sequence(&plan, &[1.5, 0.3], &[1.0, 2.0], &p), Err(Error::Domain { .. })));
    }

    #[test]
    fn copy_permutation_invariance() {
        let p = PhysicalParams::default().with_lambda_rel(0.01).unwrap();
        let chi = chi_table(&StateSpec::coherent(C64::new(0.3, 0.4)), 10, &p).unwrap();
        let eval = CumulantEvaluator::new(&chi, &p);
        for l in [label(0, Branch::Plus), label(1, Branch::Minus)] {
            let plan = InsertionPlan::from_labels(2, &[l, l]).unwrap();
            let a = build_integrand(&plan, &[0.2, 0.6], &[0.9, 1.1], &eval, &p).unwrap();
            let b = build_integrand(&plan, &[0.6, 0.2], &[0.9, 1.1], &eval, &p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zeroth_order_is_free() {
        let p = PhysicalParams::default().with_lambda_rel(0.05).unwrap();
        let chi = chi_table(&StateSpec::thermal(0.9), 4, &p).unwrap();
        let times = [0.4, 1.2, 0.1];
        let eval = CumulantEvaluator::new(&chi, &p);
        let v = correlator_perturbative(&chi, &times, &p, 0, &QuadratureSpec::default()).unwrap();
        assert_eq!(v, eval.correlator(&times).unwrap());
        let free = PhysicalParams::default();
        let chi = chi_table(&StateSpec::thermal(0.9), 10, &free).unwrap();
        let v = correlator_perturbative(&chi, &[0.4, 1.2], &free, 2, &QuadratureSpec::default()).unwrap();
        let want = CumulantEvaluator::new(&chi, &free).correlator(&[0.4, 1.2]).unwrap();
        assert!((v - want).norm() < 1e-15);
    }

    #[test]
    fn times_before_switch_on_rejected() {
        let p = PhysicalParams::default().with_t0(1.0).unwrap().with_lambda(0.01).unwrap();
        let chi = chi_table(&StateSpec::Vacuum, 6, &p).unwrap();
        let err = correlator_perturbative(&chi, &[0.5, 2.0], &p, 1, &QuadratureSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
        let low = chi_table(&StateSpec::Vacuum, 2, &p).unwrap();
        assert!(correlator_perturbative(&low, &[1.5, 2.0], &p, 1, &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn first_and_second_order_track_oracle() {
        let state = StateSpec::coherent(C64::new(0.5, 0.2));
        let times = [0.9, 0.3];
        let quad = QuadratureSpec::default();
        for rel in [1e-3, 4e-3] {
            let p = PhysicalParams::new(1.1, 0.8).unwrap().with_lambda_rel(rel).unwrap();
            let chi = chi_table(&state, 10, &p).unwrap();
            let orders = perturbative_orders(&chi, &times, &p, 2, &quad).unwrap();
            let exact = wightman_exact_anharmonic(&state, &times, &p).unwrap().value;
            let first = exact - orders[0] - orders[1];
            let second = first - orders[2];
            assert!(first.norm() < 10.0 * orders[1].norm() * rel, "rel {rel}: {first} vs {}", orders[1]);
            assert!(second.norm() < 0.1 * first.norm(), "rel {rel}: {second} vs {first}");
        }
    }
}
