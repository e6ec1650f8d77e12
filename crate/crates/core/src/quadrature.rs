//! Tensor-product Gauss-Legendre integration over boxes with optional
//! ordering constraints, refined by node doubling.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub base_nodes: usize,
    pub tol: f64,
    pub max_doublings: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { base_nodes: 32, tol: 1e-9, max_doublings: 6 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_nodes == 0 {
            return Err(argument("quadrature needs at least one node"));
        }
        if !(self.tol > 0.0) {
            return Err(argument("quadrature tolerance must be positive"));
        }
        Ok(())
    }
}

/// `var[later] >= var[earlier]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ThetaConstraint {
    pub later: usize,
    pub earlier: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: C64,
    pub nodes: usize,
    /// Relative change in the final doubling step.
    pub change: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
type Rule = Arc<Vec<(f64, f64)>>;

fn rule(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().expect("rule cache poisoned").get(&n) {
        return r.clone();
    }
    let degree = NonZeroUsize::new(n).expect("positive node count");
    let pairs = Arc::new(GaussLegendre::new(degree).as_node_weight_pairs().to_vec());
    cache.lock().expect("rule cache poisoned").insert(n, pairs.clone());
    pairs
}

/// Region with ordering constraints resolved into a nested parametrization:
/// a constrained variable runs from the shared lower bound up to its
/// partner's value, so every cell integrand is free of step functions.
struct Layout<'a> {
    region: &'a [(f64, f64)],
    /// `bound_by[i] = Some(j)` when `var[i]` is bounded above by `var[j]`.
    bound_by: Vec<Option<usize>>,
    /// Evaluation order: free variables first.
    order: Vec<usize>,
}

impl<'a> Layout<'a> {
    fn new(region: &'a [(f64, f64)], constraints: &[ThetaConstraint]) -> Result<Self> {
        let d = region.len();
        let mut bound_by = vec![None; d];
        let mut touched = vec![false; d];
        for c in constraints {
            if c.later >= d || c.earlier >= d || c.later == c.earlier {
                return Err(argument(format!("constraint {c:?} does not reference two distinct variables")));
            }
            if touched[c.later] || touched[c.earlier] {
                return Err(argument("each variable may appear in at most one ordering constraint"));
            }
            touched[c.later] = true;
            touched[c.earlier] = true;
            if region[c.later] != region[c.earlier] {
                return Err(argument("ordered variables must share one integration interval"));
            }
            bound_by[c.earlier] = Some(c.later);
        }
        let order = (0..d).filter(|&i| bound_by[i].is_none()).chain((0..d).filter(|&i| bound_by[i].is_some())).collect();
        Ok(Self { region, bound_by, order })
    }

    /// Maps reference nodes in `[-1, 1]^d` to a point and its Jacobian.
    fn map(&self, reference: &[f64], point: &mut [f64]) -> f64 {
        let mut jac = 1.0;
        for &i in &self.order {
            let (lo, hi) = self.region[i];
            let hi = match self.bound_by[i] {
                Some(j) => point[j],
                None => hi,
            };
            let half = 0.5 * (hi - lo);
            point[i] = lo + half * (reference[i] + 1.0);
            jac *= half;
        }
        jac
    }
}

fn tensor_sum<F>(layout: &Layout<'_>, n: usize, f: &F) -> (C64, f64)
where
    F: Fn(&[f64]) -> C64 + Sync,
{
    let d = layout.region.len();
    let nodes = rule(n);
    let total = n.pow(d as u32);
    (0..total)
        .into_par_iter()
        .fold(
            || (C64::new(0.0, 0.0), 0.0),
            |(acc, l1), idx| {
                let mut reference = [0.0; 8];
                let mut weight = 1.0;
                let mut rem = idx;
                for r in reference.iter_mut().take(d) {
                    let (x, w) = nodes[rem % n];
                    *r = x;
                    weight *= w;
                    rem /= n;
                }
                let mut point = [0.0; 8];
                let jac = layout.map(&reference[..d], &mut point[..d]);
                let v = f(&point[..d]) * (weight * jac);
                (acc + v, l1 + v.norm())
            },
        )
        .reduce(|| (C64::new(0.0, 0.0), 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Integrates `f` over the box `region` restricted by `constraints`,
/// doubling the per-axis node count until successive results agree to the
/// relative tolerance. Integrals that cancel to near zero are judged
/// against the integral of `|f|` instead.
pub fn integrate<F>(region: &[(f64, f64)], constraints: &[ThetaConstraint], spec: &QuadratureSpec, f: F) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> C64 + Sync,
{
    spec.validate()?;
    if region.is_empty() {
        return Ok(QuadResult { value: f(&[]), nodes: 0, change: 0.0 });
    }
    if region.len() > 8 {
        return Err(argument("at most 8 integration variables are supported"));
    }
    let layout = Layout::new(region, constraints)?;
    let mut n = spec.base_nodes;
    let (mut prev, _) = tensor_sum(&layout, n, &f);
    let mut change = f64::INFINITY;
    for _ in 0..spec.max_doublings {
        n *= 2;
        let (value, l1) = tensor_sum(&layout, n, &f);
        let scale = value.norm().max(1e-3 * l1);
        change = if scale > 0.0 { (value - prev).norm() / scale } else { 0.0 };
        if change <= spec.tol {
            return Ok(QuadResult { value, nodes: n, change });
        }
        prev = value;
    }
    Err(Error::Convergence { nodes: n, change })
}
