//! Exact reference computations in a truncated number basis.
//!
//! Every public entry point that takes a [`StateSpec`] sizes the basis
//! automatically: it starts from a state-dependent dimension and doubles it
//! until the observable changes by less than the policy tolerance when ten
//! more levels are added.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{argument, Error, Result};
use crate::params::PhysicalParams;
use crate::states::{chi_table, xi_table, ChiRoute, StateSpec};
use crate::tables::{ChiTable, XiTable};
use crate::transforms::xi_to_chi;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    /// Required agreement between dimensions `D` and `D + step`.
    pub tol: f64,
    pub step: usize,
    pub max_dim: usize,
    /// Largest trace deficit accepted when building a density matrix.
    pub deficit_bound: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { tol: 1e-12, step: 10, max_dim: 1280, deficit_bound: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedOperator {
    matrix: DMatrix<C64>,
}

impl TruncatedOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }
}

#[derive(Clone, Debug)]
pub struct LadderOps {
    pub a: TruncatedOperator,
    pub a_dag: TruncatedOperator,
    pub x: TruncatedOperator,
    pub p: TruncatedOperator,
}

fn annihilator(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

fn position_real(dim: usize, p: &PhysicalParams) -> DMatrix<f64> {
    let a = annihilator(dim);
    (&a + a.transpose()) * p.propagator_scale().sqrt()
}

pub fn ladder_ops(dim: usize, p: &PhysicalParams) -> Result<LadderOps> {
    if dim < 2 {
        return Err(argument("truncated space needs at least two levels"));
    }
    let a = annihilator(dim).map(|v| C64::new(v, 0.0));
    let a_dag = a.adjoint();
    let x = (&a + &a_dag) * C64::new(p.propagator_scale().sqrt(), 0.0);
    let mom = (&a - &a_dag) * C64::new(0.0, -(p.omega() * p.hbar() / 2.0).sqrt());
    Ok(LadderOps {
        a: TruncatedOperator { matrix: a },
        a_dag: TruncatedOperator { matrix: a_dag },
        x: TruncatedOperator { matrix: x },
        p: TruncatedOperator { matrix: mom },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityRepr {
    rho: DMatrix<C64>,
    trace_deficit: f64,
}

impl DensityRepr {
    /// Normalizes `rho` to unit trace, recording the deficit.
    pub fn from_matrix(rho: DMatrix<C64>) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
            return Err(argument("density matrix must be square and non-empty"));
        }
        let trace = rho.trace().re;
        if !(trace > 0.0) {
            return Err(argument("density matrix has non-positive trace"));
        }
        Ok(Self { trace_deficit: 1.0 - trace, rho: rho / C64::new(trace, 0.0) })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn trace_deficit(&self) -> f64 {
        self.trace_deficit
    }

    pub fn top_occupation(&self) -> f64 {
        let d = self.dim();
        self.rho[(d - 1, d - 1)].re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.min()
    }
}

fn coherent_amplitudes(phi: C64, dim: usize) -> DVector<C64> {
    let mut c = DVector::from_element(dim, C64::new(0.0, 0.0));
    c[0] = C64::new((-phi.norm_sqr() / 2.0).exp(), 0.0);
    for k in 1..dim {
        c[k] = c[k - 1] * phi / (k as f64).sqrt();
    }
    c
}

/// Density matrix at dimension `dim` before normalization.
fn raw_density(state: &StateSpec, dim: usize, p: &PhysicalParams) -> Result<DMatrix<C64>> {
    let zero = C64::new(0.0, 0.0);
    Ok(match state {
        StateSpec::Vacuum => DMatrix::from_fn(dim, dim, |i, j| if i == 0 && j == 0 { C64::new(1.0, 0.0) } else { zero }),
        StateSpec::Number { n } => {
            if *n >= dim {
                return Err(Error::Truncation { dim, detail: format!("number state {n} does not fit") });
            }
            DMatrix::from_fn(dim, dim, |i, j| if i == *n && j == *n { C64::new(1.0, 0.0) } else { zero })
        }
        StateSpec::Coherent { phi } => {
            let c = coherent_amplitudes((*phi).into(), dim);
            &c * c.adjoint()
        }
        StateSpec::Thermal { beta } => {
            let q = (-beta * p.hbar() * p.omega()).exp();
            DMatrix::from_fn(dim, dim, |i, j| if i == j { C64::new((1.0 - q) * q.powi(i as i32), 0.0) } else { zero })
        }
        StateSpec::Mixture { parts } => {
            let mut acc = DMatrix::from_element(dim, dim, zero);
            for part in parts {
                acc += raw_density(&part.state, dim, p)? * C64::new(part.w, 0.0);
            }
            acc
        }
        StateSpec::CustomDensity { rows } => {
            let have = rows.len();
            let mut m = DMatrix::from_element(dim, dim, zero);
            for (i, row) in rows.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let v = C64::from(*v);
                    if i < dim && j < dim {
                        m[(i, j)] = v;
                    } else if v != zero {
                        return Err(Error::Truncation { dim, detail: format!("custom density of size {have} does not fit") });
                    }
                }
            }
            m
        }
        StateSpec::CustomXi { .. } => {
            return Err(argument("a moment table does not determine a density matrix here"));
        }
    })
}

pub fn build_density(state: &StateSpec, dim: usize, p: &PhysicalParams) -> Result<DensityRepr> {
    build_density_with(state, dim, p, &TruncationPolicy::default())
}

pub fn build_density_with(state: &StateSpec, dim: usize, p: &PhysicalParams, policy: &TruncationPolicy) -> Result<DensityRepr> {
    state.validate()?;
    if dim < 2 {
        return Err(argument("truncated space needs at least two levels"));
    }
    let rho = DensityRepr::from_matrix(raw_density(state, dim, p)?)?;
    if rho.trace_deficit > policy.deficit_bound {
        return Err(Error::Truncation { dim, detail: format!("trace deficit {:e}", rho.trace_deficit) });
    }
    Ok(rho)
}

/// Starting dimension: `max(40, 4 ceil|phi|^2 + 20, ceil(8 / beta hbar omega) + 20)`.
pub fn initial_dim(state: &StateSpec, p: &PhysicalParams) -> usize {
    let own = match state {
        StateSpec::Coherent { phi } => 4 * C64::from(*phi).norm_sqr().ceil() as usize + 20,
        StateSpec::Thermal { beta } => (8.0 / (beta * p.hbar() * p.omega())).ceil() as usize + 20,
        StateSpec::Number { n } => n + 20,
        StateSpec::Mixture { parts } => parts.iter().map(|part| initial_dim(&part.state, p)).max().unwrap_or(0),
        StateSpec::CustomDensity { rows } => rows.len(),
        _ => 0,
    };
    own.max(40)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Converged<T> {
    pub value: T,
    pub dim: usize,
}

/// Doubles the dimension until `eval` at `D` and `D + step` agree.
pub fn converge<T>(
    state: &StateSpec,
    p: &PhysicalParams,
    policy: &TruncationPolicy,
    eval: impl Fn(&DensityRepr) -> Result<T>,
    distance: impl Fn(&T, &T) -> f64,
) -> Result<Converged<T>> {
    converge_with(initial_dim(state, p), policy, |dim| build_density_with(state, dim, p, policy), eval, distance)
}

/// Same loop over an arbitrary family of truncated densities.
pub fn converge_with<T>(
    start: usize,
    policy: &TruncationPolicy,
    build: impl Fn(usize) -> Result<DensityRepr>,
    eval: impl Fn(&DensityRepr) -> Result<T>,
    distance: impl Fn(&T, &T) -> f64,
) -> Result<Converged<T>> {
    let mut dim = start.max(1);
    let mut last = String::new();
    while dim + policy.step <= policy.max_dim {
        let attempt = (|| {
            let lo = eval(&build(dim)?)?;
            let hi = eval(&build(dim + policy.step)?)?;
            Ok::<_, Error>((distance(&lo, &hi), hi))
        })();
        match attempt {
            Ok((d, value)) if d <= policy.tol => return Ok(Converged { value, dim: dim + policy.step }),
            Ok((d, _)) => last = format!("change {d:e} under D -> D + {}", policy.step),
            Err(Error::Truncation { detail, .. }) => last = detail,
            Err(e) => return Err(e),
        }
        dim *= 2;
    }
    Err(Error::Truncation { dim, detail: format!("no stable dimension up to {}: {last}", policy.max_dim) })
}

fn relative_distance(a: &C64, b: &C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

fn table_distance<K: crate::tables::TableKind>(a: &crate::tables::Table<C64, K>, b: &crate::tables::Table<C64, K>) -> f64 {
    a.iter().zip(b.iter()).map(|((_, _, x), (_, _, y))| relative_distance(x, y)).fold(0.0, f64::max)
}

/// `Tr[rho (a^dag)^m a^n]` using the exact ladder matrix elements.
pub fn xi_from_density(rho: &DensityRepr, m: usize, n: usize) -> C64 {
    let dim = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for k in n..dim {
        let target = k - n + m;
        if target >= dim {
            break;
        }
        let down: f64 = ((k - n + 1)..=k).map(|j| j as f64).product();
        let up: f64 = ((k - n + 1)..=target).map(|j| j as f64).product();
        acc += rho.rho[(k, target)] * (down * up).sqrt();
    }
    acc
}

pub fn xi_table_from_density(rho: &DensityRepr, max_order: usize) -> Result<XiTable<C64>> {
    XiTable::from_fn(max_order, |m, n| xi_from_density(rho, m, n))
}

pub fn xi_numeric(state: &StateSpec, m: usize, n: usize, p: &PhysicalParams) -> Result<Converged<C64>> {
    converge(state, p, &TruncationPolicy::default(), |rho| Ok(xi_from_density(rho, m, n)), relative_distance)
}

pub fn xi_table_numeric(state: &StateSpec, max_order: usize, p: &PhysicalParams) -> Result<Converged<XiTable<C64>>> {
    converge(state, p, &TruncationPolicy::default(), |rho| xi_table_from_density(rho, max_order), table_distance)
}

/// Moments of `rho` passed through the series logarithm.
pub fn chi_numeric(rho: &DensityRepr, max_order: usize) -> Result<ChiTable<C64>> {
    xi_to_chi(&xi_table_from_density(rho, max_order)?)
}

pub fn chi_numeric_state(state: &StateSpec, max_order: usize, p: &PhysicalParams) -> Result<Converged<ChiTable<C64>>> {
    converge(state, p, &TruncationPolicy::default(), |rho| chi_numeric(rho, max_order), table_distance)
}

/// Moment table from closed forms, or from the oracle for a custom density.
pub fn xi_table_auto(state: &StateSpec, max_order: usize, p: &PhysicalParams) -> Result<XiTable<C64>> {
    match state.chi_route() {
        ChiRoute::Oracle => Ok(xi_table_numeric(state, max_order, p)?.value),
        _ => xi_table(state, max_order, p),
    }
}

/// Cumulant table by the cheapest available route.
pub fn chi_table_auto(state: &StateSpec, max_order: usize, p: &PhysicalParams) -> Result<ChiTable<C64>> {
    match state.chi_route() {
        ChiRoute::Oracle => Ok(chi_numeric_state(state, max_order, p)?.value),
        _ => chi_table(state, max_order, p),
    }
}

fn ln_factorials(dim: usize) -> Vec<f64> {
    let mut lf = vec![0.0; dim + 1];
    for k in 1..=dim {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    lf
}

/// `ln Tr[rho e^{mu a^dag} e^{mu_bar a}]`.
pub fn zchi_numeric(rho: &DensityRepr, mu: C64, mu_bar: C64) -> C64 {
    let dim = rho.dim();
    let lf = ln_factorials(dim);
    // (j, i) entry of e^{z a^dag} for j >= i: z^{j-i} / (j-i)! sqrt(j! / i!)
    let raising = |z: C64| {
        DMatrix::from_fn(dim, dim, |j, i| {
            if j < i {
                return C64::new(0.0, 0.0);
            }
            let k = j - i;
            let mag = (0.5 * (lf[j] - lf[i]) - lf[k]).exp();
            z.powu(k as u32) * mag
        })
    };
    let create = raising(mu);
    let annihilate = raising(mu_bar).transpose();
    (rho.matrix() * create * annihilate).trace().ln()
}

fn position_at(dim: usize, t: f64, p: &PhysicalParams) -> DMatrix<C64> {
    let s = p.propagator_scale().sqrt();
    let down = C64::from_polar(s, -p.omega() * t);
    let up = down.conj();
    DMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            down * (j as f64).sqrt()
        } else if i == j + 1 {
            up * (i as f64).sqrt()
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `Tr[rho x(t_1) ... x(t_n)]` at the dimension of `rho`.
pub fn free_correlator(rho: &DensityRepr, times: &[f64], p: &PhysicalParams) -> C64 {
    let mut m = rho.matrix().clone();
    for &t in times {
        m *= position_at(rho.dim(), t, p);
    }
    m.trace()
}

pub fn wightman_exact_free(state: &StateSpec, times: &[f64], p: &PhysicalParams) -> Result<Converged<C64>> {
    converge(state, p, &TruncationPolicy::default(), |rho| Ok(free_correlator(rho, times, p)), relative_distance)
}

/// Eigendecomposition of the truncated quartic Hamiltonian.
#[derive(Debug)]
pub struct AnharmonicSpectrum {
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
    position: DMatrix<f64>,
}

impl AnharmonicSpectrum {
    fn compute(dim: usize, p: &PhysicalParams) -> Self {
        // x^4 is formed in a larger space so its retained block is exact
        let big = position_real(dim + 4, p);
        let sq = &big * &big;
        let quartic = (&sq * &sq).view((0, 0), (dim, dim)).into_owned();
        let h0 = DMatrix::from_fn(dim, dim, |i, j| if i == j { (i as f64 + 0.5) * p.hbar() * p.omega() } else { 0.0 });
        let h = h0 + quartic * (p.lambda() / 24.0);
        let eig = SymmetricEigen::new(h);
        let position = eig.eigenvectors.transpose() * position_real(dim, p) * &eig.eigenvectors;
        Self { energies: eig.eigenvalues, vectors: eig.eigenvectors, position }
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }
}

pub fn spectrum(dim: usize, p: &PhysicalParams) -> Arc<AnharmonicSpectrum> {
    type Key = (usize, u64, u64, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<AnharmonicSpectrum>>>> = OnceLock::new();
    let key = (dim, p.omega().to_bits(), p.hbar().to_bits(), p.lambda().to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(s) = cache.lock().expect("spectrum cache poisoned").get(&key) {
        return s.clone();
    }
    let s = Arc::new(AnharmonicSpectrum::compute(dim, p));
    cache.lock().expect("spectrum cache poisoned").insert(key, s.clone());
    s
}

/// Heisenberg-picture correlator of the quartic oscillator at the dimension
/// of `rho`. The state is referred to the free evolution at time zero, so
/// `x_H(t) = e^{i H0 t0} e^{i H (t - t0)} x e^{-i H (t - t0)} e^{-i H0 t0}`
/// and `lambda = 0` reproduces the free correlator for any `t0`.
pub fn anharmonic_correlator(rho: &DensityRepr, times: &[f64], p: &PhysicalParams) -> C64 {
    let dim = rho.dim();
    let spec = spectrum(dim, p);
    let v = spec.vectors.map(|x| C64::new(x, 0.0));
    let free_phase = DVector::from_fn(dim, |n, _| C64::from_polar(1.0, -(n as f64 + 0.5) * p.omega() * p.t0()));
    let shifted = DMatrix::from_fn(dim, dim, |i, j| free_phase[i] * rho.matrix()[(i, j)] * free_phase[j].conj());
    let mut m = v.transpose() * shifted * &v;
    for &t in times {
        let dt = (t - p.t0()) / p.hbar();
        let ph = DVector::from_fn(dim, |k, _| C64::from_polar(1.0, spec.energies[k] * dt));
        let xt = DMatrix::from_fn(dim, dim, |k, l| ph[k] * spec.position[(k, l)] * ph[l].conj());
        m *= xt;
    }
    m.trace()
}

pub fn wightman_exact_anharmonic(state: &StateSpec, times: &[f64], p: &PhysicalParams) -> Result<Converged<C64>> {
    converge(state, p, &TruncationPolicy::default(), |rho| Ok(anharmonic_correlator(rho, times, p)), relative_distance)
}

/// Gibbs state of the truncated quartic Hamiltonian in the number basis.
pub fn anharmonic_thermal_density(beta: f64, dim: usize, p: &PhysicalParams) -> Result<DensityRepr> {
    if !(beta > 0.0) {
        return Err(argument("beta must be positive"));
    }
    let spec = spectrum(dim, p);
    let e_min = spec.energies.min();
    let boltzmann = spec.energies.map(|e| (-beta * (e - e_min)).exp());
    let rho = &spec.vectors * DMatrix::from_diagonal(&boltzmann) * spec.vectors.transpose();
    DensityRepr::from_matrix(rho.map(|x| C64::new(x, 0.0)))
}

fn interacting_start(beta: f64, p: &PhysicalParams) -> usize {
    initial_dim(&StateSpec::thermal(beta), p)
}

/// Cumulants of the Gibbs state of the quartic Hamiltonian.
pub fn chi_interacting_thermal(beta: f64, max_order: usize, p: &PhysicalParams) -> Result<Converged<ChiTable<C64>>> {
    converge_with(
        interacting_start(beta, p),
        &TruncationPolicy::default(),
        |dim| anharmonic_thermal_density(beta, dim, p),
        |rho| chi_numeric(rho, max_order),
        table_distance,
    )
}

/// Exact interacting correlator when the initial state is the interacting
/// Gibbs state rather than the free one.
pub fn wightman_exact_interacting_thermal(beta: f64, times: &[f64], p: &PhysicalParams) -> Result<Converged<C64>> {
    converge_with(
        interacting_start(beta, p),
        &TruncationPolicy::default(),
        |dim| anharmonic_thermal_density(beta, dim, p),
        |rho| Ok(anharmonic_correlator(rho, times, p)),
        relative_distance,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationReport {
    pub pass: bool,
    pub deficit: f64,
    pub top_occupation: f64,
}

pub fn truncation_check(state: &StateSpec, dim: usize, tol: f64, p: &PhysicalParams) -> Result<TruncationReport> {
    state.validate()?;
    let rho = DensityRepr::from_matrix(raw_density(state, dim, p)?)?;
    let deficit = rho.trace_deficit().max(0.0);
    let top = rho.top_occupation().abs();
    Ok(TruncationReport { pass: deficit < tol && top < tol, deficit, top_occupation: top })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{chi_closed, xi_closed};

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn canonical_commutators_on_interior() {
        let p = PhysicalParams::new(1.7, 0.6).unwrap();
        let ops = ladder_ops(12, &p).unwrap();
        let (a, ad, x, mom) = (ops.a.matrix(), ops.a_dag.matrix(), ops.x.matrix(), ops.p.matrix());
        let ca = a * ad - ad * a;
        let cx = x * mom - mom * x;
        for i in 0..11 {
            for j in 0..11 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((ca[(i, j)] - C64::new(id, 0.0)).norm() < 1e-13);
                assert!((cx[(i, j)] - C64::new(0.0, id * 0.6)).norm() < 1e-13);
            }
        }
        let e1 = DVector::from_fn(12, |i, _| if i == 1 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let down = a * e1;
        assert_eq!(down[0], C64::new(1.0, 0.0));
        assert!(ladder_ops(1, &p).is_err());
    }

    #[test]
    fn density_constructions() {
        let p = unit();
        let vac = build_density(&StateSpec::Vacuum, 8, &p).unwrap();
        assert_eq!(vac.matrix()[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(vac.trace_deficit(), 0.0);
        let phi = C64::new(0.8, 0.3);
        let coh = build_density(&StateSpec::coherent(phi), 40, &p).unwrap();
        for n in 0..6 {
            let want = phi.norm_sqr().powi(n) / (1..=n).map(|k| k as f64).product::<f64>() * (-phi.norm_sqr()).exp();
            assert!((coh.matrix()[(n as usize, n as usize)].re - want).abs() < 1e-14);
        }
        let th = build_density(&StateSpec::thermal(0.9), 60, &p).unwrap();
        for n in 0..10 {
            let ratio = th.matrix()[(n + 1, n + 1)].re / th.matrix()[(n, n)].re;
            assert!((ratio - (-0.9f64).exp()).abs() < 1e-13);
        }
        for rho in [&vac, &coh, &th] {
            assert!(rho.hermiticity_defect() < 1e-12);
            assert!(rho.min_eigenvalue() > -1e-10);
        }
        assert!(matches!(build_density(&StateSpec::thermal(0.01), 40, &p), Err(Error::Truncation { .. })));
    }

    #[test]
    fn numeric_moments() {
        let p = unit();
        assert_eq!(xi_numeric(&StateSpec::Vacuum, 1, 1, &p).unwrap().value, C64::new(0.0, 0.0));
        let v = xi_numeric(&StateSpec::coherent(C64::new(0.5, 0.0)), 2, 1, &p).unwrap().value;
        assert!((v - C64::new(0.125, 0.0)).norm() < 1e-12);
        let v = xi_numeric(&StateSpec::thermal(std::f64::consts::LN_2), 1, 1, &p).unwrap().value;
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn closed_forms_match_oracle() {
        let p = PhysicalParams::new(1.3, 0.8).unwrap();
        let states = [
            StateSpec::Vacuum,
            StateSpec::coherent(C64::new(1.1, -0.6)),
            StateSpec::thermal(0.7),
            StateSpec::Number { n: 3 },
            StateSpec::mixture([(0.3, StateSpec::coherent(C64::new(0.4, 0.2))), (0.7, StateSpec::thermal(1.5))]),
        ];
        for s in &states {
            let table = xi_table_numeric(s, 6, &p).unwrap().value;
            for (m, n, v) in table.iter() {
                let want = xi_closed(s, m, n, &p).unwrap();
                assert!((v - want).norm() < 1e-10 * want.norm().max(1.0), "{s:?} ({m},{n})");
            }
            assert!(table.hermiticity_defect() < 1e-12 * 100.0);
        }
    }

    #[test]
    fn generating_function() {
        let p = unit();
        let mu = C64::new(0.3, 0.2);
        let vac = build_density(&StateSpec::Vacuum, 30, &p).unwrap();
        assert!(zchi_numeric(&vac, mu, mu.conj()).norm() < 1e-14);
        let phi = C64::new(0.7, -0.4);
        let coh = build_density(&StateSpec::coherent(phi), 50, &p).unwrap();
        let want = mu * phi.conj() + mu.conj() * phi;
        assert!((zchi_numeric(&coh, mu, mu.conj()) - want).norm() < 1e-12);
    }

    #[test]
    fn generating_function_matches_cumulant_table() {
        // spot check of the series-log route against ln Tr directly
        let p = unit();
        let rho = build_density(&StateSpec::Number { n: 2 }, 20, &p).unwrap();
        let chi = chi_numeric(&rho, 12).unwrap();
        let mu = C64::new(0.05, 0.02);
        let mut series = C64::new(0.0, 0.0);
        for (m, n, c) in chi.iter() {
            if m + n == 0 {
                continue;
            }
            let fact = |k: usize| (1..=k).map(|j| j as f64).product::<f64>();
            series += c * mu.powu(m as u32) * mu.conj().powu(n as u32) / (fact(m) * fact(n));
        }
        assert!((zchi_numeric(&rho, mu, mu.conj()) - series).norm() < 1e-12);
    }

    #[test]
    fn free_oracle_basics() {
        let p = PhysicalParams::new(1.0, 1.0).unwrap();
        let vac = wightman_exact_free(&StateSpec::Vacuum, &[1.0, 0.0], &p).unwrap().value;
        assert!((vac - C64::from_polar(0.5, -1.0)).norm() < 1e-14);
        let phi = C64::new(0.4, 0.9);
        let t = 0.7;
        let one = wightman_exact_free(&StateSpec::coherent(phi), &[t], &p).unwrap().value;
        let want = (phi * C64::from_polar(1.0, -t) + phi.conj() * C64::from_polar(1.0, t)) * 0.5f64.sqrt();
        assert!((one - want).norm() < 1e-12);
        let rho = build_density(&StateSpec::thermal(1.0), 60, &p).unwrap();
        assert!((free_correlator(&rho, &[], &p) - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn anharmonic_reduces_to_free() {
        let p = PhysicalParams::new(1.2, 0.9).unwrap().with_t0(-0.4).unwrap();
        let state = StateSpec::coherent(C64::new(0.6, 0.2));
        let times = [0.3, 1.1, -0.2];
        let free = wightman_exact_free(&state, &times, &p).unwrap().value;
        let anh = wightman_exact_anharmonic(&state, &times, &p).unwrap().value;
        assert!((free - anh).norm() < 1e-12);
        let q = p.with_lambda_rel(0.05).unwrap().with_t0(0.0).unwrap();
        let rho = build_density(&state, 40, &q).unwrap();
        let equal_time = anharmonic_correlator(&rho, &[0.0; 4], &q);
        assert!((equal_time - free_correlator(&rho, &[0.0; 4], &q)).norm() < 1e-12);
    }

    #[test]
    fn thermal_cumulants_numeric() {
        let p = unit();
        let chi = chi_numeric_state(&StateSpec::thermal(0.8), 6, &p).unwrap().value;
        for (m, n, v) in chi.iter() {
            let want = chi_closed(&StateSpec::thermal(0.8), m, n, &p).unwrap().unwrap();
            assert!((v - want).norm() < 1e-10);
        }
        let weak = p.with_lambda(1e-7).unwrap();
        let rho = anharmonic_thermal_density(0.8, 60, &weak).unwrap();
        let chi = chi_numeric(&rho, 4).unwrap();
        let nb = crate::states::bose_factor(0.8, &p).unwrap();
        assert!((chi.coeff(1, 1).unwrap().re - nb).abs() < 1e-5);
    }

    #[test]
    fn truncation_reports() {
        let p = unit();
        let r = truncation_check(&StateSpec::Vacuum, 10, 1e-12, &p).unwrap();
        assert!(r.pass && r.deficit == 0.0);
        assert!(truncation_check(&StateSpec::coherent(C64::new(1.0, 0.0)), 40, 1e-12, &p).unwrap().deficit < 1e-12);
        assert!(truncation_check(&StateSpec::thermal(0.5), 60, 1e-10, &p).unwrap().deficit < 1e-10);
        assert!(!truncation_check(&StateSpec::thermal(0.5), 20, 1e-10, &p).unwrap().pass);
    }

    #[test]
    fn interacting_gibbs_state_reduces_to_free_without_coupling() {
        let p = PhysicalParams::new(1.3, 0.8).unwrap();
        let got = chi_interacting_thermal(0.9, 4, &p).unwrap().value;
        let want = chi_table(&StateSpec::thermal(0.9), 4, &p).unwrap();
        assert!(got.max_distance(&want) < 1e-10);
        let times = [0.3, 1.1];
        let a = wightman_exact_interacting_thermal(0.9, &times, &p).unwrap().value;
        let b = wightman_exact_free(&StateSpec::thermal(0.9), &times, &p).unwrap().value;
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn interacting_gibbs_state_is_stationary() {
        let p = PhysicalParams::default().with_lambda_rel(0.05).unwrap();
        let a = wightman_exact_interacting_thermal(1.0, &[0.2, 0.9], &p).unwrap().value;
        let b = wightman_exact_interacting_thermal(1.0, &[0.7, 1.4], &p).unwrap().value;
        assert!((a - b).norm() < 1e-9);
    }
}
