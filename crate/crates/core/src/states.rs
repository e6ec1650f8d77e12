//! State specifications and closed-form moment and cumulant coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::json::{ComplexValue, TableEntry};
use crate::params::PhysicalParams;
use crate::tables::{ChiTable, XiTable};
use crate::transforms::xi_to_chi;
use crate::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateSpec {
    Vacuum,
    Coherent { phi: ComplexValue },
    Thermal { beta: f64 },
    Number { n: usize },
    Mixture { parts: Vec<MixturePart> },
    CustomXi { max_order: usize, entries: Vec<TableEntry> },
    /// Density matrix in the number basis, row by row.
    CustomDensity { rows: Vec<Vec<ComplexValue>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePart {
    pub w: f64,
    pub state: StateSpec,
}

/// How a cumulant table was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiRoute {
    ClosedForm,
    SeriesLog,
    Oracle,
}

impl StateSpec {
    pub fn coherent(phi: C64) -> Self {
        StateSpec::Coherent { phi: phi.into() }
    }

    pub fn thermal(beta: f64) -> Self {
        StateSpec::Thermal { beta }
    }

    pub fn mixture(parts: impl IntoIterator<Item = (f64, StateSpec)>) -> Self {
        StateSpec::Mixture { parts: parts.into_iter().map(|(w, state)| MixturePart { w, state }).collect() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: StateSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StateSpec::Thermal { beta } if !(*beta > 0.0 && beta.is_finite()) => {
                Err(argument(format!("thermal beta must be positive, got {beta}")))
            }
            StateSpec::Coherent { phi } if !(phi.re.is_finite() && phi.im.is_finite()) => {
                Err(argument("coherent amplitude must be finite"))
            }
            StateSpec::Mixture { parts } => {
                if parts.is_empty() {
                    return Err(argument("mixture has no parts"));
                }
                if parts.iter().any(|p| !(p.w >= 0.0)) {
                    return Err(argument("mixture weights must be non-negative"));
                }
                let total: f64 = parts.iter().map(|p| p.w).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(argument(format!("mixture weights sum to {total}, not 1")));
                }
                parts.iter().try_for_each(|p| p.state.validate())
            }
            StateSpec::CustomXi { max_order, entries } => {
                XiTable::from_entry_list(*max_order, entries).map(|_| ())
            }
            StateSpec::CustomDensity { rows } => {
                let d = rows.len();
                if d == 0 || rows.iter().any(|r| r.len() != d) {
                    return Err(argument("custom density must be a non-empty square matrix"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn chi_route(&self) -> ChiRoute {
        match self {
            StateSpec::Vacuum | StateSpec::Coherent { .. } | StateSpec::Thermal { .. } => ChiRoute::ClosedForm,
            StateSpec::CustomDensity { .. } => ChiRoute::Oracle,
            _ => ChiRoute::SeriesLog,
        }
    }
}

/// `1 / (e^{beta hbar omega} - 1)`.
pub fn bose_factor(beta: f64, p: &PhysicalParams) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(argument(format!("beta must be positive, got {beta}")));
    }
    Ok(1.0 / (beta * p.hbar() * p.omega()).exp_m1())
}

fn falling_factorial(n: usize, k: usize) -> f64 {
    (0..k).map(|j| (n - j) as f64).product()
}

pub fn xi_closed(state: &StateSpec, m: usize, n: usize, p: &PhysicalParams) -> Result<C64> {
    let zero = C64::new(0.0, 0.0);
    Ok(match state {
        StateSpec::Vacuum => {
            if m + n == 0 {
                C64::new(1.0, 0.0)
            } else {
                zero
            }
        }
        StateSpec::Coherent { phi } => {
            let phi = C64::from(*phi);
            phi.conj().powu(m as u32) * phi.powu(n as u32)
        }
        StateSpec::Thermal { beta } => {
            if m != n {
                zero
            } else {
                let nb = bose_factor(*beta, p)?;
                C64::new(falling_factorial(n, n) * nb.powi(n as i32), 0.0)
            }
        }
        StateSpec::Number { n: level } => {
            if m != n || n > *level {
                zero
            } else {
                C64::new(falling_factorial(*level, n), 0.0)
            }
        }
        StateSpec::Mixture { parts } => {
            let mut acc = zero;
            for part in parts {
                acc += xi_closed(&part.state, m, n, p)? * part.w;
            }
            acc
        }
        StateSpec::CustomXi { max_order, entries } => {
            if m + n > *max_order {
                return Err(argument(format!("custom table of order {max_order} has no entry ({m}, {n})")));
            }
            XiTable::from_entry_list(*max_order, entries)?.coeff(m, n)?
        }
        StateSpec::CustomDensity { .. } => return Err(Error::Unsupported("custom density moments".into())),
    })
}

/// Closed-form cumulant coefficient, or `None` when the state has none.
pub fn chi_closed(state: &StateSpec, m: usize, n: usize, p: &PhysicalParams) -> Result<Option<C64>> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    Ok(match (state, m, n) {
        (StateSpec::Vacuum | StateSpec::Coherent { .. } | StateSpec::Thermal { .. }, 0, 0) => Some(one),
        (StateSpec::Vacuum, _, _) => Some(zero),
        (StateSpec::Coherent { phi }, 0, 1) => Some(C64::from(*phi)),
        (StateSpec::Coherent { phi }, 1, 0) => Some(C64::from(*phi).conj()),
        (StateSpec::Coherent { .. }, _, _) => Some(zero),
        (StateSpec::Thermal { beta }, 1, 1) => Some(C64::new(bose_factor(*beta, p)?, 0.0)),
        (StateSpec::Thermal { .. }, _, _) => Some(zero),
        _ => None,
    })
}

pub fn xi_table(state: &StateSpec, max_order: usize, p: &PhysicalParams) -> Result<XiTable<C64>> {
    state.validate()?;
    if let StateSpec::CustomXi { max_order: have, entries } = state {
        return XiTable::from_entry_list(*have, entries)?.truncated(max_order);
    }
    let mut err = None;
    let table = XiTable::from_fn(max_order, |m, n| {
        xi_closed(state, m, n, p).unwrap_or_else(|e| {
            err.get_or_insert(e);
            C64::new(0.0, 0.0)
        })
    });
    match err {
        Some(e) => Err(e),
        None => table,
    }
}

/// Cumulant table from closed forms where available, otherwise through the
/// series logarithm of the moment table.
pub fn chi_table(state: &StateSpec, max_order: usize, p: &PhysicalParams) -> Result<ChiTable<C64>> {
    state.validate()?;
    if state.chi_route() == ChiRoute::ClosedForm {
        let mut err = None;
        let table = ChiTable::from_fn(max_order, |m, n| match chi_closed(state, m, n, p) {
            Ok(Some(v)) => v,
            Ok(None) => unreachable!("closed-form route without closed form"),
            Err(e) => {
                err.get_or_insert(e);
                C64::new(0.0, 0.0)
            }
        });
        return match err {
            Some(e) => Err(e),
            None => table,
        };
    }
    xi_to_chi(&xi_table(state, max_order, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn bose_factor_values() {
        assert!((bose_factor(std::f64::consts::LN_2, &unit()).unwrap() - 1.0).abs() < 1e-15);
        assert!((bose_factor(1.0, &unit()).unwrap() - 0.581_976_706_869_326_4).abs() < 1e-15);
        assert!(bose_factor(800.0, &unit()).unwrap() < 1e-300);
        assert!(bose_factor(0.0, &unit()).is_err());
    }

    #[test]
    fn closed_moments() {
        let phi = C64::new(0.5, 0.0);
        let coh = StateSpec::coherent(phi);
        assert!((xi_closed(&coh, 2, 1, &unit()).unwrap() - C64::new(0.125, 0.0)).norm() < 1e-15);
        assert_eq!(xi_closed(&StateSpec::Vacuum, 1, 2, &unit()).unwrap(), C64::new(0.0, 0.0));
        let th = StateSpec::thermal(std::f64::consts::LN_2);
        assert!((xi_closed(&th, 3, 3, &unit()).unwrap() - C64::new(6.0, 0.0)).norm() < 1e-12);
        let num = StateSpec::Number { n: 3 };
        assert_eq!(xi_closed(&num, 2, 2, &unit()).unwrap(), C64::new(6.0, 0.0));
        assert_eq!(xi_closed(&num, 4, 4, &unit()).unwrap(), C64::new(0.0, 0.0));
        let bad = StateSpec::CustomDensity { rows: vec![vec![ComplexValue { re: 1.0, im: 0.0 }]] };
        assert!(matches!(xi_closed(&bad, 1, 1, &unit()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn closed_cumulants() {
        let phi = C64::new(0.3, -0.8);
        let coh = StateSpec::coherent(phi);
        assert_eq!(chi_closed(&coh, 0, 1, &unit()).unwrap(), Some(phi));
        assert_eq!(chi_closed(&coh, 1, 0, &unit()).unwrap(), Some(phi.conj()));
        assert_eq!(chi_closed(&coh, 1, 1, &unit()).unwrap(), Some(C64::new(0.0, 0.0)));
        assert_eq!(chi_closed(&StateSpec::Number { n: 2 }, 1, 1, &unit()).unwrap(), None);
    }

    #[test]
    fn closed_cumulants_match_series_log() {
        let p = PhysicalParams::new(1.2, 0.9).unwrap();
        for state in [StateSpec::Vacuum, StateSpec::coherent(C64::new(1.1, 0.4)), StateSpec::thermal(0.7)] {
            let closed = chi_table(&state, 6, &p).unwrap();
            let via_log = xi_to_chi(&xi_table(&state, 6, &p).unwrap()).unwrap();
            assert!(closed.max_distance(&via_log) < 1e-10, "{state:?}");
            assert_eq!(closed.hermiticity_defect(), 0.0);
        }
    }

    #[test]
    fn zero_amplitude_coherent_is_vacuum() {
        let p = unit();
        let coh = StateSpec::coherent(C64::new(0.0, 0.0));
        assert_eq!(xi_table(&coh, 6, &p).unwrap(), xi_table(&StateSpec::Vacuum, 6, &p).unwrap());
        assert_eq!(chi_table(&coh, 6, &p).unwrap(), chi_table(&StateSpec::Vacuum, 6, &p).unwrap());
    }

    #[test]
    fn json_schema() {
        let s = StateSpec::from_json(r#"{"type":"coherent","phi":{"re":0.5,"im":-0.1}}"#).unwrap();
        assert_eq!(s, StateSpec::coherent(C64::new(0.5, -0.1)));
        let mix = StateSpec::from_json(
            r#"{"type":"mixture","parts":[{"w":0.25,"state":{"type":"vacuum"}},{"w":0.75,"state":{"type":"number","n":2}}]}"#,
        )
        .unwrap();
        let p = unit();
        assert!((xi_closed(&mix, 1, 1, &p).unwrap() - C64::new(1.5, 0.0)).norm() < 1e-15);
        assert!(StateSpec::from_json(r#"{"type":"thermal","beta":-1}"#).is_err());
        assert!(StateSpec::from_json(
            r#"{"type":"mixture","parts":[{"w":0.5,"state":{"type":"vacuum"}}]}"#
        )
        .is_err());
        let custom = StateSpec::from_json(
            r#"{"type":"custom_xi","max_order":2,"entries":[{"m":0,"n":1,"re":0.2,"im":0.1},{"m":1,"n":0,"re":0.2,"im":-0.1}]}"#,
        )
        .unwrap();
        assert_eq!(xi_closed(&custom, 0, 1, &p).unwrap(), C64::new(0.2, 0.1));
        assert_eq!(custom.chi_route(), ChiRoute::SeriesLog);
    }
}
