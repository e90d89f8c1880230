//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Gradients, ParamId, ParamStore};

/// Which scalars to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Selection {
    All,
    /// A seeded uniform subsample of this many scalars (all of them if the
    /// model is smaller).
    Random { count: usize, seed: u64 },
    /// Up to `count` seeded scalars from every parameter tensor, so each
    /// tensor is covered however small.
    PerTensor { count: usize, seed: u64 },
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the worst scalar.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Denominator floor used in the relative errors.
    pub floor: f64,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
///
/// The floor keeps gradients that are zero up to roundoff from reporting
/// huge relative errors.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const DEFAULT_FLOOR: f64 = 1e-6;

/// A central difference of a loss of magnitude `L` carries roundoff of about
/// `ε_mach·L/ε`. Gradients within this factor of that noise are compared
/// against the noise level instead of their own magnitude.
pub const ROUNDOFF_MARGIN: f64 = 1e5;

/// Compares `analytic` with `(L(θ+ε) − L(θ−ε)) / 2ε` for the selected scalars.
///
/// `loss` must be a pure function of the store. Every perturbed value is
/// restored before returning.
pub fn check_gradients(
    store: &mut ParamStore,
    analytic: &Gradients,
    mut loss: impl FnMut(&ParamStore) -> f64,
    eps: f64,
    selection: Selection,
) -> GradCheckReport {
    let mut coords: Vec<(ParamId, usize)> = store
        .iter()
        .flat_map(|(id, _, t)| (0..t.len()).map(move |i| (id, i)))
        .collect();
    match selection {
        Selection::All => {}
        Selection::Random { count, seed } => {
            if count < coords.len() {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked: Vec<usize> = sample(&mut rng, coords.len(), count).into_vec();
                picked.sort_unstable();
                coords = picked.into_iter().map(|i| coords[i]).collect();
            }
        }
        Selection::PerTensor { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            coords = store
                .iter()
                .flat_map(|(id, _, t)| {
                    let mut picked: Vec<usize> = sample(&mut rng, t.len(), count.min(t.len())).into_vec();
                    picked.sort_unstable();
                    picked.into_iter().map(move |i| (id, i)).collect::<Vec<_>>()
                })
                .collect();
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: coords.len(),
        floor: 0.0,
    };
    let base = loss(store);
    let floor = DEFAULT_FLOOR.max(ROUNDOFF_MARGIN * f64::EPSILON * base.abs() / eps);
    report.floor = floor;
    for (id, i) in coords {
        let orig = store.get(id).data()[i];
        store.get_mut(id).data_mut()[i] = orig + eps;
        let plus = loss(store);
        store.get_mut(id).data_mut()[i] = orig - eps;
        let minus = loss(store);
        store.get_mut(id).data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.value(id, i);
        let err = relative_error(a, numeric, floor);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = Some((store.name(id).to_string(), i));
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report
}
