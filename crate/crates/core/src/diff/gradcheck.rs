use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tape, Var};
use crate::Result;

/// Settings for a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub epsilon: f64,
    /// Number of coordinates to probe (all of them if there are fewer).
    pub coords: usize,
    /// Pass iff the maximum relative error is below this.
    pub tolerance: f64,
    /// Denominator floor: relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub abs_floor: f64,
    /// Restrict probing to parameters whose name starts with one of these.
    pub prefixes: Vec<String>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            coords: 100,
            tolerance: 1e-4,
            abs_floor: 1e-5,
            prefixes: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: Option<(String, usize)>,
    pub tolerance: f64,
    pub passed: bool,
}

fn forward_loss<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    Ok(tape.scalar(loss))
}

/// Runs one forward/backward pass and returns every parameter gradient.
/// The store's gradients are zeroed first and left holding the result.
pub fn analytic_gradients<F>(store: &mut ParamStore, f: &F) -> Result<BTreeMap<String, Vec<f64>>>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss, store)?;
    Ok(store
        .iter()
        .map(|(k, p)| (k.to_string(), p.grads().to_vec()))
        .collect())
}

/// Compares `analytic` against central finite differences of `f`.
pub fn compare_gradients<F>(
    store: &mut ParamStore,
    f: &F,
    analytic: &BTreeMap<String, Vec<f64>>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, p) in store.iter() {
        let selected =
            opts.prefixes.is_empty() || opts.prefixes.iter().any(|pre| name.starts_with(pre.as_str()));
        if selected && analytic.contains_key(name) {
            coords.extend((0..p.len()).map(|i| (name.to_string(), i)));
        }
    }
    if coords.len() > opts.coords {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked = rand::seq::index::sample(&mut rng, coords.len(), opts.coords).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i].clone()).collect();
    }

    let mut max_rel = 0.0f64;
    let mut worst = None;
    for (name, i) in &coords {
        let orig = store.get(name)?.values()[*i];
        store.values_mut(name)?[*i] = orig + opts.epsilon;
        let plus = forward_loss(store, f);
        store.values_mut(name)?[*i] = orig - opts.epsilon;
        let minus = forward_loss(store, f);
        store.values_mut(name)?[*i] = orig;
        let numeric = (plus? - minus?) / (2.0 * opts.epsilon);
        let a = analytic[name][*i];
        let denom = a.abs().max(numeric.abs()).max(opts.abs_floor);
        let rel = (a - numeric).abs() / denom;
        if rel > max_rel || rel.is_nan() {
            max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
            worst = Some((name.clone(), *i));
        }
    }
    Ok(GradCheckReport {
        checked: coords.len(),
        max_rel_error: max_rel,
        worst,
        tolerance: opts.tolerance,
        passed: max_rel < opts.tolerance,
    })
}

/// Finite-difference check of the gradients `f` produces through the tape.
pub fn check_gradients<F>(store: &mut ParamStore, f: &F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let analytic = analytic_gradients(store, f)?;
    compare_gradients(store, f, &analytic, opts)
}
