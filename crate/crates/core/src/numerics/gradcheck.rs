use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Settings for [`check_gradients`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Coordinates compared per parameter (all of them when fewer exist).
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples_per_param: 32,
            seed: 0,
        }
    }
}

/// Compares the analytic gradient of the scalar built by `f` with central
/// finite differences on a random subsample of each parameter's coordinates.
/// Returns the largest relative error `|a - n| / max(1, |a|, |n|)`.
pub fn check_gradients<F>(store: &mut ParamStore, params: &[ParamId], cfg: GradCheck, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let root = f(&mut g)?;
        Ok(g.scalar(root))
    };

    let (first, analytic) = {
        let mut g = Graph::new(store);
        let root = f(&mut g)?;
        let value = g.scalar(root);
        (value, g.backward(root)?.params)
    };
    let second = eval(store)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Determinism(format!(
            "two forward passes gave {first} and {second}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    for &id in params {
        let n = store.get(id).value.len();
        let coords: Vec<usize> = if n <= cfg.samples_per_param {
            (0..n).collect()
        } else {
            rand::seq::index::sample(&mut rng, n, cfg.samples_per_param).into_vec()
        };
        for i in coords {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + cfg.step;
            let plus = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig - cfg.step;
            let minus = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * cfg.step);
            let a = analytic.get(id).map_or(0.0, |g| g[i]);
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
