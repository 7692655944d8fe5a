//! Central finite-difference verification of tape gradients (64-bit only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Result, Tape, Tensor, Var};

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Number of coordinates compared.
    pub checked: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Coordinates probed per input; inputs with fewer values are checked exhaustively.
    pub probes_per_input: usize,
    /// Lower bound on the relative-error denominator, so gradients near zero are
    /// compared absolutely.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            probes_per_input: 48,
            denom_floor: 1e-5,
            seed: 0,
        }
    }
}

/// `|a − b| / max(|a|, |b|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of the scalar produced by `f` against central
/// differences with respect to every input tensor.
///
/// `f` receives the inputs as trainable tape variables and must return a
/// single-element variable. It is re-run twice per probed coordinate.
pub fn check<F>(inputs: &[Tensor<f64>], options: GradCheckOptions, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let analytic: Vec<Tensor<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.backward(out)?;
        vars.iter()
            .zip(inputs)
            .map(|(&v, t)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    };

    let mut eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut max_rel_error = 0.0f64;
    let mut checked = 0;
    for i in 0..inputs.len() {
        let numel = inputs[i].numel();
        let coords: Vec<usize> = if numel <= options.probes_per_input {
            (0..numel).collect()
        } else {
            sample(&mut rng, numel, options.probes_per_input).into_vec()
        };
        for j in coords {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + options.step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - options.step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * options.step);
            let err = relative_error(analytic[i].data()[j], numeric, options.denom_floor);
            max_rel_error = max_rel_error.max(err);
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_error, checked })
}
