use crate::autodiff::{norm, ParamVector};
use crate::error::{Error, Result};
use crate::model::ModelState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Grid of relative noise magnitudes used by the Gaussian probe.
pub const GAMMA_GRID: [f64; 5] = [0.009, 0.013, 0.017, 0.020, 0.025];

/// `W + γ ‖W‖_F Z / ‖Z‖_F` for every tensor, with a fresh standard normal `Z`
/// per tensor drawn in layout order from one seeded stream.
pub fn gaussian_perturb(state: &ModelState, gamma: f64, seed: u64) -> Result<ModelState> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("gamma {gamma} must be finite and >= 0")));
    }
    if gamma == 0.0 {
        return Ok(state.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = state.params().to_vec();
    for spec in state.layout().tensors() {
        let w = &mut params[spec.offset..spec.offset + spec.len()];
        let z: Vec<f64> = (0..w.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let wn = norm(w);
        if wn == 0.0 {
            log::info!("gaussian probe: {} has zero norm, left unperturbed", spec.name);
            continue;
        }
        let s = gamma * wn / norm(&z);
        for (x, zz) in w.iter_mut().zip(&z) {
            *x += s * zz;
        }
    }
    state.with_params(ParamVector::new(params)?)
}
