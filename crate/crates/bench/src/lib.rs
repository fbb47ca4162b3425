//! Shared fixtures for the criterion benchmarks.

use sparsid::rng::substream;
use sparsid::{
    generate_batch, CoefficientLaw, CoefficientModel, Dictionary, NoiseSpec, SignalBatch,
};

pub fn fixture(m: usize, p: usize, k: usize, n: usize) -> (Dictionary, CoefficientModel, SignalBatch) {
    let mut rng = substream(2024, 0);
    let d = Dictionary::spherical(m, p, &mut rng);
    let model = CoefficientModel::new(
        p,
        k,
        CoefficientLaw::SignedUniform {
            alpha_min: 1.0,
            alpha_max: 2.0,
        },
        NoiseSpec::TruncatedGaussian {
            sigma: 0.01,
            m_eps: 0.1,
        },
    )
    .expect("valid model");
    let batch = generate_batch(&d, &model, n, 7).expect("batch");
    (d, model, batch)
}
