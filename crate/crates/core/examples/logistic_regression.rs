//! Bayesian logistic regression on a generated dataset: SVRG sampling,
//! then held-out NLL of the posterior samples against the prior mean.

use vrhmc::experiment::synthetic_binary_dataset;
use vrhmc::{
    run_ensemble, split, standardize, test_nll, Budget, DynamicsParams, EstimatorConfig, EstimatorKind,
    LogisticPotential, Potential, SamplerConfig,
};

fn main() -> vrhmc::Result<()> {
    let data = synthetic_binary_dataset(0, 690, 14)?;
    let (train, test) = split(&data, 0.5, 1)?;
    let (train, test, _) = standardize(&train, &test)?;
    let model = LogisticPotential::from_dataset(&train, 1.0)?;
    let held_out = LogisticPotential::from_dataset(&test, 1.0)?;

    let (l, n) = (model.smoothness(), model.n_components());
    let xi = 1.0 / l;
    let mut config = SamplerConfig::new(
        EstimatorConfig::with_default_epoch(EstimatorKind::Svrg, n, 10),
        // friction γξ = 2 and step 0.05/√(ξL)
        DynamicsParams::new(2.0 / xi, xi, 0.05 / (xi * l).sqrt())?,
        Budget::Queries(200 * n as u64),
    );
    config.burn_in = 1_000;
    config.stride = 10;
    config.chains = 4;
    config.diagnostics.positions = true;
    let ens = run_ensemble(&config, &model)?;
    let samples: Vec<Vec<f64>> = ens.records.iter().flat_map(|r| r.positions.clone()).collect();

    println!("train N = {n}, d = {}, L = {l:.2}", model.dim());
    println!(
        "held-out NLL at x = 0:        {:.3}",
        held_out.likelihood_nll(&vec![0.0; model.dim()])?
    );
    println!("held-out NLL, posterior draws: {:.3}", test_nll(&held_out, &samples)?);
    println!("{} samples from {} chains", samples.len(), ens.records.len());
    Ok(())
}
