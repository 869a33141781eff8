//! Full-gradient sampling of a synthetic Gaussian target and comparison of
//! the sampled moments with the exact ones.

use vrhmc::{
    run_ensemble, Budget, DynamicsParams, EstimatorConfig, EstimatorKind, Potential, QuadraticPotential, SamplerConfig,
};

fn main() -> vrhmc::Result<()> {
    let model = QuadraticPotential::generate(0, 200, 3, 10.0, 1.0)?;
    let (mean, cov) = model.target_moments();
    let mut config = SamplerConfig::new(
        EstimatorConfig::with_default_epoch(EstimatorKind::Full, model.n_components(), 1),
        DynamicsParams::new(2.0, 1.0 / model.smoothness(), 0.05)?,
        Budget::Iterations(20_000),
    );
    config.burn_in = 2_000;
    config.chains = 8;
    let ens = run_ensemble(&config, &model)?;
    let sampled = ens.pooled_moments()?;

    println!("L = {:.3}, m = {:.3}", model.smoothness(), model.strong_convexity());
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    println!("target mean                 {}", fmt(&mean));
    println!("sampled mean                {}", fmt(sampled.mean().as_slice()));
    println!("target covariance diagonal  {}", fmt(cov.diagonal().as_slice()));
    println!(
        "sampled covariance diagonal {}",
        fmt(sampled.covariance().diagonal().as_slice())
    );
    let pot: f64 = ens.records.iter().filter_map(|r| r.mean_potential()).sum::<f64>() / ens.records.len() as f64;
    println!("mean potential {pot:.4} vs exact {:.4}", model.mean_potential());
    Ok(())
}
