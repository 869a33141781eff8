//! All six gradient estimators on one quadratic model at equal iteration
//! budgets: potential MSE, gradient MSE and queries spent.

use vrhmc::{
    gradient_mse, potential_mse, run_ensemble, Budget, DynamicsParams, EstimatorConfig, EstimatorKind, Potential,
    QuadraticPotential, SamplerConfig,
};

fn main() -> vrhmc::Result<()> {
    let model = QuadraticPotential::generate(1, 500, 5, 10.0, 1.0)?;
    let n = model.n_components();
    println!(
        "{:>10} {:>14} {:>14} {:>12}",
        "method", "potential_mse", "gradient_mse", "queries"
    );
    for kind in EstimatorKind::ALL {
        let mut config = SamplerConfig::new(
            EstimatorConfig::with_default_epoch(kind, n, 5),
            DynamicsParams::new(2.0, 1.0 / model.smoothness(), 0.01)?,
            Budget::Iterations(20_000),
        );
        config.burn_in = 2_000;
        config.stride = 10;
        config.chains = 4;
        config.diagnostics.gradient_error = true;
        let ens = run_ensemble(&config, &model)?;
        let pot = potential_mse(&ens.records, model.mean_potential())?;
        let grad = ens.records.iter().map(gradient_mse).sum::<vrhmc::Result<f64>>()? / ens.records.len() as f64;
        println!(
            "{:>10} {pot:>14.4e} {grad:>14.4e} {:>12}",
            kind.label(),
            ens.records[0].queries
        );
    }
    Ok(())
}
