//! Wasserstein-2 distance to the target along the run, for positions and for
//! the coupled coordinates `(x, x + v)` of the joint position-momentum law.

use vrhmc::{
    bures_w2, run_ensemble, wasserstein_tracker, Budget, DynamicsParams, EstimatorConfig, EstimatorKind,
    GaussianSummary, Potential, QuadraticPotential, SamplerConfig,
};

fn main() -> vrhmc::Result<()> {
    let model = QuadraticPotential::generate(2, 100, 2, 4.0, 1.0)?;
    let (mean, cov) = model.target_moments();
    let target = GaussianSummary::new(mean, cov)?;
    let xi = 1.0;
    let mut config = SamplerConfig::new(
        EstimatorConfig::with_default_epoch(EstimatorKind::Saga, model.n_components(), 1),
        DynamicsParams::new(2.0, xi, 0.02)?,
        Budget::Iterations(4_000),
    );
    config.burn_in = 0;
    config.stride = 500;
    config.chains = 256;
    config.diagnostics.positions = true;
    config.diagnostics.joint_moments = true;
    let ens = run_ensemble(&config, &model)?;

    for (iter, w2) in wasserstein_tracker(&ens.records, &target)? {
        println!("iter {iter:>5}  W2 {w2:.4}");
    }

    let mut joint = ens.records[0].joint_moments.clone().expect("joint moments recorded");
    for r in &ens.records[1..] {
        joint.merge(r.joint_moments.as_ref().expect("joint moments recorded"))?;
    }
    let joint_target = target.with_momentum(xi)?.coupled()?;
    println!(
        "coupled-coordinate W2 of pooled samples {:.4}",
        bures_w2(&joint.summary()?.coupled()?, &joint_target)?
    );
    Ok(())
}
