//! Step-size advisory: the MSEB constant and the resulting step bound for
//! each estimator under the default synthetic and logistic settings.

use vrhmc::experiment::{print_advisory, ExperimentConfig, ExperimentKind, Overrides, RawConfig};
use vrhmc::{mseb_descriptor, EstimatorKind};

fn main() -> vrhmc::Result<()> {
    for kind in [ExperimentKind::Synthetic, ExperimentKind::Logistic] {
        let config = ExperimentConfig::resolve(kind, &RawConfig::parse("")?, &Overrides::default())?;
        let (_, text) = print_advisory(&config)?;
        println!("{text}");
    }

    // Θ falls as 1/b² for both, so larger batches loosen the bound
    for b in [1, 10, 100] {
        let saga = mseb_descriptor(EstimatorKind::Saga, 1000, b, 1).map(|d| d.theta());
        let svrg = mseb_descriptor(EstimatorKind::Svrg, 1000, b, 1000 / b).map(|d| d.theta());
        println!("b = {b:>3}: SAGA theta {saga:?}, SVRG theta {svrg:?}");
    }
    Ok(())
}
