//! Exact step coefficients and noise covariance across step sizes, and the
//! stationary momentum variance `1/ξ` the step preserves under zero force.

use vrhmc::{noise_coefficients, step, ChainState, DynamicsParams};

fn main() -> vrhmc::Result<()> {
    let (gamma, xi) = (2.0, 0.5);
    println!(
        "{:>8} {:>10} {:>12} {:>12} {:>12} {:>12}",
        "h", "delta", "c_vv", "s_xx", "s_vv", "psd"
    );
    for h in [1e-6, 1e-3, 0.1, 1.0, 10.0] {
        let params = DynamicsParams::new(gamma, xi, h)?;
        let c = noise_coefficients(&params);
        println!(
            "{h:>8.0e} {:>10.3e} {:>12.6e} {:>12.6e} {:>12.6e} {:>12}",
            params.delta(),
            c.c_vv,
            c.s_xx,
            c.s_vv,
            c.is_psd()
        );
    }

    // with zero gradient the momentum relaxes to variance 1/ξ
    let params = DynamicsParams::new(gamma, xi, 0.1)?;
    let coeffs = noise_coefficients(&params);
    let mut rng = vrhmc::chain_rng(0, 0);
    let mut state = ChainState::at_rest(vec![0.0; 1000])?;
    for _ in 0..200 {
        step(&mut state, &[0.0; 1000], &coeffs, &mut rng)?;
    }
    let var = state.momentum.iter().map(|v| v * v).sum::<f64>() / 1000.0;
    println!("empirical momentum variance {var:.3}, stationary value {:.3}", 1.0 / xi);
    Ok(())
}
