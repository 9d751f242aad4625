//! Subgeometric drift: prototype constants, the ODE majorant and the
//! polynomial decay of a chain with drift `P V <= V - kappa V^delta + c`.

use lyapunov_lab::subgeometric::{
    loglog_slope, ode_majorant, polynomial_chain, polynomial_family, polynomial_rate_check_values,
    power_tail_measure, prototype_drift, PolyChainSpec,
};

fn main() -> lyapunov_lab::Result<()> {
    for (n, i) in [(4, 2), (4, 3), (5, 4)] {
        let (delta, upsilon) = polynomial_family(n, i)?;
        let d = prototype_drift(delta, upsilon, 1.0, 1.0)?;
        println!("(n, i) = ({n}, {i}): 1/chi = {:.12}", 1.0 / d.chi);
    }

    // u' = -u^2 from u0 = 1 has the exact majorant 1/(1+t).
    let m = ode_majorant(1.0, &|u| u * u, 10)?;
    println!("ODE majorant at t = 10: {:.10} (exact {:.10})", m[10], 1.0 / 11.0);

    let chain = polynomial_chain(&PolyChainSpec::certified())?;
    let drift = prototype_drift(0.5, 0.5, 0.25, 1.0)?;
    let v: Vec<f64> = chain.grid().xs().iter().map(|x| x.powi(3)).collect();
    let mu = power_tail_measure(&chain, 4.0)?;
    let r = polynomial_rate_check_values(&chain, &v, &drift, None, &mu, 500)?;
    println!(
        "certified = {}, chi = {}, envelope holds = {:?}",
        r.certified, drift.chi, r.envelope_holds
    );
    println!("log-log slope of tv over [50, 500]: {:.4}", loglog_slope(&r.tv, 50, 500)?);
    Ok(())
}
