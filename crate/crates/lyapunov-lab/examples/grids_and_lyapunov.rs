//! Grids, measures and the Lyapunov mini-language.

use std::sync::Arc;

use lyapunov_lab::core::{tv_distance, v_norm_measure, GridDomain, LyapunovSpec, MeasureVec};

fn main() -> lyapunov_lab::Result<()> {
    let grid = Arc::new(GridDomain::uniform(-4.0, 4.0, 81)?);
    println!("uniform grid: {} points, volume {}", grid.len(), grid.volume());

    for spelling in ["poly:2", "exp:0.5", "pow:2:poly:1", "product:[poly:2,exp:0.25]"] {
        let v: LyapunovSpec = spelling.parse()?;
        println!("{spelling:>26} -> V(2) = {:.6}  (reprinted as {v})", v.eval1(2.0)?);
    }

    let half: LyapunovSpec = "inv_plus_poly:2".parse()?;
    println!("inv_plus_poly:2 at 0.5 = {}", half.eval1(0.5)?);
    println!("inv_plus_poly:2 at 0 is rejected: {}", half.eval1(0.0).is_err());

    let gauss = MeasureVec::from_density(grid.clone(), |x| (-x[0] * x[0] / 2.0).exp())?.normalized()?;
    let shifted = MeasureVec::from_density(grid.clone(), |x| (-(x[0] - 1.0).powi(2) / 2.0).exp())?.normalized()?;
    println!("tv(N(0,1), N(1,1)) on the grid = {:.6}", tv_distance(&gauss, &shifted)?);
    let diff = gauss.sub(&shifted)?;
    println!("|||N(0,1) - N(1,1)|||_poly:2 = {:.6}", v_norm_measure(&diff, &"poly:2".parse()?)?);
    Ok(())
}
