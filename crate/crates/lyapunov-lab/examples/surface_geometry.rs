//! Boundary geometry of Monge charts: shape matrices, offsets, signed
//! distance, the co-area identity, chart changes and boundary Lyapunov functions.

use lyapunov_lab::geometry::{
    coarea_check, dirichlet_boundary_check, inner_focal_distance, level_set_density, offset_jacobian,
    signed_distance, Atlas, BoundaryProfile, MongeSurface, SubGaussianKernel,
};

fn main() -> lyapunov_lab::Result<()> {
    let parabola = MongeSurface::fixture("parabola")?;
    let f = parabola.frame(&[0.0])?;
    println!("parabola at the vertex: W = {}, normal = {:?}", f.w[(0, 0)], f.normal.as_slice());
    println!("Weingarten residual at theta = 1.3: {:.2e}", parabola.weingarten_residual(&[1.3], 1e-4)?);

    let paraboloid = MongeSurface::fixture("paraboloid")?;
    let g = paraboloid.frame(&[0.5, -0.3])?;
    println!("paraboloid principal curvatures at (0.5, -0.3): {:?}", g.principal_curvatures());
    println!("offset Jacobian |det(I - 0.1 W)| = {:.8}", offset_jacobian(&paraboloid, &[0.5, -0.3], 0.1)?);

    println!("inner focal distance of the parabola: {}", inner_focal_distance(&parabola)?);
    let d = signed_distance(&parabola, &[0.3, 0.5], 1.0)?;
    println!("signed distance of (0.3, 0.5): d = {:.10}, foot {:?}", d.d, d.foot);

    let c = coarea_check(&parabola, |r| r.powf(-0.5), 0.2, 48)?;
    println!("co-area, r^(-1/2) on the 0.2-tube: {:.10} vs {:.10} (rel {:.1e})", c.volume, c.level_sets, c.rel_diff);

    let atlas = Atlas::fixture("parabola_atlas")?;
    let agree = atlas.curvature_agreement(&[1.5, 2.25])?;
    println!("curvature at (1.5, 2.25) from {} charts, spread {:.1e}", agree.per_chart.len(), agree.spread);

    let k = SubGaussianKernel::gaussian(0.5);
    let l = level_set_density(&k, &parabola, &[0.0, 1.0], 0.1, 0.2)?;
    println!("level-set density {:.6} <= uniform bound {:.6}", l.density, l.bound);

    let b = dirichlet_boundary_check(&BoundaryProfile::new(0.5, 0.25)?, 0.5, 100)?;
    println!("Q_0.5(V_d) on (0,1) is bounded by c_t = {:.4} (a priori {:.4})", b.c_t, b.c_t_bound);
    Ok(())
}
