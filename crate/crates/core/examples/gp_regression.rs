//! Fits a Matérn 5/2 GP to noisy samples of a smooth 1-D function by
//! minimizing the negative log marginal likelihood.

use blackbox_admm::gp::{GpHyper, GpModel};
use blackbox_admm::RngStream;

fn main() -> blackbox_admm::Result<()> {
    let f = |x: f64| (6.0 * x).sin();
    let mut rng = RngStream::new(11);
    let points: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 / 24.0]).collect();
    let targets = points.iter().map(|p| f(p[0]) + 0.01 * rng.gaussian()).collect();
    let mut gp = GpModel::with_data(1, GpHyper::isotropic(1.0, 1.0, 1e-2), points, targets)?;
    println!("nlml before {:.3}", gp.nlml()?);
    let hyper = gp.fit_hypers(200, 0.05)?;
    println!("nlml after  {:.3}, hyper {hyper:?}", gp.nlml()?);
    for x in [0.1, 0.37, 0.5, 0.83] {
        let (mu, var) = gp.posterior(&[x])?;
        println!("x = {x:.2}: mean {mu:+.4} ± {:.4}, truth {:+.4}", var.sqrt(), f(x));
    }
    Ok(())
}
