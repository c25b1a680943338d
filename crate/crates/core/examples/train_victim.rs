//! Trains both bundled victims on the procedural 8×8 digits and reports
//! held-out accuracy.

use blackbox_admm::victim::{accuracy, digits8x8_split, MlpModel, SoftmaxModel, TrainConfig, Victim};
use blackbox_admm::RngStream;

fn main() -> blackbox_admm::Result<()> {
    let (train, test) = digits8x8_split(7);
    let root = RngStream::new(7);
    let cfg = TrainConfig::default();

    let mut softmax = Victim::Softmax(SoftmaxModel::zeros(64, 10));
    let losses = softmax.train(&train, &cfg, &mut root.split(10))?;
    println!(
        "softmax: final loss {:.4}, train {:.3}, test {:.3}",
        losses.last().unwrap(),
        accuracy(&softmax, &train)?,
        accuracy(&softmax, &test)?
    );

    let mut mlp = Victim::Mlp(MlpModel::init(64, 32, 10, &mut root.split(11))?);
    let losses = mlp.train(&train, &cfg, &mut root.split(12))?;
    println!(
        "mlp:     final loss {:.4}, train {:.3}, test {:.3}",
        losses.last().unwrap(),
        accuracy(&mlp, &train)?,
        accuracy(&mlp, &test)?
    );
    Ok(())
}
