#![allow(dead_code)]

use afres::data::stream_rng;
use afres::model::Network;
use afres::nn::{Mode, Tensor};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative errors of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-7;

pub fn random(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = stream_rng(seed, 77);
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` with respect to every element of `x`.
pub fn numeric_gradient(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + FD_STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - FD_STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max)
}

/// Worst relative error over every parameter of `net` for the train-mode
/// loss on `(batch, labels)`, with the name of the offending tensor.
pub fn network_gradient_check(net: &Network, batch: &Tensor, labels: &[usize]) -> (f64, String) {
    let (_, grads) = net.loss_and_gradients(batch, labels, Mode::Train).unwrap();
    let mut worst = (0.0, String::new());
    let mut probe = net.clone();
    for slot in 0..net.params().len() {
        let analytic = grads.param(slot).expect("gradient for every parameter").data().to_vec();
        let n = net.params().at(slot).len();
        for i in 0..n {
            let orig = probe.params().at(slot).data()[i];
            probe.params_mut().at_mut(slot).data_mut()[i] = orig + FD_STEP;
            let up = probe.loss_and_gradients(batch, labels, Mode::Train).unwrap().0;
            probe.params_mut().at_mut(slot).data_mut()[i] = orig - FD_STEP;
            let down = probe.loss_and_gradients(batch, labels, Mode::Train).unwrap().0;
            probe.params_mut().at_mut(slot).data_mut()[i] = orig;
            let e = relative_error(analytic[i], (up - down) / (2.0 * FD_STEP));
            if e > worst.0 {
                worst = (e, format!("{}[{i}]", net.params().name(slot)));
            }
        }
    }
    worst
}
