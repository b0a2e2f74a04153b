//! Forward passes checked against naive direct-formula implementations.

use afres::config::parse_config;
use afres::data::stream_rng;
use afres::model::{ModelSpec, Network};
use afres::nn::ops::{self, Mode, BN_EPS};
use afres::nn::Tensor;
use rand::Rng;

fn random(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = stream_rng(seed, 77);
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// y[b,o,t] = Σ_c Σ_k w[o,c,k] · xpad[b,c,t·s + k]
fn naive_conv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let (b, cin, len) = (x.dim(0), x.dim(1), x.dim(2));
    let (cout, k) = (w.dim(0), w.dim(2));
    let padded_len = len + 2 * pad;
    let out_len = (padded_len - k) / stride + 1;
    let at = |bi: usize, c: usize, p: usize| -> f64 {
        if p < pad || p >= pad + len {
            0.0
        } else {
            x.data()[(bi * cin + c) * len + p - pad]
        }
    };
    let mut y = Vec::new();
    for bi in 0..b {
        for o in 0..cout {
            for t in 0..out_len {
                let mut s = 0.0;
                for c in 0..cin {
                    for kk in 0..k {
                        s += w.data()[(o * cin + c) * k + kk] * at(bi, c, t * stride + kk);
                    }
                }
                y.push(s);
            }
        }
    }
    y
}

fn naive_bn_train(x: &Tensor, gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let (b, c, l) = (x.dim(0), x.dim(1), x.dim(2));
    let mut y = vec![0.0; x.len()];
    for ch in 0..c {
        let vals: Vec<f64> =
            (0..b).flat_map(|bi| (0..l).map(move |t| (bi, t))).map(|(bi, t)| x.data()[(bi * c + ch) * l + t]).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for bi in 0..b {
            for t in 0..l {
                let i = (bi * c + ch) * l + t;
                y[i] = gamma[ch] * (x.data()[i] - mean) / (var + BN_EPS).sqrt() + beta[ch];
            }
        }
    }
    y
}

#[test]
fn conv_matches_naive_loops() {
    let cases = [
        (2, 3, 17, 4, 3, 1, 1),
        (1, 1, 50, 2, 7, 2, 3),
        (3, 2, 9, 5, 1, 2, 0),
        (2, 4, 10, 3, 3, 2, 1),
        (1, 2, 8, 2, 3, 3, 1),
    ];
    for (i, &(b, cin, len, cout, k, s, p)) in cases.iter().enumerate() {
        let x = random(&[b, cin, len], i as u64);
        let w = random(&[cout, cin, k], 100 + i as u64);
        let y = ops::conv1d(&x, &w, s, p).unwrap();
        let expect = naive_conv(&x, &w, s, p);
        assert_eq!(y.len(), expect.len(), "case {i}");
        assert!(max_diff(y.data(), &expect) < 1e-12, "case {i}");
    }
}

#[test]
fn batchnorm_train_matches_naive() {
    let x = random(&[3, 4, 11], 5);
    let gamma = [0.5, 1.0, 2.0, -1.0];
    let beta = [0.0, 0.1, -0.3, 1.0];
    let g = Tensor::from_vec(&[4], gamma.to_vec()).unwrap();
    let bt = Tensor::from_vec(&[4], beta.to_vec()).unwrap();
    let mut rm = Tensor::zeros(&[4]);
    let mut rv = Tensor::filled(&[4], 1.0);
    let y = ops::batchnorm(&x, &g, &bt, &mut rm, &mut rv, Mode::Train, BN_EPS, 0.1).unwrap();
    assert!(max_diff(y.data(), &naive_bn_train(&x, &gamma, &beta)) < 1e-12);
}

#[test]
fn batchnorm_eval_uses_running_stats() {
    let x = random(&[2, 2, 5], 6);
    let g = Tensor::from_vec(&[2], vec![1.5, 0.5]).unwrap();
    let bt = Tensor::from_vec(&[2], vec![0.2, -0.2]).unwrap();
    let mut rm = Tensor::from_vec(&[2], vec![0.3, -0.1]).unwrap();
    let mut rv = Tensor::from_vec(&[2], vec![2.0, 0.5]).unwrap();
    let y = ops::batchnorm(&x, &g, &bt, &mut rm, &mut rv, Mode::Eval, BN_EPS, 0.1).unwrap();
    let mut expect = Vec::new();
    for bi in 0..2 {
        for ch in 0..2 {
            for t in 0..5 {
                let v = x.data()[(bi * 2 + ch) * 5 + t];
                expect.push(g.data()[ch] * (v - rm.data()[ch]) / (rv.data()[ch] + BN_EPS).sqrt() + bt.data()[ch]);
            }
        }
    }
    assert!(max_diff(y.data(), &expect) < 1e-12);
    // eval mode leaves running stats alone
    assert_eq!(rm.data(), &[0.3, -0.1]);
}

#[test]
fn pool_and_dense_match_naive() {
    let x = random(&[3, 4, 7], 8);
    let pooled = ops::global_avg_pool(&x).unwrap();
    let expect: Vec<f64> = x.data().chunks(7).map(|c| c.iter().sum::<f64>() / 7.0).collect();
    assert!(max_diff(pooled.data(), &expect) < 1e-12);

    let w = random(&[4, 2], 9);
    let b = Tensor::from_vec(&[2], vec![0.1, -0.2]).unwrap();
    let y = ops::dense(&pooled, &w, &b).unwrap();
    let mut expect = Vec::new();
    for bi in 0..3 {
        for o in 0..2 {
            let mut s = b.data()[o];
            for c in 0..4 {
                s += pooled.data()[bi * 4 + c] * w.data()[c * 2 + o];
            }
            expect.push(s);
        }
    }
    assert!(max_diff(y.data(), &expect) < 1e-12);
}

#[test]
fn softmax_and_cross_entropy_match_naive() {
    let logits = Tensor::from_vec(&[3, 2], vec![0.3, -1.2, 5.0, 4.0, -2.0, 2.0]).unwrap();
    let labels = [0, 1, 1];
    let (loss, probs) = ops::softmax_cross_entropy(&logits, &labels).unwrap();
    let mut expect_loss = 0.0;
    for (row, &y) in logits.data().chunks(2).zip(&labels) {
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        expect_loss -= (row[y].exp() / z).ln();
    }
    expect_loss /= 3.0;
    assert!((loss - expect_loss).abs() < 1e-12);
    let expect_probs: Vec<f64> = logits
        .data()
        .chunks(2)
        .flat_map(|r| {
            let z: f64 = r.iter().map(|v| v.exp()).sum();
            r.iter().map(move |v| v.exp() / z).collect::<Vec<_>>()
        })
        .collect();
    assert!(max_diff(probs.data(), &expect_probs) < 1e-12);
}

/// The smallest network, wired by hand from its parameters.
#[test]
fn single_conv_network_matches_manual_forward() {
    let spec = ModelSpec::Config(parse_config("1; c; [1]; [1]").unwrap());
    let mut net = Network::new(&spec, 11).unwrap();
    net.set_mode(Mode::Eval);
    let x = random(&[2, 1, 40], 12);
    let p = |n: &str| net.params().get(n).unwrap_or_else(|| panic!("missing {n}")).clone();
    let buf = |n: &str| net.buffers().get(n).unwrap_or_else(|| panic!("missing {n}")).clone();

    let stem = naive_conv(&x, &p("stem.conv.weight"), 2, 3);
    let stem_len = stem.len() / 2;
    let (g, b) = (p("stem.norm.gamma").data()[0], p("stem.norm.beta").data()[0]);
    let (m, v) = (buf("stem.norm.running_mean").data()[0], buf("stem.norm.running_var").data()[0]);
    let h: Vec<f64> = stem.iter().map(|s| (g * (s - m) / (v + BN_EPS).sqrt() + b).max(0.0)).collect();
    let h = Tensor::from_vec(&[2, 1, stem_len], h).unwrap();

    let main = naive_conv(&h, &p("group1.block1.conv0.weight"), 2, 1);
    let skip = naive_conv(&h, &p("group1.block1.skip.weight"), 2, 0);
    assert_eq!(main.len(), skip.len());
    let out: Vec<f64> = main.iter().zip(&skip).map(|(a, b)| a + b).collect();
    let l = out.len() / 2;
    let (w, bias) = (p("head.weight"), p("head.bias"));
    let mut logits = Vec::new();
    for row in out.chunks(l) {
        let pooled = row.iter().sum::<f64>() / l as f64;
        for o in 0..2 {
            logits.push(pooled * w.data()[o] + bias.data()[o]);
        }
    }
    let got = net.predict(&x).unwrap();
    assert!(max_diff(got.data(), &logits) < 1e-12);
}

#[test]
fn ten_second_input_reaches_head_at_length_12() {
    let spec = ModelSpec::parse("8; cna; [4, 4, 8, 8, 16, 16, 20]; [1, 1, 1, 1, 1, 1, 1]").unwrap();
    let net = Network::new(&spec, 0).unwrap();
    assert_eq!(net.pre_pool_length(3000).unwrap(), 12);
    let logits = net.predict(&random(&[1, 1, 3000], 1)).unwrap();
    assert_eq!(logits.dims(), &[1, 2]);
    assert!(net.pre_pool_length(40).is_err());
}
