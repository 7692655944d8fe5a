//! Finite-difference checks of every layer type and of a composed tiny U-Net.

use m2b_tensor::gradcheck::{check, GradCheckOptions, GradCheckReport};
use m2b_tensor::init;
use m2b_tensor::{BatchNormMode, ConvSpec, RunningStats, Tape, Tensor, TensorError, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NetConfig, Network};
use crate::Result;

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const NETWORK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor<f64> {
    init::uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn probe(numel: usize, seed: u64) -> Vec<f64> {
    rand_t(&[numel], seed).into_data()
}

fn row(name: &'static str, tolerance: f64, r: GradCheckReport) -> GradCheckRow {
    GradCheckRow {
        name,
        max_rel_error: r.max_rel_error,
        checked: r.checked,
        tolerance,
    }
}

type Unary = fn(&mut Tape<f64>, Var) -> Var;

/// Runs every check; the last row is the composed network.
pub fn gradcheck_suite() -> Result<Vec<GradCheckRow>> {
    let opts = GradCheckOptions::default();
    let mut rows = Vec::new();

    let p = probe(2 * 3 * 4 * 4, 1);
    let r = check(
        &[rand_t(&[2, 2, 8, 8], 2), rand_t(&[3, 2, 4, 4], 3), rand_t(&[3], 4)],
        opts,
        |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), ConvSpec::default())?;
            t.weighted_sum(y, p.clone())
        },
    )?;
    rows.push(row("conv2d", LAYER_TOLERANCE, r));

    let p = probe(2 * 2 * 8 * 8, 5);
    let r = check(
        &[rand_t(&[2, 3, 4, 4], 6), rand_t(&[3, 2, 4, 4], 7), rand_t(&[2], 8)],
        opts,
        |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], Some(v[2]), ConvSpec::default())?;
            t.weighted_sum(y, p.clone())
        },
    )?;
    rows.push(row("conv_transpose2d", LAYER_TOLERANCE, r));

    let p = probe(3 * 2 * 12, 9);
    let gamma = rand_t(&[2], 10).map(|v| v + 1.5);
    let r = check(
        &[rand_t(&[3, 2, 3, 4], 11), gamma.clone(), rand_t(&[2], 12)],
        opts,
        |t, v| {
            let mut stats = RunningStats::new(2);
            let y = t.batch_norm2d(v[0], v[1], v[2], BatchNormMode::Train(&mut stats))?;
            t.weighted_sum(y, p.clone())
        },
    )?;
    rows.push(row("batch_norm2d_train", LAYER_TOLERANCE, r));

    let mut stats = RunningStats::new(2);
    stats.mean = vec![0.3, -0.2];
    stats.var = vec![0.5, 2.0];
    let r = check(&[rand_t(&[3, 2, 3, 4], 13), gamma, rand_t(&[2], 14)], opts, |t, v| {
        let y = t.batch_norm2d(v[0], v[1], v[2], BatchNormMode::Eval(&stats))?;
        t.weighted_sum(y, p.clone())
    })?;
    rows.push(row("batch_norm2d_eval", LAYER_TOLERANCE, r));

    // keep inputs off the ReLU kink so central differences stay on one side
    let x = rand_t(&[2, 3, 4, 4], 15).map(|v| if v.abs() < 1e-3 { v + 0.01 } else { v });
    let p = probe(96, 16);
    let acts: [(&'static str, Unary); 4] = [
        ("relu", |t, v| t.relu(v)),
        ("leaky_relu", |t, v| t.leaky_relu(v, 0.2)),
        ("sigmoid", |t, v| t.sigmoid(v)),
        ("scaled_sigmoid", |t, v| t.scaled_sigmoid(v)),
    ];
    for (name, act) in acts {
        let r = check(std::slice::from_ref(&x), opts, |t, v| {
            let y = act(t, v[0]);
            t.weighted_sum(y, p.clone())
        })?;
        rows.push(row(name, LAYER_TOLERANCE, r));
    }

    let p = probe(2 * 7 * 10, 17);
    let r = check(&[rand_t(&[2, 3], 18), rand_t(&[2, 4, 2, 5], 19)], opts, |t, v| {
        let tiled = t.tile(v[0], 2, 5)?;
        let cat = t.concat_channels(v[1], tiled)?;
        t.weighted_sum(cat, p.clone())
    })?;
    rows.push(row("tile_concat", LAYER_TOLERANCE, r));

    let p = probe(24, 20);
    let r = check(&[rand_t(&[2, 2, 2, 3], 21), rand_t(&[2, 12], 22)], opts, |t, v| {
        let flat = t.reshape(v[0], &[2, 12])?;
        let s = t.add(flat, v[1])?;
        t.weighted_sum(s, p.clone())
    })?;
    rows.push(row("reshape_add", LAYER_TOLERANCE, r));

    let p = probe(48, 23);
    let r = check(&[rand_t(&[2, 2, 3, 4], 24), rand_t(&[2, 2, 3, 4], 25)], opts, |t, v| {
        let y = t.complex_mul(v[0], v[1])?;
        t.weighted_sum(y, p.clone())
    })?;
    rows.push(row("complex_mul", LAYER_TOLERANCE, r));

    let (a, b) = (rand_t(&[2, 2, 3, 3], 26), rand_t(&[2, 2, 3, 3], 27));
    let r = check(&[a.clone(), b.clone()], opts, |t, v| t.mse_loss(v[0], v[1]))?;
    rows.push(row("mse_loss", LAYER_TOLERANCE, r));
    let r = check(&[a, b], opts, |t, v| t.l1_loss(v[0], v[1]))?;
    rows.push(row("l1_loss", LAYER_TOLERANCE, r));

    rows.push(tiny_unet_check()?);
    Ok(rows)
}

/// The full binaural network (visual branch included) at width 2.
pub fn tiny_unet_check() -> Result<GradCheckRow> {
    let cfg = NetConfig {
        unet_channels: vec![2; 5],
        visual_channels: vec![2; 4],
        visual_embed_dim: 2,
        frame_height: 16,
        frame_width: 32,
        ..NetConfig::default()
    };
    let mut net: Network<f64> = Network::new(cfg, 21)?;
    // larger weights than the training init so every path carries signal
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let params: Vec<Tensor<f64>> = net
        .params()
        .values()
        .iter()
        .map(|p| {
            let noise: Tensor<f64> = init::normal(p.shape(), 0.5, &mut rng);
            Tensor::new(
                p.shape(),
                p.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect(),
            )
        })
        .collect::<std::result::Result<_, _>>()?;
    let audio: Tensor<f64> = init::normal(&[2, 2, 32, 64], 1.0, &mut rng);
    let frames: Tensor<f64> = init::uniform(&[2, 3, 16, 32], 1.0, &mut rng);
    let probe: Tensor<f64> = init::normal(&[2, 2, 32, 64], 1.0, &mut rng);
    let opts = GradCheckOptions {
        probes_per_input: 6,
        ..GradCheckOptions::default()
    };
    let r = check(&params, opts, |tape, vars| {
        let out = net
            .forward_train_with(tape, vars.to_vec(), audio.clone(), Some(frames.clone()))
            .map_err(|e| TensorError::Format(e.to_string()))?;
        tape.weighted_sum(out, probe.data().to_vec())
    })?;
    Ok(row("tiny_unet", NETWORK_TOLERANCE, r))
}
