//! Analytic gradients against central finite differences, in f64.

use ntc_core::input::mip_resolution;
use ntc_core::model::Model;
use ntc_core::texture::build_mip_chain;
use ntc_core::trainer::{batch_loss, loss_and_gradient, Batch};
use ntc_core::{Activation, AddressMode, ChannelSpan, Image, LossKind, MipChain, Profile, TextureSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
/// Step for the one-sided fallback; small enough that its O(h) error stays
/// under the tolerance.
const H_ONE_SIDED: f64 = 1e-7;
const REL_TOL: f64 = 1e-3;
const GRID_PROBES: usize = 20;

fn tiny_profile() -> Profile {
    // 16² texture, ratio 4: G0 is 4², G1 is 2²
    Profile::new("tiny", 4, 2, 4, 2, 4).unwrap()
}

fn random_chain(rng: &mut ChaCha8Rng, width: usize, channels: usize) -> MipChain {
    let data = (0..width * width * channels).map(|_| rng.random::<f32>()).collect();
    let img = Image::new(width, width, channels, data).unwrap();
    let names = vec![ChannelSpan {
        name: "t".into(),
        start: 0,
        len: channels,
    }];
    build_mip_chain(&TextureSet::new(names, img).unwrap())
}

fn random_batch(rng: &mut ChaCha8Rng, num_mips: usize) -> Batch {
    let lod = rng.random_range(0..num_mips);
    let res = mip_resolution(lod, num_mips);
    let crop = res.min(rng.random_range(3..=14));
    let crops = rng.random_range(1..=3);
    let corners = (0..crops)
        .map(|_| (rng.random_range(0..=res - crop), rng.random_range(0..=res - crop)))
        .collect();
    Batch {
        lod,
        crop,
        corners,
        seeds: (0..crops).map(|_| rng.random()).collect(),
        noise: rng.random_bool(0.5),
    }
}

/// Randomizes the grids over their full range so taps are not all alike.
fn spread_grids(model: &mut Model<f64>, rng: &mut ChaCha8Rng) {
    for (grid, q) in model.pyramid.grids_mut() {
        for v in &mut grid.data {
            *v = rng.random_range(q.lo()..q.hi());
        }
    }
}

fn close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() <= REL_TOL * scale + 1e-9
}

/// Central, forward and backward differences.
struct Differences {
    central: f64,
    forward: f64,
    backward: f64,
}

impl Differences {
    /// hardGELU has kinks at ±1.5. When a pre-activation sits within `H` of one,
    /// the central difference straddles it; the analytic value must then match
    /// a one-sided difference taken on the side that does not.
    fn accepts(&self, analytic: f64, piecewise: bool) -> bool {
        close(analytic, self.central)
            || (piecewise && (close(analytic, self.forward) || close(analytic, self.backward)))
    }
}

fn check_draw(seed: u64, loss: LossKind, activation: Activation) -> (usize, usize) {
    let piecewise = activation == Activation::HardGelu;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = random_chain(&mut rng, 16, 3);
    let mode = if rng.random_bool(0.5) {
        AddressMode::Clamp
    } else {
        AddressMode::Wrap
    };
    let mut model = Model::<f64>::init(&tiny_profile(), 16, 3, 8, activation, mode, &mut rng).unwrap();
    spread_grids(&mut model, &mut rng);
    for slice in model.weights.param_slices_mut() {
        for v in slice.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let batch = random_batch(&mut rng, model.num_mips);
    let (_, grads) = loss_and_gradient(&model, &chain, &batch, loss);

    let mut checked = 0;
    let mut failed = 0;
    let analytic_w: Vec<f64> = grads.weights.param_slices().flatten().copied().collect();
    let mut flat = 0;
    let slices = model.weights.param_slices().map(|s| s.len()).collect::<Vec<_>>();
    for (si, len) in slices.into_iter().enumerate() {
        for i in 0..len {
            let numeric = differences(&mut model, &chain, &batch, loss, |m| {
                &mut m.weights.param_slices_mut().nth(si).unwrap()[i]
            });
            checked += 1;
            if !numeric.accepts(analytic_w[flat], piecewise) {
                failed += 1;
                eprintln!(
                    "seed {seed} weight slice {si}[{i}]: analytic {} numeric {} {} {}",
                    analytic_w[flat], numeric.central, numeric.forward, numeric.backward
                );
            }
            flat += 1;
        }
    }

    let sizes: Vec<usize> = model.pyramid.grids().map(|(g, _)| g.data.len()).collect();
    for _ in 0..GRID_PROBES {
        let g = rng.random_range(0..sizes.len());
        let i = rng.random_range(0..sizes[g]);
        let numeric = differences(&mut model, &chain, &batch, loss, |m| {
            &mut m.pyramid.grids_mut().nth(g).unwrap().0.data[i]
        });
        checked += 1;
        if !numeric.accepts(grads.grids[g][i], piecewise) {
            failed += 1;
            eprintln!(
                "seed {seed} grid {g}[{i}]: analytic {} numeric {}",
                grads.grids[g][i], numeric.central
            );
        }
    }
    (checked, failed)
}

fn differences(
    model: &mut Model<f64>,
    chain: &MipChain,
    batch: &Batch,
    loss: LossKind,
    param: impl Fn(&mut Model<f64>) -> &mut f64,
) -> Differences {
    let orig = *param(model);
    let at = |model: &mut Model<f64>, delta: f64| {
        *param(model) = orig + delta;
        batch_loss(model, chain, batch, loss)
    };
    let central = (at(model, H) - at(model, -H)) / (2.0 * H);
    let here = at(model, 0.0);
    let forward = (at(model, H_ONE_SIDED) - here) / H_ONE_SIDED;
    let backward = (here - at(model, -H_ONE_SIDED)) / H_ONE_SIDED;
    *param(model) = orig;
    Differences {
        central,
        forward,
        backward,
    }
}

#[test]
fn l2_gradients_match_finite_differences() {
    let (mut checked, mut failed) = (0, 0);
    for seed in 0..100 {
        let (c, f) = check_draw(seed, LossKind::L2, Activation::HardGelu);
        checked += c;
        failed += f;
    }
    assert_eq!(failed, 0, "{failed} of {checked} partial derivatives disagree");
}

#[test]
fn gelu_gradients_match_finite_differences() {
    for seed in 100..120 {
        let (c, f) = check_draw(seed, LossKind::L2, Activation::Gelu);
        assert_eq!(f, 0, "{f} of {c} partial derivatives disagree");
    }
}

#[test]
fn ssim_loss_gradients_match_finite_differences() {
    for seed in 200..230 {
        let (c, f) = check_draw(seed, LossKind::L2PlusSsim { lambda: 0.5 }, Activation::HardGelu);
        assert_eq!(f, 0, "{f} of {c} partial derivatives disagree");
    }
}
