use entropystop::models::OdModel;
use entropystop::nn::{Activation, DenseNet, Matrix, SampleLoss};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `params`.
fn max_rel_err(params: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + H;
        let up = f(&p);
        p[i] = orig - H;
        let down = f(&p);
        p[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    worst
}

/// Central differences straddling a ReLU kink measure the average of two
/// slopes, so points with a pre-activation this close to zero are redrawn.
const KINK_MARGIN: f64 = 1e-3;

fn near_kink(net: &DenseNet, x: &Matrix) -> bool {
    let mut rows: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    for layer in net.layers() {
        for row in rows.iter_mut() {
            let mut next = layer.bias.clone();
            for (o, n) in next.iter_mut().enumerate() {
                *n += layer.weights.row(o).iter().zip(row.iter()).map(|(w, v)| w * v).sum::<f64>();
            }
            if layer.activation == Activation::Relu {
                if next.iter().any(|z| z.abs() < KINK_MARGIN) {
                    return true;
                }
                next.iter_mut().for_each(|z| *z = z.max(0.0));
            }
            *row = next;
        }
    }
    false
}

/// Jitter the parameters of `net` until no ReLU input sits on a kink.
fn jitter(net: &mut DenseNet, x: &Matrix, rng: &mut Xoshiro256PlusPlus, scale: f64) {
    let base = net.flat_params();
    loop {
        let p: Vec<f64> = base.iter().map(|v| v + rng.random_range(-scale..scale)).collect();
        net.set_flat_params(&p).unwrap();
        if !near_kink(net, x) {
            return;
        }
    }
}

fn random_matrix(rng: &mut Xoshiro256PlusPlus, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn model_err(model: &OdModel, x: &Matrix) -> f64 {
    let analytic = model.gradient(x).unwrap().gradients.flatten();
    let mut probe = model.clone();
    max_rel_err(&model.net().flat_params(), &analytic, |p| {
        probe.net_mut().set_flat_params(p).unwrap();
        probe.gradient(x).unwrap().mean_loss
    })
}

#[test]
fn autoencoder_matches_finite_differences() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    for point in 0..20u64 {
        let d = rng.random_range(1..=8);
        let hidden = rng.random_range(1..=8);
        let x = random_matrix(&mut rng, 6, d);
        let mut model = OdModel::new_autoencoder(d, hidden, point).unwrap();
        // Move off the zero-bias initialization so every parameter matters.
        jitter(model.net_mut(), &x, &mut rng, 0.3);
        let err = model_err(&model, &x);
        assert!(err < TOL, "point {point}: d={d} hidden={hidden} rel err {err:e}");
    }
}

#[test]
fn deep_svdd_matches_finite_differences() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    for point in 0..20u64 {
        let d = rng.random_range(1..=8);
        let latent = rng.random_range(1..=8);
        let x = random_matrix(&mut rng, 6, d);
        let mut model = OdModel::new_deep_svdd(d, latent, &x, point).unwrap();
        jitter(model.net_mut(), &x, &mut rng, 0.3);
        let err = model_err(&model, &x);
        assert!(err < TOL, "point {point}: d={d} latent={latent} rel err {err:e}");
    }
}

/// Half the squared norm of the output.
struct HalfSquare;

impl SampleLoss for HalfSquare {
    fn loss_and_grad(&self, _input: &[f64], output: &[f64], grad: &mut [f64]) -> f64 {
        grad.copy_from_slice(output);
        0.5 * output.iter().map(|o| o * o).sum::<f64>()
    }
}

fn net_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<bool>, u64, u64)> {
    (1usize..=3)
        .prop_flat_map(|layers| {
            (
                prop::collection::vec(1usize..=8, layers + 1),
                prop::collection::vec(any::<bool>(), layers),
                any::<u64>(),
                any::<u64>(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_net_matches_finite_differences((dims, relu, seed, data_seed) in net_strategy()) {
        let acts: Vec<Activation> = relu.iter().map(|&r| if r { Activation::Relu } else { Activation::Linear }).collect();
        let mut net = DenseNet::new(&dims, &acts, seed).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(data_seed);
        let x = random_matrix(&mut rng, 4, dims[0]);
        jitter(&mut net, &x, &mut rng, 0.2);
        let p = net.flat_params();
        let analytic = net.gradient(&x, &HalfSquare).unwrap().gradients.flatten();
        let mut probe = net.clone();
        let err = max_rel_err(&p, &analytic, |q| {
            probe.set_flat_params(q).unwrap();
            probe.gradient(&x, &HalfSquare).unwrap().mean_loss
        });
        prop_assert!(err < TOL, "dims {:?} rel err {:e}", dims, err);
    }
}
