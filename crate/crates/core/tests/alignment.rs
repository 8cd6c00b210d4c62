use entropystop::data::gen_synthetic;
use entropystop::diagnostics::gradient_alignment;
use entropystop::models::OdModel;
use entropystop::nn::Matrix;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check(model: &OdModel, batch: &Matrix) {
    let dl = gradient_alignment(model, batch).unwrap();
    assert_eq!(dl.len(), batch.rows());
    let mean_grad = model.gradient(batch).unwrap().gradients.flatten();
    let avg = dl.iter().sum::<f64>() / dl.len() as f64;
    assert!((avg - norm(&mean_grad)).abs() < 1e-9, "{avg} vs {}", norm(&mean_grad));
}

#[test]
fn mean_alignment_is_mean_gradient_norm() {
    for seed in 0..10 {
        let ds = gen_synthetic(40, 4, 3, 6.0, seed).unwrap();
        let idx: Vec<usize> = (0..ds.len()).step_by(3).collect();
        let batch = ds.features().select_rows(&idx);
        check(&OdModel::new_autoencoder(3, 5, seed).unwrap(), &batch);
        check(&OdModel::new_deep_svdd(3, 4, ds.features(), seed).unwrap(), &batch);
    }
}

#[test]
fn single_sample_alignment_is_its_gradient_norm() {
    let ds = gen_synthetic(10, 2, 2, 6.0, 3).unwrap();
    let model = OdModel::new_autoencoder(2, 4, 3).unwrap();
    let one = ds.features().select_rows(&[0]);
    let dl = gradient_alignment(&model, &one).unwrap();
    let g = model.gradient(&one).unwrap().gradients.flatten();
    assert!((dl[0] - norm(&g)).abs() < 1e-12);
}
