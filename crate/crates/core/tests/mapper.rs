use clvc::mapper::{mapper_convert, mapper_train, MapperConfig};
use clvc::nn::{Activation, Matrix, NormStats, RmspropConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(
        n,
        d,
        (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn default_topology_for_forty_dims() {
    let x = uniform(100, 20, 0);
    let y = uniform(100, 40, 1);
    let cfg = MapperConfig {
        epochs: 1,
        ..MapperConfig::default()
    };
    let (model, report) = mapper_train(&x, &y, "vc1", &cfg).unwrap();
    assert_eq!(model.layer_widths(), vec![20, 50, 50, 40]);
    let acts: Vec<_> = model.net.layers().iter().map(|l| l.activation).collect();
    assert_eq!(
        acts,
        vec![Activation::Sigmoid, Activation::Sigmoid, Activation::Linear]
    );
    assert_eq!(report.loss.len(), 1);
    assert_eq!(report.pairs, 100);
    model.validate().unwrap();
}

#[test]
fn trace_has_one_entry_per_epoch() {
    let (_, report) = mapper_train(
        &uniform(50, 4, 2),
        &uniform(50, 8, 3),
        "t",
        &MapperConfig::default(),
    )
    .unwrap();
    assert_eq!(report.loss.len(), 25);
}

#[test]
fn constant_targets_are_learned() {
    let x = uniform(400, 4, 4);
    let row = [0.5, -1.5, 2.0, 0.25, 3.0, -0.75, 1.0, 0.0];
    let y = Matrix::from_rows(&vec![row.to_vec(); 400], 8).unwrap();
    let (model, _) = mapper_train(&x, &y, "t", &MapperConfig::default()).unwrap();
    let pred = mapper_convert(&model, &uniform(20, 4, 5)).unwrap();
    for r in pred.row_iter() {
        for (p, t) in r.iter().zip(row) {
            assert!((p - t).abs() < 1e-3, "{p} vs {t}");
        }
    }
}

#[test]
fn linear_map_loss_drops_below_five_percent() {
    let x = uniform(2000, 8, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = Matrix::from_vec(
        16,
        8,
        (0..128).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let c: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut y = x.matmul(&a.transpose()).unwrap();
    for r in 0..y.rows() {
        for (v, ci) in y.row_mut(r).iter_mut().zip(&c) {
            *v += ci;
        }
    }
    let (_, report) = mapper_train(&x, &y, "t", &MapperConfig::default()).unwrap();
    let last = *report.loss.last().unwrap();
    assert!(
        last < 0.05 * report.initial_loss,
        "{last} vs {}",
        report.initial_loss
    );
}

#[test]
fn conversion_reproduces_final_training_loss() {
    let x = uniform(300, 3, 8);
    let y = uniform(300, 6, 9);
    let cfg = MapperConfig {
        epochs: 5,
        ..MapperConfig::default()
    };
    let (model, report) = mapper_train(&x, &y, "t", &cfg).unwrap();
    let pred = mapper_convert(&model, &x).unwrap();
    let p = model.output_norm.normalize(&pred).unwrap();
    let t = model.output_norm.normalize(&y).unwrap();
    let err = clvc::nn::mse(&p, &t).unwrap();
    assert!((err - report.loss[4]).abs() < 1e-10 * err.max(1.0));
}

#[test]
fn training_is_deterministic() {
    let x = uniform(120, 3, 10);
    let y = uniform(120, 6, 11);
    let cfg = MapperConfig {
        epochs: 3,
        seed: 5,
        ..MapperConfig::default()
    };
    let (a, ra) = mapper_train(&x, &y, "t", &cfg).unwrap();
    let (b, rb) = mapper_train(&x, &y, "t", &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn errors_and_edge_cases() {
    let cfg = MapperConfig::default();
    let err = mapper_train(&uniform(5, 2, 0), &uniform(4, 4, 0), "t", &cfg).unwrap_err();
    assert!(matches!(err, clvc::Error::Alignment(_)));
    let err = mapper_train(&Matrix::zeros(0, 2), &Matrix::zeros(0, 4), "t", &cfg).unwrap_err();
    assert!(matches!(err, clvc::Error::Data(_)));

    let (mut model, _) = mapper_train(
        &uniform(30, 2, 1),
        &uniform(30, 4, 2),
        "t",
        &MapperConfig { epochs: 1, ..cfg },
    )
    .unwrap();
    assert_eq!(
        mapper_convert(&model, &Matrix::zeros(0, 2))
            .unwrap()
            .shape(),
        (0, 4)
    );
    assert!(matches!(
        mapper_convert(&model, &Matrix::zeros(1, 3)),
        Err(clvc::Error::Shape(_))
    ));
    // Degenerate stored statistics are floored, so conversion stays finite.
    model.input_norm = NormStats::new(vec![0.0; 2], vec![0.0; 2]).unwrap();
    assert!(mapper_convert(&model, &uniform(3, 2, 3))
        .unwrap()
        .is_finite());

    let bad = MapperConfig {
        rmsprop: RmspropConfig {
            learning_rate: -1.0,
            ..RmspropConfig::default()
        },
        ..MapperConfig::default()
    };
    assert!(matches!(
        mapper_train(&uniform(5, 2, 0), &uniform(5, 4, 0), "t", &bad),
        Err(clvc::Error::Config(_))
    ));
}
