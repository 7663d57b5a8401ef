use ndarray::Array2;
use qser::nn::Linear;
use qser::train::AdamW;

/// Scalar AdamW written out longhand.
fn oracle(theta0: f64, steps: usize, lr: f64, wd: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    for t in 1..=steps {
        let g = theta;
        theta -= lr * wd * theta;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32));
        let vh = v / (1.0 - b2.powi(t as i32));
        theta -= lr * mh / (vh.sqrt() + eps);
    }
    theta
}

#[test]
fn quadratic_bowl_matches_scalar_oracle() {
    let start = [1.0, -2.5, 0.3, 4.0, -0.01, 0.0];
    let mut p = Linear {
        w: Array2::from_shape_vec((2, 3), start.to_vec()).unwrap(),
        b: None,
    };
    let mut opt = AdamW::default();
    let (lr, wd) = (0.05, 0.01);
    for _ in 0..100 {
        // f = |theta|^2 / 2 has gradient theta
        let g = p.clone();
        opt.step(&mut p, &g, lr, wd, &|_| true).unwrap();
    }
    assert_eq!(opt.steps(), 100);
    for (got, &s) in p.w.iter().zip(&start) {
        let want = oracle(s, 100, lr, wd);
        assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }
}

#[test]
fn frozen_arrays_keep_their_values() {
    let mut p = Linear {
        w: Array2::ones((2, 2)),
        b: Some(ndarray::Array1::ones(2)),
    };
    let g = p.clone();
    let mut opt = AdamW::default();
    opt.step(&mut p, &g, 0.1, 0.0, &|name| name == "W").unwrap();
    assert!(p.w.iter().all(|&v| (v - 0.9).abs() < 1e-7));
    assert!(p.b.unwrap().iter().all(|&v| v == 1.0));
}
