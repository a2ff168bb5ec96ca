use learnrec::bounds::{chaining_bound_scan, covering_bound_scan};
use learnrec::hypotheses::{reconstruct_tikhonov, Family, Penalty, PenaltyLayout, TikhonovFamily, TikhonovParams};
use learnrec::operators::{ForwardOperator, GaussianSpec};
use learnrec::risk::{erm_solve, expected_loss_mc, ErmOptions};
use learnrec::stochastics::{draw_training_set, OrliczOrder};
use learnrec::{BoundInputs, ForwardOperator32, GaussianSpec32, ParamClass, ProblemDistribution};

fn diagonal_problem() -> ProblemDistribution {
    ProblemDistribution::gaussian(
        ForwardOperator::power_decay(3, 1.0).unwrap(),
        GaussianSpec::centered(vec![1.0, 0.5, 0.25]).unwrap(),
        GaussianSpec::isotropic(3, 0.1).unwrap(),
    )
    .unwrap()
}

#[test]
fn training_sets_are_prefix_stable() {
    let dist = diagonal_problem();
    let small = draw_training_set(&dist, 10, 7).unwrap();
    let large = draw_training_set(&dist, 40, 7).unwrap();
    assert_eq!(small.pairs(), &large.pairs()[..10]);
    assert_ne!(draw_training_set(&dist, 10, 8).unwrap().pairs(), small.pairs());
}

#[test]
fn distribution_and_class_roundtrip_through_json() {
    let dist = diagonal_problem();
    let text = serde_json::to_string(&dist).unwrap();
    let back: ProblemDistribution = serde_json::from_str(&text).unwrap();
    assert_eq!(back, dist);
    let class = ParamClass::boxed(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
    let back: ParamClass = serde_json::from_str(&serde_json::to_string(&class).unwrap()).unwrap();
    assert_eq!(back, class);
}

#[test]
fn single_and_double_precision_agree() {
    let a64 = ForwardOperator::power_decay(3, 1.0).unwrap();
    let n64 = GaussianSpec::isotropic(3, 0.1).unwrap();
    let a32: ForwardOperator32 = ForwardOperator::power_decay(3, 1.0f32).unwrap();
    let n32: GaussianSpec32 = GaussianSpec::isotropic(3, 0.1f32).unwrap();
    let p64 = TikhonovParams { h: vec![0.1, 0.0, -0.2], b: Penalty::Scalar(0.7) };
    let p32 = TikhonovParams { h: vec![0.1f32, 0.0, -0.2], b: Penalty::Scalar(0.7f32) };
    let y = [0.3, -1.2, 0.5];
    let x64 = reconstruct_tikhonov(&p64, &a64, &n64, &y).unwrap();
    let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let x32 = reconstruct_tikhonov(&p32, &a32, &n32, &y32).unwrap();
    for (a, b) in x64.iter().zip(&x32) {
        assert!((a - f64::from(*b)).abs() < 1e-5, "{a} vs {b}");
    }
}

#[test]
fn erm_on_a_diagonal_model_approaches_the_best_in_class() {
    let dist = diagonal_problem();
    let family = TikhonovFamily::new(dist.forward(), dist.noise().as_gaussian().unwrap(), PenaltyLayout::scalar_shrinkage(3))
        .unwrap();
    let class = ParamClass::boxed(vec![0.0], vec![3.0]).unwrap();
    let opts = ErmOptions::default();
    let small = erm_solve(&class, &family, &draw_training_set(&dist, 50, 1).unwrap(), &opts).unwrap();
    let large = erm_solve(&class, &family, &draw_training_set(&dist, 20_000, 1).unwrap(), &opts).unwrap();
    assert!(small.converged && large.converged);
    let l_small = expected_loss_mc(&dist, &small.theta_hat, &family, 200_000, 9).unwrap();
    let l_large = expected_loss_mc(&dist, &large.theta_hat, &family, 200_000, 9).unwrap();
    // shared draws: the larger sample can only be worse by Monte Carlo noise
    assert!(l_large.estimate <= l_small.estimate + l_large.halfwidth);
    assert_eq!(family.param_dim(), 1);
}

#[test]
fn bounds_shrink_with_the_sample_size() {
    let class = ParamClass::ball(vec![0.0; 2], 1.5).unwrap();
    let cov = class.covering_model();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for m in [10, 100, 1000, 10_000] {
        let inputs = BoundInputs::new(1.0, 1.0, OrliczOrder::SubGaussian, 1.0, m, 3.0).unwrap();
        let cb = covering_bound_scan(&inputs, &cov).unwrap().min_value;
        let ch = chaining_bound_scan(&inputs, &cov).unwrap().min_value;
        assert!(cb < last.0 && ch < last.1);
        last = (cb, ch);
    }
}
