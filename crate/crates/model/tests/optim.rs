use vivid_model::*;
use vivid_numerics::nn::ParamSet;
use vivid_numerics::Tensor;

fn one_param(v: f64) -> ParamSet {
    let mut p = ParamSet::new();
    p.push("p", Tensor::full(&[1], v));
    p
}

#[test]
fn zero_gradient_without_decay_is_a_fixed_point() {
    let cfg = OptimConfig {
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut vit = one_param(0.7);
    let mut spd = one_param(-2.5);
    let mut opt = AdamW::new(cfg, &vit, &spd);
    for _ in 0..10 {
        opt.step(&mut vit, &[Tensor::zeros(&[1])], 0.1, &mut spd, &[Tensor::zeros(&[1])], 0.1)
            .unwrap();
    }
    assert_eq!(vit.tensor(0).item(), 0.7);
    assert_eq!(spd.tensor(0).item(), -2.5);
}

#[test]
fn schedule_starts_and_ends_at_zero() {
    let total = 500;
    assert_eq!(warmup_steps(total, 0.03), 15);
    assert_eq!(lr_factor(0, total, 0.03), 0.0);
    assert_eq!(lr_factor(15, total, 0.03), 1.0);
    assert!((lr_factor(7, total, 0.03) - 7.0 / 15.0).abs() < 1e-15);
    assert!(lr_factor(total - 1, total, 0.03) < 1e-4);
    assert_eq!(lr_factor(total, total, 0.03), 0.0);
    let f: Vec<f64> = (15..=total).map(|t| lr_factor(t, total, 0.03)).collect();
    assert!(f.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn quadratic_converges() {
    let cfg = OptimConfig::default();
    let (mut p, mut m, mut v) = ([1.0], [0.0], [0.0]);
    let mut steps = None;
    for t in 1..=500u64 {
        let g = [2.0 * p[0]];
        adamw_update(&cfg.hyper(), t, 0.05, &mut p, &g, &mut m, &mut v);
        if p[0].abs() < 1e-3 {
            steps = Some(t);
            break;
        }
    }
    assert!(steps.is_some(), "|p| = {} after 500 steps", p[0].abs());
}

#[test]
fn non_finite_gradient_rejects_the_whole_step() {
    let mut vit = one_param(1.0);
    let mut spd = one_param(1.0);
    let mut opt = AdamW::new(OptimConfig::default(), &vit, &spd);
    let before = opt.clone();
    let err = opt
        .step(&mut vit, &[Tensor::full(&[1], 1.0)], 0.1, &mut spd, &[Tensor::full(&[1], f64::NAN)], 0.1)
        .unwrap_err();
    assert!(matches!(err, ModelError::NonFiniteGradient(ref s) if s.starts_with("p[0]")));
    assert_eq!(opt, before);
    assert_eq!(vit.tensor(0).item(), 1.0);
}

#[test]
fn config_validation() {
    assert!(RunConfig::desk().validate().is_ok());
    assert!(RunConfig::full().validate().is_ok());
    let mut c = RunConfig::desk();
    c.optim.lr_vit = 0.0;
    assert!(matches!(c.validate(), Err(ModelError::Config(_))));
    let mut c = RunConfig::desk();
    c.lambda_ortho = -1.0;
    assert!(c.validate().is_err());
    let mut c = RunConfig::desk();
    c.spd.teacher_dim = 32;
    assert!(c.validate().is_err());
    let json = serde_json::to_string(&RunConfig::desk()).unwrap();
    assert_eq!(RunConfig::from_json(&json).unwrap(), RunConfig::desk());
    assert!(RunConfig::from_json(&json.replace("\"steps\"", "\"stepz\"")).is_err());
}
