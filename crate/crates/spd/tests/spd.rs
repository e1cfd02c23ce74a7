use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vivid_numerics::{grad_check, GradCheckOptions, NumericsError, Tape, Tensor};
use vivid_spd::*;

fn projector(cfg: SpdConfig, seed: u64) -> SpdProjector {
    SpdProjector::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn tokens(seed: u64) -> Tensor {
    Tensor::randn(&[17, 32], 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn set(spd: &mut SpdProjector, name: &str, t: Tensor) {
    let i = spd.params().iter().position(|(n, _)| n == name).unwrap();
    *spd.params_mut().tensor_mut(i) = t;
}

fn ortho_value(maps: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<_> = maps.iter().map(|m| tape.constant(m.clone())).collect();
    let o = ortho_loss(&mut tape, &vars).unwrap();
    tape.value(o).item()
}

/// Triple loop straight from the definition.
fn ortho_oracle(maps: &[Vec<Vec<f64>>]) -> f64 {
    let mut total = 0.0;
    for (g, a) in maps.iter().enumerate() {
        for (h, b) in maps.iter().enumerate() {
            if g != h {
                for ra in a {
                    for rb in b {
                        let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
                        total += dot * dot;
                    }
                }
            }
        }
    }
    total
}

#[test]
fn ortho_hand_cases_are_exact() {
    let a = |row: &[f64]| Tensor::from_rows(&[row]).unwrap();
    assert_eq!(ortho_value(&[a(&[0.3, 0.7])]), 0.0);
    assert_eq!(ortho_value(&[a(&[1.0, 0.0]), a(&[0.0, 1.0])]), 0.0);
    // [.5 .5]·[.5 .5]ᵀ = 0.5, squared 0.25, counted for (1,2) and (2,1)
    let uniform = ortho_oracle(&[vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]]);
    assert_eq!(uniform, 0.5);
    assert_eq!(ortho_value(&[a(&[0.5, 0.5]), a(&[0.5, 0.5])]), uniform);
    let mut tape = Tape::new();
    assert!(matches!(
        ortho_loss(&mut tape, &[]),
        Err(SpdError::Numerics(NumericsError::EmptyInput { .. }))
    ));
}

#[test]
fn ortho_is_permutation_symmetric_and_zero_iff_disjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let maps: Vec<Tensor> = (0..4).map(|_| Tensor::uniform(&[2, 6], 0.0, 1.0, &mut rng)).collect();
    let base = ortho_value(&maps);
    let perm = [maps[2].clone(), maps[0].clone(), maps[3].clone(), maps[1].clone()];
    assert!((ortho_value(&perm) - base).abs() <= 1e-12 * base);
    assert!((pairwise_overlap(&maps) - base).abs() <= 1e-12 * base);

    // each group owns two columns: disjoint supports give exactly zero
    let owned: Vec<Tensor> = (0..3)
        .map(|g| {
            let mut t = Tensor::zeros(&[2, 6]);
            for r in 0..2 {
                t.data_mut()[r * 6 + 2 * g] = 0.4;
                t.data_mut()[r * 6 + 2 * g + 1] = 0.6;
            }
            t
        })
        .collect();
    assert_eq!(ortho_value(&owned), 0.0);
    let mut shared = owned.clone();
    shared[1].data_mut()[0] = 1e-3;
    assert!(ortho_value(&shared) > 0.0);
}

#[test]
fn maps_are_row_stochastic() {
    for heads in [1, 4] {
        let cfg = SpdConfig {
            heads,
            head_dim: 32 / heads,
            init_std: 0.5,
            ..Default::default()
        };
        let out = projector(cfg, 1).run(&tokens(2)).unwrap();
        assert_eq!(out.maps.len(), 4);
        for m in &out.maps {
            assert_eq!(m.shape(), [2, 17]);
            for r in 0..2 {
                assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                assert!(m.row(r).iter().all(|&v| v >= 0.0));
            }
        }
        assert!(out.ortho_loss >= 0.0);
        assert_eq!(out.tokens[0].shape(), [2, 32]);
    }
}

#[test]
fn zero_query_projection_gives_uniform_maps() {
    let mut spd = projector(SpdConfig::default(), 4);
    set(&mut spd, "spd.w_q", Tensor::zeros(&[32, 32]));
    let x = tokens(5);
    let out = spd.run(&x).unwrap();
    let xv = vivid_numerics::kernels::matmul(x.data(), spd.params().find("spd.w_v").unwrap().data(), 17, 32, 32);
    let mean: Vec<f64> = (0..32).map(|c| (0..17).map(|r| xv[r * 32 + c]).sum::<f64>() / 17.0).collect();
    for (m, t) in out.maps.iter().zip(&out.tokens) {
        assert!(m.data().iter().all(|&v| (v - 1.0 / 17.0).abs() <= 1e-15));
        for r in 0..2 {
            for c in 0..32 {
                assert!((t.at(r, c) - mean[c]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn one_dimensional_hand_case() {
    let cfg = SpdConfig {
        num_groups: 1,
        queries_per_group: 1,
        heads: 1,
        vit_dim: 1,
        head_dim: 1,
        teacher_dim: 2,
        patch_stride: 1,
        init_std: 0.02,
    };
    let mut spd = projector(cfg, 0);
    let one = || Tensor::full(&[1, 1], 1.0);
    set(&mut spd, "spd.queries.0", one());
    set(&mut spd, "spd.w_q", one());
    set(&mut spd, "spd.w_k", one());
    set(&mut spd, "spd.w_v", one());
    let ln3 = 3f64.ln();
    let x = Tensor::new(vec![2, 1], vec![0.0, ln3]).unwrap();
    let out = spd.run(&x).unwrap();
    let a = out.maps[0].data();
    assert!((a[0] - 0.25).abs() <= 1e-15 && (a[1] - 0.75).abs() <= 1e-15);
    assert!((out.tokens[0].item() - 0.75 * ln3).abs() <= 1e-15);
}

#[test]
fn token_gradients_match_fd() {
    let spd = projector(
        SpdConfig {
            init_std: 0.3,
            ..Default::default()
        },
        6,
    );
    let names: Vec<String> = spd.params().iter().map(|(n, _)| n.to_string()).collect();
    let checked = ["spd.queries.1", "spd.w_q", "spd.w_k", "spd.w_v"];
    let idx: Vec<usize> = checked.iter().map(|c| names.iter().position(|n| n == c).unwrap()).collect();
    let mut params: Vec<(String, Tensor)> = idx.iter().map(|&i| (names[i].clone(), spd.params().tensor(i).clone())).collect();
    params.push(("x".into(), tokens(7)));
    let report = grad_check(
        |tape, p| {
            let mut bound = spd.params().bind(tape, false);
            for (k, &i) in idx.iter().enumerate() {
                bound.replace(i, p[k]);
            }
            let (_, toks) = spd.attend(tape, &bound, p[4]).map_err(num)?;
            let mut total = tape.sum(toks[0])?;
            for &t in &toks[1..] {
                let s = tape.sum(t)?;
                total = tape.add(total, s)?;
            }
            Ok(total)
        },
        &params,
        &GradCheckOptions {
            tol: 1e-6,
            floor: 1e-4,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

fn num(e: SpdError) -> NumericsError {
    match e {
        SpdError::Numerics(n) => n,
        other => panic!("{other}"),
    }
}

#[test]
fn projections_are_shared_but_queries_are_not() {
    let spd = projector(
        SpdConfig {
            init_std: 0.3,
            ..Default::default()
        },
        8,
    );
    let x = tokens(9);
    let base = spd.run(&x).unwrap().maps;

    let mut k_pert = spd.clone();
    let wk = k_pert.params().find("spd.w_k").unwrap().clone();
    let mut wk2 = wk.clone();
    wk2.data_mut()[3] += 1e-3;
    set(&mut k_pert, "spd.w_k", wk2);
    let after = k_pert.run(&x).unwrap().maps;
    assert!(base.iter().zip(&after).all(|(a, b)| a.max_abs_diff(b) > 0.0));

    let mut q_pert = spd.clone();
    let mut q2 = spd.params().find("spd.queries.2").unwrap().clone();
    q2.data_mut()[0] += 1e-3;
    set(&mut q_pert, "spd.queries.2", q2);
    let after = q_pert.run(&x).unwrap().maps;
    for g in 0..4 {
        assert_eq!(base[g].max_abs_diff(&after[g]) > 0.0, g == 2, "group {g}");
    }
}

#[test]
fn projection_shape_and_sharing() {
    let spd = projector(SpdConfig::default(), 10);
    let out = spd.run(&tokens(11)).unwrap();
    assert_eq!(out.projected.shape(), [8 + 8, 64]);
    assert_eq!(spd.config().num_projected(17), 16);
    assert_eq!(spd.config().patch_rows(17), [1, 3, 5, 7, 9, 11, 13, 15]);

    // identical inputs through the shared MLP give identical rows
    let mut tape = Tape::new();
    let p = spd.params().bind(&mut tape, false);
    let row = Tensor::randn(&[1, 32], 1.0, &mut ChaCha8Rng::seed_from_u64(12));
    let a = tape.constant(row.clone());
    let b = tape.constant(row);
    let y = spd.project(&mut tape, &p, &[a], b).unwrap();
    let y = tape.value(y);
    assert_eq!(y.row(0), y.row(1));
}

#[test]
fn zero_mlp_weights_leave_only_bias() {
    let mut spd = projector(SpdConfig::default(), 13);
    set(&mut spd, "spd.mlp.fc1.weight", Tensor::zeros(&[32, 64]));
    set(&mut spd, "spd.mlp.fc2.weight", Tensor::zeros(&[64, 64]));
    let bias = Tensor::randn(&[64], 1.0, &mut ChaCha8Rng::seed_from_u64(14));
    set(&mut spd, "spd.mlp.fc2.bias", bias.clone());
    let out = spd.run(&tokens(15)).unwrap();
    for r in 0..16 {
        assert_eq!(out.projected.row(r), bias.data());
    }
}

#[test]
fn config_requires_shared_width() {
    let cfg = SpdConfig {
        head_dim: 16,
        ..Default::default()
    };
    assert!(matches!(SpdProjector::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)), Err(SpdError::Config(_))));
}
