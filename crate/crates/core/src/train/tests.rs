use rand::RngExt;

use super::*;
use crate::field::{CHANNELS, DENSITY, SEMANTIC};
use crate::geom::{Aabb, Vec3};
use crate::scenegen::{self, Camera, Intrinsics};

#[test]
fn photometric_examples() {
    assert_eq!(photometric_loss(&[[0.2, 0.3, 0.4]], &[[0.2, 0.3, 0.4]]).unwrap(), 0.0);
    assert_eq!(photometric_loss(&[[0.0; 3]], &[[1.0, 0.0, 0.0]]).unwrap(), 1.0);
    assert_eq!(
        photometric_loss(&[[0.0; 3], [0.5; 3]], &[[1.0, 0.0, 0.0], [0.5; 3]]).unwrap(),
        0.5
    );
    assert!(photometric_loss(&[[0.0; 3]], &[]).is_err());
}

#[test]
fn semantic_examples() {
    let ln2 = std::f64::consts::LN_2;
    assert!(semantic_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap() <= 1e-5);
    assert!((semantic_loss(&[0.5], &[1.0]).unwrap() - ln2).abs() < 1e-12);
    assert!((semantic_loss(&[0.5], &[0.0]).unwrap() - ln2).abs() < 1e-12);
}

fn random_grid(seed: u64) -> FieldGrid {
    let mut g = FieldGrid::init([8; 3], Aabb::unit(), 0.0, 0.0).unwrap();
    let mut r = rng::rng(seed);
    for v in g.raw_mut() {
        v[DENSITY] = r.random_range(-2.0..3.0);
        for c in 1..CHANNELS {
            v[c] = r.random_range(-2.0..2.0);
        }
    }
    g
}

fn random_frames(seed: u64, n: usize) -> Vec<PosedFrame> {
    let mut r = rng::rng(seed);
    let intr = Intrinsics::centered(8, 8, 1.0);
    scenegen::sample_hemisphere_cameras(n, 1.2, Vec3::ZERO, seed, intr)
        .unwrap()
        .into_iter()
        .map(|cam| {
            let rgb = (0..3 * 64).map(|_| r.random::<f32>()).collect();
            let mask = (0..64).map(|_| u8::from(r.random::<bool>())).collect();
            PosedFrame::new(cam, rgb, mask).unwrap()
        })
        .collect()
}

fn grads(grid: &FieldGrid, batch: &[TrainRay], terms: LossTerms) -> Vec<[f64; CHANNELS]> {
    let mut g = grid.clone();
    g.zero_gradients();
    backward(&mut g, batch, terms, None).unwrap();
    g.grad().to_vec()
}

#[test]
fn semantic_loss_never_reaches_density_or_color() {
    let grid = random_grid(1);
    let frames = random_frames(2, 3);
    let batch = sample_batch(&frames, &grid.bounds(), 64, 24, 9).unwrap();
    let sem = grads(&grid, &batch, LossTerms::SEMANTIC);
    assert!(sem.iter().all(|v| v[..SEMANTIC].iter().all(|&x| x == 0.0)));
    assert!(sem.iter().any(|v| v[SEMANTIC] != 0.0));
    let photo = grads(&grid, &batch, LossTerms::PHOTOMETRIC);
    assert!(photo.iter().all(|v| v[SEMANTIC] == 0.0));
    // The combined gradient is the channel-wise union.
    let both = grads(&grid, &batch, LossTerms::BOTH);
    for i in 0..both.len() {
        for c in 0..CHANNELS {
            assert_eq!(both[i][c], photo[i][c] + sem[i][c]);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let grid = random_grid(3);
    let frames = random_frames(4, 2);
    let batch = sample_batch(&frames, &grid.bounds(), 12, 16, 5).unwrap();
    let analytic = grads(&grid, &batch, LossTerms::BOTH);
    let h = 1e-6;
    let mut checked = 0;
    for i in 0..grid.len() {
        for c in 0..CHANNELS {
            let mut plus = grid.clone();
            plus.raw_mut()[i][c] += h;
            let mut minus = grid.clone();
            minus.raw_mut()[i][c] -= h;
            let (lp, lm) = (evaluate(&plus, &batch).unwrap(), evaluate(&minus, &batch).unwrap());
            // Density and color see only the photometric term.
            let fd = if c == SEMANTIC {
                (lp.l_total - lm.l_total) / (2.0 * h)
            } else {
                (lp.l_photo - lm.l_photo) / (2.0 * h)
            };
            let a = analytic[i][c];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-3, "voxel {i} channel {c}: analytic {a} fd {fd}");
            if a != 0.0 {
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "{checked}");
}

#[test]
fn loss_terms_add_up() {
    let grid = random_grid(5);
    let frames = random_frames(6, 2);
    let batch = sample_batch(&frames, &grid.bounds(), 32, 16, 1).unwrap();
    let l = evaluate(&grid, &batch).unwrap();
    assert!((l.l_total - (l.l_photo + l.l_sem)).abs() <= 1e-12);
    assert!(l.l_photo >= 0.0 && l.l_sem >= 0.0);
}

#[test]
fn first_adam_step_is_lr_times_sign() {
    let mut grid = FieldGrid::init([2; 3], Aabb::unit(), 0.0, 0.0).unwrap();
    let before = grid.raw().to_vec();
    for (k, g) in grid.grad_mut().iter_mut().enumerate() {
        *g = [0.3, -2.0, 1e-3, -1e-3, if k % 2 == 0 { 7.0 } else { -7.0 }];
    }
    let mut adam = Adam::new(grid.len(), 1e-2, [0.9, 0.999], 1e-8);
    adam.step(&mut grid, None);
    for i in 0..grid.len() {
        for c in 0..CHANNELS {
            let delta = grid.raw()[i][c] - before[i][c];
            let expected = -1e-2 * grid.grad()[i][c].signum();
            assert!((delta - expected).abs() <= 1e-2 * 0.01, "{delta} vs {expected}");
        }
    }
}

fn fruit_frames(n: usize) -> Vec<PosedFrame> {
    let spec = scenegen::SceneSpec {
        fruit_count: 1,
        fruit_radius: 0.15,
        crown_radius: 0.05,
        crown_center: Vec3::ZERO,
        foliage: scenegen::FoliageSpec {
            amplitude: 0.0,
            frequency: 0.0,
        },
        trunk: scenegen::TrunkSpec {
            density: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let scene = scenegen::generate_scene(&spec).unwrap();
    let intr = Intrinsics::centered(16, 16, 1.0);
    let cams: Vec<Camera> = scenegen::sample_hemisphere_cameras(n, 1.5, Vec3::ZERO, 1, intr).unwrap();
    scenegen::render_frames(&scene, &cams, 1.0 / 256.0).unwrap()
}

fn small_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_size: 128,
        samples_per_ray: 32,
        learning_rate: 0.05,
        grid: GridSpec {
            resolution: [16; 3],
            ..GridSpec::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn training_descends_on_one_fruit() {
    let frames = fruit_frames(6);
    let out = train(&frames, &small_config(200), 11).unwrap();
    let l = &out.losses;
    assert_eq!(l.len(), 200);
    assert!(l[199].l_total < l[0].l_total);
    let median = |s: &[LossReport]| {
        let mut v: Vec<f64> = s.iter().map(|r| r.l_total).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&l[180..]) < median(&l[..20]));
}

#[test]
fn training_is_deterministic() {
    let frames = fruit_frames(3);
    let a = train(&frames, &small_config(15), 2).unwrap();
    let b = train(&frames, &small_config(15), 2).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.grid, b.grid);
    let c = train(&frames, &small_config(15), 3).unwrap();
    assert_ne!(a.losses, c.losses);
}

#[test]
fn dense_and_sparse_updates_both_descend() {
    let frames = fruit_frames(3);
    let dense = TrainConfig {
        sparse_updates: false,
        ..small_config(40)
    };
    let out = train(&frames, &dense, 2).unwrap();
    assert!(out.losses[39].l_total < out.losses[0].l_total);
}

#[test]
fn zero_iterations_returns_grid_unchanged() {
    let frames = fruit_frames(1);
    let grid = random_grid(8);
    let out = train_from(grid.clone(), &frames, &small_config(0), 0, |_, _| {}).unwrap();
    assert_eq!(out.grid, grid);
    assert!(out.losses.is_empty());
    let mut d = Vec::new();
    small_config(0).diagnostics("train", &mut d);
    assert_eq!(d, vec!["train.iterations: must be >= 1".to_string()]);
}

#[test]
fn loss_csv_layout() {
    let csv = loss_csv(&[LossReport::new(0.5, 0.25)]);
    assert_eq!(csv, "iteration,l_photo,l_sem,l_total\n1,0.5,0.25,0.75\n");
}
