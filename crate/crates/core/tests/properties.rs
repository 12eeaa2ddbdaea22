use eigfluct::decomp::{
    hoeffding_decompose, hoeffding_from_kernel, kato_temple_interval, normalization_expansion,
    unit_vector,
};
use eigfluct::eigen::{power_norm, symmetric_eigen};
use eigfluct::graphon::{BlockModel, GraphonModel, GridKernel};
use eigfluct::matrix::Matrix;
use eigfluct::sample::{draw_latents, kernel_matrix, SampleDraw, StreamKey, StreamLabel};
use eigfluct::spectrum::{
    analytic_spectrum, coefficient_bound, nystrom_spectrum, regime_constants,
};
use proptest::prelude::*;

fn presets() -> Vec<GraphonModel> {
    vec![
        GraphonModel::Block(BlockModel::symmetric(0.6, 0.2)),
        GraphonModel::Block(BlockModel::new(
            vec![1.0 / 3.0, 2.0 / 3.0],
            vec![vec![0.6, 0.2], vec![0.2, 0.6]],
        )),
        GraphonModel::PowerKernel { alpha: 0.3 },
        GraphonModel::PowerKernel { alpha: 0.5 },
        GraphonModel::BrownianSqrt,
        GraphonModel::Grid(GridKernel::from_fn(7, |x, y| (x + y) / 2.0)),
    ]
}

/// Block model with `k` blocks of sizes `parts[i]/m` and a random symmetric
/// connectivity matrix.
fn block_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<Vec<f64>>)> {
    (2usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(1usize..=4, k),
            prop::collection::vec(0.05f64..0.95, k * (k + 1) / 2),
        )
            .prop_map(move |(parts, upper)| {
                let mut b = vec![vec![0.0; k]; k];
                let mut it = upper.into_iter();
                for i in 0..k {
                    for j in i..k {
                        let v = it.next().unwrap();
                        b[i][j] = v;
                        b[j][i] = v;
                    }
                }
                (parts, b)
            })
    })
}

fn block_model(parts: &[usize], b: &[Vec<f64>]) -> GraphonModel {
    let total: usize = parts.iter().sum();
    GraphonModel::Block(BlockModel::new(
        parts.iter().map(|&p| p as f64 / total as f64).collect(),
        b.to_vec(),
    ))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn presets_are_exactly_symmetric(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        for model in presets() {
            prop_assert_eq!(model.evaluate(x, y).unwrap(), model.evaluate(y, x).unwrap());
        }
    }

    #[test]
    fn grid_constant_on_cells(m in 1usize..12, cell in 0usize..12, a in 0.01f64..0.99, b in 0.01f64..0.99, c in 0.01f64..0.99) {
        let cell = cell % m;
        let g = GraphonModel::Grid(GridKernel::from_fn(m, |x, y| x * y + 0.1));
        let x1 = (cell as f64 + a) / m as f64;
        let x2 = (cell as f64 + b) / m as f64;
        prop_assert_eq!(g.evaluate(x1, c).unwrap(), g.evaluate(x2, c).unwrap());
    }

    #[test]
    fn block_spectra_agree_with_nystrom((parts, b) in block_strategy(), scale in 1usize..3) {
        let model = block_model(&parts, &b);
        let total: usize = parts.iter().sum();
        let m = (total * 16 * scale).max(64);
        let analytic = analytic_spectrum(&model).unwrap();
        let k = analytic.num_modes();
        let discrete = nystrom_spectrum(&model, m, k).unwrap();
        for j in 0..k {
            prop_assert!((analytic.eigenvalues[j] - discrete.eigenvalues[j]).abs() < 1e-9);
            prop_assert!((analytic.sigma_sq(j) - discrete.sigma_sq(j)).abs() < 1e-9);
            prop_assert!(analytic.residual_norm(j).unwrap() < 1e-12);
            prop_assert!(discrete.residual_norm(j).unwrap() < 1e-9);
        }
    }

    #[test]
    fn coefficient_bound_holds_for_block_spectra((parts, b) in block_strategy()) {
        let spec = analytic_spectrum(&block_model(&parts, &b)).unwrap();
        for r in 1..=spec.num_modes() {
            if let Ok(c) = regime_constants(&spec, r, None) {
                let (lhs, rhs) = coefficient_bound(&spec, &c);
                prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15, "r={} {} > {}", r, lhs, rhs);
            }
        }
    }

    #[test]
    fn draws_are_reproducible(seed in any::<u64>(), rep in 0u64..1000) {
        let model = GraphonModel::Block(BlockModel::symmetric(0.7, 0.1));
        let a = SampleDraw::generate(&model, 40, seed, rep, true).unwrap();
        let b = SampleDraw::generate(&model, 40, seed, rep, true).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn kernel_norm_within_row_sum_bound(seed in any::<u64>(), alpha in 0.05f64..0.95) {
        let model = GraphonModel::PowerKernel { alpha };
        let draw = SampleDraw::generate(&model, 60, seed, 0, false).unwrap();
        let top = symmetric_eigen(&draw.kernel, false).unwrap().values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        prop_assert!(top <= 59.0 * model.sup_norm_bound() + 1e-9);
    }

    #[test]
    fn spectrum_is_permutation_invariant(seed in any::<u64>(), shift in 1usize..60) {
        let model = GraphonModel::BrownianSqrt;
        let mut rng = StreamKey::new(seed, 0, StreamLabel::Latents).rng();
        let latents = draw_latents(60, &mut rng).unwrap();
        let mut rotated = latents.clone();
        rotated.rotate_left(shift);
        rotated.reverse();
        let a = symmetric_eigen(&kernel_matrix(&model, &latents).unwrap(), false).unwrap();
        let b = symmetric_eigen(&kernel_matrix(&model, &rotated).unwrap(), false).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn weyl_bound_between_kernel_and_adjacency(seed in any::<u64>()) {
        let model = GraphonModel::Block(BlockModel::symmetric(0.6, 0.2));
        let draw = SampleDraw::generate(&model, 80, seed, 0, true).unwrap();
        let a = draw.adjacency.as_ref().unwrap();
        let k = symmetric_eigen(&draw.kernel, false).unwrap().values;
        let av = symmetric_eigen(a, false).unwrap().values;
        let diff = draw.kernel.sub(a);
        // the power estimate is a lower bound; the exact norm comes from the spectrum of the difference
        let exact = symmetric_eigen(&diff, false).unwrap().values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(power_norm(&diff, 50) <= exact * (1.0 + 1e-9));
        for (x, y) in k.iter().zip(&av) {
            prop_assert!((x - y).abs() <= exact + 1e-9);
        }
    }

    #[test]
    fn hoeffding_reconstruction(seed in any::<u64>(), n in 10usize..80) {
        let model = GraphonModel::Block(BlockModel::new(
            vec![0.25, 0.75],
            vec![vec![0.9, 0.3], vec![0.3, 0.5]],
        ));
        let spec = analytic_spectrum(&model).unwrap();
        let mut rng = StreamKey::new(seed, 0, StreamLabel::Latents).rng();
        let latents = draw_latents(n, &mut rng).unwrap();
        for r in 1..=2 {
            let parts = hoeffding_decompose(&spec, r, &latents).unwrap();
            prop_assert!(parts.reconstruction_error() < 1e-10);
            if let Some(check) = normalization_expansion(parts.s_rn, parts.v_rn, n) {
                prop_assert!(check.holds(), "{:?}", check);
            }
        }
    }

    #[test]
    fn kato_temple_contains_isolated_eigenvalue(seed in any::<u64>(), noise in 0.0f64..0.3) {
        // diag(3, 1, -1, -2) plus a small symmetric perturbation
        let mut rng = StreamKey::new(seed, 0, StreamLabel::Diagnostics).rng();
        use rand::Rng;
        let raw = Matrix::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let m = Matrix::from_fn(4, |i, j| {
            let d = [3.0, 1.0, -1.0, -2.0][i];
            f64::from(u8::from(i == j)) * d + noise * (raw[(i, j)] + raw[(j, i)]) / 2.0
        });
        let eig = symmetric_eigen(&m, false).unwrap();
        let (alpha, beta) = (2.0, 4.0);
        let inside: Vec<f64> = eig.values.iter().copied().filter(|v| alpha < *v && *v < beta).collect();
        let guess = [1.0, noise, -noise, 0.5 * noise];
        let (u, _) = unit_vector(&guess).unwrap();
        if let (Ok(kt), [lambda]) = (kato_temple_interval(&m, &u, alpha, beta), inside.as_slice()) {
            prop_assert!(kt.contains(*lambda), "{:?} misses {}", kt, lambda);
        }
    }
}

#[test]
fn presets_stay_below_sup_bound() {
    for model in presets() {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..200 {
            for j in 0..200 {
                let v = model.evaluate(i as f64 / 199.0, j as f64 / 199.0).unwrap();
                worst = worst.max(v);
            }
        }
        assert!(worst <= model.sup_norm_bound() + 1e-12, "{}", model.name());
    }
}

#[test]
fn symmetric_sbm_second_mode_squares_to_one() {
    let model = GraphonModel::Block(BlockModel::symmetric(0.6, 0.2));
    let spec = nystrom_spectrum(&model, 512, 2).unwrap();
    let nodes: Vec<f64> = (0..512).map(|i| (i as f64 + 0.5) / 512.0).collect();
    for v in spec.phi_values(1, &nodes) {
        assert!((v * v - 1.0).abs() < 1e-9);
    }
}

#[test]
fn hoeffding_parts_on_power_kernel() {
    // rank one: h_r(x,y) = λ φ(x)² φ(y)², so the degenerate part is λ V² n/(n−1) − λ Σ(φ²−1)²/(n(n−1))
    let alpha = 0.5;
    let model = GraphonModel::PowerKernel { alpha };
    let spec = analytic_spectrum(&model).unwrap();
    let mut rng = StreamKey::new(3, 0, StreamLabel::Latents).rng();
    let latents = draw_latents(300, &mut rng).unwrap();
    let parts = hoeffding_decompose(&spec, 1, &latents).unwrap();
    let n = latents.len() as f64;
    let lambda = 1.0 / (2.0 * alpha + 1.0);
    let g: Vec<f64> = latents
        .iter()
        .map(|x| (2.0 * alpha + 1.0) * x.powf(2.0 * alpha) - 1.0)
        .collect();
    let v = g.iter().sum::<f64>() / n;
    let sq = g.iter().map(|x| x * x).sum::<f64>();
    let expected = lambda * (v * v * n * n - sq) / (n * (n - 1.0));
    assert!(
        (parts.degenerate - expected).abs() < 1e-12,
        "{} vs {expected}",
        parts.degenerate
    );
    assert!((parts.v_rn - v).abs() < 1e-14);
    assert!((parts.linear - 2.0 * lambda * v).abs() < 1e-14);
}

#[test]
fn hoeffding_from_kernel_matches_model_path() {
    let model = GraphonModel::Block(BlockModel::symmetric(0.6, 0.2));
    let spec = analytic_spectrum(&model).unwrap();
    let mut rng = StreamKey::new(11, 0, StreamLabel::Latents).rng();
    let latents = draw_latents(120, &mut rng).unwrap();
    let k = kernel_matrix(&model, &latents).unwrap();
    let a = hoeffding_decompose(&spec, 2, &latents).unwrap();
    let b = hoeffding_from_kernel(&k, &spec.phi_values(1, &latents), 0.2).unwrap();
    assert_eq!(a, b);
    assert!(a.linear.abs() < 1e-15);
}

#[test]
fn empirical_eigenvalue_converges() {
    let model = GraphonModel::Block(BlockModel::symmetric(0.6, 0.2));
    let mut medians = Vec::new();
    for n in [250usize, 500, 1000] {
        let mut errs: Vec<f64> = (0..50)
            .map(|rep| {
                let draw = SampleDraw::generate(&model, n, 77, rep, false).unwrap();
                let vals = symmetric_eigen(&draw.kernel, false).unwrap().values;
                (vals[1] / (n as f64 - 1.0) - 0.2).abs()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs.iter().all(|&e| e < 5.0 / (n as f64).sqrt()), "n = {n}");
        medians.push((errs[24] + errs[25]) / 2.0);
    }
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}
