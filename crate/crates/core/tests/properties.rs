use mrk_core::linalg::{dist_sq, dot, norm_sq};
use mrk_core::rng::{self, Stream};
use mrk_core::*;
use proptest::prelude::*;

fn planted(rows: usize, dim: usize, classes: usize, seed: u64) -> LinearSystem {
    generate_synthetic(&GeneratorSpec {
        classes: vec![ClassSpec::standard(rows); classes],
        dimension: dim,
        solution_spread: 1.0,
        seed,
        shuffle: true,
    })
    .unwrap()
}

/// Steps a planted system by hand and hands every transition to `check`.
fn walk(
    sys: &LinearSystem,
    iterates: usize,
    r: f64,
    steps: usize,
    seed: u64,
    mut check: impl FnMut(&IterateSet, &IterateSet, &StepRecord),
) {
    let mut its = IterateSet::standard_normal(iterates, sys.dim(), seed).unwrap();
    let dist = RowDistribution::new(DistributionKind::Uniform, sys);
    let mut rows = rng::stream(seed, Stream::RowSampling);
    let mut swaps = rng::stream(seed, Stream::Swap);
    for k in 0..steps {
        let before = its.clone();
        let i = sample_row(&dist, &mut rows);
        let rec = mrk_step(&mut its, sys, i, r, &mut swaps, k).unwrap();
        check(&before, &its, &rec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_never_overshoots_and_only_moves_target(seed in any::<u64>(), r in 0.0f64..1.0, k in 1usize..4) {
        let sys = planted(12, 3, k, seed);
        walk(&sys, k, r, 200, seed, |before, after, rec| {
            let t = rec.target_iterate;
            let ct = rec.coefficients[t];
            let cs = rec.coefficients[rec.argmin_iterate];
            let row = sys.row(rec.sampled_row);
            let nsq = sys.row_norm_sq(rec.sampled_row);
            let new_c = (dot(row, after.get(t)) - sys.rhs_entry(rec.sampled_row)) / nsq;
            let expected = ct.signum() * (ct.abs() - cs.abs());
            let scale = norm_sq(after.get(t)).sqrt() / nsq.sqrt() + sys.rhs_entry(rec.sampled_row).abs() / nsq + ct.abs();
            assert!((new_c - if ct == 0.0 { 0.0 } else { expected }).abs() <= 1e-9 * scale);
            for j in 0..after.len() {
                assert!(cs.abs() <= rec.coefficients[j].abs());
                if j != t {
                    assert_eq!(before.get(j), after.get(j));
                }
            }
            assert!(rec.update_magnitude >= 0.0);
        });
    }

    #[test]
    fn obtuse_triangle_and_magnitude_bound(seed in any::<u64>(), r in 0.0f64..0.5) {
        let sys = planted(15, 4, 2, seed);
        let labels = sys.labels().unwrap().to_vec();
        let sols = sys.solutions().unwrap().to_vec();
        walk(&sys, 2, r, 300, seed, |before, after, rec| {
            let t = rec.target_iterate;
            let truth = &sols[labels[rec.sampled_row]];
            let step_sq = dist_sq(before.get(t), after.get(t));
            // the row's hyperplane contains its class solution
            let e0 = dist_sq(before.get(t), truth);
            let e1 = dist_sq(after.get(t), truth);
            assert!(e0 - e1 >= step_sq - 1e-9 * (1.0 + e0));
            // the step is no longer than any iterate's distance to that solution
            for j in 0..before.len() {
                let dj = dist_sq(before.get(j), truth).sqrt();
                assert!(step_sq.sqrt() <= dj * (1.0 + 1e-9) + 1e-12);
            }
        });
    }
}

#[test]
fn identical_iterates_tie_to_lowest_index() {
    let sys = planted(20, 3, 2, 5);
    let x = IterateSet::standard_normal(1, 3, 5).unwrap();
    let inits = IterateSet::replicated(x.get(0), 3).unwrap();
    let trace = run_mrk(&sys, &inits, &MrkConfig::new(0.0, 1, DistributionKind::Uniform, 5)).unwrap();
    let first = &trace.steps[0];
    assert_eq!((first.argmin_iterate, first.target_iterate), (0, 0));
    assert_eq!(trace.final_iterates[1], inits.get(1));
    assert_eq!(trace.final_iterates[2], inits.get(2));
}

#[test]
fn errors_follow_final_labeling() {
    let sys = planted(40, 3, 2, 31);
    let inits = IterateSet::standard_normal(2, 3, 31).unwrap();
    let trace = run_mrk(&sys, &inits, &MrkConfig::new(0.0, 1500, DistributionKind::Uniform, 31)).unwrap();
    let errors = trace.errors.as_ref().unwrap();
    assert_eq!(errors.len(), 1501);
    let sols = sys.solutions().unwrap();
    let (matched, perm) = matched_error(&trace.final_iterates, sols).unwrap();
    assert_eq!(errors.labeling, perm);
    assert_eq!(*errors.matched_total.as_ref().unwrap().last().unwrap(), matched);
    let init_total = total_error(inits.vectors(), sols, &perm).unwrap();
    assert!((errors.total[0] - init_total).abs() <= 1e-12 * init_total);
    for (k, row) in errors.rows().enumerate() {
        assert!(row.iter().all(|&e| e >= 0.0));
        let sum: f64 = row.iter().sum();
        assert!((sum - errors.total[k]).abs() <= 1e-12 * sum.max(1e-300));
        assert!(errors.matched_total.as_ref().unwrap()[k] <= errors.total[k]);
    }
}

#[test]
fn rk_error_is_monotone_and_reproducible() {
    let sys = planted(50, 5, 1, 8);
    let x0 = vec![0.0; 5];
    let dist = RowDistribution::new(DistributionKind::SquaredRowNorm, &sys);
    let a = run_rk(&sys, &x0, 5000, &dist, 8).unwrap();
    let b = run_rk(&sys, &x0, 5000, &dist, 8).unwrap();
    assert_eq!(a, b);
    let total = &a.errors.as_ref().unwrap().total;
    // rounding in x perturbs |x - x*|^2 by about eps * |x| * |x - x*|
    let scale = 1e-14 * (1.0 + norm_sq(&sys.solutions().unwrap()[0]).sqrt());
    for w in total.windows(2) {
        assert!(
            w[1] <= w[0] + scale * w[0].sqrt() + scale * scale,
            "{} -> {}",
            w[0],
            w[1]
        );
    }
    assert!(*total.last().unwrap() < 1e-20);
}

#[test]
fn rk_constant_predicts_one_step_contraction() {
    // Starting along the smallest right singular vector, the expected one-step
    // ratio |x1 - x*|^2 / |x0 - x*|^2 equals the constant exactly.
    let sys = planted(50, 5, 1, 12);
    let m = sys.matrix();
    let c = rk_contraction_constant(m);
    let x_star = &sys.solutions().unwrap()[0];
    let gram = {
        let n = m.to_nalgebra();
        n.transpose() * &n
    };
    let eig = gram.symmetric_eigen();
    let (min_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v: Vec<f64> = eig.eigenvectors.column(min_idx).iter().copied().collect();
    let x0: Vec<f64> = x_star.iter().zip(&v).map(|(s, d)| s + d).collect();
    let e0 = dist_sq(&x0, x_star);

    let dist = RowDistribution::new(DistributionKind::SquaredRowNorm, &sys);
    let mut rng = rng::stream(12, Stream::RowSampling);
    let trials = 100_000;
    let mut acc = 0.0;
    for _ in 0..trials {
        let i = sample_row(&dist, &mut rng);
        let x1 = kaczmarz_update(&x0, sys.row(i), sys.rhs_entry(i)).unwrap();
        acc += dist_sq(&x1, x_star) / e0;
    }
    let mean = acc / trials as f64;
    assert!(
        (mean - c.value).abs() <= 0.02 * c.value,
        "mean {mean} vs constant {}",
        c.value
    );
}
