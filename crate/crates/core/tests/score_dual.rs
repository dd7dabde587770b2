mod common;

use common::{brute_force_assignment, g_direct, lp_value, matrix};
use proptest::prelude::*;
use routeplan::score_dual::{
    assign_prompts, dual_objective, exact_score_oracle, solve_dual, DualPrices, SubgradientParams, TargetCounts,
};

fn example() -> routeplan::ScoreMatrix {
    matrix(vec![vec![0.9, 0.8], vec![0.4, 0.7]])
}

fn tc(c: &[f64], n: usize) -> TargetCounts {
    TargetCounts::new(c.to_vec(), n).unwrap()
}

#[test]
fn assignment_examples() {
    let s = example();
    assert_eq!(assign_prompts(&s, &DualPrices(vec![0.0, 0.0])).unwrap(), (vec![0, 1], vec![1, 1]));
    assert_eq!(assign_prompts(&s, &DualPrices(vec![0.5, 0.0])).unwrap(), (vec![1, 1], vec![0, 2]));
    let tie = matrix(vec![vec![0.5, 0.5]]);
    assert_eq!(assign_prompts(&tie, &DualPrices(vec![0.0, 0.0])).unwrap().0, vec![0]);
    assert!(assign_prompts(&s, &DualPrices(vec![0.0])).is_err());
}

#[test]
fn dual_objective_examples() {
    let s = example();
    let c = tc(&[1.0, 1.0], 2);
    assert!((dual_objective(&s, &c, &DualPrices(vec![0.0, 0.0])).unwrap() - 0.8).abs() < 1e-15);
    assert!((dual_objective(&s, &c, &DualPrices(vec![0.1, 0.1])).unwrap() - 0.8).abs() < 1e-15);
    assert!(dual_objective(&s, &tc(&[2.0], 2), &DualPrices(vec![0.0, 0.0])).is_err());
}

#[test]
fn solve_examples() {
    let p = SubgradientParams::default();
    let sol = solve_dual(&example(), &tc(&[1.0, 1.0], 2), &p).unwrap();
    assert!((sol.score - 0.8).abs() < 1e-12);
    assert_eq!(sol.assignment, vec![0, 1]);

    let rows = vec![vec![0.3, 0.9, 0.1], vec![0.6, 0.2, 0.8], vec![0.5, 0.5, 0.5]];
    let sol = solve_dual(&matrix(rows), &tc(&[3.0, 0.0, 0.0], 3), &p).unwrap();
    assert!((sol.score - (0.3 + 0.6 + 0.5) / 3.0).abs() < 1e-12);

    let single = matrix(vec![vec![0.2], vec![0.4], vec![0.9]]);
    let sol = solve_dual(&single, &tc(&[3.0], 3), &p).unwrap();
    assert!((sol.score - 0.5).abs() < 1e-12);
    assert_eq!(sol.alpha_star.0, vec![0.0]);
}

#[test]
fn oracle_examples() {
    assert!((exact_score_oracle(&example(), &tc(&[1.0, 1.0], 2)).unwrap() - 0.8).abs() < 1e-15);
    let forced = matrix(vec![vec![1.0, 0.0]; 3]);
    assert_eq!(exact_score_oracle(&forced, &tc(&[3.0, 0.0], 3)).unwrap(), 1.0);
    let one = matrix(vec![vec![0.6, 0.6]]);
    assert_eq!(exact_score_oracle(&one, &tc(&[0.0, 1.0], 1)).unwrap(), 0.6);
    assert!(exact_score_oracle(&example(), &tc(&[0.5, 1.5], 2)).is_err());
}

#[test]
fn counts_validation() {
    assert!(TargetCounts::new(vec![1.0, 1.0], 3).is_err());
    assert!(TargetCounts::new(vec![3.0, -1.0], 2).is_err());
    assert!(TargetCounts::new(vec![1.5, 0.5], 2).is_ok());
}

#[test]
fn larger_instances_match_lp_oracle() {
    // Fractional counts on 40 prompts: value against the breakpoint oracle.
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for m in [2, 3] {
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..m).map(|_| next()).collect()).collect();
            let raw: Vec<f64> = (0..m).map(|_| 0.2 + next()).collect();
            let total: f64 = raw.iter().sum();
            let counts: Vec<f64> = raw.iter().map(|r| 40.0 * r / total).collect();
            let sol = solve_dual(&matrix(rows.clone()), &tc(&counts, 40), &SubgradientParams::default()).unwrap();
            let oracle = lp_value(&rows, &counts);
            assert!((sol.score - oracle).abs() < 1e-9, "{} vs {oracle}", sol.score);
            assert!((g_direct(&rows, &counts, &sol.alpha_star.0) - oracle).abs() < 1e-9);
        }
    }
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..=3, 2usize..=7).prop_flat_map(|(m, n)| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..=1.0, m), n),
            prop::collection::vec(0usize..m, n),
        )
            .prop_map(move |(rows, picks)| {
                let mut counts = vec![0; m];
                for p in picks {
                    counts[p] += 1;
                }
                (rows, counts)
            })
    })
}

proptest! {
    #[test]
    fn weak_duality((rows, counts) in instance(), alpha in prop::collection::vec(-1.0f64..1.0, 3)) {
        let m = counts.len();
        let c: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
        let s = matrix(rows.clone());
        let g = dual_objective(&s, &tc(&c, rows.len()), &DualPrices(alpha[..m].to_vec())).unwrap();
        prop_assert!(g >= brute_force_assignment(&rows, &counts) - 1e-12);
    }

    #[test]
    fn strong_duality((rows, counts) in instance()) {
        let c: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
        let sol = solve_dual(&matrix(rows.clone()), &tc(&c, rows.len()), &SubgradientParams::default()).unwrap();
        prop_assert!((sol.score - brute_force_assignment(&rows, &counts)).abs() <= 1e-6);
        prop_assert!(sol.alpha_star.0.iter().cloned().fold(f64::INFINITY, f64::min) == 0.0);
        prop_assert!(sol.assignment.iter().all(|&i| i < counts.len()));
    }

    #[test]
    fn shift_invariance((rows, counts) in instance(), alpha in prop::collection::vec(-1.0f64..1.0, 3), t in -5.0f64..5.0) {
        let m = counts.len();
        let c: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
        let s = matrix(rows.clone());
        let a = DualPrices(alpha[..m].to_vec());
        let shifted = DualPrices(a.0.iter().map(|x| x + t).collect());
        let counts = tc(&c, rows.len());
        let (g0, g1) = (dual_objective(&s, &counts, &a).unwrap(), dual_objective(&s, &counts, &shifted).unwrap());
        prop_assert!((g0 - g1).abs() <= 1e-12);
        prop_assert_eq!(assign_prompts(&s, &a).unwrap(), assign_prompts(&s, &shifted).unwrap());
    }

    #[test]
    fn score_is_concave_in_fractions(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 4..12),
        u in prop::collection::vec(0.01f64..1.0, 3),
        v in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let n = rows.len();
        let norm = |x: &[f64]| { let s: f64 = x.iter().sum(); x.iter().map(|y| y / s).collect::<Vec<_>>() };
        let (wu, wv) = (norm(&u), norm(&v));
        let wm: Vec<f64> = wu.iter().zip(&wv).map(|(a, b)| 0.5 * (a + b)).collect();
        let s = matrix(rows);
        let p = SubgradientParams::default();
        let val = |w: &[f64]| solve_dual(&s, &TargetCounts::from_fractions(w, n).unwrap(), &p).unwrap().score;
        prop_assert!(val(&wm) >= 0.5 * (val(&wu) + val(&wv)) - 1e-9);
    }
}
