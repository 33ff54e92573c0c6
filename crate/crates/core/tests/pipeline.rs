use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slide_core::bcv::{select_structure, BcvOptions};
use slide_core::pmf::{extract_candidates, make_grid, CandidateOptions};
use slide_core::simulate::{exact_decompose, frobenius_loss, gen_case1, gen_case2, SecondSignal};
use slide_core::structure::{Pattern, StructureMatrix};
use slide_core::{center_and_scale, fit_with_structure, CandidateSet, FitOptions, RawViews};

#[test]
fn candidate_path_contains_planted_structure() {
    let (raw, truth) = gen_case1(1, 17).unwrap();
    let data = center_and_scale(&raw).unwrap();
    let grid = make_grid(&data, 50, 0.01).unwrap();
    let set = extract_candidates(&data, &grid, &CandidateOptions::default()).unwrap();
    assert!(set.position(&truth.structure).is_some(), "{:?}", set.structures.iter().map(|s| s.describe()).collect::<Vec<_>>());
    // the path runs from the saturated structure to the empty one
    assert!(set.structures.iter().any(StructureMatrix::is_empty));
}

#[test]
fn noiseless_truth_beats_empty_structure() {
    let (_, truth) = gen_case1(1, 3).unwrap();
    let raw = RawViews::unnamed(truth.signals.clone()).unwrap();
    let candidates = CandidateSet::from_structures(vec![StructureMatrix::empty(2), truth.structure.clone()]);
    let report = select_structure(&raw, &candidates, &BcvOptions::default()).unwrap();
    assert!(report.total_errors[1] < report.total_errors[0], "{:?}", report.total_errors);
    assert_eq!(report.selected, 1);
}

#[test]
fn equivalent_candidates_score_identically() {
    let (raw, _) = gen_case1(1, 4).unwrap();
    let a = StructureMatrix::parse("11,10,01", 2).unwrap();
    let b = StructureMatrix::parse("01,11,10", 2).unwrap();
    assert_eq!(CandidateSet::from_structures(vec![a.clone(), b.clone()]).len(), 1);
    let score = |s: StructureMatrix| {
        select_structure(&raw, &CandidateSet::from_structures(vec![s]), &BcvOptions::default()).unwrap()
    };
    assert_eq!(score(a).fold_errors, score(b).fold_errors);
}

#[test]
fn every_cell_is_held_out_once() {
    let plan = slide_core::bcv::make_folds(10, &[7, 4], 3, 3, 5).unwrap();
    for (i, &p) in [7usize, 4].iter().enumerate() {
        let mut hits = Array2::<u32>::zeros((10, p));
        for (a, b) in plan.holdouts() {
            for &row in &plan.row_folds[a] {
                for &col in &plan.column_folds[i][b] {
                    hits[[row, col]] += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }
}

fn random_structure(rng: &mut ChaCha8Rng, d: usize) -> StructureMatrix {
    let r = rng.random_range(1..=5);
    let columns: Vec<Pattern> = (0..r).map(|_| Pattern::from_bits(d, rng.random_range(1..(1u64 << d)))).collect();
    StructureMatrix::from_patterns(d, &columns).0
}

/// Noiseless signal from orthonormal scores and loadings orthonormal within every view.
fn planted_signal(rng: &mut ChaCha8Rng, s: &StructureMatrix, n: usize, p: &[usize]) -> Vec<Array2<f64>> {
    let u = slide_core::pmf::random_orthonormal(n, s.r(), rng.random()).unwrap();
    p.iter()
        .enumerate()
        .map(|(i, &pi)| {
            let cols: Vec<usize> = (0..s.r()).filter(|&j| s.entry(i, j)).collect();
            let q = slide_core::pmf::random_orthonormal(pi, cols.len(), rng.random()).unwrap();
            let mut v = Array2::zeros((pi, s.r()));
            for (c, &j) in cols.iter().enumerate() {
                let weight = rng.random_range(0.5..2.0);
                v.column_mut(j).assign(&(&q.column(c) * weight));
            }
            u.dot(&v.t())
        })
        .collect()
}

#[test]
fn exact_decomposition_recovers_planted_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let d = rng.random_range(1..=3);
        let s = random_structure(&mut rng, d);
        let p: Vec<usize> = (0..d).map(|_| rng.random_range(6..10)).collect();
        let signals = planted_signal(&mut rng, &s, 15, &p);
        let model = exact_decompose(&signals).unwrap();
        assert_eq!(model.structure.rank_by_pattern(), s.rank_by_pattern());
        let parts: Vec<_> = signals.iter().map(|z| z.view()).collect();
        let full = concatenate(Axis(1), &parts).unwrap();
        let err = slide_core::linalg::frobenius_sq((&full - &model.u.dot(&model.v.t())).view());
        assert!(err < 1e-18 * slide_core::linalg::frobenius_sq(full.view()).max(1.0));
    }
}

#[test]
fn exact_decomposition_of_correlated_scores() {
    let (_, truth) = gen_case2(12, SecondSignal::Correlated).unwrap();
    let model = exact_decompose(&truth.signals).unwrap();
    let ranks = model.structure.rank_by_pattern();
    assert_eq!(ranks.get(&Pattern::all(2)), Some(&1));
    let individual: Vec<_> = ranks.iter().filter(|(p, _)| p.count_views() == 1).collect();
    assert_eq!(individual.len(), 1);
    assert_eq!(*individual[0].1, 1);

    // fitting at the recovered structure reproduces the signal
    let raw = RawViews::unnamed(truth.signals.clone()).unwrap();
    let data = center_and_scale(&raw).unwrap();
    let fit = fit_with_structure(&data, &model.structure, &FitOptions { eps: 1e-20, max_iter: 5000, u0: None }).unwrap();
    let est: Vec<_> = (0..2).map(|i| data.unscale(i, fit.fitted_view(i).view(), false)).collect();
    assert!(frobenius_loss(&truth.signals, &est).unwrap() < 1e-8);
}
