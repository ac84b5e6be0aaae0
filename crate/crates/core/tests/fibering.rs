use std::sync::Arc;

use nkirchhoff::fibering::{self, CaseTag, NehariKind, Ray};
use nkirchhoff::grid::{Field, Grid, Shape, Weight, WeightProfile};
use nkirchhoff::problem::{self, HSign, ProblemSpec};
use nkirchhoff::scalar::{ExponentSet, KirchhoffSpec};
use nkirchhoff::solvers::random_bump;
use proptest::prelude::*;

fn spec_with(grid: &Arc<Grid>, profile: WeightProfile, lambda: f64, kirchhoff: KirchhoffSpec) -> ProblemSpec {
    let exps = ExponentSet::new(2, 4.0, 0.5, 2.0, lambda).unwrap();
    let weight = Weight::from_profile(grid, profile, exps.gamma(), exps.kprime()).unwrap();
    ProblemSpec::concave_convex(grid, exps, kirchhoff, weight).unwrap()
}

fn left_half(u: &Field) -> Field {
    let grid = u.grid();
    Field::from_fn(grid, |x| if x[0] < 0.0 { 1.0 } else { 0.0 })
        .map(|mask| Field::from_values(grid, mask.values().iter().zip(u.values()).map(|(m, v)| m * v).collect()).unwrap())
        .unwrap()
}

#[test]
fn branch_points_are_the_extrema_of_the_ray() {
    let grid = Grid::new(Shape::UnitSquare, 24).unwrap();
    let spec = spec_with(&grid, WeightProfile::One, 1e-3, KirchhoffSpec::affine(1.0, 1.0).unwrap());
    for seed in 0..6 {
        let u = random_bump(&grid, seed, 0.4);
        let prof = fibering::find_branches(&u, &spec).unwrap();
        assert_eq!(prof.branch_count, 2);
        let rep = fibering::check_extremality(&u, &spec, &prof, 200).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.j_t1.unwrap() < 0.0 && rep.j_t2 > 0.0);
        let at_t1 = fibering::nehari_classify(&u.scaled(prof.t1.unwrap()), &spec).unwrap();
        let at_t2 = fibering::nehari_classify(&u.scaled(prof.t2.unwrap()), &spec).unwrap();
        assert_eq!(at_t1.kind, NehariKind::NPlus);
        assert_eq!(at_t2.kind, NehariKind::NMinus);
        assert_eq!(fibering::nehari_classify(&u, &spec).unwrap().kind, NehariKind::NotOnNehari);
    }
}

#[test]
fn sign_changing_weight_gives_one_critical_point_in_h_minus() {
    let grid = Grid::new(Shape::UnitSquare, 24).unwrap();
    let spec = spec_with(&grid, WeightProfile::Sin2pix, 1e-3, KirchhoffSpec::affine(1.0, 1.0).unwrap());
    for seed in 0..6 {
        let u = left_half(&random_bump(&grid, seed, 0.4));
        assert_eq!(problem::h_sign(&u, spec.weight().unwrap(), spec.exps().unwrap()), HSign::Negative);
        let prof = fibering::find_branches(&u, &spec).unwrap();
        assert_eq!(prof.case_tag, CaseTag::HNonPositive);
        assert_eq!(prof.branch_count, 1);
        assert!(prof.t1.is_none());
        let ray = Ray::new(&u, &spec).unwrap();
        let t = prof.t2.unwrap();
        let (d1, scale) = ray.phi_d1_scaled(t).unwrap();
        assert!(d1.abs() <= 1e-12 * scale);
        assert!(ray.phi_d2_scaled(t).unwrap().0 < 0.0);
        // a dense scan finds no other sign change of φ'
        let mut changes = 0;
        let mut prev = ray.phi_d1(1e-4 * t).unwrap();
        for i in 1..=2000 {
            let s = 1e-4 * t * (2e4f64).powf(i as f64 / 2000.0);
            let cur = ray.phi_d1(s).unwrap();
            if cur.signum() != prev.signum() {
                changes += 1;
            }
            prev = cur;
        }
        assert_eq!(changes, 1);
    }
}

#[test]
fn large_lambda_leaves_no_nehari_points() {
    let grid = Grid::new(Shape::UnitSquare, 16).unwrap();
    let spec = spec_with(&grid, WeightProfile::One, 1e6, KirchhoffSpec::affine(1.0, 1.0).unwrap());
    let prof = fibering::find_branches(&random_bump(&grid, 0, 0.2), &spec).unwrap();
    assert_eq!(prof.branch_count, 0);
    assert!(prof.diagnostic.is_some());
}

#[test]
fn generic_kirchhoff_term_also_interlaces() {
    let grid = Grid::new(Shape::UnitSquare, 16).unwrap();
    let spec = spec_with(&grid, WeightProfile::GaussianBump, 1e-3, KirchhoffSpec::log1p());
    let u = random_bump(&grid, 4, 0.2);
    let prof = fibering::find_branches(&u, &spec).unwrap();
    let (t1, ts, t2) = (prof.t1.unwrap(), prof.t_star.unwrap(), prof.t2.unwrap());
    assert!(t1 < ts && ts < t2);
}

#[test]
fn admissibility_and_c1_estimate() {
    let grid = Grid::new(Shape::UnitSquare, 16).unwrap();
    let spec = spec_with(&grid, WeightProfile::One, 1e-3, KirchhoffSpec::affine(1.0, 1.0).unwrap());
    let dirs: Vec<Field> = (0..4).map(|s| random_bump(&grid, s, 0.3)).collect();
    let c1 = fibering::estimate_c1(&dirs, &spec).unwrap();
    assert!(c1 > 0.0);
    let rep = fibering::lambda_admissibility(&dirs[0], &spec, Some(c1)).unwrap();
    assert!(rep.step3_bound.unwrap() > 0.0);
    assert_eq!(rep.h_sign, HSign::Positive);
    // small multiples of u are outside Λ, large ones inside
    let ray = Ray::new(&dirs[0], &spec).unwrap();
    let t = ray.lambda_set_threshold(1.0, 1.0).unwrap();
    assert!(!fibering::lambda_admissibility(&dirs[0].scaled(0.9 * t), &spec, None).unwrap().in_lambda_set);
    assert!(fibering::lambda_admissibility(&dirs[0].scaled(1.1 * t), &spec, None).unwrap().in_lambda_set);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn phi_prime_factors_through_psi(seed in 0u64..10_000, t in 0.05f64..3.0, lambda in 0.0f64..0.1) {
        let grid = Grid::new(Shape::UnitSquare, 10).unwrap();
        let spec = spec_with(&grid, WeightProfile::Sin2pix, lambda, KirchhoffSpec::affine(1.0, 1.0).unwrap());
        let u = random_bump(&grid, seed, 0.5);
        let ray = Ray::new(&u, &spec).unwrap();
        let (d1, scale) = ray.phi_d1_scaled(t).unwrap();
        let via_psi = t.powf(0.5) * (ray.psi_value(t).unwrap() - lambda * ray.h_value());
        prop_assert!((d1 - via_psi).abs() <= 1e-12 * scale);
    }

    #[test]
    fn phi_derivatives_match_differences(seed in 0u64..10_000, t in 0.2f64..2.0) {
        let grid = Grid::new(Shape::UnitSquare, 10).unwrap();
        let spec = spec_with(&grid, WeightProfile::One, 1e-2, KirchhoffSpec::affine(1.0, 1.0).unwrap());
        let ray = Ray::new(&random_bump(&grid, seed, 0.5), &spec).unwrap();
        let e = 1e-5 * t;
        let p = ray.phi(t).unwrap();
        let fd1 = (ray.phi(t + e).unwrap().value - ray.phi(t - e).unwrap().value) / (2.0 * e);
        let fd2 = (ray.phi(t + e).unwrap().d1 - ray.phi(t - e).unwrap().d1) / (2.0 * e);
        prop_assert!((fd1 - p.d1).abs() <= 1e-6 * (1.0 + p.d1.abs()));
        prop_assert!((fd2 - p.d2).abs() <= 1e-6 * (1.0 + p.d2.abs()));
    }
}
