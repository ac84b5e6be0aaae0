use std::f64::consts::PI;
use std::sync::Arc;

use nkirchhoff::grid::{Field, Grid, Shape, Weight, WeightProfile};
use nkirchhoff::io;
use nkirchhoff::problem::{self, ProblemSpec};
use nkirchhoff::scalar::{ExponentSet, GenericNonlinearity, KirchhoffSpec};
use nkirchhoff::solvers::random_bump;
use proptest::prelude::*;

fn manufactured(res: usize) -> (ProblemSpec, Field) {
    let grid = Grid::new(Shape::UnitSquare, res).unwrap();
    let h = Arc::new(|x: &[f64], t: f64| 2.0 * PI * PI * (PI * x[0]).cos() * (PI * x[1]).cos() * (-t * t).exp());
    let nl = GenericNonlinearity::new("manufactured", 2, h, 1.0, 1.0, 4.0).unwrap();
    let spec = ProblemSpec::generic(&grid, KirchhoffSpec::constant(1.0).unwrap(), nl).unwrap();
    let u = Field::from_fn(&grid, |x| (PI * x[0]).cos() * (PI * x[1]).cos()).unwrap();
    (spec, u)
}

#[test]
fn manufactured_solution_residual_converges() {
    // -Δu = 2π²u with u = cos(πx)cos(πy); f = h e^{t²} reproduces the source
    let norms: Vec<f64> = [16, 32, 64].iter().map(|&r| {
        let (spec, u) = manufactured(r);
        problem::residual(&u, &spec).unwrap().norm
    }).collect();
    let rates: Vec<f64> = norms.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    for rate in &rates {
        assert!(*rate > 1.8, "residual norms {norms:?}, rates {rates:?}");
    }
}

fn desk(res: usize, lambda: f64) -> ProblemSpec {
    let grid = Grid::new(Shape::UnitSquare, res).unwrap();
    let exps = ExponentSet::new(2, 4.0, 0.5, 2.0, lambda).unwrap();
    let weight = Weight::from_profile(&grid, WeightProfile::One, exps.gamma(), exps.kprime()).unwrap();
    ProblemSpec::concave_convex(&grid, exps, KirchhoffSpec::affine(1.0, 1.0).unwrap(), weight).unwrap()
}

fn taylor_remainder(spec: &ProblemSpec, u: &Field, phi: &Field, eps: f64) -> f64 {
    let j0 = problem::energy(u, spec).unwrap();
    let d = problem::residual(u, spec).unwrap().apply(phi);
    let shifted = Field::from_values(spec.grid(), u.values().iter().zip(phi.values()).map(|(a, b)| a + eps * b).collect()).unwrap();
    (problem::energy(&shifted, spec).unwrap() - j0 - eps * d).abs()
}

#[test]
fn residual_is_the_energy_gradient() {
    let spec = desk(24, 1e-2);
    for seed in 0..5u64 {
        let u = random_bump(spec.grid(), seed, 0.1).scaled(1.5);
        let a = random_bump(spec.grid(), 100 + seed, 0.1);
        let b = random_bump(spec.grid(), 200 + seed, 0.1);
        let phi = Field::from_values(spec.grid(), a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect()).unwrap();
        let e1 = taylor_remainder(&spec, &u, &phi, 1e-3);
        let e2 = taylor_remainder(&spec, &u, &phi, 1e-4);
        assert!((e1 / e2).log10() > 1.8, "seed {seed}: {e1:e} {e2:e}");
    }
}

#[test]
fn norms_converge_under_refinement() {
    // ‖∇(cos πx cos πy)‖₂² = π²/2 on the unit square
    let exact = PI * PI / 2.0;
    let errs: Vec<f64> = [16, 32, 64].iter().map(|&r| (manufactured(r).1.gradient_power() - exact).abs()).collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    assert!(errs[2] / exact < 2e-3);
}

#[test]
fn disk_integral_of_paraboloid() {
    let grid = Grid::new(Shape::UnitDisk, 128).unwrap();
    // ∫_{|x|<1} (1 − |x|²) = π/2
    let v = grid.integrate_fn(|x| (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0));
    assert!((v - PI / 2.0).abs() < 2e-3, "{v}");
}

#[test]
fn cube_gradient_power() {
    let grid = Grid::new(Shape::UnitCube, 16).unwrap();
    let u = Field::from_fn(&grid, |x| (PI * x[0]).cos() * (PI * x[1]).cos() * (PI * x[2]).cos()).unwrap();
    // ∫|∇u|³ has no simple closed form; compare with a finer grid instead
    let fine = Grid::new(Shape::UnitCube, 32).unwrap();
    let uf = Field::from_fn(&fine, |x| (PI * x[0]).cos() * (PI * x[1]).cos() * (PI * x[2]).cos()).unwrap();
    assert!((u.gradient_power() - uf.gradient_power()).abs() / uf.gradient_power() < 0.05);
}

#[test]
fn binary_round_trip_is_bit_exact() {
    for (shape, res) in [(Shape::UnitSquare, 12), (Shape::UnitDisk, 10), (Shape::UnitCube, 5)] {
        let grid = Grid::new(shape, res).unwrap();
        let u = random_bump(&grid, 3, 0.3);
        let mut buf = Vec::new();
        io::write_field_binary(&u, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"NKFD");
        assert_eq!(buf.len(), 28 + 8 * grid.node_count());
        let back = io::read_field_binary(&buf[..]).unwrap();
        assert_eq!(back.grid().shape(), shape);
        assert!(back.values().iter().zip(u.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn binary_rejects_truncation_and_bad_magic() {
    let grid = Grid::new(Shape::UnitSquare, 8).unwrap();
    let mut buf = Vec::new();
    io::write_field_binary(&random_bump(&grid, 1, 0.1), &mut buf).unwrap();
    assert!(io::read_field_binary(&buf[..buf.len() - 8]).is_err());
    buf[0] = b'X';
    assert!(io::read_field_binary(&buf[..]).is_err());
}

#[test]
fn csv_round_trip() {
    let grid = Grid::new(Shape::UnitDisk, 12).unwrap();
    let u = random_bump(&grid, 9, 0.2);
    let text = io::field_csv(&u);
    assert!(text.starts_with("# shape=unit-disk resolution=12 n=2\nx,y,value\n"));
    let back = io::read_field_csv(&text).unwrap();
    assert!(back.values().iter().zip(u.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn csv_with_wrong_row_count_fails() {
    let text = "# shape=unit-square resolution=4 n=2\nx,y,value\n0,0,1\n";
    assert!(io::read_nodal_csv(text).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norm_is_homogeneous(seed in 0u64..1000, t in -4.0f64..4.0) {
        let grid = Grid::new(Shape::UnitSquare, 12).unwrap();
        let u = random_bump(&grid, seed, 0.3);
        let lhs = u.scaled(t).w1n_norm();
        prop_assert!((lhs - t.abs() * u.w1n_norm()).abs() <= 1e-13 * (1.0 + lhs));
    }

    #[test]
    fn distance_is_symmetric_and_vanishes_on_diagonal(a in 0u64..500, b in 500u64..1000) {
        let grid = Grid::new(Shape::UnitSquare, 10).unwrap();
        let u = random_bump(&grid, a, 0.3);
        let v = random_bump(&grid, b, 0.3);
        prop_assert_eq!(u.distance(&u).unwrap(), 0.0);
        prop_assert!((u.distance(&v).unwrap() - v.distance(&u).unwrap()).abs() < 1e-14);
    }
}
