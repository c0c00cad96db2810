//! Second-order convergence of the finite-difference solver on manufactured
//! solutions with a variable coefficient `a = e^{c (x_1 + ... + x_d)}`.

use std::f64::consts::PI;

use misc_core::fd::{assemble, build_grid, solve, SolverOptions};

const C: f64 = 0.3;

fn coefficient(x: &[f64]) -> f64 {
    (C * x.iter().sum::<f64>()).exp()
}

/// `u = prod sin(pi x_i)`.
fn exact(x: &[f64]) -> f64 {
    x.iter().map(|v| (PI * v).sin()).product()
}

/// `-div(a grad u) = a (d pi^2 u - c pi sum_i cos(pi x_i) prod_{k != i} sin(pi x_k))`.
fn source(x: &[f64]) -> f64 {
    let d = x.len();
    let u = exact(x);
    let mixed: f64 = (0..d)
        .map(|i| {
            (0..d)
                .map(|k| if k == i { (PI * x[k]).cos() } else { (PI * x[k]).sin() })
                .product::<f64>()
        })
        .sum();
    coefficient(x) * (d as f64 * PI * PI * u - C * PI * mixed)
}

fn max_error(dim: usize, level: u32) -> f64 {
    let grid = build_grid(&vec![level; dim], 1.0 / 3.0).unwrap();
    let system = assemble(&grid, coefficient, source);
    let sol = solve(&system, &SolverOptions::default()).unwrap();
    sol.values
        .iter()
        .enumerate()
        .map(|(p, u)| (u - exact(&grid.node_point(p))).abs())
        .fold(0.0, f64::max)
}

fn assert_second_order(dim: usize, levels: std::ops::RangeInclusive<u32>) {
    let errs: Vec<f64> = levels.map(|l| max_error(dim, l)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.2..=4.8).contains(&ratio), "d={dim}: ratio {ratio} from {errs:?}");
    }
}

#[test]
fn second_order_1d() {
    assert_second_order(1, 1..=6);
}

#[test]
fn second_order_3d() {
    assert_second_order(3, 1..=3);
}
