//! Oracles shared by the integration tests. Nothing here calls into the
//! library's own overlap or gap code.
#![allow(dead_code)]

use num_rational::Ratio;

/// Gauss-Hermite nodes and weights for ∫ e^{-x²} f(x) dx by Golub-Welsch:
/// eigenpairs of the Jacobi matrix of the Hermite recurrence.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jac = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jac.symmetric_eigen();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    (0..n)
        .map(|k| (eig.eigenvalues[k], sqrt_pi * eig.eigenvectors[(0, k)].powi(2)))
        .collect()
}

/// Av f(J) for J standard normal.
pub fn gaussian_average(f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    let s: f64 = gauss_hermite(nodes)
        .iter()
        .map(|&(x, w)| w * f(std::f64::consts::SQRT_2 * x))
        .sum();
    s / std::f64::consts::PI.sqrt()
}

/// Av ln(2 cosh βJ), written to stay finite for large |βJ|.
pub fn random_field_alpha(beta: f64) -> f64 {
    gaussian_average(
        |j| {
            let x = (beta * j).abs();
            x + (1.0 + (-2.0 * x).exp()).ln()
        },
        200,
    )
}

/// Spin vector of a bit word; bit i is coordinate i+1.
pub fn spins(n: usize, bits: u64) -> Vec<i64> {
    (0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect()
}

pub fn rational_overlap(s: &[i64], t: &[i64]) -> Ratio<i128> {
    let dot: i64 = s.iter().zip(t).map(|(a, b)| a * b).sum();
    Ratio::new(dot as i128, s.len() as i128)
}

#[derive(Clone, Copy, Debug)]
pub enum Rule {
    PSpin(i32),
    Rem,
}

pub fn rational_cov(rule: Rule, s: &[i64], t: &[i64]) -> Ratio<i128> {
    match rule {
        Rule::PSpin(p) => rational_overlap(s, t).pow(p),
        Rule::Rem => Ratio::from_integer((s == t) as i128),
    }
}

/// c_N − (N1/N) c_{N1}(π1) − (N2/N) c_{N2}(π2) from explicit vectors. The
/// first block is the coordinates whose mask bit is set.
pub fn rational_gap(rule: Rule, n: usize, mask: u64, a: u64, b: u64) -> Ratio<i128> {
    let (s, t) = (spins(n, a), spins(n, b));
    let pick = |v: &[i64], first: bool| -> Vec<i64> {
        (0..n).filter(|&i| (mask >> i & 1 == 1) == first).map(|i| v[i]).collect()
    };
    let (s1, t1, s2, t2) = (pick(&s, true), pick(&t, true), pick(&s, false), pick(&t, false));
    let nn = n as i128;
    rational_cov(rule, &s, &t)
        - Ratio::new(s1.len() as i128, nn) * rational_cov(rule, &s1, &t1)
        - Ratio::new(s2.len() as i128, nn) * rational_cov(rule, &s2, &t2)
}

/// Largest gap over all pairs for one partition.
pub fn rational_max_gap(rule: Rule, n: usize, mask: u64) -> Ratio<i128> {
    let mut best: Option<Ratio<i128>> = None;
    for a in 0..1u64 << n {
        for b in 0..1u64 << n {
            let g = rational_gap(rule, n, mask, a, b);
            if best.is_none_or(|x| g > x) {
                best = Some(g);
            }
        }
    }
    best.unwrap()
}

/// Sample covariance (mean subtracted) of draws stored row-wise.
pub fn empirical_covariance(draws: &[Vec<f64>]) -> Vec<f64> {
    let dim = draws[0].len();
    let m = draws.len() as f64;
    let mut mean = vec![0.0; dim];
    for d in draws {
        for (acc, x) in mean.iter_mut().zip(d) {
            *acc += x / m;
        }
    }
    let mut cov = vec![0.0; dim * dim];
    for d in draws {
        let c: Vec<f64> = d.iter().zip(&mean).map(|(x, mu)| x - mu).collect();
        for i in 0..dim {
            let ci = c[i];
            let row = &mut cov[i * dim..(i + 1) * dim];
            for (r, cj) in row.iter_mut().zip(&c) {
                *r += ci * cj;
            }
        }
    }
    for v in &mut cov {
        *v /= m - 1.0;
    }
    cov
}
