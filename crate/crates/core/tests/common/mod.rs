#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// `P(Z1 > h, Z2 > h)` for standard normals with correlation `rho`, from
/// `Φ̄(h)² + (1/2π) ∫_0^{asin ρ} exp(-h² / (1 + sin θ)) dθ` (composite Simpson).
pub fn upper_orthant(h: f64, rho: f64) -> f64 {
    let sf = Normal::standard().sf(h);
    if rho == 0.0 {
        return sf * sf;
    }
    let end = rho.asin();
    let n = 4000;
    let step = end / n as f64;
    let f = |th: f64| (-h * h / (1.0 + th.sin())).exp();
    let mut s = f(0.0) + f(end);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * step);
    }
    sf * sf + s * step / 3.0 / (2.0 * std::f64::consts::PI)
}

/// Linear Gaussian test problem `Y = beta0 + beta . X`, `X ~ N(mu, sigma)`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub t: f64,
}

impl Problem {
    pub fn d(&self) -> usize {
        self.beta.len()
    }

    pub fn mean(&self) -> f64 {
        self.beta0 + self.beta.iter().zip(&self.mu).map(|(b, m)| b * m).sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        let b = DVector::from_vec(self.beta.clone());
        (b.transpose() * &self.sigma * &b)[(0, 0)]
    }

    pub fn probability(&self) -> f64 {
        Normal::standard().sf((self.t - self.mean()) / self.variance().sqrt())
    }

    /// `V(E[Y | X_A]) / V(Y)` from `Cov(Y, X_A) Σ_AA⁻¹ Cov(X_A, Y)`.
    pub fn explained_fraction(&self, mask: u64) -> f64 {
        let idx: Vec<usize> = (0..self.d()).filter(|j| mask >> j & 1 == 1).collect();
        if idx.is_empty() {
            return 0.0;
        }
        let b = DVector::from_vec(self.beta.clone());
        let cov_xy = &self.sigma * &b;
        let k = idx.len();
        let saa = DMatrix::from_fn(k, k, |i, j| self.sigma[(idx[i], idx[j])]);
        let c = DVector::from_fn(k, |i, _| cov_xy[idx[i]]);
        let sol = saa.lu().solve(&c).expect("invertible block");
        c.dot(&sol) / self.variance()
    }

    /// Closed target Sobol' index of the subset `mask`.
    pub fn closed_target_sobol(&self, mask: u64) -> f64 {
        let p = self.probability();
        let h = (self.t - self.mean()) / self.variance().sqrt();
        let r = self.explained_fraction(mask).clamp(0.0, 1.0);
        (upper_orthant(h, r) - p * p) / (p * (1.0 - p))
    }
}

/// Shapley values by looping over every permutation.
pub fn shapley_by_permutations(d: usize, val: &dyn Fn(u64) -> f64) -> Vec<f64> {
    let mut phi = vec![0.0; d];
    let mut perm: Vec<usize> = (0..d).collect();
    let mut count = 0usize;
    permute(&mut perm, 0, &mut |p| {
        count += 1;
        let mut mask = 0u64;
        for &j in p {
            let before = val(mask);
            mask |= 1 << j;
            phi[j] += val(mask) - before;
        }
    });
    phi.iter().map(|v| v / count as f64).collect()
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

/// Nearest-neighbour residual cost by sorting all distances for every row.
/// `cols` are the conditioning coordinates; requires no distance ties.
pub fn brute_knn_residual_cost(columns: &[Vec<f64>], y: &[u8], cols: &[usize], ns: usize) -> f64 {
    let n = y.len();
    let p = y.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .map(|r| {
                let s: f64 = cols.iter().map(|&c| (columns[c][r] - columns[c][i]).powi(2)).sum();
                (s, r)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ys: Vec<f64> = d[..ns].iter().map(|&(_, r)| y[r] as f64).collect();
        let m = ys.iter().sum::<f64>() / ns as f64;
        total += ys.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ns as f64 - 1.0);
    }
    total / n as f64 / (p * (1.0 - p))
}

/// Deterministic pseudo-random SPD matrix with unit-ish scale.
pub fn random_spd(d: usize, rng: &mut impl rand::Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let mut s = &a * a.transpose();
    for i in 0..d {
        s[(i, i)] += 0.1;
    }
    s
}

/// Random problem with a non-degenerate failure probability.
pub fn random_problem(rng: &mut impl rand::Rng, max_d: usize) -> Problem {
    let d = rng.random_range(1..=max_d);
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sigma = random_spd(d, rng);
    let mut p = Problem { beta0: rng.random_range(-1.0..1.0), beta, mu, sigma, t: 0.0 };
    if p.beta.iter().all(|b| b.abs() < 1e-3) {
        p.beta[0] = 1.0;
    }
    let z: f64 = rng.random_range(-2.5..2.5);
    p.t = p.mean() + z * p.variance().sqrt();
    p
}

pub fn to_model(p: &Problem) -> tshap::gaussian::LinearGaussianModel {
    tshap::gaussian::LinearGaussianModel::new(
        p.beta0,
        p.beta.clone(),
        p.mu.clone(),
        p.sigma.clone(),
        tshap::FailureEvent::new(p.t).unwrap(),
    )
    .unwrap()
}

/// `Y = b1 X1 + b2 X2 + sigma ε` with standard-normal inputs of correlation `r`.
pub fn venn_sample(b1: f64, b2: f64, r: f64, sigma: f64, n: usize, seed: u64) -> tshap::SampleSet {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let (mut x1, mut x2, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let c = (1.0 - r * r).sqrt();
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let a = z1;
        let b = r * z1 + c * z2;
        x1.push(a);
        x2.push(b);
        y.push(b1 * a + b2 * b + sigma * e);
    }
    tshap::SampleSet::new(vec![x1, x2], vec!["X1".into(), "X2".into()], Some(y)).unwrap()
}

/// Venn areas `(a, b, c, σ²)` for [`venn_sample`].
pub fn venn_areas(b1: f64, b2: f64, r: f64, sigma: f64) -> (f64, f64, f64, f64) {
    let a = b1 * b1 * (1.0 - r * r);
    let c = b2 * b2 * (1.0 - r * r);
    let b = r * r * (b1 * b1 + b2 * b2) + 2.0 * b1 * b2 * r;
    (a, b, c, sigma * sigma)
}
