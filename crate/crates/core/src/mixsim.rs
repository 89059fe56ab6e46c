//! Synthetic semantic-mixing worlds with an exact posterior oracle.
//!
//! A world is a K-class isotropic Gaussian mixture. A mixed sample set
//! fixes a class pair `(i, j)` and one shared noise draw `z`, then places
//! samples along the segment between the class means at warped positions:
//! `x = w(lh) mu_i + (1 - w(lh)) mu_j + sigma z`, where
//! `w(l) = l^g / (l^g + (1-l)^g)` models a generator that moves class
//! semantics faster or slower than its conditioning coefficient `lh`.
//!
//! Because the world is known, the true two-class posterior is available
//! in closed form: `lambda_true = sigmoid((|x - mu_j|^2 - |x - mu_i|^2) /
//! (2 sigma^2))`. That oracle is what reannotation is judged against.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::sigmoid;
use crate::streams::stream;

/// A K-class isotropic Gaussian world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixWorld {
    mu: Vec<Vec<f64>>,
    sigma: f64,
    warp_gamma: f64,
    seed: u64,
}

impl MixWorld {
    pub fn new(mu: Vec<Vec<f64>>, sigma: f64, warp_gamma: f64, seed: u64) -> Result<Self> {
        if mu.len() < 2 {
            return Err(Error::invalid("world needs at least 2 classes"));
        }
        let dim = mu[0].len();
        if dim == 0 {
            return Err(Error::invalid("mean dimension must be positive"));
        }
        for (k, m) in mu.iter().enumerate() {
            if m.len() != dim {
                return Err(Error::invalid(format!(
                    "mean {k} has dimension {}, expected {dim}",
                    m.len()
                )));
            }
            if let Some(&bad) = m.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("mean {k} entry is {bad}")));
            }
        }
        for a in 0..mu.len() {
            for b in (a + 1)..mu.len() {
                if dist_sq(&mu[a], &mu[b]) <= 0.0 {
                    return Err(Error::invalid(format!(
                        "means {a} and {b} coincide; classes must be distinct"
                    )));
                }
            }
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        if !(warp_gamma.is_finite() && warp_gamma > 0.0) {
            return Err(Error::invalid(format!(
                "warp gamma must be positive and finite, got {warp_gamma}"
            )));
        }
        Ok(MixWorld {
            mu,
            sigma,
            warp_gamma,
            seed,
        })
    }

    /// World with class means on scaled coordinate axes, so every pair of
    /// means is exactly `separation` apart. Requires `dim >= n_classes`.
    pub fn regular(
        n_classes: usize,
        dim: usize,
        separation: f64,
        sigma: f64,
        warp_gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim < n_classes {
            return Err(Error::invalid(format!(
                "regular world needs dim >= n_classes, got dim={dim}, n_classes={n_classes}"
            )));
        }
        if !(separation.is_finite() && separation > 0.0) {
            return Err(Error::invalid(format!(
                "separation must be positive and finite, got {separation}"
            )));
        }
        let scale = separation / 2.0_f64.sqrt();
        let mu = (0..n_classes)
            .map(|k| {
                let mut m = vec![0.0; dim];
                m[k] = scale;
                m
            })
            .collect();
        MixWorld::new(mu, sigma, warp_gamma, seed)
    }

    pub fn n_classes(&self) -> usize {
        self.mu.len()
    }

    pub fn dim(&self) -> usize {
        self.mu[0].len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn warp_gamma(&self) -> f64 {
        self.warp_gamma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mean(&self, class: usize) -> Result<&[f64]> {
        self.mu.get(class).map(Vec::as_slice).ok_or_else(|| {
            Error::invalid(format!(
                "class {class} out of range for {} classes",
                self.mu.len()
            ))
        })
    }

    /// Exact two-class posterior coefficient for `x` between classes
    /// `i` and `j` under this world's noise.
    pub fn true_posterior(&self, x: &[f64], class_i: usize, class_j: usize) -> Result<f64> {
        let mu_i = self.mean(class_i)?;
        let mu_j = self.mean(class_j)?;
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "sample has dimension {}, world has {}",
                x.len(),
                self.dim()
            )));
        }
        let score = (dist_sq(x, mu_j) - dist_sq(x, mu_i)) / (2.0 * self.sigma * self.sigma);
        Ok(sigmoid(score))
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Warp `lambda` through `l^g / (l^g + (1-l)^g)`; endpoints are fixed
/// points for every gamma.
pub fn warp(lambda: f64, gamma: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if lambda >= 1.0 {
        return 1.0;
    }
    let a = lambda.powf(gamma);
    let b = (1.0 - lambda).powf(gamma);
    a / (a + b)
}

/// Evenly spaced coefficient grid over [0, 1] including both endpoints.
pub fn lambda_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid("lambda grid needs at least 2 points"));
    }
    Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
}

/// One sample of a mixed set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixSample {
    pub x: Vec<f64>,
    pub lambda_hat: f64,
    pub lambda_true: f64,
}

/// A generated set: one class pair, one shared noise draw, one sample per
/// requested coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixSet {
    pub class_i: usize,
    pub class_j: usize,
    pub samples: Vec<MixSample>,
}

/// Generate one mixed set. `lambdas` must live in [0, 1] and include both
/// endpoints (the pure-class anchors every set carries). The noise draw is
/// taken from `(world.seed, "mixset", set_index)`.
pub fn generate_set(
    world: &MixWorld,
    class_i: usize,
    class_j: usize,
    lambdas: &[f64],
    set_index: u64,
) -> Result<MixSet> {
    if class_i == class_j {
        return Err(Error::invalid(format!(
            "set classes must differ, both are {class_i}"
        )));
    }
    let mu_i = world.mean(class_i)?;
    let mu_j = world.mean(class_j)?;
    if let Some(&bad) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!(
            "lambda {bad} outside [0, 1]"
        )));
    }
    if !lambdas.contains(&0.0) || !lambdas.contains(&1.0) {
        return Err(Error::invalid(
            "lambda grid must include the endpoints 0 and 1",
        ));
    }
    let mut rng = stream(world.seed(), "mixset", set_index);
    let z: Vec<f64> = (0..world.dim())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let samples = lambdas
        .iter()
        .map(|&lh| {
            let w = warp(lh, world.warp_gamma());
            let x: Vec<f64> = (0..world.dim())
                .map(|d| w * mu_i[d] + (1.0 - w) * mu_j[d] + world.sigma() * z[d])
                .collect();
            let lambda_true = world.true_posterior(&x, class_i, class_j)?;
            Ok(MixSample {
                x,
                lambda_hat: lh,
                lambda_true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixSet {
        class_i,
        class_j,
        samples,
    })
}

/// A labeled pure-class sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneHotSample {
    pub x: Vec<f64>,
    pub label: usize,
}

/// Everything a training or reannotation experiment needs: the augmented
/// pool of mixed sets and a one-hot pool drawn from the pure class
/// conditionals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Benchmark {
    pub sets: Vec<MixSet>,
    pub onehot: Vec<OneHotSample>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub n_sets: usize,
    pub lambdas: Vec<f64>,
    pub onehot_per_class: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            n_sets: 100,
            lambdas: lambda_grid(8).expect("static grid size"),
            onehot_per_class: 100,
        }
    }
}

/// Build the full benchmark. Class pairs are drawn per set from the
/// `"mixpair"` stream; one-hot samples come from the `"onehot"` stream.
/// Everything is reproducible from the world's seed.
pub fn build_benchmark(world: &MixWorld, config: &BenchmarkConfig) -> Result<Benchmark> {
    if config.n_sets == 0 {
        return Err(Error::invalid("benchmark needs at least one set"));
    }
    if config.onehot_per_class == 0 {
        return Err(Error::invalid(
            "benchmark needs at least one one-hot sample per class",
        ));
    }
    let k = world.n_classes();
    let mut sets = Vec::with_capacity(config.n_sets);
    for index in 0..config.n_sets {
        let mut pair_rng = stream(world.seed(), "mixpair", index as u64);
        let class_i = pair_rng.gen_range(0..k);
        let class_j = (class_i + pair_rng.gen_range(1..k)) % k;
        sets.push(generate_set(
            world,
            class_i,
            class_j,
            &config.lambdas,
            index as u64,
        )?);
    }
    let mut onehot = Vec::with_capacity(k * config.onehot_per_class);
    for class in 0..k {
        let mu = world.mean(class)?.to_vec();
        for draw in 0..config.onehot_per_class {
            let mut rng = stream(
                world.seed(),
                "onehot",
                (class * config.onehot_per_class + draw) as u64,
            );
            let x: Vec<f64> = mu
                .iter()
                .map(|&m| m + world.sigma() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            onehot.push(OneHotSample { x, label: class });
        }
    }
    Ok(Benchmark { sets, onehot })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> MixWorld {
        MixWorld::regular(4, 4, 2.0, 1.0, 1.0, 11).unwrap()
    }

    #[test]
    fn posterior_at_a_mean_matches_logistic_of_distance() {
        // At x = mu_i with |mu_i - mu_j| = 2 and sigma = 1 the posterior
        // is sigmoid(4 / 2) = sigmoid(2).
        let w = world();
        let x = w.mean(0).unwrap().to_vec();
        let lt = w.true_posterior(&x, 0, 1).unwrap();
        assert!((lt - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn posterior_is_half_on_the_midplane() {
        let w = world();
        let mid: Vec<f64> = w
            .mean(0)
            .unwrap()
            .iter()
            .zip(w.mean(1).unwrap())
            .map(|(&a, &b)| 0.5 * (a + b))
            .collect();
        assert!((w.true_posterior(&mid, 0, 1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn warp_identity_and_endpoints() {
        for l in [0.0, 0.2, 0.5, 0.9, 1.0] {
            assert!((warp(l, 1.0) - l).abs() < 1e-15);
        }
        for g in [0.5, 1.0, 3.0] {
            assert_eq!(warp(0.0, g), 0.0);
            assert_eq!(warp(1.0, g), 1.0);
            assert_eq!(warp(0.5, g), 0.5);
        }
        // gamma > 1 pushes interior coefficients toward the nearer class.
        assert!(warp(0.25, 3.0) < 0.25);
        assert!(warp(0.75, 3.0) > 0.75);
    }

    #[test]
    fn shared_noise_within_a_set() {
        let w = world();
        let set = generate_set(&w, 0, 1, &[0.0, 1.0], 5).unwrap();
        assert_eq!(set.samples.len(), 2);
        // x(1) - x(0) = mu_i - mu_j exactly, because z is shared.
        let diff_expected: Vec<f64> = w
            .mean(0)
            .unwrap()
            .iter()
            .zip(w.mean(1).unwrap())
            .map(|(&a, &b)| a - b)
            .collect();
        for d in 0..w.dim() {
            let diff = set.samples[1].x[d] - set.samples[0].x[d];
            assert!((diff - diff_expected[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn sets_are_reproducible_and_indexed() {
        let w = world();
        let grid = lambda_grid(8).unwrap();
        let a = generate_set(&w, 2, 3, &grid, 9).unwrap();
        let b = generate_set(&w, 2, 3, &grid, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_set(&w, 2, 3, &grid, 10).unwrap();
        assert_ne!(a.samples[0].x, c.samples[0].x);
    }

    #[test]
    fn endpoint_requirement_is_enforced() {
        let w = world();
        assert!(generate_set(&w, 0, 1, &[0.0, 0.5], 0).is_err());
        assert!(generate_set(&w, 0, 1, &[0.5, 1.0], 0).is_err());
        assert!(generate_set(&w, 0, 1, &[0.0, 1.0, 1.2], 0).is_err());
        assert!(generate_set(&w, 1, 1, &[0.0, 1.0], 0).is_err());
        assert!(lambda_grid(1).is_err());
    }

    #[test]
    fn grid_is_even_with_endpoints() {
        let g = lambda_grid(8).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[7], 1.0);
        for w in g.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn benchmark_shapes_and_determinism() {
        let w = world();
        let config = BenchmarkConfig {
            n_sets: 6,
            lambdas: lambda_grid(4).unwrap(),
            onehot_per_class: 3,
        };
        let a = build_benchmark(&w, &config).unwrap();
        assert_eq!(a.sets.len(), 6);
        assert_eq!(a.onehot.len(), 12);
        for set in &a.sets {
            assert_ne!(set.class_i, set.class_j);
            assert_eq!(set.samples.len(), 4);
        }
        let b = build_benchmark(&w, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn world_validation() {
        assert!(MixWorld::regular(4, 3, 2.0, 1.0, 1.0, 0).is_err());
        assert!(MixWorld::regular(4, 4, 0.0, 1.0, 1.0, 0).is_err());
        assert!(MixWorld::regular(4, 4, 2.0, 0.0, 1.0, 0).is_err());
        assert!(MixWorld::regular(4, 4, 2.0, 1.0, 0.0, 0).is_err());
        assert!(MixWorld::new(vec![vec![1.0], vec![1.0]], 1.0, 1.0, 0).is_err());
        assert!(MixWorld::new(vec![vec![1.0]], 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn posterior_is_monotone_in_the_coefficient_within_a_set() {
        // The posterior log-odds are linear and increasing in the mixing
        // weight, and the shared noise draw only shifts the intercept, so
        // within any one set lambda_true strictly follows lambda_hat.
        let grid = lambda_grid(8).unwrap();
        for gamma in [0.5, 1.0, 3.0] {
            let w = MixWorld::regular(3, 3, 2.0, 0.5, gamma, 23).unwrap();
            for idx in 0..20 {
                let set = generate_set(&w, 0, 2, &grid, idx).unwrap();
                for pair in set.samples.windows(2) {
                    assert!(
                        pair[1].lambda_true > pair[0].lambda_true,
                        "posterior fell from {} to {} (gamma {gamma})",
                        pair[0].lambda_true,
                        pair[1].lambda_true
                    );
                }
            }
        }
    }

    #[test]
    fn warping_biases_the_noise_free_posterior_outward() {
        // Without noise, gamma > 1 moves every interior sample toward the
        // nearer class, so the exact posterior sits farther from the
        // conditioning coefficient than it would unwarped. The endpoints
        // are warp fixed points, so there the two gammas agree exactly.
        let sep = 2.0;
        let sigma = 0.8;
        let world = MixWorld::regular(2, 2, sep, sigma, 1.0, 0).unwrap();
        let mu_i = world.mean(0).unwrap().to_vec();
        let mu_j = world.mean(1).unwrap().to_vec();
        let noise_free = |weight: f64| -> f64 {
            let x: Vec<f64> = mu_i
                .iter()
                .zip(&mu_j)
                .map(|(&a, &b)| weight * a + (1.0 - weight) * b)
                .collect();
            world.true_posterior(&x, 0, 1).unwrap()
        };
        for lh in lambda_grid(8).unwrap() {
            let err_base = (lh - noise_free(warp(lh, 1.0))).abs();
            let err_warped = (lh - noise_free(warp(lh, 3.0))).abs();
            if lh == 0.0 || lh == 1.0 {
                assert_eq!(err_base, err_warped);
            } else {
                assert!(
                    err_warped > err_base,
                    "at lambda {lh}: warped {err_warped} vs base {err_base}"
                );
            }
        }
    }
}
