use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Temporally correlated exploration noise,
/// `x <- x + theta * (mu - x) * dt + sigma * sqrt(dt) * N(0, 1)`.
#[derive(Clone, Debug)]
pub struct OuNoiseProcess {
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
    mu: Vec<f64>,
    state: Vec<f64>,
    rng: ChaCha8Rng,
}

impl OuNoiseProcess {
    /// Zero-mean process of the given dimension, starting at its mean.
    pub fn new(dim: usize, theta: f64, sigma: f64, dt: f64, seed: u64) -> Self {
        Self::with_mean(vec![0.0; dim], theta, sigma, dt, seed)
    }

    pub fn with_mean(mu: Vec<f64>, theta: f64, sigma: f64, dt: f64, seed: u64) -> Self {
        OuNoiseProcess {
            theta,
            sigma,
            dt,
            state: mu.clone(),
            mu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) {
        self.state.copy_from_slice(state);
    }

    pub fn reset(&mut self) {
        self.state.copy_from_slice(&self.mu);
    }

    pub fn sample(&mut self) -> &[f64] {
        let diffusion = self.sigma * self.dt.sqrt();
        for (x, mu) in self.state.iter_mut().zip(&self.mu) {
            let n: f64 = StandardNormal.sample(&mut self.rng);
            *x += self.theta * (mu - *x) * self.dt + diffusion * n;
        }
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_mean_is_fixed_point() {
        let mut ou = OuNoiseProcess::new(3, 0.15, 0.0, 1.0, 1);
        for _ in 0..100 {
            assert_eq!(ou.sample(), &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn noiseless_recurrence() {
        let mut ou = OuNoiseProcess::new(1, 0.15, 0.0, 1.0, 1);
        ou.set_state(&[1.0]);
        assert!((ou.sample()[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn reset_restores_mean() {
        let mut ou = OuNoiseProcess::with_mean(vec![0.5, -0.5], 0.15, 0.2, 1.0, 4);
        for _ in 0..10 {
            ou.sample();
        }
        ou.reset();
        assert_eq!(ou.state(), &[0.5, -0.5]);
    }

    #[test]
    fn long_run_mean_within_three_standard_errors() {
        // Stationary variance sigma^2 dt / (1 - (1 - theta dt)^2); the AR(1)
        // autocorrelation rho = 1 - theta dt inflates the variance of the
        // sample mean by (1 + rho) / (1 - rho).
        let (theta, sigma, dt) = (0.15, 0.2, 1.0);
        let n = 100_000;
        let mut ou = OuNoiseProcess::new(1, theta, sigma, dt, 2024);
        let mean = (0..n).map(|_| ou.sample()[0]).sum::<f64>() / n as f64;
        let rho: f64 = 1.0 - theta * dt;
        let var = sigma * sigma * dt / (1.0 - rho * rho);
        let se = (var / n as f64 * (1.0 + rho) / (1.0 - rho)).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} vs 3se {}", 3.0 * se);
    }
}
