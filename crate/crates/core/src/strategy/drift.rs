//! Single-parameter FedAdam run showing momentum-driven drift.

/// Settings of the scalar FedAdam recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSettings {
    pub x0: f64,
    /// Value every client reports each round.
    pub client_value: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
    pub server_lr: f64,
    pub steps: usize,
}

impl Default for DriftSettings {
    fn default() -> Self {
        Self {
            x0: 2.0,
            client_value: 0.1,
            beta1: 0.9,
            beta2: 0.9,
            tau: 1e-9,
            server_lr: 0.1,
            steps: 30,
        }
    }
}

/// Iterates `Δ = x̃ − x; m ← β₁m + (1−β₁)Δ; v ← β₂v + (1−β₂)Δ²;
/// x ← x + η·m/(√v + τ)` and returns `x` after every step.
pub fn fedadam_drift(settings: DriftSettings) -> Vec<f64> {
    let (mut x, mut m, mut v) = (settings.x0, 0.0, 0.0);
    (0..settings.steps)
        .map(|_| {
            let delta = settings.client_value - x;
            m = settings.beta1 * m + (1.0 - settings.beta1) * delta;
            v = settings.beta2 * v + (1.0 - settings.beta2) * delta * delta;
            x += settings.server_lr * m / (v.sqrt() + settings.tau);
            x
        })
        .collect()
}

/// The 30-step trajectory from `x₀ = 2` with constant client value `0.1`.
pub fn fedadam_drift_demo() -> Vec<f64> {
    fedadam_drift(DriftSettings::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ends_negative() {
        let t = fedadam_drift_demo();
        assert_eq!(t.len(), 30);
        assert!((t[0] - 1.96838).abs() < 1e-5);
        assert!((t[29] - -0.204).abs() <= 1e-3);
        assert!(t.iter().copied().fold(f64::INFINITY, f64::min) < 0.0);
    }
}
