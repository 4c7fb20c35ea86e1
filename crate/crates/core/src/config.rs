use serde::{Deserialize, Serialize};

/// Numerical knobs shared by every engine. Every report echoes the values used.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Global seed threading every stochastic search.
    pub seed: u64,
    pub multistarts: usize,
    pub search_iters: usize,
    /// Matrix-level cap for searches; `None` means `p + q` of the domain ambient.
    pub level_cap: Option<usize>,
    pub contraction_tol: f64,
    pub cb_gap_tol: f64,
    /// Searches stop once within this gap of the upper bound.
    pub search_stop_gap: f64,
    pub sdp_gap_tol: f64,
    pub sdp_feas_tol: f64,
    pub sdp_max_iter: usize,
    pub oracle_tol: f64,
    /// Level cap used by oracle-backed searches (quotients, duals, Haagerup).
    pub oracle_level_cap: usize,
    pub oracle_multistarts: usize,
    pub defect_t0: f64,
    pub defect_kmax: u32,
    pub detect_tol: f64,
    pub confirm_tol: f64,
    pub closure_tol: f64,
    pub idempotent_tol: f64,
    pub mult_rel_tol: f64,
    pub mult_ceiling: f64,
    pub max_discover_dim: usize,
    pub probe_trials: usize,
    pub rank_tol: f64,
    pub parallel: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0x5eed_2024,
            multistarts: 32,
            search_iters: 150,
            level_cap: None,
            contraction_tol: 1e-6,
            cb_gap_tol: 1e-4,
            search_stop_gap: 1e-6,
            sdp_gap_tol: 1e-7,
            sdp_feas_tol: 1e-8,
            sdp_max_iter: 120,
            oracle_tol: 1e-4,
            oracle_level_cap: 2,
            oracle_multistarts: 4,
            defect_t0: 1e-2,
            defect_kmax: 8,
            detect_tol: 1e-6,
            confirm_tol: 1e-7,
            closure_tol: 1e-7,
            idempotent_tol: 1e-8,
            mult_rel_tol: 1e-5,
            mult_ceiling: 1e3,
            max_discover_dim: 16,
            probe_trials: 2,
            rank_tol: 1e-8,
            parallel: true,
        }
    }
}

impl Config {
    /// Time grid `{±2^k t0 : k = 0..=kmax}` for Hermitian-defect evaluation.
    pub fn defect_grid(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * (self.defect_kmax as usize + 1));
        for k in 0..=self.defect_kmax {
            let t = self.defect_t0 * f64::from(1u32 << k);
            out.push(t);
            out.push(-t);
        }
        out
    }

    pub fn level_cap_for(&self, p: usize, q: usize) -> usize {
        self.level_cap.unwrap_or(p + q).max(1)
    }

    /// A lighter configuration for quick interactive runs and property tests.
    pub fn quick() -> Self {
        Self {
            multistarts: 8,
            search_iters: 80,
            ..Self::default()
        }
    }
}
