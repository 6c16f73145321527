use crate::classifier::Gamma;
use crate::error::Result;
use crate::harness::config::GridConfig;
use crate::rng::{stream, RngState};

/// A concrete FlyNN setting of the search.
#[derive(Clone, Debug, PartialEq)]
pub struct FlySetting {
    pub m: usize,
    pub s: usize,
    pub rho: usize,
    pub gamma: Gamma,
}

impl FlySetting {
    pub fn describe(&self) -> String {
        format!("m={};s={};rho={};gamma={}", self.m, self.s, self.rho, self.gamma.text())
    }
}

fn log_uniform(rng: &mut RngState, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.next_f64() * (hi.ln() - lo.ln())).exp()
}

/// `settings` points drawn log-uniformly in `m`, `s` and `rho` and uniformly
/// in `gamma` (whose range contains 0), rounded to integers and to two
/// decimals respectively. `rho` is capped at `m`, `s` at `d`.
pub fn sample_settings(grid: &GridConfig, d: usize, seed: u64) -> Result<Vec<FlySetting>> {
    if let Some(points) = &grid.points {
        return points
            .iter()
            .map(|p| {
                Ok(FlySetting {
                    m: p.m,
                    s: p.s,
                    rho: p.rho,
                    gamma: Gamma::new(p.gamma)?,
                })
            })
            .collect();
    }
    let mut rng = RngState::with_stream(seed, stream::GRID);
    let df = d as f64;
    let [m_lo, m_hi] = grid.m_range.map(|v| (v * df).max(1.0));
    let [s_lo, s_hi] = grid
        .s_range
        .unwrap_or([2.0, (df / 2.0).floor()])
        .map(|v| v.clamp(1.0, df));
    let s_lo = s_lo.min(s_hi);
    let [r_lo, r_hi] = grid.rho_range;
    let [g_lo, g_hi] = grid.gamma_range;
    (0..grid.settings)
        .map(|_| {
            let m = log_uniform(&mut rng, m_lo, m_hi).round().max(1.0) as usize;
            let s = log_uniform(&mut rng, s_lo, s_hi).round().clamp(1.0, df) as usize;
            let rho = (log_uniform(&mut rng, r_lo, r_hi).round().max(1.0) as usize).min(m);
            let g = g_lo + rng.next_f64() * (g_hi - g_lo);
            Ok(FlySetting {
                m,
                s,
                rho,
                gamma: Gamma::parse(&format!("{:.2}", g.min(0.99)))?,
            })
        })
        .collect()
}

/// Log-spaced SimHash widths over `[1, 2048 d]`, always including `d`.
pub fn default_sbfc_widths(d: usize) -> Vec<usize> {
    let top = 2048 * d;
    let mut out: Vec<usize> = (0..)
        .map(|i| 4usize.pow(i))
        .take_while(|&m| m <= top)
        .chain([d, top])
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_range_and_repeat() {
        let grid = GridConfig::default();
        let a = sample_settings(&grid, 50, 3).unwrap();
        assert_eq!(a.len(), 60);
        for p in &a {
            assert!((100..=102_400).contains(&p.m), "{p:?}");
            assert!((2..=25).contains(&p.s), "{p:?}");
            assert!((8..=256).contains(&p.rho) && p.rho <= p.m, "{p:?}");
            assert!((0.0..=0.8).contains(&p.gamma.value()));
        }
        assert_eq!(a, sample_settings(&grid, 50, 3).unwrap());
        assert_ne!(a, sample_settings(&grid, 50, 4).unwrap());
    }

    #[test]
    fn log_uniform_spreads_over_decades() {
        let grid = GridConfig {
            settings: 2000,
            ..GridConfig::default()
        };
        let a = sample_settings(&grid, 50, 9).unwrap();
        // m / d is log-uniform on [2, 2048], so its median is 64.
        let low = a.iter().filter(|p| p.m < 64 * 50).count() as f64 / 2000.0;
        assert!((0.45..0.55).contains(&low), "{low}");
    }

    #[test]
    fn tiny_dimension_is_clamped() {
        let a = sample_settings(&GridConfig::default(), 2, 1).unwrap();
        assert!(a.iter().all(|p| p.s >= 1 && p.s <= 2));
    }

    #[test]
    fn sbfc_widths() {
        assert_eq!(default_sbfc_widths(2), vec![1, 2, 4, 16, 64, 256, 1024, 4096]);
        let w = default_sbfc_widths(50);
        assert_eq!(w.first(), Some(&1));
        assert_eq!(w.last(), Some(&102_400));
        assert!(w.contains(&50));
    }
}
