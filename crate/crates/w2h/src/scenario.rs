//! Seedable synthetic scenarios: smooth daily profiles with per-seed
//! noise, splined onto the dispatch grid.
//!
//! Profiles are built from 24 hourly anchor values (sinusoidal day shape
//! plus Gaussian noise) and interpolated with a natural cubic spline, so
//! a 5-minute scenario reproduces the anchors exactly at the hour marks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Scenario, SystemSpec};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeriesShape {
    pub base: f64,
    pub amplitude: f64,
    /// radians; shifts the daily peak
    pub phase: f64,
    /// Gaussian noise applied at the hourly anchors
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub steps: usize,
    pub step_minutes: f64,
    pub wind: SeriesShape,
    pub load: SeriesShape,
    pub water: SeriesShape,
    pub hydrogen: SeriesShape,
    /// reactive load as a fraction of active load
    #[serde(default = "default_q_fraction")]
    pub q_fraction: f64,
}

fn default_q_fraction() -> f64 {
    0.33
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioMeta {
    /// number of series points clamped up to zero
    pub clamped: usize,
}

const HOURS: usize = 24;

/// One daily series on the scenario grid. Anchors are hourly; negative
/// interpolated values are clamped to zero and counted.
fn daily_series(
    shape: &SeriesShape,
    scale: f64,
    steps: usize,
    step_minutes: f64,
    rng: &mut ChaCha8Rng,
    clamped: &mut usize,
) -> Vec<f64> {
    let mut anchors = [0.0f64; HOURS];
    for (h, a) in anchors.iter_mut().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * (h as f64 / HOURS as f64) + shape.phase;
        let noise = if shape.sigma > 0.0 { gaussian(rng) * shape.sigma } else { 0.0 };
        *a = scale * (shape.base + shape.amplitude * angle.sin()) + noise;
    }
    let spline = NaturalSpline::fit(&anchors);
    (0..steps)
        .map(|t| {
            let v = spline.eval(t as f64 * step_minutes / 60.0);
            if v < 0.0 {
                *clamped += 1;
                0.0
            } else {
                v
            }
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniforms
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Draws one scenario for `spec`. Deterministic per seed: identical
/// config and spec give byte-identical series.
pub fn sample_scenario(cfg: &GeneratorConfig, spec: &SystemSpec) -> (Scenario, ScenarioMeta) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut meta = ScenarioMeta::default();

    let wind_speed =
        daily_series(&cfg.wind, 1.0, cfg.steps, cfg.step_minutes, &mut rng, &mut meta.clamped);

    let mut bus_load_p = std::collections::HashMap::new();
    let mut bus_load_q = std::collections::HashMap::new();
    for bus in &spec.power.buses {
        let weight: f64 = rng.gen_range(0.5..1.5);
        let p = daily_series(
            &cfg.load,
            weight,
            cfg.steps,
            cfg.step_minutes,
            &mut rng,
            &mut meta.clamped,
        );
        let q = p.iter().map(|v| v * cfg.q_fraction).collect();
        bus_load_p.insert(bus.id.clone(), p);
        bus_load_q.insert(bus.id.clone(), q);
    }

    let mut water_demand = std::collections::HashMap::new();
    for node in &spec.water.nodes {
        let weight: f64 = rng.gen_range(0.5..1.5);
        water_demand.insert(
            node.id.clone(),
            daily_series(
                &cfg.water,
                weight,
                cfg.steps,
                cfg.step_minutes,
                &mut rng,
                &mut meta.clamped,
            ),
        );
    }

    let hydrogen_demand =
        daily_series(&cfg.hydrogen, 1.0, cfg.steps, cfg.step_minutes, &mut rng, &mut meta.clamped);

    (
        Scenario {
            steps: cfg.steps,
            step_minutes: cfg.step_minutes,
            wind_speed,
            bus_load_p,
            bus_load_q,
            water_demand,
            hydrogen_demand,
            realized_prefix: 0,
        },
        meta,
    )
}

/// Natural cubic spline on 24 hourly values evaluated every 5 minutes
/// (288 points); exact at the knots, C^2 in between, extrapolating the
/// final segment past hour 23.
pub fn spline_5min(hourly: &[f64; HOURS]) -> Vec<f64> {
    let spline = NaturalSpline::fit(hourly);
    (0..288).map(|k| spline.eval(k as f64 / 12.0)).collect()
}

/// Natural cubic spline with unit knot spacing.
pub struct NaturalSpline {
    y: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn fit(y: &[f64]) -> NaturalSpline {
        let n = y.len();
        assert!(n >= 2, "spline needs at least two knots");
        assert!(y.iter().all(|v| v.is_finite()), "spline input must be finite");
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system: m[i-1] + 4 m[i] + m[i+1] = 6 d2[i]
            let dim = n - 2;
            let mut diag = vec![4.0; dim];
            let mut rhs: Vec<f64> =
                (1..n - 1).map(|i| 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1])).collect();
            for i in 1..dim {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            m[dim] = rhs[dim - 1] / diag[dim - 1];
            for i in (0..dim - 1).rev() {
                m[i + 1] = (rhs[i] - m[i + 2]) / diag[i];
            }
        }
        NaturalSpline { y: y.to_vec(), m }
    }

    /// Evaluates at `x` in knot units; values past the last knot continue
    /// the final cubic segment.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let i = (x.floor() as isize).clamp(0, n as isize - 2) as usize;
        let u = x - i as f64;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        m0 * (1.0 - u).powi(3) / 6.0
            + m1 * u.powi(3) / 6.0
            + (y0 - m0 / 6.0) * (1.0 - u)
            + (y1 - m1 / 6.0) * u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_gives_constant_output() {
        let v = spline_5min(&[7.25; 24]);
        assert_eq!(v.len(), 288);
        for x in v {
            assert!((x - 7.25).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_input_reproduced_exactly() {
        let mut hourly = [0.0; 24];
        for (h, v) in hourly.iter_mut().enumerate() {
            *v = 3.0 + 0.5 * h as f64;
        }
        let v = spline_5min(&hourly);
        for (k, x) in v.iter().enumerate() {
            let want = 3.0 + 0.5 * (k as f64 / 12.0);
            assert!((x - want).abs() < 1e-10, "k={k}: {x} vs {want}");
        }
    }

    #[test]
    fn knots_are_interpolated_exactly() {
        let mut hourly = [0.0; 24];
        for (h, v) in hourly.iter_mut().enumerate() {
            *v = (h as f64 * 0.7).sin() * 4.0 + 10.0;
        }
        let v = spline_5min(&hourly);
        for h in 0..24 {
            assert!((v[h * 12] - hourly[h]).abs() < 1e-12);
        }
    }

    #[test]
    fn second_differences_are_continuous_at_knots() {
        let mut hourly = [0.0; 24];
        let mut state = 88172645463325252u64;
        for v in hourly.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            *v = (state >> 33) as f64 / (1u64 << 31) as f64 * 10.0;
        }
        let spline = NaturalSpline::fit(&hourly);
        // one-sided 4-point second-derivative stencils are exact for
        // cubics, so the two estimates disagree only through rounding
        let h2 = 1e-2;
        let d2 = |x: f64, step: f64| {
            (2.0 * spline.eval(x) - 5.0 * spline.eval(x + step)
                + 4.0 * spline.eval(x + 2.0 * step)
                - spline.eval(x + 3.0 * step))
                / (step * step)
        };
        for h in 1..23 {
            let x = h as f64;
            let left = d2(x, -h2);
            let right = d2(x, h2);
            assert!(
                (left - right).abs() < 1e-9,
                "second derivative jump at knot {h}: {left} vs {right}"
            );
        }
    }
}
