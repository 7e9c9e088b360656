//! Explicit four-stage order barrier: a checked derivation plus a random search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{order_conditions, FreeMask, Tableau};

/// The Z-side conditions with the three-stage solution force this value of `α32`.
pub fn alpha32_from_z_conditions(c2: f64, c3: f64) -> f64 {
    c3 * (c3 - c2) / (c2 * (2.0 - 3.0 * c2))
}

#[derive(Clone, Debug, Serialize)]
pub struct SpotCheck {
    pub c2: f64,
    pub c3: f64,
    pub alpha32: f64,
    /// `a32` of the three-stage constructor at the same abscissae.
    pub three_stage_a32: f64,
    pub combined_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RandomSearchSummary {
    pub seed: u64,
    pub samples: usize,
    /// Samples for which the order-4 system was reported satisfied.
    pub satisfied: usize,
    /// Smallest, over samples, of the largest order-4 residual.
    pub min_max_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierCertificate {
    pub steps: Vec<String>,
    pub contradiction: String,
    pub sample_count: usize,
    /// Sample point with the smallest combined residual, and that residual.
    pub argmin: (f64, f64),
    pub min_residual: f64,
    pub spot_checks: Vec<SpotCheck>,
}

/// Combined-system residual at `(c2, c3)`: the Y-side ratio
/// `(c3 - c2) c3 / (α32 c2)` must equal `2 - 4 c2`, with `α32` taken from the
/// Z side. Algebraically it reduces to `c2`.
fn combined_residual(c2: f64, c3: f64) -> f64 {
    let alpha32 = alpha32_from_z_conditions(c2, c3);
    (c3 - c2) * c3 / (alpha32 * c2) - (2.0 - 4.0 * c2)
}

pub fn order4_barrier_certificate() -> BarrierCertificate {
    let steps = vec![
        "Z side: beta~2 c2 + beta~3 c3 = 1/2 and beta~2 c2^2 + beta~3 c3^2 = 1/3 give \
         beta3 = (2 - 3 c2) / (6 c3 (c3 - c2)); then beta3 alpha32 c2 = 1/6 forces \
         alpha32 = c3 (c3 - c2) / (c2 (2 - 3 c2))"
            .to_string(),
        "Y side: (1/12 condition) - c2 (1/6 condition) gives b4 alpha~43 (c3 - c2) c3 = 1/12 - c2/6; \
         dividing by b4 alpha~43 alpha~32 c2 = 1/24 gives (c3 - c2) c3 / (alpha32 c2) = 2 - 4 c2"
            .to_string(),
        "substituting alpha32 gives 2 - 3 c2 = 2 - 4 c2, i.e. c2 = 0".to_string(),
    ];

    let mut best = (f64::INFINITY, (0.0, 0.0));
    let mut count = 0;
    let n = 400;
    for i in 1..n {
        let c2 = i as f64 / n as f64;
        if (c2 - 2.0 / 3.0).abs() < 1e-9 {
            continue;
        }
        for k in 1..=n {
            let c3 = k as f64 / n as f64;
            if c3 <= c2 || c3 >= 1.0 {
                continue;
            }
            count += 1;
            let r = combined_residual(c2, c3).abs();
            if r < best.0 {
                best = (r, (c2, c3));
            }
        }
    }

    let spot = |c2: f64, c3: f64| {
        let t3 = super::three_stage(c2, c3, 0.0).expect("admissible spot point");
        SpotCheck {
            c2,
            c3,
            alpha32: alpha32_from_z_conditions(c2, c3),
            three_stage_a32: t3.a[2][1],
            combined_residual: combined_residual(c2, c3),
        }
    };
    BarrierCertificate {
        steps,
        contradiction: "c2 = 0 required, c2 > 0 assumed".to_string(),
        sample_count: count,
        argmin: best.1,
        min_residual: best.0,
        spot_checks: vec![spot(0.5, 1.0), spot(1.0 / 3.0, 2.0 / 3.0), spot(0.25, 0.75)],
    }
}

#[allow(clippy::needless_range_loop)]
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = ((row + 1)..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    Some(x)
}

/// Builds the four-stage explicit tableau at `0 < c2 < c3 < c4 = 1` that
/// solves every order-4 condition except `b4 α43 α32 c2 = 1/24` and the
/// `β`–`α` coupling, when the linear systems are nonsingular.
pub fn four_stage_candidate(c2: f64, c3: f64) -> Option<Tableau<f64>> {
    let c = [0.0, c2, c3, 1.0];
    let vander: Vec<Vec<f64>> = (0..4).map(|p| c.iter().map(|x| x.powi(p)).collect()).collect();
    let b = solve_dense(vander, vec![1.0, 0.5, 1.0 / 3.0, 0.25])?;
    // Unknowns alpha32, alpha42, alpha43 from the 1/6, 1/8 and 1/12 conditions.
    let m = vec![
        vec![b[2] * c2, b[3] * c2, b[3] * c3],
        vec![b[2] * c2 * c3, b[3] * c2, b[3] * c3],
        vec![b[2] * c2 * c2, b[3] * c2 * c2, b[3] * c3 * c3],
    ];
    let al = solve_dense(m, vec![1.0 / 6.0, 1.0 / 8.0, 1.0 / 12.0])?;
    let beta = solve_dense(
        vec![vec![1.0, 1.0, 1.0], vec![0.0, c2, c3], vec![0.0, c2 * c2, c3 * c3]],
        vec![1.0, 0.5, 1.0 / 3.0],
    )?;
    let mut t = Tableau::zeros(vec![0.0, c2, c3, 1.0, 1.0]);
    t.alpha[1][0] = c2;
    t.alpha[2][1] = al[0];
    t.alpha[2][0] = c3 - al[0];
    t.alpha[3][1] = al[1];
    t.alpha[3][2] = al[2];
    t.alpha[3][0] = 1.0 - al[1] - al[2];
    t.a = t.alpha.clone();
    t.b = vec![b[0], b[1], b[2], b[3], 0.0];
    t.beta = vec![beta[0], beta[1], beta[2], 0.0];
    t.free = FreeMask::none(4);
    t.free.beta[3] = true;
    Some(t)
}

/// Seeded random search over admissible four-stage abscissae.
pub fn random_order4_search(samples: usize, seed: u64) -> RandomSearchSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut satisfied = 0;
    let mut min_max = f64::INFINITY;
    let mut done = 0;
    while done < samples {
        let x: f64 = rng.gen_range(0.01..0.99);
        let y: f64 = rng.gen_range(0.01..0.99);
        let (c2, c3) = if x < y { (x, y) } else { (y, x) };
        if c3 - c2 < 1e-3 {
            continue;
        }
        let Some(t) = four_stage_candidate(c2, c3) else { continue };
        done += 1;
        match order_conditions(&t, 4, false) {
            Ok(rep) => {
                if rep.satisfied {
                    satisfied += 1;
                }
                min_max = min_max.min(rep.max_abs_residual());
            }
            Err(_) => continue,
        }
    }
    RandomSearchSummary { seed, samples, satisfied, min_max_residual: min_max }
}
