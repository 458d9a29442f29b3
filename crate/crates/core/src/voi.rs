//! Stage value of information at the long-run steady state.
//!
//! The per-period profit of the learning monopolist decomposes into a
//! no-learning baseline plus `K Σ K' / 4`; this module studies the map
//! `h -> K*(h)^2 Σ*(h)` (the stage VoI), its un-squared pro-rata variant
//! `K* Σ*`, and the growth regime classification of the `h = 0` extremum.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::search::golden_min;
use crate::steady_state::{gain_star, sigma_star_closed_form};

/// Nature of the stage-VoI extremum at zero signal noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Local maximum at `h = 0`: the curve dips, then grows without bound
    /// (the non-monotone regime).
    MaxAtZero,
    /// Local minimum at `h = 0`: the curve is nondecreasing from the start.
    MinAtZero,
    /// Curvature indistinguishable from zero.
    Degenerate,
}

/// Sign of a numerically estimated derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

/// Growth band `[d_lower, d_upper]` in which the analytic classifier puts a
/// maximum at zero signal noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthRegion {
    pub g: f64,
    pub d_lower: f64,
    pub d_upper: f64,
}

/// Sampled VoI and pro-rata curves over a signal-noise grid.
#[derive(Debug, Clone)]
pub struct VoiCurve {
    pub h_grid: Vec<f64>,
    /// `K*(h)^2 Σ*(h)` per grid point.
    pub voi: Vec<f64>,
    /// `K*(h) Σ*(h)` per grid point.
    pub pro_rata: Vec<f64>,
    pub classification: Classification,
    /// `(h, voi)` of the bracketed interior minimum, when one exists.
    pub interior_min: Option<(f64, f64)>,
}

/// Stage VoI on explicit arguments: `K Σ K'`.
pub fn voi_stage(k: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    k * sigma * k.transpose()
}

/// Pro-rata VoI on explicit arguments: `K Σ` (gain not squared).
pub fn voi_pro_rata(k: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    k * sigma
}

/// Stage VoI at the scalar steady state, `K*(h)^2 Σ*(h)`. Accepts negative
/// `h` (the curve is even in `h`), which the difference stencils rely on.
pub fn stage_voi_at(d: f64, f: f64, g: f64, h: f64) -> Result<f64> {
    let s = sigma_star_closed_form(d, f, g, h.abs())?;
    let k = gain_star(d, g, h, s)?;
    Ok(k * k * s)
}

/// Pro-rata VoI at the scalar steady state, `K*(h) Σ*(h)`.
pub fn pro_rata_at(d: f64, f: f64, g: f64, h: f64) -> Result<f64> {
    let s = sigma_star_closed_form(d, f, g, h.abs())?;
    let k = gain_star(d, g, h, s)?;
    Ok(k * s)
}

/// Growth band of the analytic classifier:
/// `d_upper = sqrt(4 g^4 + 8 g^2 + 3) / (2 g^2 + 1)`, always in `(1, sqrt 3]`.
pub fn growth_threshold(g: f64) -> Result<GrowthRegion> {
    if g.is_nan() || g <= 0.0 {
        return Err(Error::Domain(format!("g must be positive (got {g})")));
    }
    let g2 = g * g;
    let d_upper = (4.0 * g2 * g2 + 8.0 * g2 + 3.0).sqrt() / (2.0 * g2 + 1.0);
    Ok(GrowthRegion {
        g,
        d_lower: 1.0,
        d_upper,
    })
}

/// Analytic second derivative of the stage VoI at `h = 0`:
/// `(d^2 / g^4) (2 g^2 (d^2 - 1) + d^2 - 3)`. Negative means the zero-noise
/// extremum is a maximum. Its sign flips exactly at `growth_threshold`.
pub fn curvature_at_zero(d: f64, g: f64) -> Result<f64> {
    if g.is_nan() || g <= 0.0 {
        return Err(Error::Domain(format!("g must be positive (got {g})")));
    }
    if d.is_nan() || d < 1.0 {
        return Err(Error::Domain(format!("d must be at least 1 (got {d})")));
    }
    let (d2, g2) = (d * d, g * g);
    Ok((d2 / (g2 * g2)) * (2.0 * g2 * (d2 - 1.0) + d2 - 3.0))
}

/// Richardson-refined central second difference of `f` at 0 with base step `s`.
fn second_difference<F: Fn(f64) -> Result<f64>>(f: F, s: f64) -> Result<f64> {
    let stencil =
        |step: f64| -> Result<f64> { Ok((f(step)? - 2.0 * f(0.0)? + f(-step)?) / (step * step)) };
    let coarse = stencil(s)?;
    let fine = stencil(s / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Second derivative of the steady-state stage VoI at `h = 0`, estimated by
/// central differences (steps 1e-3 and 5e-4, one Richardson pass).
pub fn stage_voi_curvature_fd(d: f64, f: f64, g: f64) -> Result<f64> {
    second_difference(|h| stage_voi_at(d, f, g, h), 1e-3)
}

/// Sign of the second derivative of the pro-rata product `K* Σ*` at `h = 0`,
/// by the same difference stencil. Estimates below 1e-6 in magnitude count
/// as zero; the product is exactly flat at `d = 1`.
pub fn pro_rata_curvature_sign(d: f64, f: f64, g: f64) -> Result<Sign> {
    if f.is_nan() || f <= 0.0 || g.is_nan() || g <= 0.0 {
        return Err(Error::Domain("f and g must be positive".into()));
    }
    let est = second_difference(|h| pro_rata_at(d, f, g, h), 1e-3)?;
    Ok(if est.abs() < 1e-6 {
        Sign::Zero
    } else if est > 0.0 {
        Sign::Positive
    } else {
        Sign::Negative
    })
}

/// Sweep the steady-state VoI and pro-rata curves over `h_grid`.
///
/// Classification comes from the sign of `curvature_at_zero` (magnitudes
/// below 1e-9 are `Degenerate`). In the `MaxAtZero` regime with `d > 1` the
/// interior minimum is bracketed at the first descending-then-ascending grid
/// segment and refined by golden-section search to 1e-6 in `h`.
pub fn voi_curve(d: f64, f: f64, g: f64, h_grid: &[f64]) -> Result<VoiCurve> {
    if h_grid.is_empty() {
        return Err(Error::Domain("h_grid must be nonempty".into()));
    }
    if h_grid[0] < 0.0 {
        return Err(Error::Domain("h_grid entries must be nonnegative".into()));
    }
    if h_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("h_grid must be strictly increasing".into()));
    }

    let mut voi = Vec::with_capacity(h_grid.len());
    let mut pro_rata = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let s = sigma_star_closed_form(d, f, g, h)?;
        let k = gain_star(d, g, h, s)?;
        voi.push(k * k * s);
        pro_rata.push(k * s);
    }

    let curv = curvature_at_zero(d, g)?;
    let classification = if curv.abs() < 1e-9 {
        Classification::Degenerate
    } else if curv < 0.0 {
        Classification::MaxAtZero
    } else {
        Classification::MinAtZero
    };

    let mut interior_min = None;
    if classification == Classification::MaxAtZero && d > 1.0 {
        // First grid point that descends into and ascends out of a trough.
        for i in 1..voi.len().saturating_sub(1) {
            if voi[i] < voi[i - 1] && voi[i + 1] > voi[i] {
                let min = golden_min(
                    |h| stage_voi_at(d, f, g, h).unwrap_or(f64::INFINITY),
                    h_grid[i - 1],
                    h_grid[i + 1],
                    1e-6,
                );
                interior_min = Some(min);
                break;
            }
        }
    }

    Ok(VoiCurve {
        h_grid: h_grid.to_vec(),
        voi,
        pro_rata,
        classification,
        interior_min,
    })
}
