//! Two-player TrueSkill updates with a draw margin and no dynamics term
//! unless `tau` is set.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::{Error, Result};

/// Gaussian skill belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub mu: f64,
    pub sigma: f64,
}

impl Rating {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::Config(format!("rating needs finite mu and sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(Rating { mu, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSkillParams {
    pub mu0: f64,
    pub sigma0: f64,
    /// Performance noise.
    pub beta: f64,
    /// Additive dynamics applied to both sigmas before each update.
    pub tau: f64,
    pub draw_probability: f64,
}

impl Default for TrueSkillParams {
    fn default() -> Self {
        let sigma0 = 25.0 / 3.0;
        TrueSkillParams {
            mu0: 25.0,
            sigma0,
            beta: sigma0 / 2.0,
            tau: 0.0,
            draw_probability: 0.10,
        }
    }
}

impl TrueSkillParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu0.is_finite()
            && self.sigma0 > 0.0
            && self.sigma0.is_finite()
            && self.beta > 0.0
            && self.beta.is_finite()
            && self.tau >= 0.0
            && self.tau.is_finite()
            && (0.0..1.0).contains(&self.draw_probability);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trueskill parameters {self:?}")))
        }
    }

    pub fn prior(&self) -> Rating {
        Rating { mu: self.mu0, sigma: self.sigma0 }
    }

    /// Performance-difference margin inside which a comparison counts as a draw.
    pub fn draw_margin(&self) -> f64 {
        if self.draw_probability == 0.0 {
            return 0.0;
        }
        normal().inverse_cdf((self.draw_probability + 1.0) / 2.0) * 2f64.sqrt() * self.beta
    }
}

fn normal() -> Normal {
    Normal::standard()
}

fn pdf(x: f64) -> f64 {
    normal().pdf(x)
}

fn cdf(x: f64) -> f64 {
    normal().cdf(x)
}

/// Mean correction for a win, `t` the scaled skill gap and `eps` the scaled margin.
pub fn v_win(t: f64, eps: f64) -> f64 {
    let x = t - eps;
    let denom = cdf(x);
    if denom > f64::MIN_POSITIVE {
        pdf(x) / denom
    } else {
        -x
    }
}

/// Variance correction for a win.
pub fn w_win(t: f64, eps: f64) -> f64 {
    let x = t - eps;
    let denom = cdf(x);
    if denom > f64::MIN_POSITIVE {
        let v = pdf(x) / denom;
        v * (v + x)
    } else if x < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Mean correction for a draw. Odd in `t`.
pub fn v_draw(t: f64, eps: f64) -> f64 {
    let abs_t = t.abs();
    let a = eps - abs_t;
    let b = -eps - abs_t;
    let denom = cdf(a) - cdf(b);
    let v = if denom > f64::MIN_POSITIVE {
        (pdf(b) - pdf(a)) / denom
    } else {
        a
    };
    if t < 0.0 {
        -v
    } else {
        v
    }
}

/// Variance correction for a draw. Even in `t`.
pub fn w_draw(t: f64, eps: f64) -> f64 {
    let abs_t = t.abs();
    let a = eps - abs_t;
    let b = -eps - abs_t;
    let denom = cdf(a) - cdf(b);
    if denom > f64::MIN_POSITIVE {
        let v = (pdf(b) - pdf(a)) / denom;
        v * v + (a * pdf(a) - b * pdf(b)) / denom
    } else {
        1.0
    }
}

fn with_dynamics(r: Rating, tau: f64) -> (f64, f64) {
    (r.mu, r.sigma * r.sigma + tau * tau)
}

fn finish(mu: f64, var: f64) -> Result<Rating> {
    if mu.is_finite() && var > 0.0 && var.is_finite() {
        Ok(Rating { mu, sigma: var.sqrt() })
    } else {
        Err(Error::Numeric(format!("trueskill update produced mu={mu}, var={var}")))
    }
}

/// Updates after `winner` beat `loser`.
pub fn rate_win(winner: Rating, loser: Rating, p: &TrueSkillParams) -> Result<(Rating, Rating)> {
    let (mu_w, var_w) = with_dynamics(winner, p.tau);
    let (mu_l, var_l) = with_dynamics(loser, p.tau);
    let c2 = 2.0 * p.beta * p.beta + (var_w + var_l);
    let c = c2.sqrt();
    let t = (mu_w - mu_l) / c;
    let eps = p.draw_margin() / c;
    let v = v_win(t, eps);
    let w = w_win(t, eps);
    let new_w = finish(mu_w + var_w / c * v, var_w * (1.0 - var_w / c2 * w))?;
    let new_l = finish(mu_l - var_l / c * v, var_l * (1.0 - var_l / c2 * w))?;
    Ok((new_w, new_l))
}

/// Updates after a draw. Swapping the arguments swaps the results exactly.
pub fn rate_draw(a: Rating, b: Rating, p: &TrueSkillParams) -> Result<(Rating, Rating)> {
    let (mu_a, var_a) = with_dynamics(a, p.tau);
    let (mu_b, var_b) = with_dynamics(b, p.tau);
    let c2 = 2.0 * p.beta * p.beta + (var_a + var_b);
    let c = c2.sqrt();
    let t = (mu_a - mu_b) / c;
    let eps = p.draw_margin() / c;
    let v = v_draw(t, eps);
    let w = w_draw(t, eps);
    let new_a = finish(mu_a + var_a / c * v, var_a * (1.0 - var_a / c2 * w))?;
    let new_b = finish(mu_b - var_b / c * v, var_b * (1.0 - var_b / c2 * w))?;
    Ok((new_a, new_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_margin_is_positive_and_small() {
        let eps = TrueSkillParams::default().draw_margin();
        // Φ⁻¹(0.55) ≈ 0.125661; times √2 · 25/6
        assert!((eps - 0.125_661_346_855 * 2f64.sqrt() * 25.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn win_from_equal_priors() {
        let p = TrueSkillParams::default();
        let (w, l) = rate_win(p.prior(), p.prior(), &p).unwrap();
        assert!((w.mu - 29.4).abs() < 0.05 && (w.sigma - 7.17).abs() < 0.01);
        assert_eq!((w.mu - 25.0).to_bits(), (25.0 - l.mu).to_bits());
        assert_eq!(w.sigma, l.sigma);
    }

    #[test]
    fn draw_from_equal_priors_keeps_means() {
        let p = TrueSkillParams::default();
        let (a, b) = rate_draw(p.prior(), p.prior(), &p).unwrap();
        assert_eq!(a.mu, 25.0);
        assert_eq!(b.mu, 25.0);
        assert!(a.sigma < p.sigma0 && a.sigma == b.sigma);
    }

    #[test]
    fn extreme_gap_stays_finite() {
        let p = TrueSkillParams::default();
        let strong = Rating::new(500.0, 1.0).unwrap();
        let weak = Rating::new(-500.0, 1.0).unwrap();
        let (w, l) = rate_win(weak, strong, &p).unwrap();
        assert!(w.mu > -500.0 && l.mu < 500.0);
        let (a, b) = rate_draw(strong, weak, &p).unwrap();
        assert!(a.mu < 500.0 && b.mu > -500.0);
        assert!(a.sigma > 0.0 && b.sigma > 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        let p = TrueSkillParams { draw_probability: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
        assert!(Rating::new(0.0, 0.0).is_err());
    }
}
