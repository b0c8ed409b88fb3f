//! Closed-form projection of the end-of-trial functionals `v(tau)`,
//! `m(tau)` and the expected event fraction `G(tau)` for the ramp-plateau
//! weight, plus the trial duration that reaches a target event fraction.
//!
//! Assumptions: other-cause mortality proportional to the pooled hazard
//! (`S_oth = exp(-theta H)`), constant allocation `e0`, accrual uniform on the
//! `H` scale, and the weight expressed through `H`:
//! `Q = (1 - exp(-min(H, H(t_c)))) / (1 - exp(-H(t_c)))`. With the change of
//! variables `eta = H(xi)` every integral reduces to sums of
//! `int exp(-l eta)` and `int (H(tau) - eta) exp(-l eta)` over the pieces cut
//! by `H(t_c)` and `H(tau - t_er)`.
//!
//! The `H`-form of the weight coincides with `min(t / t_c, 1)` only when `H`
//! is exponential-like in `t`; the closed forms use the `H`-form throughout.

use serde::{Deserialize, Serialize};

use crate::quadrature;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInputs {
    /// Pooled cumulative hazard at the ramp knot `t_c`.
    #[serde(rename = "H_tc")]
    pub h_tc: f64,
    /// Pooled cumulative hazard at `tau - t_er`.
    #[serde(rename = "H_tau_minus_ter")]
    pub h_tau_minus_ter: f64,
    #[serde(rename = "H_tau")]
    pub h_tau: f64,
    /// Other-cause to pooled hazard ratio.
    pub theta: f64,
    /// Allocation fraction to the intervention arm.
    #[serde(default = "half")]
    pub e0: f64,
    pub t_c: f64,
    /// Time from first to last randomization.
    pub t_er: f64,
    pub tau: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub v_tau: f64,
    pub m_tau: f64,
    #[serde(rename = "G_tau")]
    pub g_tau: f64,
}

/// `int_l^u exp(-k eta) d eta`.
fn exp_integral(k: f64, l: f64, u: f64) -> f64 {
    if u <= l {
        return 0.0;
    }
    (-k * l).exp() * -(-k * (u - l)).exp_m1() / k
}

/// `int_0^d s exp(-k s) ds`, by series when `k d` is small.
fn first_exp_moment(k: f64, d: f64) -> f64 {
    let x = k * d;
    if x < 0.5 {
        // 1 - (1 + x) e^-x = sum_{n>=2} (-1)^n (n - 1) x^n / n!
        let (mut sum, mut pow) = (0.0, -x);
        for n in 2..30 {
            pow *= -x / n as f64;
            sum += (n - 1) as f64 * pow;
        }
        return sum / (k * k);
    }
    (-(-x).exp_m1() - x * (-x).exp()) / (k * k)
}

/// `int_l^u (c - eta) exp(-k eta) d eta`.
fn lin_exp_integral(k: f64, c: f64, l: f64, u: f64) -> f64 {
    if u <= l {
        return 0.0;
    }
    let d = u - l;
    (-k * l).exp() * ((c - l) * -(-k * d).exp_m1() / k - first_exp_moment(k, d))
}

impl ProjectionInputs {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.h_tc,
            self.h_tau_minus_ter,
            self.h_tau,
            self.theta,
            self.e0,
            self.t_c,
            self.t_er,
            self.tau,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("projection inputs must be finite"));
        }
        if self.h_tc < 0.0 || self.h_tau_minus_ter < 0.0 || self.h_tau < 0.0 {
            return Err(Error::invalid("cumulative hazard landmarks must be >= 0"));
        }
        if self.theta < 0.0 {
            return Err(Error::invalid("theta must be >= 0"));
        }
        if !(self.e0 > 0.0 && self.e0 < 1.0) {
            return Err(Error::invalid("e0 must lie in (0, 1)"));
        }
        if !(self.t_c > 0.0) {
            return Err(Error::invalid("t_c must be > 0"));
        }
        if !(self.t_er >= 0.0 && self.t_er < self.tau) {
            return Err(Error::invalid("need 0 <= t_er < tau"));
        }
        let pts = [
            (self.t_c, self.h_tc),
            (self.tau - self.t_er, self.h_tau_minus_ter),
            (self.tau, self.h_tau),
        ];
        for a in &pts {
            for b in &pts {
                if a.0 < b.0 && a.1 > b.1 {
                    return Err(Error::invalid(
                        "cumulative hazard landmarks must be nondecreasing in time",
                    ));
                }
                if a.0 == b.0 && a.1 != b.1 {
                    return Err(Error::invalid("landmarks at equal times must have equal H"));
                }
            }
        }
        Ok(())
    }

    fn accrual_span(&self) -> Result<f64> {
        let span = self.h_tau - self.h_tau_minus_ter;
        if self.t_er > 0.0 && span <= 0.0 && self.h_tau > 0.0 {
            return Err(Error::DegenerateAccrual);
        }
        Ok(span)
    }

    fn c0(&self) -> f64 {
        self.e0 * (1.0 - self.e0)
    }

    /// `v(tau) = <Q|IF|Q>_tau`.
    pub fn variance_at_tau(&self) -> Result<f64> {
        self.validate()?;
        let span = self.accrual_span()?;
        let (a, b, c) = (self.h_tc, self.h_tau_minus_ter, self.h_tau);
        let k = self.theta + 1.0;
        let ramp_top = a.min(c);
        let hm = a.min(b);
        let mut ramp = ramp_piece(2, k, 0.0, hm, None);
        if span > 0.0 && b < ramp_top {
            ramp += ramp_piece(2, k, b, ramp_top, Some((c, span)));
        }
        let mut plateau = exp_integral(k, a, b);
        if span > 0.0 {
            plateau += lin_exp_integral(k, c, a.max(b), c) / span;
        }
        Ok(self.c0() * (self.ramp_scale(2) * ramp + plateau))
    }

    /// `m(tau) = <Q|IF|1>_tau`.
    pub fn first_moment_at_tau(&self) -> Result<f64> {
        self.validate()?;
        let span = self.accrual_span()?;
        let (a, b, c) = (self.h_tc, self.h_tau_minus_ter, self.h_tau);
        let k = self.theta + 1.0;
        let ramp_top = a.min(c);
        let hm = a.min(b);
        let mut ramp = ramp_piece(1, k, 0.0, hm, None);
        if span > 0.0 && b < ramp_top {
            ramp += ramp_piece(1, k, b, ramp_top, Some((c, span)));
        }
        let mut plateau = exp_integral(k, a, b);
        if span > 0.0 {
            plateau += lin_exp_integral(k, c, a.max(b), c) / span;
        }
        Ok(self.c0() * (self.ramp_scale(1) * ramp + plateau))
    }

    /// Expected event fraction `G(tau)`.
    pub fn event_mass(&self) -> Result<f64> {
        self.validate()?;
        let span = self.accrual_span()?;
        Ok(g_closed(self.theta + 1.0, self.h_tau_minus_ter, self.h_tau, span))
    }

    pub fn project(&self) -> Result<Projection> {
        Ok(Projection {
            v_tau: self.variance_at_tau()?,
            m_tau: self.first_moment_at_tau()?,
            g_tau: self.event_mass()?,
        })
    }

    /// `1 / (1 - e^{-H(t_c)})^power`, the normalization of the ramp; the ramp
    /// is empty when `H(t_c) = 0`.
    fn ramp_scale(&self, power: i32) -> f64 {
        if self.h_tc > 0.0 {
            (-(-self.h_tc).exp_m1()).powi(-power)
        } else {
            0.0
        }
    }

    /// Adaptive-quadrature evaluation of the `eta` integrals directly from
    /// the integrands, independent of the closed forms.
    pub fn oracle(&self) -> Result<OracleValues> {
        self.validate()?;
        let span = self.accrual_span()?;
        let (a, b, c) = (self.h_tc, self.h_tau_minus_ter, self.h_tau);
        let theta = self.theta;
        let c0 = self.c0();
        let weight = move |eta: f64| {
            if a > 0.0 {
                (1.0 - (-eta.min(a)).exp()) / (1.0 - (-a).exp())
            } else {
                1.0
            }
        };
        let live = move |eta: f64| {
            if span > 0.0 {
                ((c - eta) / span).min(1.0)
            } else {
                1.0
            }
        };
        let dg = move |eta: f64| (-theta * eta).exp() * live(eta) * (-eta).exp();
        let breaks = [a, b];
        let tol = 1e-15;
        let v = quadrature::integrate(|e| c0 * weight(e).powi(2) * dg(e), 0.0, c, &breaks, tol);
        let m = quadrature::integrate(|e| c0 * weight(e) * dg(e), 0.0, c, &breaks, tol);
        let g = quadrature::integrate(dg, 0.0, c, &breaks, tol);
        Ok(OracleValues {
            v_tau: v,
            m_tau: m,
            g_tau: g,
            one_one: c0 * g,
        })
    }
}

/// `int_0^x s^m (1 - e^-s)^p e^{-k s} ds` for `m` in {0, 1}. The binomial
/// expansion cancels catastrophically near the origin, so small `x` uses the
/// Taylor series of the integrand instead.
fn ramp_moment(p: i32, m: i32, k: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x * (k + p as f64) <= RAMP_SERIES_LIMIT {
        const N: usize = 40;
        let mut series = [0.0; N];
        let mut term = 1.0;
        for (n, c) in series.iter_mut().enumerate() {
            *c = term;
            term *= -k / (n + 1) as f64;
        }
        let mut one_minus = [0.0; N];
        let mut fact = 1.0;
        for n in 1..N {
            fact *= n as f64;
            one_minus[n] = if n % 2 == 1 { 1.0 } else { -1.0 } / fact;
        }
        for _ in 0..p {
            let mut next = [0.0; N];
            for i in 0..N {
                for j in 1..N - i {
                    next[i + j] += series[i] * one_minus[j];
                }
            }
            series = next;
        }
        return series
            .iter()
            .enumerate()
            .map(|(n, c)| {
                let e = n as i32 + m + 1;
                c * x.powi(e) / e as f64
            })
            .sum();
    }
    let binom = [[1.0, 0.0, 0.0], [1.0, -1.0, 0.0], [1.0, -2.0, 1.0]];
    (0..=p as usize)
        .map(|i| {
            let ki = k + i as f64;
            let piece = if m == 0 {
                -(-ki * x).exp_m1() / ki
            } else {
                (-(-ki * x).exp_m1() - ki * x * (-ki * x).exp()) / (ki * ki)
            };
            binom[p as usize][i] * piece
        })
        .sum()
}

/// `int_l^u (1 - e^-eta)^p e^{-k eta} w(eta) d eta` with `w = 1` or
/// `w = (c - eta) / span`.
fn ramp_piece(p: i32, k: f64, l: f64, u: f64, anchored: Option<(f64, f64)>) -> f64 {
    if u <= l {
        return 0.0;
    }
    let diff = |m: i32| ramp_moment(p, m, k, u) - ramp_moment(p, m, k, l);
    match anchored {
        None => diff(0),
        Some((c, span)) => (c * diff(0) - diff(1)) / span,
    }
}

const RAMP_SERIES_LIMIT: f64 = 2.0;

fn g_closed(k: f64, b: f64, c: f64, span: f64) -> f64 {
    if span > 0.0 {
        exp_integral(k, 0.0, b) + lin_exp_integral(k, c, b, c) / span
    } else {
        exp_integral(k, 0.0, c)
    }
}

/// Quadrature values of the end-of-trial functionals, plus `<1|IF|1>_tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValues {
    pub v_tau: f64,
    pub m_tau: f64,
    #[serde(rename = "G_tau")]
    pub g_tau: f64,
    pub one_one: f64,
}

/// Piecewise-linear pooled cumulative hazard through `(0, 0)` and the given
/// knots, extrapolated linearly beyond the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl HazardCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::invalid("hazard curve needs matching, non-empty knots"));
        }
        let mut pt = 0.0;
        let mut pv = 0.0;
        for (&t, &v) in times.iter().zip(&values) {
            if !(t > pt) || !(v >= pv) {
                return Err(Error::invalid(
                    "hazard knots must have increasing times and nondecreasing values",
                ));
            }
            pt = t;
            pv = v;
        }
        Ok(Self { times, values })
    }

    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.times.partition_point(|&x| x < t);
        let (t0, h0, t1, h1) = if k == 0 {
            (0.0, 0.0, self.times[0], self.values[0])
        } else if k < self.times.len() {
            (self.times[k - 1], self.values[k - 1], self.times[k], self.values[k])
        } else {
            let n = self.times.len();
            if n == 1 {
                (0.0, 0.0, self.times[0], self.values[0])
            } else {
                (self.times[n - 2], self.values[n - 2], self.times[n - 1], self.values[n - 1])
            }
        };
        h0 + (h1 - h0) * (t - t0) / (t1 - t0)
    }

    /// Landmark inputs for a given end time.
    pub fn inputs(&self, theta: f64, e0: f64, t_c: f64, t_er: f64, tau: f64) -> ProjectionInputs {
        ProjectionInputs {
            h_tc: self.at(t_c),
            h_tau_minus_ter: self.at(tau - t_er),
            h_tau: self.at(tau),
            theta,
            e0,
            t_c,
            t_er,
            tau,
        }
    }

    /// Largest gap on `[0, t_c]` between the calendar ramp `t/t_c` and the
    /// hazard-scale ramp `(1 - e^{-H(t)}) / (1 - e^{-H(t_c)})` the closed forms
    /// assume. Zero only when the two coincide.
    pub fn ramp_discrepancy(&self, t_c: f64) -> f64 {
        let denom = -(-self.at(t_c)).exp_m1();
        if !(t_c > 0.0) || denom <= 0.0 {
            return f64::NAN;
        }
        (0..=400)
            .map(|i| {
                let t = t_c * i as f64 / 400.0;
                (t / t_c + (-self.at(t)).exp_m1() / denom).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Expected event fraction for a trial ending at `tau`.
    pub fn event_mass_at(&self, theta: f64, t_er: f64, tau: f64) -> f64 {
        let c = self.at(tau);
        let b = self.at(tau - t_er);
        g_closed(theta + 1.0, b, c, c - b)
    }

    /// Duration `tau` at which the expected event fraction reaches `target`,
    /// searched over `[0, last knot]`.
    pub fn solve_duration(&self, theta: f64, t_er: f64, target: f64) -> Result<f64> {
        if !(target >= 0.0) {
            return Err(Error::invalid("target event fraction must be >= 0"));
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        let t_max = *self.times.last().expect("non-empty");
        let sup = self.event_mass_at(theta, t_er, t_max);
        if target > sup {
            return Err(Error::EventsUnattainable { target, sup });
        }
        let (mut lo, mut hi) = (0.0, t_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let g = self.event_mass_at(theta, t_er, mid);
            if (g - target).abs() < 1e-12 || hi - lo < 1e-14 {
                return Ok(mid);
            }
            if g < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
