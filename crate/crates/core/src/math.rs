//! Closed-form rate, probability and binding expressions.
//!
//! Everything here is a pure function. Logarithms are base 2 throughout.
//! Quantities that involve large binomials (C(400,200) is about 2^395) are
//! evaluated as log2 values and only exponentiated at the end.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::codebook::codebook_capacity;
use crate::error::{Error, Result};

/// Error-correction efficiency `f(Q)` used by the closed-form final key rate.
pub const EC_EFFICIENCY: f64 = 1.2;

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}

fn check_q_tol(value: f64) -> Result<()> {
    if (0.0..0.5).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "q_tol",
            value,
            domain: "[0, 0.5)",
        })
    }
}

/// `h(q) = -q log2 q - (1-q) log2 (1-q)` with `0 log 0 = 0`.
pub fn binary_entropy(q: f64) -> Result<f64> {
    check_unit("q", q)?;
    Ok(entropy_term(q) + entropy_term(1.0 - q))
}

fn entropy_term(q: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else {
        -q * q.log2()
    }
}

/// log2 C(n, k) as a cumulative sum of log ratios; never forms the integer.
pub fn log2_binom(n: u64, k: i64) -> Result<f64> {
    if k < 0 || k as u64 > n {
        return Err(Error::InvalidParam {
            name: "k",
            reason: format!("k = {k} must lie in 0..={n}"),
        });
    }
    let k = (k as u64).min(n - k as u64);
    Ok((1..=k)
        .map(|i| ((n - k + i) as f64 / i as f64).log2())
        .sum())
}

/// log2 of an arbitrarily large non-negative integer; `-inf` for zero.
pub fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return x.to_u64().map_or(f64::NEG_INFINITY, |v| (v as f64).log2());
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("64 leading bits fit in u64");
    (top as f64).log2() + shift as f64
}

/// `log2(sum 2^t)` over the given log2 terms, stable for large magnitudes.
pub fn log2_sum_exp2<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp2()).sum::<f64>().log2()
}

/// Inputs to the finite-size key-rate bound and the privacy-amplification
/// discard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    /// N; a frame holds 4N signals.
    pub n_quarter: u32,
    pub q_tol: f64,
    /// Error-correction leakage in bits.
    pub leak_ec: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    /// Error-correction efficiency f.
    pub f_ec: f64,
}

impl RateParams {
    pub fn new(
        n_quarter: u32,
        q_tol: f64,
        leak_ec: f64,
        eps_sec: f64,
        eps_cor: f64,
        f_ec: f64,
    ) -> Result<Self> {
        let p = Self {
            n_quarter,
            q_tol,
            leak_ec,
            eps_sec,
            eps_cor,
            f_ec,
        };
        p.validate()?;
        Ok(p)
    }

    /// Leakage set to `4N * f * h(Q)`, the usual efficiency model.
    pub fn with_model_leakage(
        n_quarter: u32,
        q_tol: f64,
        eps_sec: f64,
        eps_cor: f64,
        f_ec: f64,
    ) -> Result<Self> {
        check_q_tol(q_tol)?;
        let leak = 4.0 * f64::from(n_quarter) * f_ec * binary_entropy(q_tol)?;
        Self::new(n_quarter, q_tol, leak, eps_sec, eps_cor, f_ec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_quarter == 0 {
            return Err(Error::InvalidParam {
                name: "n_quarter",
                reason: "must be at least 1".into(),
            });
        }
        check_q_tol(self.q_tol)?;
        if !(self.leak_ec >= 0.0 && self.leak_ec.is_finite()) {
            return Err(Error::Domain {
                name: "leak_ec",
                value: self.leak_ec,
                domain: "[0, inf)",
            });
        }
        for (name, v) in [("eps_sec", self.eps_sec), ("eps_cor", self.eps_cor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: "(0, 1)",
                });
            }
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(Error::Domain {
                name: "f_ec",
                value: self.f_ec,
                domain: "[1, inf)",
            });
        }
        Ok(())
    }

    fn signals(&self) -> f64 {
        4.0 * f64::from(self.n_quarter)
    }
}

/// Finite-size secret fraction
/// `1 - h(Q) - leak/4N - log2(2 / (eps_sec^2 eps_cor)) / 4N`.
///
/// Negative values mean no key can be extracted and are returned unclamped.
pub fn key_rate_bound(params: &RateParams) -> Result<f64> {
    params.validate()?;
    let n = params.signals();
    let log_term = 1.0 - 2.0 * params.eps_sec.log2() - params.eps_cor.log2();
    Ok(1.0 - binary_entropy(params.q_tol)? - params.leak_ec / n - log_term / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaDiscard {
    /// `R * h(Q / (1 - h(Q)))` with raw key length `R = 4N (1 - h(Q))`.
    pub exact: f64,
    /// `4N h(Q) (1 - h(Q))`.
    pub approx: f64,
}

/// Bits discarded by privacy amplification, in exact and approximate form.
pub fn pa_discard(params: &RateParams) -> Result<PaDiscard> {
    params.validate()?;
    let h = binary_entropy(params.q_tol)?;
    let n = params.signals();
    let raw_len = n * (1.0 - h);
    let arg = params.q_tol / (1.0 - h);
    check_unit("q_tol / (1 - h(q_tol))", arg)?;
    Ok(PaDiscard {
        exact: raw_len * binary_entropy(arg)?,
        approx: n * h * (1.0 - h),
    })
}

/// `(1 - h(Q))^2 - 1.2 h(Q)`.
pub fn final_key_rate(q_tol: f64) -> Result<f64> {
    final_key_rate_with_efficiency(q_tol, EC_EFFICIENCY)
}

/// `(1 - h(Q))^2 - f h(Q)` for an arbitrary efficiency `f`.
pub fn final_key_rate_with_efficiency(q_tol: f64, f_ec: f64) -> Result<f64> {
    check_q_tol(q_tol)?;
    let h = binary_entropy(q_tol)?;
    Ok((1.0 - h).powi(2) - f_ec * h)
}

/// The same rate written as its three subtracted penalties:
/// `1 - h - 1.2 h - h (1 - h)`.
pub fn final_key_rate_expanded(q_tol: f64) -> Result<f64> {
    check_q_tol(q_tol)?;
    let h = binary_entropy(q_tol)?;
    Ok(1.0 - h - EC_EFFICIENCY * h - h * (1.0 - h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// `r(Q_tol)`.
    pub rate: f64,
    pub required_rate: f64,
    pub feasible: bool,
}

/// Whether one BB84 link can fund the OTP encryption of its own 2N
/// same-basis outcomes per frame: `(1/2) 4N r >= 2N`, i.e. `r >= 1`.
pub fn standalone_feasibility(q_tol: f64) -> Result<Feasibility> {
    let required_rate = 1.0;
    let rate = final_key_rate(q_tol)?;
    Ok(Feasibility {
        rate,
        required_rate,
        feasible: rate >= required_rate,
    })
}

/// Per-frame commitment probability `x C(4N,2N) / 2^(6N)`.
pub fn commit_probability(n_quarter: u32, x: &BigUint) -> Result<f64> {
    if n_quarter == 0 {
        return Err(Error::InvalidParam {
            name: "n_quarter",
            reason: "must be at least 1".into(),
        });
    }
    let capacity = codebook_capacity(n_quarter);
    if *x > capacity {
        return Err(Error::CodebookTooLarge {
            x: x.to_string(),
            capacity: capacity.to_string(),
        });
    }
    if x.is_zero() {
        return Ok(0.0);
    }
    let n = u64::from(n_quarter);
    let log_p = log2_big(x) + log2_binom(4 * n, 2 * n as i64)? - 6.0 * n as f64;
    Ok(log_p.exp2())
}

/// Key rate left over after funding commitments with probability `p`:
/// `r - p + p log2(p) / 2N`.
pub fn redundant_key_rate(q_tol: f64, p: f64, n_quarter: u32) -> Result<f64> {
    redundant_key_rate_with_efficiency(q_tol, p, n_quarter, EC_EFFICIENCY)
}

/// [`redundant_key_rate`] on top of `r` with efficiency `f`.
pub fn redundant_key_rate_with_efficiency(q_tol: f64, p: f64, n_quarter: u32, f_ec: f64) -> Result<f64> {
    let r = final_key_rate_with_efficiency(q_tol, f_ec)?;
    check_unit("p", p)?;
    if n_quarter == 0 {
        return Err(Error::InvalidParam {
            name: "n_quarter",
            reason: "must be at least 1".into(),
        });
    }
    if p == 0.0 {
        return Ok(r);
    }
    Ok(r - p + p * p.log2() / (2.0 * f64::from(n_quarter)))
}

/// Which exponent to use for the concentration term of the binding bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingVariant {
    /// `G = (δ N_tol - ⌊E_tol N_tol⌋)^2 / (1 - N_tol)`.
    Literal,
    /// `G = -2 (δ N_tol - ⌊E_tol N_tol⌋)^2 / N_tol`.
    Hoeffding,
}

impl BindingVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            BindingVariant::Literal => "literal",
            BindingVariant::Hoeffding => "hoeffding",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BindingParams {
    pub p_commit: f64,
    pub n_tol: u32,
    pub e_tol: f64,
    /// Number of δ samples for the infimum search.
    pub delta_grid: u32,
    pub variant: BindingVariant,
}

impl BindingParams {
    pub const DEFAULT_GRID: u32 = 10_000;

    pub fn new(p_commit: f64, n_tol: u32, e_tol: f64) -> Self {
        Self {
            p_commit,
            n_tol,
            e_tol,
            delta_grid: Self::DEFAULT_GRID,
            variant: BindingVariant::Literal,
        }
    }

    pub fn with_variant(mut self, variant: BindingVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_grid(mut self, delta_grid: u32) -> Self {
        self.delta_grid = delta_grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("p_commit", self.p_commit)?;
        if self.n_tol < 2 {
            return Err(Error::InvalidParam {
                name: "n_tol",
                reason: format!(
                    "n_tol = {} makes the exponent denominator (1 - n_tol) vanish; need n_tol >= 2",
                    self.n_tol
                ),
            });
        }
        if !(0.0..0.5).contains(&self.e_tol) {
            return Err(Error::Domain {
                name: "e_tol",
                value: self.e_tol,
                domain: "[0, 0.5)",
            });
        }
        if self.delta_grid < 2 {
            return Err(Error::InvalidParam {
                name: "delta_grid",
                reason: "need at least 2 grid points".into(),
            });
        }
        Ok(())
    }
}

/// Upper bound on the binding parameter ε_b:
///
/// ```text
/// p 2^h(p) · inf_δ { [1 - e^G] 2^(1 - (1 - h(δ)) N_tol) + 2 e^G }
///          · [1 + Σ_{k=1}^{⌊E_tol N_tol⌋} (2^k - 1) C(N_tol, k)]
/// ```
///
/// The infimum runs over a uniform grid of `delta_grid` midpoints inside
/// `(E_tol, 1/2)`. Every factor is carried as a log2 value.
pub fn binding_bound(bp: &BindingParams) -> Result<f64> {
    bp.validate()?;
    if bp.p_commit == 0.0 {
        return Ok(0.0);
    }
    let n = f64::from(bp.n_tol);
    let floor_errs = (bp.e_tol * n).floor();

    let log_lead = bp.p_commit.log2() + binary_entropy(bp.p_commit)?;

    let sum_terms = (1..=floor_errs as i64).map(|k| {
        let log_pow = k as f64 + (-(-(k as f64)).exp2()).ln_1p() / std::f64::consts::LN_2;
        log_pow + log2_binom(u64::from(bp.n_tol), k).expect("k <= floor(E_tol N_tol) <= N_tol")
    });
    let log_count = log2_sum_exp2(std::iter::once(0.0).chain(sum_terms));

    let step = (0.5 - bp.e_tol) / f64::from(bp.delta_grid);
    let mut log_inf = f64::INFINITY;
    for i in 0..bp.delta_grid {
        let delta = bp.e_tol + step * (f64::from(i) + 0.5);
        let dev = (delta * n - floor_errs).powi(2);
        let g = match bp.variant {
            BindingVariant::Literal => dev / (1.0 - n),
            BindingVariant::Hoeffding => -2.0 * dev / n,
        };
        let tail = 1.0 - (1.0 - binary_entropy(delta)?) * n;
        // log2(1 - e^G); -inf when G == 0
        let log_keep = (-g.exp()).ln_1p() / std::f64::consts::LN_2;
        let log_fail = 1.0 + g / std::f64::consts::LN_2;
        let v = log2_sum_exp2([log_keep + tail, log_fail]);
        log_inf = log_inf.min(v);
    }

    Ok((log_lead + log_inf + log_count).exp2().max(0.0))
}
