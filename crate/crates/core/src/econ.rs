//! Education-market formulas: wage annuities, the university's price and
//! profit, the condition for education to exist, graduate replacement and
//! labour-market accounting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    #[error("{field} {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("degenerate denominator: 1 - beta^(x-1) = 0 when study_len = 1")]
    DegenerateDenominator,
    #[error("zero working span: career_len ({career_len}) must exceed study_len ({study_len})")]
    ZeroWorkingSpan { career_len: u32, study_len: u32 },
    #[error("population identity violated: C + E + S + N = {sum} but L = {total}")]
    PopulationMismatch { sum: u64, total: u64 },
    #[error("satisfied demand ({satisfied}) exceeds the aggregate market ({market})")]
    SatisfiedExceedsMarket { satisfied: f64, market: f64 },
}

/// Scalars of the education market for a single specialty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconParams {
    /// Yearly discount factor, in (0, 1).
    pub beta: f64,
    /// Working horizon T in years.
    pub career_len: u32,
    /// Years of study.
    pub study_len: u32,
    pub wage_unskilled: f64,
    pub wage_skilled: f64,
    /// Yearly tuition price.
    pub tuition: f64,
    /// Coefficient on the discounted skilled wage in the enrollment condition.
    pub alpha_pref: f64,
    /// University overhead, in units of skilled labour per year.
    pub fixed_cost: f64,
    /// Skilled labour per student per year.
    pub var_cost: f64,
    /// Graduates per year.
    pub graduates: f64,
}

impl Default for EconParams {
    fn default() -> Self {
        Self {
            beta: 0.9,
            career_len: 40,
            study_len: 5,
            wage_unskilled: 1.0,
            wage_skilled: 2.0,
            tuition: 0.0,
            alpha_pref: 1.0,
            fixed_cost: 0.0,
            var_cost: 0.0,
            graduates: 0.0,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> EconError {
    EconError::InvalidParam {
        field,
        reason: reason.into(),
    }
}

impl EconParams {
    pub fn validate(&self) -> Result<(), EconError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(invalid("beta", "must lie in (0,1)"));
        }
        if self.career_len < 1 {
            return Err(invalid("career_len", "must be at least 1"));
        }
        if self.study_len < 1 || self.study_len >= self.career_len {
            return Err(invalid("study_len", "must satisfy 1 <= study_len < career_len"));
        }
        for (field, v) in [
            ("wage_unskilled", self.wage_unskilled),
            ("wage_skilled", self.wage_skilled),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be positive"));
            }
        }
        for (field, v) in [
            ("var_cost", self.var_cost),
            ("fixed_cost", self.fixed_cost),
            ("graduates", self.graduates),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be non-negative"));
            }
        }
        for (field, v) in [("tuition", self.tuition), ("alpha_pref", self.alpha_pref)] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        Ok(())
    }

    fn annuity_factor(&self, periods: u32) -> f64 {
        (1.0 - self.beta.powi(periods as i32)) / (1.0 - self.beta)
    }
}

/// Discounted lifetime income of an unskilled worker, `w_N (1 - β^T) / (1 - β)`.
pub fn pv_unskilled(params: &EconParams) -> f64 {
    params.wage_unskilled * params.annuity_factor(params.career_len)
}

/// How the skilled worker's career annuity is valued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CareerTail {
    /// `(1 - β^(T-x)) / (1 - β)`.
    #[default]
    Exact,
    /// Drop `β^(T-x)`, i.e. a perpetuity `1 / (1 - β)`; the long-career approximation.
    Omitted,
}

/// Discounted income of a worker who studies `x` years paying tuition and then earns `w_h`:
/// `-p (1 - β^(x-1)) / (1 - β) + β^x w_h (1 - β^(T-x)) / (1 - β)`.
pub fn pv_skilled(params: &EconParams) -> f64 {
    pv_skilled_with(params, CareerTail::Exact)
}

pub fn pv_skilled_with(params: &EconParams, tail: CareerTail) -> f64 {
    let b = params.beta;
    let x = params.study_len;
    let study = params.tuition * params.annuity_factor(x.saturating_sub(1));
    let career = match tail {
        CareerTail::Exact => params.annuity_factor(params.career_len.saturating_sub(x)),
        CareerTail::Omitted => 1.0 / (1.0 - b),
    };
    -study + b.powi(x as i32) * params.wage_skilled * career
}

fn study_denominator(params: &EconParams) -> Result<f64, EconError> {
    if params.study_len < 2 {
        return Err(EconError::DegenerateDenominator);
    }
    Ok(1.0 - params.beta.powi(params.study_len as i32 - 1))
}

/// Equilibrium tuition `(α β^x w_h - w_N) / (1 - β^(x-1))`, the price at which the
/// enrollment condition binds. Negative when education cannot carry a positive price.
pub fn tuition_price(params: &EconParams) -> Result<f64, EconError> {
    let denom = study_denominator(params)?;
    let b = params.beta;
    let gain = params.alpha_pref * b.powi(params.study_len as i32) * params.wage_skilled;
    Ok((gain - params.wage_unskilled) / denom)
}

/// Left side minus right side of the enrollment condition
/// `α β^x w_h - w_N >= p (1 - β^(x-1))` at the configured tuition.
pub fn enrollment_surplus(params: &EconParams, price: f64) -> f64 {
    let b = params.beta;
    let x = params.study_len as i32;
    params.alpha_pref * b.powi(x) * params.wage_skilled
        - params.wage_unskilled
        - price * (1.0 - b.powi(x - 1))
}

/// University profit `x [p h - w_h (F + c h)]`.
pub fn university_profit(params: &EconParams) -> f64 {
    let h = params.graduates;
    params.study_len as f64
        * (params.tuition * h - params.wage_skilled * (params.fixed_cost + params.var_cost * h))
}

/// `w_h (α β^x - c (1 - β^(x-1))) > w_N`. Equality is not viable.
pub fn education_viable(params: &EconParams) -> Result<bool, EconError> {
    let denom = study_denominator(params)?;
    let b = params.beta;
    let lhs = params.wage_skilled
        * (params.alpha_pref * b.powi(params.study_len as i32) - params.var_cost * denom);
    Ok(lhs > params.wage_unskilled)
}

/// Population split into educated workers, teachers, students and unskilled workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Population {
    educated: u64,
    teachers: u64,
    students: u64,
    unskilled: u64,
    total: u64,
}

impl Population {
    pub fn new(
        educated: u64,
        teachers: u64,
        students: u64,
        unskilled: u64,
        total: u64,
    ) -> Result<Self, EconError> {
        let sum = educated + teachers + students + unskilled;
        if sum != total {
            return Err(EconError::PopulationMismatch { sum, total });
        }
        Ok(Self {
            educated,
            teachers,
            students,
            unskilled,
            total,
        })
    }

    pub fn educated(&self) -> u64 {
        self.educated
    }
    pub fn teachers(&self) -> u64 {
        self.teachers
    }
    pub fn students(&self) -> u64 {
        self.students
    }
    pub fn unskilled(&self) -> u64 {
        self.unskilled
    }
    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Graduates needed per year to replace retiring educated workers and teachers,
/// `(E + C) / (T - x)`.
pub fn required_graduates(pop: &Population, params: &EconParams) -> Result<f64, EconError> {
    if params.career_len <= params.study_len {
        return Err(EconError::ZeroWorkingSpan {
            career_len: params.career_len,
            study_len: params.study_len,
        });
    }
    let span = (params.career_len - params.study_len) as f64;
    Ok((pop.educated + pop.teachers) as f64 / span)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MarketAccounts {
    pub aggregate_supply: f64,
    pub aggregate_demand: f64,
    pub satisfied_demand: f64,
    pub aggregate_market: f64,
    pub current_market: f64,
}

/// Fill `current_market = aggregate_market - satisfied_demand`.
pub fn market_balance(acct: &MarketAccounts) -> Result<MarketAccounts, EconError> {
    for (field, v) in [
        ("aggregate_supply", acct.aggregate_supply),
        ("aggregate_demand", acct.aggregate_demand),
        ("satisfied_demand", acct.satisfied_demand),
        ("aggregate_market", acct.aggregate_market),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(field, "must be non-negative"));
        }
    }
    if acct.satisfied_demand > acct.aggregate_market {
        return Err(EconError::SatisfiedExceedsMarket {
            satisfied: acct.satisfied_demand,
            market: acct.aggregate_market,
        });
    }
    Ok(MarketAccounts {
        current_market: acct.aggregate_market - acct.satisfied_demand,
        ..*acct
    })
}

/// Yearly need for specialists, split into the economy's and society's share.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NeedBreakdown {
    pub econ_need: f64,
    pub society_need: f64,
    #[serde(default)]
    pub total_need: f64,
    #[serde(default)]
    pub year: i32,
    #[serde(default)]
    pub specialty: String,
}

pub fn total_need(breakdown: &mut NeedBreakdown) -> Result<f64, EconError> {
    if !(breakdown.econ_need >= 0.0) {
        return Err(invalid("econ_need", "must be non-negative"));
    }
    if !(breakdown.society_need >= 0.0) {
        return Err(invalid("society_need", "must be non-negative"));
    }
    breakdown.total_need = breakdown.econ_need + breakdown.society_need;
    Ok(breakdown.total_need)
}
