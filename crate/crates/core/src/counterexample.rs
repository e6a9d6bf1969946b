//! Two Boolean SCMs that agree on the observational and every single-variable
//! interventional distribution but disagree under the joint intervention
//! `do(X1 = 0, X2 = 1)`.
//!
//! Both models share one noise bit `U = U_1 = U_2 = U_Y ~ Bernoulli(p)`:
//!
//! | node | `Ddot`               | `Tilde`       |
//! |------|----------------------|---------------|
//! | X1   | `U`                  | `U`           |
//! | X2   | `X1 ∧ U`             | `X1 ∧ U`      |
//! | Y    | `X1 ∧ X2 ∧ U`        | `X2 ∧ U`      |
//!
//! Distributions are enumerated exactly over the two atoms of `U`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Which {
    /// `Y = X1 ∧ X2 ∧ U_Y`
    Ddot,
    /// `Y = X2 ∧ U_Y`
    Tilde,
}

#[derive(Debug, Clone, Copy)]
pub struct DiscreteScm {
    which: Which,
    p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiscreteRegime {
    Observational,
    DoX1(u8),
    DoX2(u8),
    DoBoth(u8, u8),
}

impl DiscreteRegime {
    pub fn label(&self) -> String {
        match self {
            DiscreteRegime::Observational => "observational".into(),
            DiscreteRegime::DoX1(v) => format!("do(X1={v})"),
            DiscreteRegime::DoX2(v) => format!("do(X2={v})"),
            DiscreteRegime::DoBoth(a, b) => format!("do(X1={a},X2={b})"),
        }
    }

    fn validate(&self) -> Result<()> {
        let bit = |v: u8| v <= 1;
        let ok = match *self {
            DiscreteRegime::Observational => true,
            DiscreteRegime::DoX1(v) | DiscreteRegime::DoX2(v) => bit(v),
            DiscreteRegime::DoBoth(a, b) => bit(a) && bit(b),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRegime(format!("levels must be 0 or 1: {self:?}")))
        }
    }

    /// Variables that remain random under this regime.
    pub fn free_variables(&self) -> Vec<&'static str> {
        match self {
            DiscreteRegime::Observational => vec!["X1", "X2", "Y"],
            DiscreteRegime::DoX1(_) => vec!["X2", "Y"],
            DiscreteRegime::DoX2(_) => vec!["X1", "Y"],
            DiscreteRegime::DoBoth(..) => vec!["Y"],
        }
    }
}

/// Joint probabilities of the free variables; every assignment is listed,
/// zeros included.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityTable {
    pub variables: Vec<&'static str>,
    pub probs: BTreeMap<Vec<u8>, f64>,
}

impl ProbabilityTable {
    fn empty(variables: Vec<&'static str>) -> Self {
        let m = variables.len();
        let probs = (0..(1u32 << m))
            .map(|bits| ((0..m).map(|i| ((bits >> (m - 1 - i)) & 1) as u8).collect(), 0.0))
            .collect();
        Self { variables, probs }
    }

    pub fn prob(&self, assignment: &[u8]) -> f64 {
        self.probs.get(assignment).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Half the L1 distance between two tables over the same variables.
    pub fn tv_distance(&self, other: &ProbabilityTable) -> f64 {
        0.5 * self
            .probs
            .iter()
            .map(|(k, v)| (v - other.prob(k)).abs())
            .sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &ProbabilityTable) -> f64 {
        self.probs.iter().map(|(k, v)| (v - other.prob(k)).abs()).fold(0.0, f64::max)
    }
}

impl DiscreteScm {
    pub fn new(which: Which, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (0, 1), got {p}")));
        }
        Ok(Self { which, p })
    }

    pub fn which(&self) -> Which {
        self.which
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Exact distribution of the free variables under `regime`.
    pub fn enumerate_distribution(&self, regime: DiscreteRegime) -> Result<ProbabilityTable> {
        regime.validate()?;
        let mut table = ProbabilityTable::empty(regime.free_variables());
        for (u, weight) in [(0u8, 1.0 - self.p), (1u8, self.p)] {
            let x1 = match regime {
                DiscreteRegime::DoX1(v) | DiscreteRegime::DoBoth(v, _) => v,
                _ => u,
            };
            let x2 = match regime {
                DiscreteRegime::DoX2(v) | DiscreteRegime::DoBoth(_, v) => v,
                _ => x1 & u,
            };
            let y = match self.which {
                Which::Ddot => x1 & x2 & u,
                Which::Tilde => x2 & u,
            };
            let key: Vec<u8> = match regime {
                DiscreteRegime::Observational => vec![x1, x2, y],
                DiscreteRegime::DoX1(_) => vec![x2, y],
                DiscreteRegime::DoX2(_) => vec![x1, y],
                DiscreteRegime::DoBoth(..) => vec![y],
            };
            *table.probs.get_mut(&key).expect("assignment enumerated") += weight;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeComparison {
    pub regime: DiscreteRegime,
    pub ddot: ProbabilityTable,
    pub tilde: ProbabilityTable,
    pub max_abs_diff: f64,
    pub tv_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnidentifiabilityReport {
    pub p: f64,
    /// Observational plus the four single-variable interventions.
    pub shared: Vec<RegimeComparison>,
    /// Joint interventions at every level pair.
    pub joint: Vec<RegimeComparison>,
    pub shared_agree: bool,
    /// TV distance at `do(X1=0, X2=1)`.
    pub divergence: f64,
}

/// Shared regimes must agree to within this bound.
pub const EXACT_TOL: f64 = 1e-15;

pub const SHARED_REGIMES: [DiscreteRegime; 5] = [
    DiscreteRegime::Observational,
    DiscreteRegime::DoX1(0),
    DiscreteRegime::DoX1(1),
    DiscreteRegime::DoX2(0),
    DiscreteRegime::DoX2(1),
];

pub fn verify_unidentifiability(p: f64) -> Result<UnidentifiabilityReport> {
    let ddot = DiscreteScm::new(Which::Ddot, p)?;
    let tilde = DiscreteScm::new(Which::Tilde, p)?;
    let compare = |regime: DiscreteRegime| -> Result<RegimeComparison> {
        let a = ddot.enumerate_distribution(regime)?;
        let b = tilde.enumerate_distribution(regime)?;
        Ok(RegimeComparison {
            regime,
            max_abs_diff: a.max_abs_diff(&b),
            tv_distance: a.tv_distance(&b),
            ddot: a,
            tilde: b,
        })
    };
    let shared = SHARED_REGIMES.iter().map(|&r| compare(r)).collect::<Result<Vec<_>>>()?;
    let joint = [(0, 0), (0, 1), (1, 0), (1, 1)]
        .iter()
        .map(|&(a, b)| compare(DiscreteRegime::DoBoth(a, b)))
        .collect::<Result<Vec<_>>>()?;
    let shared_agree = shared.iter().all(|c| c.max_abs_diff <= EXACT_TOL);
    let divergence = joint
        .iter()
        .find(|c| c.regime == DiscreteRegime::DoBoth(0, 1))
        .map(|c| c.tv_distance)
        .expect("do(X1=0,X2=1) enumerated");
    Ok(UnidentifiabilityReport { p, shared, joint, shared_agree, divergence })
}

impl UnidentifiabilityReport {
    /// Aligned plain-text rendering of every table and the divergence.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "p = {}", self.p);
        for c in self.shared.iter().chain(&self.joint) {
            let _ = writeln!(s, "\n{}", c.regime.label());
            let vars = c.ddot.variables.join(",");
            let _ = writeln!(s, "  {:<12} {:>10} {:>10}", format!("P({vars})"), "Ddot", "Tilde");
            for (k, v) in &c.ddot.probs {
                let key: Vec<String> = k.iter().map(u8::to_string).collect();
                let _ = writeln!(s, "  {:<12} {:>10.6} {:>10.6}", key.join(","), v, c.tilde.prob(k));
            }
        }
        let _ = writeln!(
            s,
            "\nshared regimes agree: {}\nTV distance at do(X1=0,X2=1): {}",
            self.shared_agree, self.divergence
        );
        s
    }

    /// One row per (regime, assignment) with both models' probabilities.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("regime,variables,assignment,p_ddot,p_tilde\n");
        for c in self.shared.iter().chain(&self.joint) {
            for (k, v) in &c.ddot.probs {
                let key: Vec<String> = k.iter().map(u8::to_string).collect();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    c.regime.label().replace(',', ";"),
                    c.ddot.variables.join(";"),
                    key.join(";"),
                    v,
                    c.tilde.prob(k)
                );
            }
        }
        s
    }
}
