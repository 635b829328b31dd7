//! Rewrite reports: the allocation, mechanism parameters and budget split
//! produced alongside a rewritten query.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::accountant::ComposedLoss;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetView {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub node: String,
    pub variant: String,
    pub rule: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismRow {
    pub node: String,
    pub kind: String,
    pub column: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewriteReport {
    pub query_id: String,
    pub target: String,
    pub budget: BudgetView,
    pub allocation: Vec<AllocationRow>,
    /// Number of DP-rewritten reduces; the budget is split (eps/n, delta/n).
    pub n_dp: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_mechanism: Option<BudgetView>,
    pub mechanisms: Vec<MechanismRow>,
    /// Loss for this query composed by the accountant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composed: Option<ComposedLoss>,
    /// Cumulative session loss, when a session ledger is in use.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session: Option<ComposedLoss>,
}

impl fmt::Display for RewriteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "query:  {}", self.query_id)?;
        writeln!(f, "target: {}", self.target)?;
        writeln!(
            f,
            "budget: epsilon = {}, delta = {}",
            self.budget.epsilon, self.budget.delta
        )?;
        writeln!(f, "allocation:")?;
        for row in &self.allocation {
            writeln!(f, "  {:<8} {:<22} {}", row.variant, row.node, row.rule)?;
        }
        writeln!(f, "dp mechanisms: {}", self.n_dp)?;
        if let Some(per) = &self.per_mechanism {
            writeln!(
                f,
                "per-mechanism budget: epsilon = {}, delta = {}",
                per.epsilon, per.delta
            )?;
        }
        for m in &self.mechanisms {
            write!(f, "  {:<14} {:<22} {}", m.kind, m.node, m.column)?;
            if let Some(c) = m.c {
                write!(f, "  c = {c:.6}")?;
            }
            if let Some(s) = m.sigma {
                write!(f, "  sigma = {s:.6}")?;
            }
            if let Some(t) = m.tau {
                write!(f, "  tau = {t:.6}")?;
            }
            writeln!(f, "  (epsilon = {}, delta = {})", m.epsilon, m.delta)?;
        }
        if let Some(c) = &self.composed {
            writeln!(
                f,
                "composed loss (this query): epsilon = {:.6}, delta = {:.6e}",
                c.epsilon, c.delta
            )?;
        }
        if let Some(s) = &self.session {
            writeln!(
                f,
                "composed loss (session):    epsilon = {:.6}, delta = {:.6e}",
                s.epsilon, s.delta
            )?;
        }
        Ok(())
    }
}
