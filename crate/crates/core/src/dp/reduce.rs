//! Rewriting a privacy-unit-preserving Reduce into a DP subgraph.
//!
//! Aggregates are decomposed into sums. Per summed column the subgraph
//! computes per-(PID, group) partial sums, clips each unit's l2 contribution
//! across groups to `c`, re-aggregates per group and perturbs with Gaussian
//! noise. Data-derived grouping keys are released through a noisy threshold
//! on distinct-unit counts; keys pinned to a small finite domain by range
//! propagation are public and bypass thresholding (every public combination
//! is emitted, so group presence leaks nothing).

use std::sync::Arc;

use crate::accountant::MechanismEvent;
use crate::data_type::{DataType, Value};
use crate::error::{Error, Result};
use crate::expr::{AggOp, Expr, Function};
use crate::privacy_unit::PID_COLUMN;
use crate::relation::{JoinKind, Reduce, Relation};
use crate::report::MechanismRow;
use crate::stable_hash::StableHasher;

use super::{gaussian_sigma, TauThresholdSpec};

#[derive(Clone, Copy, Debug)]
pub struct DpReduceParams<'a> {
    pub query_id: &'a str,
    /// This mechanism's budget share.
    pub epsilon: f64,
    pub delta: f64,
    pub clip_multiplier: f64,
    /// Fraction of the share spent on key release when thresholding.
    pub key_budget_share: f64,
    /// Largest public key-combination count before falling back to
    /// thresholding.
    pub max_public_groups: usize,
    /// Disabled only by tests comparing against exact answers.
    pub noise: bool,
}

pub struct DpReduceOutcome {
    pub relation: Arc<Relation>,
    pub events: Vec<MechanismEvent>,
    pub mechanisms: Vec<MechanismRow>,
    /// The clipping stage, exposed so tests can execute it directly and
    /// check per-unit norms.
    pub clip_stage: Option<Arc<Relation>>,
}

const MIN_BUDGET_SHARE: f64 = 1e-9;

/// One constituent sum of the decomposition.
struct SumSpec {
    col: String,
    expr: Expr,
    c: f64,
    sigma: f64,
    epsilon: f64,
    delta: f64,
}

/// How an original aggregate is reassembled from noisy sums.
enum Reassembly {
    /// SUM(x) or COUNT(x): one sum, cast back to integer when needed.
    Single { sum: usize, integer: bool },
    /// AVG(x) = S/N
    Mean { s: usize, n: usize },
    /// VARIANCE(x) = (Q - S^2/N) / (N - 1)
    Variance { q: usize, s: usize, n: usize },
    /// STDDEV(x) = sqrt(max(variance, 0))
    Stddev { q: usize, s: usize, n: usize },
}

fn expr_key(e: &Expr) -> u64 {
    let mut h = StableHasher::new();
    e.hash_into(&mut h);
    h.finish()
}

/// Values of a grouping-key column when range propagation pinned it to a
/// small finite public set.
fn key_domain(dt: &DataType, cap: usize) -> Option<Vec<Value>> {
    if dt.is_optional() {
        return None;
    }
    match dt {
        DataType::Integer(iv) => {
            let singles = iv.singletons()?;
            if singles.len() > cap {
                return None;
            }
            Some(singles.into_iter().map(|v| Value::Integer(v as i64)).collect())
        }
        DataType::Boolean(Some(set)) => {
            Some(set.iter().map(|&b| Value::Boolean(b)).collect())
        }
        DataType::Text(Some(set)) => {
            if set.len() > cap {
                return None;
            }
            Some(set.iter().cloned().map(Value::Text).collect())
        }
        _ => None,
    }
}

/// Box-Muller standard normal from two independent uniform draws.
fn standard_normal() -> Expr {
    let u1 = Expr::f(Function::RandomUniform, vec![]);
    let u2 = Expr::f(Function::RandomUniform, vec![]);
    let radius = Expr::f(
        Function::Sqrt,
        vec![Expr::mul(
            Expr::float(-2.0),
            Expr::f(Function::Ln, vec![Expr::sub(Expr::float(1.0), u1)]),
        )],
    );
    let angle = Expr::f(
        Function::Cos,
        vec![Expr::mul(Expr::float(std::f64::consts::TAU), u2)],
    );
    Expr::mul(radius, angle)
}

fn null_to_zero(e: Expr) -> Expr {
    Expr::case(Expr::is_null(e.clone()), Expr::float(0.0), e)
}

pub fn rewrite_reduce_dp(
    reduce: &Reduce,
    pup_input: Arc<Relation>,
    params: &DpReduceParams<'_>,
) -> Result<DpReduceOutcome> {
    let node = reduce.name.clone();
    if pup_input.schema().field(PID_COLUMN).is_none() {
        return Err(Error::rewriting(format!(
            "DP rewriting of {node} requires a privacy-unit-preserving input"
        )));
    }
    for (name, agg) in &reduce.aggregates {
        if !agg.op.dp_supported() {
            return Err(Error::rewriting(format!(
                "aggregate {}({}) in column {name:?} has no DP rewriting (supported: COUNT, SUM, AVG, VARIANCE, STDDEV)",
                agg.op.name(),
                agg.arg
            )));
        }
    }

    let env = pup_input.schema().env();
    let keys = &reduce.group_by;

    // Decompose aggregates into deduplicated constituent sums.
    let mut sums: Vec<SumSpec> = Vec::new();
    let mut sum_index: std::collections::BTreeMap<u64, usize> = std::collections::BTreeMap::new();
    let mut register_sum = |expr: Expr, sums: &mut Vec<SumSpec>| -> Result<usize> {
        let key = expr_key(&expr);
        if let Some(&i) = sum_index.get(&key) {
            return Ok(i);
        }
        let t = expr.infer_type(&env)?;
        let iv = t.interval().ok_or_else(|| {
            Error::rewriting(format!("cannot sum non-numeric expression {expr}"))
        })?;
        if !iv.is_bounded() {
            return Err(Error::rewriting(format!(
                "summed expression {expr} in {node} has unbounded range {iv}; add a WHERE clause bounding it (e.g. WHERE x > a AND x < b) to give the rewriter a hint"
            )));
        }
        let bound = iv.max_abs().unwrap();
        if bound == 0.0 {
            return Err(Error::rewriting(format!(
                "summed expression {expr} is constantly zero; clipping norm would be zero"
            )));
        }
        let i = sums.len();
        sums.push(SumSpec {
            col: format!("_qrw_s{i}"),
            expr,
            c: params.clip_multiplier * bound,
            sigma: 0.0,
            epsilon: 0.0,
            delta: 0.0,
        });
        sum_index.insert(key, i);
        Ok(i)
    };

    let indicator = |arg: &Expr| -> Expr {
        let optional = arg
            .infer_type(&env)
            .map(|t| t.is_optional())
            .unwrap_or(true);
        if optional {
            Expr::case(Expr::is_null(arg.clone()), Expr::int(0), Expr::int(1))
        } else {
            Expr::int(1)
        }
    };

    let mut plans: Vec<(String, Reassembly)> = Vec::new();
    for (name, agg) in &reduce.aggregates {
        let out_integer = reduce
            .schema
            .field(name)
            .map(|f| f.data_type.kind() == "integer")
            .unwrap_or(false);
        let plan = match agg.op {
            AggOp::Count => Reassembly::Single {
                sum: register_sum(indicator(&agg.arg), &mut sums)?,
                integer: out_integer,
            },
            AggOp::Sum => Reassembly::Single {
                sum: register_sum(agg.arg.clone(), &mut sums)?,
                integer: out_integer,
            },
            AggOp::Avg => Reassembly::Mean {
                s: register_sum(agg.arg.clone(), &mut sums)?,
                n: register_sum(indicator(&agg.arg), &mut sums)?,
            },
            AggOp::Variance | AggOp::Stddev => {
                let q = register_sum(Expr::mul(agg.arg.clone(), agg.arg.clone()), &mut sums)?;
                let s = register_sum(agg.arg.clone(), &mut sums)?;
                let n = register_sum(indicator(&agg.arg), &mut sums)?;
                if agg.op == AggOp::Variance {
                    Reassembly::Variance { q, s, n }
                } else {
                    Reassembly::Stddev { q, s, n }
                }
            }
            AggOp::Min | AggOp::Max => unreachable!("checked above"),
        };
        plans.push((name.clone(), plan));
    }

    // Public grouping keys: the cartesian product of finite propagated
    // domains, when small enough.
    let key_fields = &reduce.schema.fields()[..keys.len()];
    let public_combos: Option<Vec<Vec<Value>>> = if keys.is_empty() {
        Some(vec![])
    } else {
        let domains: Option<Vec<Vec<Value>>> = key_fields
            .iter()
            .map(|f| key_domain(&f.data_type, params.max_public_groups))
            .collect();
        domains.and_then(|ds| {
            let total: usize = ds.iter().map(Vec::len).product();
            if total == 0 || total > params.max_public_groups {
                None
            } else {
                let mut combos: Vec<Vec<Value>> = vec![vec![]];
                for d in &ds {
                    combos = combos
                        .iter()
                        .flat_map(|c| {
                            d.iter().map(move |v| {
                                let mut c = c.clone();
                                c.push(v.clone());
                                c
                            })
                        })
                        .collect();
                }
                Some(combos)
            }
        })
    };

    // Budget split between aggregate noise and key release.
    let thresholding = public_combos.is_none();
    let (eps_keys, delta_keys) = if thresholding {
        if sums.is_empty() {
            (params.epsilon, params.delta)
        } else {
            (
                params.epsilon * params.key_budget_share,
                params.delta * params.key_budget_share,
            )
        }
    } else {
        (0.0, 0.0)
    };
    let (eps_aggs, delta_aggs) = (params.epsilon - eps_keys, params.delta - delta_keys);
    if !sums.is_empty() {
        let per = sums.len() as f64;
        let (eps_i, delta_i) = (eps_aggs / per, delta_aggs / per);
        if eps_i < MIN_BUDGET_SHARE || delta_i < MIN_BUDGET_SHARE {
            return Err(Error::rewriting(format!(
                "per-mechanism budget share ({eps_i:.3e}, {delta_i:.3e}) for {node} is degenerate; increase the budget or simplify the query"
            )));
        }
        for spec in &mut sums {
            spec.epsilon = eps_i;
            spec.delta = delta_i;
            spec.sigma = gaussian_sigma(eps_i, delta_i, spec.c)?;
        }
    }
    let tau_spec = if thresholding {
        if eps_keys < MIN_BUDGET_SHARE || delta_keys < MIN_BUDGET_SHARE {
            return Err(Error::rewriting(format!(
                "key-release budget share ({eps_keys:.3e}, {delta_keys:.3e}) for {node} is degenerate"
            )));
        }
        Some(TauThresholdSpec::new(eps_keys, delta_keys)?)
    } else {
        None
    };

    // --- graph construction ---

    // Pre-map: keys, summands, PID.
    let mut pre_proj: Vec<(String, Expr)> = Vec::new();
    for (kname, kexpr) in keys {
        pre_proj.push((kname.clone(), kexpr.clone()));
    }
    for spec in &sums {
        pre_proj.push((spec.col.clone(), spec.expr.clone()));
    }
    pre_proj.push((PID_COLUMN.to_string(), Expr::col(PID_COLUMN)));
    let pre = Arc::new(Relation::map(pre_proj, None, vec![], None, pup_input)?);

    // Per-(PID, group) partial sums.
    let mut inner_keys: Vec<(String, Expr)> = vec![(PID_COLUMN.to_string(), Expr::col(PID_COLUMN))];
    for (kname, _) in keys {
        inner_keys.push((kname.clone(), Expr::col(kname)));
    }
    let inner_aggs: Vec<(String, crate::expr::Aggregate)> = sums
        .iter()
        .map(|s| {
            (
                s.col.clone(),
                crate::expr::Aggregate::new(AggOp::Sum, Expr::col(&s.col)),
            )
        })
        .collect();
    let inner = Arc::new(Relation::reduce(inner_keys, inner_aggs, pre)?);

    // Clip chain, only when there are sums to protect.
    let (protected, clip_stage) = if sums.is_empty() {
        (inner.clone(), None)
    } else {
        // Per-PID squared norms across groups.
        let norm_aggs: Vec<(String, crate::expr::Aggregate)> = sums
            .iter()
            .enumerate()
            .map(|(j, s)| {
                (
                    format!("_qrw_n2_{j}"),
                    crate::expr::Aggregate::new(
                        AggOp::Sum,
                        Expr::mul(Expr::col(&s.col), Expr::col(&s.col)),
                    ),
                )
            })
            .collect();
        let norms = Arc::new(Relation::reduce(
            vec![(PID_COLUMN.to_string(), Expr::col(PID_COLUMN))],
            norm_aggs,
            inner.clone(),
        )?);
        let fields = Relation::join_output_fields(JoinKind::Inner, &inner, &norms);
        let split = inner.schema().len();
        let on = Expr::eq(
            Expr::col(fields[0].name.clone()),
            Expr::col(fields[split].name.clone()),
        );
        let joined = Arc::new(Relation::join(JoinKind::Inner, on, inner.clone(), norms)?);
        let left_pid = joined.schema().fields()[0].name.clone();
        let mut clip_proj: Vec<(String, Expr)> = Vec::new();
        clip_proj.push((PID_COLUMN.to_string(), Expr::col(left_pid)));
        for (kname, _) in keys {
            clip_proj.push((kname.clone(), Expr::col(kname)));
        }
        for (j, s) in sums.iter().enumerate() {
            let factor = Expr::f(
                Function::Greatest,
                vec![
                    Expr::float(1.0),
                    Expr::div(
                        Expr::f(Function::Sqrt, vec![Expr::col(format!("_qrw_n2_{j}"))]),
                        Expr::float(s.c),
                    ),
                ],
            );
            clip_proj.push((s.col.clone(), Expr::div(Expr::col(&s.col), factor)));
        }
        let clipped = Arc::new(Relation::map(clip_proj, None, vec![], None, joined)?);
        (clipped.clone(), Some(clipped))
    };

    // Per-group totals of clipped contributions.
    let outer_keys: Vec<(String, Expr)> = keys
        .iter()
        .map(|(kname, _)| (kname.clone(), Expr::col(kname)))
        .collect();
    let total_col = |j: usize| format!("_qrw_t{j}");
    let per_group: Arc<Relation> = if sums.is_empty() {
        // Key-only reduce (e.g. DISTINCT): one row per present group.
        Arc::new(Relation::reduce(
            outer_keys.clone(),
            vec![("_qrw_present".to_string(), crate::expr::Aggregate::count_star())],
            protected,
        )?)
    } else {
        let outer_aggs: Vec<(String, crate::expr::Aggregate)> = sums
            .iter()
            .enumerate()
            .map(|(j, s)| {
                (
                    total_col(j),
                    crate::expr::Aggregate::new(AggOp::Sum, Expr::col(&s.col)),
                )
            })
            .collect();
        Arc::new(Relation::reduce(outer_keys.clone(), outer_aggs, protected)?)
    };

    // Key release.
    let released: Arc<Relation> = match (&public_combos, &tau_spec) {
        (Some(combos), _) if keys.is_empty() => {
            let _ = combos;
            // Global aggregate: single row, always released; null-coalesce
            // covers the empty-input case.
            let proj: Vec<(String, Expr)> = sums
                .iter()
                .enumerate()
                .map(|(j, _)| (total_col(j), null_to_zero(Expr::col(total_col(j)))))
                .collect();
            Arc::new(Relation::map(proj, None, vec![], None, per_group)?)
        }
        (Some(combos), _) => {
            // Emit every public key combination; absent groups get zero sums.
            let key_names: Vec<String> = keys.iter().map(|(k, _)| k.clone()).collect();
            let values = Arc::new(Relation::values(key_names.clone(), combos.clone())?);
            let fields = Relation::join_output_fields(JoinKind::Left, &values, &per_group);
            let vsplit = values.schema().len();
            let on = Expr::and_all(
                (0..key_names.len())
                    .map(|i| {
                        Expr::eq(
                            Expr::col(fields[i].name.clone()),
                            Expr::col(fields[vsplit + i].name.clone()),
                        )
                    })
                    .collect(),
            );
            let joined = Arc::new(Relation::join(JoinKind::Left, on, values, per_group)?);
            let mut proj: Vec<(String, Expr)> = Vec::new();
            for (i, kname) in key_names.iter().enumerate() {
                proj.push((kname.clone(), Expr::col(joined.schema().fields()[i].name.clone())));
            }
            for (j, _) in sums.iter().enumerate() {
                proj.push((total_col(j), null_to_zero(Expr::col(total_col(j)))));
            }
            if sums.is_empty() {
                // Key-only: just the combinations themselves.
                proj.truncate(key_names.len());
            }
            Arc::new(Relation::map(proj, None, vec![], None, joined)?)
        }
        (None, Some(tau)) => {
            // Distinct-unit count per group (inner has one row per
            // (PID, group), so COUNT(*) counts units).
            let count_aggs =
                vec![("_qrw_npu".to_string(), crate::expr::Aggregate::count_star())];
            let counts = Arc::new(Relation::reduce(outer_keys.clone(), count_aggs, inner)?);
            let mut noisy_proj: Vec<(String, Expr)> = keys
                .iter()
                .map(|(kname, _)| (kname.clone(), Expr::col(kname)))
                .collect();
            let noisy_count = if params.noise {
                Expr::add(
                    Expr::col("_qrw_npu"),
                    Expr::mul(Expr::float(tau.sigma_keys), standard_normal()),
                )
            } else {
                Expr::f(Function::CastFloat, vec![Expr::col("_qrw_npu")])
            };
            noisy_proj.push(("_qrw_nt".to_string(), noisy_count));
            let noisy = Arc::new(Relation::map(noisy_proj, None, vec![], None, counts)?);
            let keep: Vec<(String, Expr)> = keys
                .iter()
                .map(|(kname, _)| (kname.clone(), Expr::col(kname)))
                .collect();
            let kept = Arc::new(Relation::map(
                keep,
                Some(Expr::f(
                    Function::GtEq,
                    vec![Expr::col("_qrw_nt"), Expr::float(tau.tau)],
                )),
                vec![],
                None,
                noisy,
            )?);
            // Released keys join back to the per-group totals.
            let fields = Relation::join_output_fields(JoinKind::Inner, &kept, &per_group);
            let ksplit = kept.schema().len();
            let on = Expr::and_all(
                (0..keys.len())
                    .map(|i| {
                        Expr::eq(
                            Expr::col(fields[i].name.clone()),
                            Expr::col(fields[ksplit + i].name.clone()),
                        )
                    })
                    .collect(),
            );
            let joined = Arc::new(Relation::join(JoinKind::Inner, on, kept, per_group)?);
            let mut proj: Vec<(String, Expr)> = Vec::new();
            for (i, (kname, _)) in keys.iter().enumerate() {
                proj.push((kname.clone(), Expr::col(joined.schema().fields()[i].name.clone())));
            }
            for (j, _) in sums.iter().enumerate() {
                proj.push((total_col(j), Expr::col(total_col(j))));
            }
            Arc::new(Relation::map(proj, None, vec![], None, joined)?)
        }
        (None, None) => unreachable!("thresholding implies a tau spec"),
    };

    // Gaussian noise, one fresh draw per output row per sum, materialized in
    // its own column.
    let noisy: Arc<Relation> = if sums.is_empty() || !params.noise {
        released
    } else {
        let mut proj: Vec<(String, Expr)> = released
            .schema()
            .names()
            .into_iter()
            .map(|n| (n.to_string(), Expr::col(n)))
            .collect();
        for (j, s) in sums.iter().enumerate() {
            proj.push((
                format!("_qrw_nu{j}"),
                Expr::mul(Expr::float(s.sigma), standard_normal()),
            ));
        }
        Arc::new(Relation::map(proj, None, vec![], None, released)?)
    };

    // Reassemble the original aggregates.
    let noisy_total = |j: usize| -> Expr {
        if params.noise && !sums.is_empty() {
            Expr::add(Expr::col(total_col(j)), Expr::col(format!("_qrw_nu{j}")))
        } else {
            Expr::col(total_col(j))
        }
    };
    let variance_expr = |q: usize, s: usize, n: usize| -> Expr {
        let nn = noisy_total(n);
        Expr::div(
            Expr::sub(
                noisy_total(q),
                Expr::div(Expr::mul(noisy_total(s), noisy_total(s)), nn.clone()),
            ),
            Expr::sub(nn, Expr::float(1.0)),
        )
    };
    let mut final_proj: Vec<(String, Expr)> = Vec::new();
    for (kname, _) in keys {
        final_proj.push((kname.clone(), Expr::col(kname)));
    }
    for (name, plan) in &plans {
        let expr = match plan {
            Reassembly::Single { sum, integer } => {
                let e = noisy_total(*sum);
                if *integer {
                    Expr::f(Function::CastInteger, vec![e])
                } else {
                    e
                }
            }
            Reassembly::Mean { s, n } => Expr::div(noisy_total(*s), noisy_total(*n)),
            Reassembly::Variance { q, s, n } => variance_expr(*q, *s, *n),
            Reassembly::Stddev { q, s, n } => Expr::f(
                Function::Sqrt,
                vec![Expr::f(
                    Function::Greatest,
                    vec![variance_expr(*q, *s, *n), Expr::float(0.0)],
                )],
            ),
        };
        final_proj.push((name.clone(), expr));
    }
    let relation = Arc::new(Relation::map(final_proj, None, vec![], None, noisy)?);

    // Mechanism events and report rows.
    let mut events = Vec::new();
    let mut mechanisms = Vec::new();
    for spec in &sums {
        if params.noise {
            events.push(MechanismEvent::gaussian_sum(
                params.query_id,
                spec.c,
                spec.sigma,
                spec.epsilon,
                spec.delta,
            ));
        }
        mechanisms.push(MechanismRow {
            node: node.clone(),
            kind: "gaussian-sum".to_string(),
            column: format!("SUM({})", spec.expr),
            c: Some(spec.c),
            sigma: Some(spec.sigma),
            tau: None,
            epsilon: spec.epsilon,
            delta: spec.delta,
        });
    }
    if let Some(tau) = &tau_spec {
        if params.noise {
            events.push(MechanismEvent::gaussian_sum(
                params.query_id,
                1.0,
                tau.sigma_keys,
                tau.epsilon_keys,
                tau.delta_keys / 2.0,
            ));
            events.push(MechanismEvent::tau_threshold(
                params.query_id,
                1.0,
                tau.sigma_keys,
                0.0,
                tau.delta_keys / 2.0,
            ));
        }
        mechanisms.push(MechanismRow {
            node: node.clone(),
            kind: "tau-threshold".to_string(),
            column: "grouping keys".to_string(),
            c: Some(1.0),
            sigma: Some(tau.sigma_keys),
            tau: Some(tau.tau),
            epsilon: tau.epsilon_keys,
            delta: tau.delta_keys,
        });
    }

    Ok(DpReduceOutcome { relation, events, mechanisms, clip_stage })
}
