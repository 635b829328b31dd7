//! The rewriting engine: assigns each node a privacy property and a rule
//! achieving it, then substitutes each node with the rule's subgraph.
//!
//! Allocation runs in three steps: rule setting (candidate rules per node),
//! rule elimination (a rule survives only if each required input property has
//! a surviving producer below), and rule selection (the highest-scoring
//! feasible allocation, with the budget split equally over the chosen
//! PUP->DP rules).

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::accountant::MechanismEvent;
use crate::catalog::Catalog;
use crate::dp::reduce::{rewrite_reduce_dp, DpReduceParams};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::privacy_unit::{attach_pid, PrivacyUnitDefinition, PID_COLUMN};
use crate::relation::{topo_order, JoinKind, Relation, Visibility};
use crate::report::{AllocationRow, BudgetView, MechanismRow, RewriteReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "pub")]
    Pub,
    #[serde(rename = "pubd")]
    Pubd,
    #[serde(rename = "sd")]
    SyntheticData,
    #[serde(rename = "pup")]
    Pup,
    #[serde(rename = "dp")]
    Dp,
}

impl Property {
    /// All properties, in the deterministic order used for tie-breaking.
    const ALL: [Property; 5] = [
        Property::Pub,
        Property::Dp,
        Property::Pubd,
        Property::SyntheticData,
        Property::Pup,
    ];

    /// Does a node with property `self` satisfy an input requirement `req`?
    /// Published accepts anything already safe to release; synthetic data is
    /// closed over public inputs.
    pub fn satisfies(self, req: Property) -> bool {
        self == req
            || match req {
                Property::Pubd => matches!(
                    self,
                    Property::Pub | Property::Dp | Property::SyntheticData | Property::Pubd
                ),
                Property::SyntheticData => self == Property::Pub,
                _ => false,
            }
    }

    /// Preference weight used by allocation scoring.
    fn weight(self) -> i64 {
        match self {
            Property::Pub => 10,
            Property::Dp => 5,
            Property::Pup => 2,
            Property::SyntheticData => 1,
            Property::Pubd => 1,
        }
    }

    pub fn parse(name: &str) -> Result<Property> {
        match name {
            "pub" => Ok(Property::Pub),
            "pubd" | "published" => Ok(Property::Pubd),
            "pup" => Ok(Property::Pup),
            "dp" => Ok(Property::Dp),
            "sd" => Ok(Property::SyntheticData),
            other => Err(Error::invalid(format!("unknown target property {other:?}"))),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Property::Pub => "Pub",
            Property::Pubd => "Pubd",
            Property::SyntheticData => "SD",
            Property::Pup => "PUP",
            Property::Dp => "DP",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewritingRule {
    pub inputs: Vec<Property>,
    pub output: Property,
}

impl RewritingRule {
    fn new(inputs: Vec<Property>, output: Property) -> RewritingRule {
        RewritingRule { inputs, output }
    }
}

impl fmt::Display for RewritingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.inputs.len() {
            0 => write!(f, "{}", self.output),
            1 => write!(f, "{} -> {}", self.inputs[0], self.output),
            _ => {
                let ins: Vec<String> = self.inputs.iter().map(|p| p.to_string()).collect();
                write!(f, "({}) -> {}", ins.join(", "), self.output)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub epsilon: f64,
    pub delta: f64,
}

impl Budget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Budget> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0 < delta && delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {delta}")));
        }
        Ok(Budget { epsilon, delta })
    }
}

#[derive(Clone, Debug)]
pub struct RewriteOptions {
    pub target: Property,
    pub budget: Budget,
    pub clip_multiplier: f64,
    pub key_budget_share: f64,
    pub max_public_groups: usize,
    pub noise: bool,
    pub query_id: String,
}

impl RewriteOptions {
    pub fn new(target: Property, budget: Budget) -> RewriteOptions {
        RewriteOptions {
            target,
            budget,
            clip_multiplier: 1.0,
            key_budget_share: 0.5,
            max_public_groups: 1024,
            noise: true,
            query_id: "query".to_string(),
        }
    }
}

/// One rule chosen for one node, with the properties demanded of its inputs.
#[derive(Clone, Debug)]
pub struct AllocatedRule {
    pub node: Arc<Relation>,
    pub rule: RewritingRule,
    pub input_properties: Vec<Property>,
}

/// A feasible allocation: one rule per (node, demanded property) pair, the
/// number of DP rewrites, and the budget to split across them.
#[derive(Clone, Debug)]
pub struct Allocation {
    pub root_property: Property,
    pub rules: Vec<AllocatedRule>,
    pub n_dp: usize,
    pub budget: Budget,
}

#[derive(Debug)]
pub struct RewriteOutcome {
    pub relation: Arc<Relation>,
    pub events: Vec<MechanismEvent>,
    pub report: RewriteReport,
}

type NodeKey = *const Relation;

/// Candidate rule sets per node, in topological order.
pub fn set_rules(
    root: &Arc<Relation>,
    catalog: &Catalog,
    privacy_unit: &PrivacyUnitDefinition,
) -> Vec<(Arc<Relation>, Vec<RewritingRule>)> {
    use Property::*;
    topo_order(root)
        .into_iter()
        .map(|node| {
            let rules = match node.as_ref() {
                Relation::Table(t) => {
                    let mut rules = Vec::new();
                    let entry = catalog.table(&t.name);
                    let visibility =
                        entry.map(|e| e.visibility).unwrap_or(t.visibility);
                    if visibility == Visibility::Public {
                        rules.push(RewritingRule::new(vec![], Pub));
                    } else {
                        if privacy_unit.entry(&t.name).is_some() {
                            rules.push(RewritingRule::new(vec![], Pup));
                        }
                        if entry.and_then(|e| e.synthetic.as_ref()).is_some() {
                            rules.push(RewritingRule::new(vec![], SyntheticData));
                        }
                    }
                    rules
                }
                Relation::Values(_) => vec![RewritingRule::new(vec![], Pub)],
                Relation::Map(_) => vec![
                    RewritingRule::new(vec![Pub], Pub),
                    RewritingRule::new(vec![Pubd], Pubd),
                    RewritingRule::new(vec![SyntheticData], SyntheticData),
                    RewritingRule::new(vec![Pup], Pup),
                ],
                Relation::Reduce(r) => {
                    let mut rules = vec![
                        RewritingRule::new(vec![Pub], Pub),
                        RewritingRule::new(vec![Pubd], Pubd),
                        RewritingRule::new(vec![SyntheticData], SyntheticData),
                        RewritingRule::new(vec![Pup], Pup),
                    ];
                    if r.aggregates.iter().all(|(_, a)| a.op.dp_supported()) {
                        rules.push(RewritingRule::new(vec![Pup], Dp));
                    }
                    rules
                }
                Relation::Join(_) => vec![
                    RewritingRule::new(vec![Pub, Pub], Pub),
                    RewritingRule::new(vec![Pubd, Pubd], Pubd),
                    RewritingRule::new(vec![SyntheticData, SyntheticData], SyntheticData),
                    RewritingRule::new(vec![Pup, Pup], Pup),
                    RewritingRule::new(vec![Pup, Pubd], Pup),
                    RewritingRule::new(vec![Pubd, Pup], Pup),
                ],
                Relation::SetOp(_) => vec![
                    RewritingRule::new(vec![Pub, Pub], Pub),
                    RewritingRule::new(vec![Pubd, Pubd], Pubd),
                    RewritingRule::new(vec![SyntheticData, SyntheticData], SyntheticData),
                    RewritingRule::new(vec![Pup, Pup], Pup),
                ],
            };
            (node, rules)
        })
        .collect()
}

/// Fixpoint pruning: a rule survives iff every required input property has a
/// surviving rule on that input producing (or subsuming) it.
pub fn eliminate(
    candidates: Vec<(Arc<Relation>, Vec<RewritingRule>)>,
) -> Result<Vec<(Arc<Relation>, Vec<RewritingRule>)>> {
    let mut sets: HashMap<NodeKey, Vec<RewritingRule>> = candidates
        .iter()
        .map(|(node, rules)| (Arc::as_ptr(node), rules.clone()))
        .collect();
    loop {
        let mut changed = false;
        for (node, _) in &candidates {
            let inputs: Vec<NodeKey> =
                node.inputs().into_iter().map(Arc::as_ptr).collect();
            let feasible = |rule: &RewritingRule| {
                rule.inputs.iter().zip(&inputs).all(|(req, input)| {
                    sets[input].iter().any(|r| r.output.satisfies(*req))
                })
            };
            let key = Arc::as_ptr(node);
            let before = sets[&key].len();
            let kept: Vec<RewritingRule> =
                sets[&key].iter().filter(|r| feasible(r)).cloned().collect();
            if kept.len() != before {
                changed = true;
            }
            sets.insert(key, kept);
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::with_capacity(candidates.len());
    for (node, _) in candidates {
        let key = Arc::as_ptr(&node);
        let rules = sets.remove(&key).unwrap();
        if rules.is_empty() {
            return Err(Error::infeasible(format!(
                "no feasible rewriting rule for {} {} (a private table without a privacy unit entry or synthetic twin, or an unsupported aggregation, blocks every route)",
                node.variant_name(),
                node.name()
            )));
        }
        out.push((node, rules));
    }
    Ok(out)
}

#[derive(Clone)]
struct Plan {
    rule_index: usize,
    input_properties: Vec<Property>,
    score: i64,
    n_dp: usize,
}

/// Select the highest-scoring feasible allocation achieving `target` at the
/// root. Enumeration is memoized per (node, output property); scoring is
/// lexicographic: property preference weights summed over the graph, then
/// fewer DP mechanisms, then first-listed rule.
pub fn select_allocation(
    candidates: &[(Arc<Relation>, Vec<RewritingRule>)],
    target: Property,
    budget: Budget,
) -> Result<Allocation> {
    let rules_of: HashMap<NodeKey, &Vec<RewritingRule>> = candidates
        .iter()
        .map(|(node, rules)| (Arc::as_ptr(node), rules))
        .collect();
    let nodes: HashMap<NodeKey, &Arc<Relation>> = candidates
        .iter()
        .map(|(node, _)| (Arc::as_ptr(node), node))
        .collect();

    // Bottom-up: for each node and each achievable output property, the best
    // plan. Topological order guarantees inputs are solved first.
    let mut best: HashMap<(NodeKey, Property), Plan> = HashMap::new();
    for (node, rules) in candidates {
        let key = Arc::as_ptr(node);
        let input_keys: Vec<NodeKey> = node.inputs().into_iter().map(Arc::as_ptr).collect();
        for (rule_index, rule) in rules.iter().enumerate() {
            // For each required input property pick the best satisfying plan.
            let mut input_properties = Vec::with_capacity(rule.inputs.len());
            let mut score = rule.output.weight();
            let mut n_dp = usize::from(is_dp_rule(rule));
            let mut feasible = true;
            for (req, input_key) in rule.inputs.iter().zip(&input_keys) {
                let mut chosen: Option<(Property, &Plan)> = None;
                for p in Property::ALL {
                    if !p.satisfies(*req) {
                        continue;
                    }
                    if let Some(plan) = best.get(&(*input_key, p)) {
                        let better = match &chosen {
                            None => true,
                            Some((_, cur)) => {
                                (plan.score, -(plan.n_dp as i64))
                                    > (cur.score, -(cur.n_dp as i64))
                            }
                        };
                        if better {
                            chosen = Some((p, plan));
                        }
                    }
                }
                match chosen {
                    Some((p, plan)) => {
                        input_properties.push(p);
                        score += plan.score;
                        n_dp += plan.n_dp;
                    }
                    None => {
                        feasible = false;
                        break;
                    }
                }
            }
            if !feasible {
                continue;
            }
            let plan = Plan { rule_index, input_properties, score, n_dp };
            let slot = (key, rule.output);
            let replace = match best.get(&slot) {
                None => true,
                Some(cur) => (plan.score, -(plan.n_dp as i64)) > (cur.score, -(cur.n_dp as i64)),
            };
            if replace {
                best.insert(slot, plan);
            }
        }
    }

    // Root: best property satisfying the target.
    let (root, _) = candidates.last().expect("non-empty graph");
    let root_key = Arc::as_ptr(root);
    let mut root_choice: Option<(Property, &Plan)> = None;
    for p in Property::ALL {
        if !p.satisfies(target) {
            continue;
        }
        if let Some(plan) = best.get(&(root_key, p)) {
            let better = match &root_choice {
                None => true,
                Some((_, cur)) => {
                    (plan.score, -(plan.n_dp as i64)) > (cur.score, -(cur.n_dp as i64))
                }
            };
            if better {
                root_choice = Some((p, plan));
            }
        }
    }
    let (root_property, _) = root_choice.ok_or_else(|| {
        let achievable: Vec<String> = Property::ALL
            .iter()
            .filter(|p| best.contains_key(&(root_key, **p)))
            .map(|p| p.to_string())
            .collect();
        Error::infeasible(format!(
            "target property {target} is not achievable at {} {} (achievable: {})",
            root.variant_name(),
            root.name(),
            if achievable.is_empty() { "none".to_string() } else { achievable.join(", ") }
        ))
    })?;

    // Extract the chosen (node, property) assignments top-down. A node
    // demanded under conflicting properties by different consumers is
    // assigned once per property and later duplicated by application.
    let mut rules: Vec<AllocatedRule> = Vec::new();
    let mut seen: HashMap<(NodeKey, Property), ()> = HashMap::new();
    let mut stack = vec![(root_key, root_property)];
    while let Some((key, prop)) = stack.pop() {
        if seen.insert((key, prop), ()).is_some() {
            continue;
        }
        let plan = &best[&(key, prop)];
        let node = nodes[&key];
        let rule = rules_of[&key][plan.rule_index].clone();
        for (input, p) in node.inputs().iter().zip(&plan.input_properties) {
            stack.push((Arc::as_ptr(input), *p));
        }
        rules.push(AllocatedRule {
            node: (*node).clone(),
            rule,
            input_properties: plan.input_properties.clone(),
        });
    }
    rules.reverse();
    let n_dp = rules.iter().filter(|r| is_dp_rule(&r.rule)).count();
    Ok(Allocation { root_property, rules, n_dp, budget })
}

fn is_dp_rule(rule: &RewritingRule) -> bool {
    rule.output == Property::Dp && rule.inputs == [Property::Pup]
}

/// Apply an allocation: every node is replaced by its rule's subgraph, each
/// rewritten independently and stitched through its (property-extended)
/// schema.
pub fn apply(
    allocation: &Allocation,
    root: &Arc<Relation>,
    catalog: &Catalog,
    privacy_unit: &PrivacyUnitDefinition,
    options: &RewriteOptions,
) -> Result<(Arc<Relation>, Vec<MechanismEvent>, Vec<MechanismRow>)> {
    let mut assigned: HashMap<(NodeKey, Property), &AllocatedRule> = HashMap::new();
    for rule in &allocation.rules {
        assigned.insert((Arc::as_ptr(&rule.node), rule.rule.output), rule);
    }
    let share = if allocation.n_dp > 0 {
        Budget {
            epsilon: allocation.budget.epsilon / allocation.n_dp as f64,
            delta: allocation.budget.delta / allocation.n_dp as f64,
        }
    } else {
        allocation.budget
    };
    let mut rewritten: HashMap<(NodeKey, Property), Arc<Relation>> = HashMap::new();
    let mut events = Vec::new();
    let mut mechanisms = Vec::new();
    let out = rewrite_node(
        root,
        allocation.root_property,
        &assigned,
        &mut rewritten,
        &mut events,
        &mut mechanisms,
        catalog,
        privacy_unit,
        options,
        share,
    )?;
    // Strip property columns at the root: the published schema is the
    // original one.
    let out = if out.schema().names() != root.schema().names() {
        let projections = root
            .schema()
            .names()
            .into_iter()
            .map(|n| (n.to_string(), Expr::col(n)))
            .collect();
        Arc::new(Relation::map(projections, None, vec![], None, out)?)
    } else {
        out
    };
    Ok((out, events, mechanisms))
}

#[allow(clippy::too_many_arguments)]
fn rewrite_node(
    node: &Arc<Relation>,
    property: Property,
    assigned: &HashMap<(NodeKey, Property), &AllocatedRule>,
    rewritten: &mut HashMap<(NodeKey, Property), Arc<Relation>>,
    events: &mut Vec<MechanismEvent>,
    mechanisms: &mut Vec<MechanismRow>,
    catalog: &Catalog,
    privacy_unit: &PrivacyUnitDefinition,
    options: &RewriteOptions,
    share: Budget,
) -> Result<Arc<Relation>> {
    let key = (Arc::as_ptr(node), property);
    if let Some(done) = rewritten.get(&key) {
        return Ok(done.clone());
    }
    let allocated = assigned.get(&key).ok_or_else(|| {
        Error::rewriting(format!(
            "no allocated rule for {} {} achieving {property}",
            node.variant_name(),
            node.name()
        ))
    })?;
    let mut inputs = Vec::with_capacity(node.inputs().len());
    for (input, p) in node.inputs().iter().zip(&allocated.input_properties) {
        inputs.push(rewrite_node(
            input,
            *p,
            assigned,
            rewritten,
            events,
            mechanisms,
            catalog,
            privacy_unit,
            options,
            share,
        )?);
    }
    let out = apply_rule(
        node,
        &allocated.rule,
        &inputs,
        events,
        mechanisms,
        catalog,
        privacy_unit,
        options,
        share,
    )?;
    rewritten.insert(key, out.clone());
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn apply_rule(
    node: &Arc<Relation>,
    rule: &RewritingRule,
    inputs: &[Arc<Relation>],
    events: &mut Vec<MechanismEvent>,
    mechanisms: &mut Vec<MechanismRow>,
    catalog: &Catalog,
    privacy_unit: &PrivacyUnitDefinition,
    options: &RewriteOptions,
    share: Budget,
) -> Result<Arc<Relation>> {
    use Property::*;
    match node.as_ref() {
        Relation::Table(t) => match rule.output {
            Pub => Ok(node.clone()),
            SyntheticData => {
                let twin = catalog
                    .table(&t.name)
                    .and_then(|e| e.synthetic.clone())
                    .ok_or_else(|| {
                        Error::rewriting(format!("table {:?} has no synthetic twin", t.name))
                    })?;
                Ok(Arc::new(Relation::table(twin, t.schema.clone(), Visibility::Public)))
            }
            Pup => attach_pid(node, privacy_unit, catalog),
            other => Err(Error::rewriting(format!(
                "table {:?} cannot achieve {other}",
                t.name
            ))),
        },
        Relation::Values(_) => Ok(node.clone()),
        Relation::Map(m) => {
            let mut projections = m.projections.clone();
            if rule.output == Pup {
                projections.push((PID_COLUMN.to_string(), Expr::col(PID_COLUMN)));
            }
            Ok(Arc::new(Relation::map(
                projections,
                m.filter.clone(),
                m.order_by.clone(),
                m.limit,
                inputs[0].clone(),
            )?))
        }
        Relation::Reduce(r) => match (rule.inputs.as_slice(), rule.output) {
            ([Pup], Dp) => {
                let params = DpReduceParams {
                    query_id: &options.query_id,
                    epsilon: share.epsilon,
                    delta: share.delta,
                    clip_multiplier: options.clip_multiplier,
                    key_budget_share: options.key_budget_share,
                    max_public_groups: options.max_public_groups,
                    noise: options.noise,
                };
                let outcome = rewrite_reduce_dp(r, inputs[0].clone(), &params)?;
                events.extend(outcome.events);
                mechanisms.extend(outcome.mechanisms);
                Ok(outcome.relation)
            }
            ([Pup], Pup) => {
                // Propagate the privacy unit by grouping per PID too.
                let mut group_by = r.group_by.clone();
                if !group_by.iter().any(|(n, _)| n == PID_COLUMN) {
                    group_by.push((PID_COLUMN.to_string(), Expr::col(PID_COLUMN)));
                }
                Ok(Arc::new(Relation::reduce(
                    group_by,
                    r.aggregates.clone(),
                    inputs[0].clone(),
                )?))
            }
            _ => Ok(Arc::new(Relation::reduce(
                r.group_by.clone(),
                r.aggregates.clone(),
                inputs[0].clone(),
            )?)),
        },
        Relation::Join(j) =>

        {
            let left = inputs[0].clone();
            let right = inputs[1].clone();
            let left_pup = rule.inputs[0] == Pup;
            let right_pup = rule.inputs[1] == Pup;
            if !left_pup && !right_pup {
                return Ok(Arc::new(Relation::join(j.kind, j.on.clone(), left, right)?));
            }
            // The original output columns keep their names (the appended PID
            // columns are the only new ones); project them back and append a
            // single PID.
            let fields = Relation::join_output_fields(j.kind, &left, &right);
            let lsplit = left.schema().len();
            let orig_left = j.left.schema().len();
            let find = |side_left: bool, idx: usize| -> String {
                let pos = if side_left { idx } else { lsplit + idx };
                fields[pos].name.clone()
            };
            let mut on = j.on.clone();
            let left_pid = left.schema().index_of(PID_COLUMN);
            let right_pid = right.schema().index_of(PID_COLUMN);
            if left_pup && right_pup {
                let l = find(true, left_pid.expect("left PID"));
                let r = find(false, right_pid.expect("right PID"));
                let pid_eq = Expr::eq(Expr::col(l), Expr::col(r));
                on = if matches!(j.kind, JoinKind::Cross) {
                    pid_eq
                } else {
                    Expr::and(on, pid_eq)
                };
            }
            let kind = if matches!(j.kind, JoinKind::Cross) && left_pup && right_pup {
                JoinKind::Inner
            } else {
                j.kind
            };
            let joined = Arc::new(Relation::join(kind, on, left.clone(), right.clone())?);
            let joined_fields = joined.schema().fields();
            let mut projections: Vec<(String, Expr)> = Vec::new();
            for (i, f) in j.schema.fields().iter().enumerate() {
                // Original output column i maps to the same side/index in
                // the rewritten join.
                let pos = if i < orig_left { i } else { lsplit + (i - orig_left) };
                projections.push((f.name.clone(), Expr::col(joined_fields[pos].name.clone())));
            }
            let pid_expr = match (left_pup, right_pup, j.kind) {
                (true, true, JoinKind::Full) => {
                    let l = Expr::col(find(true, left_pid.unwrap()));
                    let r = Expr::col(find(false, right_pid.unwrap()));
                    Expr::case(Expr::is_null(l.clone()), r, l)
                }
                (true, true, JoinKind::Right) => Expr::col(find(false, right_pid.unwrap())),
                (true, _, _) => Expr::col(find(true, left_pid.unwrap())),
                (false, true, _) => Expr::col(find(false, right_pid.unwrap())),
                (false, false, _) => unreachable!(),
            };
            projections.push((PID_COLUMN.to_string(), pid_expr));
            Ok(Arc::new(Relation::map(projections, None, vec![], None, joined)?))
        }
        Relation::SetOp(s) => {
            let mut left = inputs[0].clone();
            let mut right = inputs[1].clone();
            if rule.output == Pup {
                // Align both sides positionally to (original columns, PID).
                left = align_pup_side(&s.left, left)?;
                right = align_pup_side(&s.right, right)?;
            }
            Ok(Arc::new(Relation::set_op(s.kind, s.all, left, right)?))
        }
    }
}

/// Project a PUP-rewritten set-operation side back to its original column
/// order with the PID appended last.
fn align_pup_side(original: &Arc<Relation>, rewritten: Arc<Relation>) -> Result<Arc<Relation>> {
    let mut projections: Vec<(String, Expr)> = original
        .schema()
        .names()
        .into_iter()
        .map(|n| (n.to_string(), Expr::col(n)))
        .collect();
    projections.push((PID_COLUMN.to_string(), Expr::col(PID_COLUMN)));
    crate::frontend::map_or_input(projections, None, vec![], None, rewritten)
}

/// Full pipeline: set, eliminate, select, apply, and assemble the report.
pub fn rewrite(
    root: &Arc<Relation>,
    catalog: &Catalog,
    privacy_unit: &PrivacyUnitDefinition,
    options: &RewriteOptions,
) -> Result<RewriteOutcome> {
    let candidates = set_rules(root, catalog, privacy_unit);
    let candidates = eliminate(candidates)?;
    let allocation = select_allocation(&candidates, options.target, options.budget)?;
    let (relation, events, mechanisms) =
        apply(&allocation, root, catalog, privacy_unit, options)?;
    let report = RewriteReport {
        query_id: options.query_id.clone(),
        target: options.target.to_string(),
        budget: BudgetView {
            epsilon: options.budget.epsilon,
            delta: options.budget.delta,
        },
        allocation: allocation
            .rules
            .iter()
            .map(|r| AllocationRow {
                node: r.node.name().to_string(),
                variant: r.node.variant_name().to_string(),
                rule: r.rule.to_string(),
            })
            .collect(),
        n_dp: allocation.n_dp,
        per_mechanism: (allocation.n_dp > 0).then_some(BudgetView {
            epsilon: options.budget.epsilon / allocation.n_dp as f64,
            delta: options.budget.delta / allocation.n_dp as f64,
        }),
        mechanisms,
        composed: None,
        session: None,
    };
    Ok(RewriteOutcome { relation, events, report })
}
