//! Empirical DP evaluation: deterministic Halton fixtures, adjacent datasets
//! by whole-user removal, and privacy-profile estimation
//! delta(e^eps) = sup_k sup_x f_D(x) - e^eps * f_Dk(x).

pub mod halton;

pub use halton::halton;

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::Normal;

use crate::connectors::{Connection, Fixture};
use crate::data_type::Value;
use crate::error::{Error, Result};

/// How many rows each user owns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RowsPerUser {
    /// Scenario 1: each user owns exactly one row.
    ExactlyOne,
    /// Scenario 2: per-user row counts drawn from a normal distribution
    /// centered at half the target table size, clamped to non-negative
    /// integers.
    NormalAroundHalfTable { table_size: usize },
}

#[derive(Clone, Debug)]
pub struct HaltonFixtureParams {
    pub table_name: String,
    pub n_users: usize,
    pub rows_per_user: RowsPerUser,
    /// Cardinality of the integer grouping column (values 1..=n_groups).
    pub n_groups: usize,
    /// Offset into the Halton sequences.
    pub offset: usize,
    /// Seed for the scenario-2 row-count draws.
    pub seed: u64,
}

/// Deterministic table: columns `user_id` (the PID), `x` (Halton base 2 in
/// [0, 1]) and `g` (integer group from Halton base 3).
pub fn build_halton_fixture(params: &HaltonFixtureParams) -> Result<Fixture> {
    if params.n_users == 0 || params.n_groups == 0 {
        return Err(Error::invalid("fixture needs at least one user and one group"));
    }
    let counts: Vec<usize> = match params.rows_per_user {
        RowsPerUser::ExactlyOne => vec![1; params.n_users],
        RowsPerUser::NormalAroundHalfTable { table_size } => {
            if table_size == 0 {
                return Err(Error::invalid("table size must be positive"));
            }
            let mean = table_size as f64 / 2.0;
            let stddev = (table_size as f64 / 8.0).max(1.0);
            let normal = Normal::new(mean, stddev)
                .map_err(|e| Error::invalid(format!("bad row-count law: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            (0..params.n_users)
                .map(|_| normal.sample(&mut rng).round().max(0.0) as usize)
                .collect()
        }
    };
    let mut rows = Vec::new();
    let mut index = params.offset + 1;
    for (user, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let x = halton(index, 2);
            let g = (halton(index, 3) * params.n_groups as f64).floor() as i64 + 1;
            rows.push(vec![
                Value::Integer(user as i64),
                Value::Float(x),
                Value::Integer(g.min(params.n_groups as i64)),
            ]);
            index += 1;
        }
    }
    Ok(Fixture {
        name: params.table_name.clone(),
        columns: vec![
            ("user_id".to_string(), "integer".to_string()),
            ("x".to_string(), "float".to_string()),
            ("g".to_string(), "integer".to_string()),
        ],
        rows,
    })
}

/// One fixture per PID, equal to the reference minus all of that user's rows.
pub fn adjacent_fixtures(fixture: &Fixture, pid_column: &str) -> Result<Vec<(Value, Fixture)>> {
    let pid_idx = fixture
        .columns
        .iter()
        .position(|(name, _)| name == pid_column)
        .ok_or_else(|| Error::invalid(format!("fixture has no column {pid_column:?}")))?;
    let mut pids: Vec<Value> = Vec::new();
    let mut seen = BTreeSet::new();
    for row in &fixture.rows {
        let key = format!("{}", row[pid_idx]);
        if seen.insert(key) {
            pids.push(row[pid_idx].clone());
        }
    }
    Ok(pids
        .into_iter()
        .map(|pid| {
            let rows = fixture
                .rows
                .iter()
                .filter(|row| row[pid_idx] != pid)
                .cloned()
                .collect();
            (
                pid,
                Fixture {
                    name: fixture.name.clone(),
                    columns: fixture.columns.clone(),
                    rows,
                },
            )
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrivacyProfile {
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub runs: usize,
    pub margin: Vec<f64>,
}

impl PrivacyProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,delta,margin\n");
        for i in 0..self.eps.len() {
            out.push_str(&format!("{},{},{}\n", self.eps[i], self.delta[i], self.margin[i]));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct ProfileParams {
    pub runs: usize,
    pub eps_grid: Vec<f64>,
    /// Confidence level of the sampling margin (e.g. 0.95).
    pub confidence: f64,
    pub seed: u64,
    /// Adjacent datasets are subsampled to this many users.
    pub max_adjacent: usize,
}

impl Default for ProfileParams {
    fn default() -> ProfileParams {
        ProfileParams {
            runs: 2000,
            eps_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            confidence: 0.95,
            seed: 0,
            max_adjacent: 10,
        }
    }
}

/// One run's output: released group key (joined text) to aggregate value.
pub type RunOutput = BTreeMap<String, f64>;

/// Execute `dp_sql` `runs` times against a fixture on a fresh seeded embedded
/// connection and collect per-run outputs. The first `key_columns` result
/// columns form the group key; the last column is the aggregate value.
pub fn collect_runs(
    dp_sql: &str,
    fixture: &Fixture,
    key_columns: usize,
    runs: usize,
    seed: u64,
) -> Result<Vec<RunOutput>> {
    let mut conn = Connection::open_embedded(None, seed)?;
    conn.load_fixture(fixture)?;
    let mut out = Vec::with_capacity(runs);
    for _ in 0..runs {
        let table = conn.execute(dp_sql)?;
        let mut run = RunOutput::new();
        for row in &table.rows {
            let key: Vec<String> = row[..key_columns].iter().map(|v| v.to_string()).collect();
            let value = match row.last() {
                Some(v) => match v.as_f64() {
                    Some(f) => f,
                    None => continue,
                },
                None => continue,
            };
            run.insert(key.join("\u{1f}"), value);
        }
        out.push(run);
    }
    Ok(out)
}

/// Estimate the privacy profile of a rewritten query at desk scale: run it
/// repeatedly on the reference fixture and on each adjacent fixture, estimate
/// per-group output densities with shared-bin histograms (absence is its own
/// outcome), and take the sup over adjacents, groups and bins.
pub fn estimate_privacy_profile(
    dp_sql: &str,
    fixture: &Fixture,
    pid_column: &str,
    key_columns: usize,
    params: &ProfileParams,
) -> Result<PrivacyProfile> {
    let mut adjacents = adjacent_fixtures(fixture, pid_column)?;
    adjacents.truncate(params.max_adjacent);
    let mut jobs: Vec<(u64, Fixture)> = vec![(params.seed, fixture.clone())];
    for (i, (_, adj)) in adjacents.iter().enumerate() {
        jobs.push((params.seed.wrapping_add(1 + i as u64), adj.clone()));
    }
    let results: Result<Vec<Vec<RunOutput>>> = jobs
        .par_iter()
        .map(|(seed, fx)| collect_runs(dp_sql, fx, key_columns, params.runs, *seed))
        .collect();
    let results = results?;
    let (reference, adjacent_runs) = results.split_first().expect("at least the reference");
    Ok(profile_from_runs(
        reference,
        adjacent_runs,
        &params.eps_grid,
        params.confidence,
    ))
}

/// Histogram-based profile estimation from already-collected run outputs.
/// Exposed separately so closed-form mechanisms can be checked against the
/// same estimator.
pub fn profile_from_runs(
    reference: &[RunOutput],
    adjacents: &[Vec<RunOutput>],
    eps_grid: &[f64],
    confidence: f64,
) -> PrivacyProfile {
    let runs = reference.len();
    let bins = (runs as f64).sqrt().ceil() as usize;
    // Union of group keys over everything.
    let mut keys: BTreeSet<String> = BTreeSet::new();
    for run in reference.iter().chain(adjacents.iter().flatten()) {
        keys.extend(run.keys().cloned());
    }
    // Shared bin ranges per key.
    let mut ranges: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for key in &keys {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for run in reference.iter().chain(adjacents.iter().flatten()) {
            if let Some(&v) = run.get(key) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        ranges.insert(key, (lo, hi));
    }
    // Per-key histogram (+ absent mass) for one batch of runs.
    let histogram = |runs_batch: &[RunOutput], key: &str| -> Vec<f64> {
        let (lo, hi) = ranges[key];
        let n = runs_batch.len() as f64;
        let mut counts = vec![0.0; bins + 1]; // last slot = absent
        for run in runs_batch {
            match run.get(key) {
                None => counts[bins] += 1.0,
                Some(&v) => {
                    let b = if hi > lo {
                        (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
                    } else {
                        0
                    };
                    counts[b.min(bins - 1)] += 1.0;
                }
            }
        }
        counts.iter().map(|c| c / n).collect()
    };
    let ref_hists: BTreeMap<&str, Vec<f64>> = keys
        .iter()
        .map(|k| (k.as_str(), histogram(reference, k)))
        .collect();
    let mut delta: Vec<f64> = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let factor = eps.exp();
        let mut worst: f64 = 0.0;
        for adj in adjacents {
            for key in &keys {
                let fd = &ref_hists[key.as_str()];
                let fk = histogram(adj, key);
                for (pd, pk) in fd.iter().zip(&fk) {
                    worst = worst.max(pd - factor * pk);
                }
            }
        }
        delta.push(worst);
    }
    // Isotonic cleanup: delta(e^eps) is non-increasing in eps.
    for i in (0..delta.len().saturating_sub(1)).rev() {
        delta[i] = delta[i].max(delta[i + 1]);
    }
    let alpha = 1.0 - confidence;
    let base_margin = ((2.0 / alpha).ln() / (2.0 * runs as f64)).sqrt();
    let margin: Vec<f64> = eps_grid.iter().map(|e| (1.0 + e.exp()) * base_margin).collect();
    PrivacyProfile { eps: eps_grid.to_vec(), delta, runs, margin }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_one_counts() {
        let fx = build_halton_fixture(&HaltonFixtureParams {
            table_name: "t".into(),
            n_users: 10,
            rows_per_user: RowsPerUser::ExactlyOne,
            n_groups: 3,
            offset: 0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(fx.rows.len(), 10);
        let pids: BTreeSet<String> = fx.rows.iter().map(|r| r[0].to_string()).collect();
        assert_eq!(pids.len(), 10);
        for row in &fx.rows {
            let Value::Integer(g) = row[2] else { panic!() };
            assert!((1..=3).contains(&g));
            let Value::Float(x) = row[1] else { panic!() };
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn fixture_is_reproducible() {
        let params = HaltonFixtureParams {
            table_name: "t".into(),
            n_users: 7,
            rows_per_user: RowsPerUser::NormalAroundHalfTable { table_size: 20 },
            n_groups: 4,
            offset: 3,
            seed: 99,
        };
        assert_eq!(build_halton_fixture(&params).unwrap(), build_halton_fixture(&params).unwrap());
    }

    #[test]
    fn adjacents_drop_whole_users() {
        let fx = build_halton_fixture(&HaltonFixtureParams {
            table_name: "t".into(),
            n_users: 3,
            rows_per_user: RowsPerUser::NormalAroundHalfTable { table_size: 8 },
            n_groups: 2,
            offset: 0,
            seed: 1,
        })
        .unwrap();
        let adj = adjacent_fixtures(&fx, "user_id").unwrap();
        assert_eq!(adj.len(), 3);
        for (pid, a) in &adj {
            let removed = fx.rows.iter().filter(|r| &r[0] == pid).count();
            assert_eq!(a.rows.len(), fx.rows.len() - removed);
            assert!(a.rows.iter().all(|r| &r[0] != pid));
        }
    }

    #[test]
    fn identical_distributions_give_zero_delta() {
        // f_D == f_Dk exactly: delta(e^0) must be ~0 (here exactly 0).
        let mk = |n: usize| -> Vec<RunOutput> {
            (0..n)
                .map(|i| {
                    let mut m = RunOutput::new();
                    m.insert("g".into(), (i % 10) as f64);
                    m
                })
                .collect()
        };
        let reference = mk(1000);
        let adj = vec![mk(1000)];
        let p = profile_from_runs(&reference, &adj, &[0.0, 1.0], 0.95);
        assert!(p.delta[0] <= 1e-12);
        assert!(p.delta[1] <= p.delta[0]);
    }
}
