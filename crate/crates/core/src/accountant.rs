//! Privacy-loss bookkeeping: every DP mechanism event is recorded and the
//! total loss is composed through Rényi divergence curves on a fixed order
//! grid, then converted back to an (epsilon, delta) statement.

use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "gaussian-sum")]
    GaussianSum,
    #[serde(rename = "tau-threshold")]
    TauThreshold,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::GaussianSum => write!(f, "gaussian-sum"),
            EventKind::TauThreshold => write!(f, "tau-threshold"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechanismEvent {
    pub query: String,
    pub kind: EventKind,
    pub c: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Unix seconds at record time; not part of the ledger file format.
    pub timestamp: u64,
}

impl MechanismEvent {
    pub fn gaussian_sum(
        query: impl Into<String>,
        c: f64,
        sigma: f64,
        epsilon: f64,
        delta: f64,
    ) -> MechanismEvent {
        MechanismEvent {
            query: query.into(),
            kind: EventKind::GaussianSum,
            c,
            sigma,
            epsilon,
            delta,
            timestamp: now(),
        }
    }

    pub fn tau_threshold(
        query: impl Into<String>,
        c: f64,
        sigma: f64,
        epsilon: f64,
        delta: f64,
    ) -> MechanismEvent {
        MechanismEvent {
            query: query.into(),
            kind: EventKind::TauThreshold,
            c,
            sigma,
            epsilon,
            delta,
            timestamp: now(),
        }
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// One ledger line; field names are the file format.
#[derive(Serialize, Deserialize)]
struct LedgerLine {
    query: String,
    kind: EventKind,
    c: f64,
    sigma: f64,
    epsilon: f64,
    delta: f64,
}

impl From<&MechanismEvent> for LedgerLine {
    fn from(e: &MechanismEvent) -> LedgerLine {
        LedgerLine {
            query: e.query.clone(),
            kind: e.kind,
            c: e.c,
            sigma: e.sigma,
            epsilon: e.epsilon,
            delta: e.delta,
        }
    }
}

/// Rényi-DP curve on the accountant's order grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RdpCurve {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
}

/// Composed loss at a caller-chosen conversion delta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposedLoss {
    pub epsilon: f64,
    pub delta: f64,
}

/// Log-spaced default order grid (20 points).
pub fn default_alpha_grid() -> Vec<f64> {
    vec![
        1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0,
        96.0, 128.0, 192.0, 256.0,
    ]
}

pub struct Accountant {
    events: Vec<MechanismEvent>,
    alphas: Vec<f64>,
    path: Option<PathBuf>,
}

impl Accountant {
    pub fn in_memory() -> Accountant {
        Accountant { events: Vec::new(), alphas: default_alpha_grid(), path: None }
    }

    /// File-backed ledger: existing lines are replayed, new events appended,
    /// so a restart does not lose accumulated loss.
    pub fn open(path: impl AsRef<Path>) -> Result<Accountant> {
        let path = path.as_ref().to_path_buf();
        let mut events = Vec::new();
        if path.exists() {
            let file = std::fs::File::open(&path)?;
            for line in BufReader::new(file).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: LedgerLine = serde_json::from_str(&line)
                    .map_err(|e| Error::invalid(format!("corrupt ledger line: {e}")))?;
                events.push(MechanismEvent {
                    query: parsed.query,
                    kind: parsed.kind,
                    c: parsed.c,
                    sigma: parsed.sigma,
                    epsilon: parsed.epsilon,
                    delta: parsed.delta,
                    timestamp: 0,
                });
            }
        }
        Ok(Accountant { events, alphas: default_alpha_grid(), path: Some(path) })
    }

    pub fn with_alpha_grid(mut self, alphas: Vec<f64>) -> Accountant {
        self.alphas = alphas;
        self
    }

    pub fn events(&self) -> &[MechanismEvent] {
        &self.events
    }

    pub fn record(&mut self, event: MechanismEvent) -> Result<()> {
        if !(event.sigma > 0.0) {
            return Err(Error::invalid(format!(
                "event sigma must be positive, got {}",
                event.sigma
            )));
        }
        if !(event.c > 0.0) {
            return Err(Error::invalid(format!(
                "event sensitivity must be positive, got {}",
                event.c
            )));
        }
        if !(event.epsilon >= 0.0) || !(0.0..1.0).contains(&event.delta) {
            return Err(Error::invalid("event budget share out of range"));
        }
        if let Some(path) = &self.path {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            let line = serde_json::to_string(&LedgerLine::from(&event))
                .map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(file, "{line}")?;
        }
        self.events.push(event);
        Ok(())
    }

    /// Sum of the Gaussian events' RDP curves over the order grid.
    pub fn rdp_curve(&self) -> RdpCurve {
        self.rdp_curve_for(|_| true)
    }

    fn rdp_curve_for(&self, select: impl Fn(&MechanismEvent) -> bool) -> RdpCurve {
        let mut values = vec![0.0; self.alphas.len()];
        for event in self.events.iter().filter(|e| select(e)) {
            if event.kind == EventKind::GaussianSum {
                let rho = event.c * event.c / (2.0 * event.sigma * event.sigma);
                for (v, &alpha) in values.iter_mut().zip(&self.alphas) {
                    *v += alpha * rho;
                }
            }
        }
        RdpCurve { alphas: self.alphas.clone(), values }
    }

    /// Total loss across the whole ledger.
    pub fn compose(&self, delta: f64) -> Result<ComposedLoss> {
        self.compose_for(delta, |_| true)
    }

    /// Loss attributed to a single query id.
    pub fn compose_query(&self, query: &str, delta: f64) -> Result<ComposedLoss> {
        self.compose_for(delta, |e| e.query == query)
    }

    fn compose_for(
        &self,
        delta: f64,
        select: impl Fn(&MechanismEvent) -> bool,
    ) -> Result<ComposedLoss> {
        if !(0.0 < delta && delta < 1.0) {
            return Err(Error::invalid("conversion delta must be in (0, 1)"));
        }
        let mut any = false;
        let mut tau_delta = 0.0;
        for event in self.events.iter().filter(|e| select(e)) {
            any = true;
            if event.kind == EventKind::TauThreshold {
                tau_delta += event.delta;
            }
        }
        if !any {
            return Ok(ComposedLoss { epsilon: 0.0, delta: 0.0 });
        }
        let curve = self.rdp_curve_for(select);
        let has_gaussian = curve.values.iter().any(|&v| v > 0.0);
        let epsilon = if has_gaussian { convert_rdp(&curve, delta) } else { 0.0 };
        Ok(ComposedLoss { epsilon, delta: delta + tau_delta })
    }
}

/// Compose a batch of events at the delta they actually spent on Gaussian
/// noise, so the reported total delta equals the sum of all shares.
pub fn compose_events(events: &[MechanismEvent]) -> Result<ComposedLoss> {
    let gaussian_delta: f64 = events
        .iter()
        .filter(|e| e.kind == EventKind::GaussianSum)
        .map(|e| e.delta)
        .sum();
    let tau_delta: f64 = events
        .iter()
        .filter(|e| e.kind == EventKind::TauThreshold)
        .map(|e| e.delta)
        .sum();
    if gaussian_delta <= 0.0 {
        return Ok(ComposedLoss { epsilon: 0.0, delta: tau_delta });
    }
    let mut acc = Accountant::in_memory();
    for e in events {
        acc.record(e.clone())?;
    }
    acc.compose(gaussian_delta)
}

/// RDP-to-DP conversion minimized over the order grid, using the refined
/// bound eps(alpha) = rdp(alpha) + ln(1/delta)/(alpha-1) + ln(1-1/alpha)
/// - ln(alpha)/(alpha-1), which stays at or below the classical Gaussian
/// calibration at the mechanism's own delta.
pub fn convert_rdp(curve: &RdpCurve, delta: f64) -> f64 {
    let log_inv_delta = (1.0 / delta).ln();
    curve
        .alphas
        .iter()
        .zip(&curve.values)
        .map(|(&alpha, &rdp)| {
            rdp + log_inv_delta / (alpha - 1.0) + (1.0 - 1.0 / alpha).ln()
                - alpha.ln() / (alpha - 1.0)
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::gaussian_sigma;

    #[test]
    fn empty_ledger_is_zero_loss() {
        let acc = Accountant::in_memory();
        let loss = acc.compose(1e-5).unwrap();
        assert_eq!(loss, ComposedLoss { epsilon: 0.0, delta: 0.0 });
    }

    #[test]
    fn record_validates() {
        let mut acc = Accountant::in_memory();
        assert!(acc
            .record(MechanismEvent::gaussian_sum("q", 1.0, -1.0, 1.0, 1e-5))
            .is_err());
        assert!(acc
            .record(MechanismEvent::gaussian_sum("q", 1.0, 2.0, 1.0, 1e-5))
            .is_ok());
        assert_eq!(acc.events().len(), 1);
    }

    #[test]
    fn single_gaussian_within_classical_claim() {
        let mut acc = Accountant::in_memory();
        let sigma = gaussian_sigma(1.0, 1e-5, 1.0).unwrap();
        acc.record(MechanismEvent::gaussian_sum("q", 1.0, sigma, 1.0, 1e-5))
            .unwrap();
        let loss = acc.compose(1e-5).unwrap();
        assert!(loss.epsilon <= 1.0, "composed epsilon {} > 1", loss.epsilon);
        assert!(loss.epsilon > 0.5);
    }

    #[test]
    fn two_identical_gaussians_beat_naive_sum() {
        let sigma = gaussian_sigma(1.0, 1e-5, 1.0).unwrap();
        let mut one = Accountant::in_memory();
        one.record(MechanismEvent::gaussian_sum("q", 1.0, sigma, 1.0, 1e-5))
            .unwrap();
        let e1 = one.compose(1e-5).unwrap().epsilon;
        let mut two = Accountant::in_memory();
        for _ in 0..2 {
            two.record(MechanismEvent::gaussian_sum("q", 1.0, sigma, 1.0, 1e-5))
                .unwrap();
        }
        let e2 = two.compose(1e-5).unwrap().epsilon;
        assert!(e2 < 2.0 * e1, "composition {e2} not below naive {}", 2.0 * e1);
        assert!(e2 > e1);
    }

    #[test]
    fn tau_events_add_delta() {
        let mut acc = Accountant::in_memory();
        acc.record(MechanismEvent::tau_threshold("q", 1.0, 3.0, 0.5, 1e-4))
            .unwrap();
        let loss = acc.compose(1e-5).unwrap();
        assert_eq!(loss.epsilon, 0.0);
        assert!((loss.delta - (1e-5 + 1e-4)).abs() < 1e-18);
    }

    #[test]
    fn ledger_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        {
            let mut acc = Accountant::open(&path).unwrap();
            acc.record(MechanismEvent::gaussian_sum("q1", 1.0, 4.0, 0.5, 1e-5))
                .unwrap();
            acc.record(MechanismEvent::tau_threshold("q2", 1.0, 8.0, 0.25, 1e-4))
                .unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value =
            serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["query"], "q1");
        assert_eq!(first["kind"], "gaussian-sum");
        assert_eq!(first["sigma"], 4.0);
        // reload accumulates
        let acc = Accountant::open(&path).unwrap();
        assert_eq!(acc.events().len(), 2);
        assert!(acc.compose_query("q1", 1e-5).unwrap().epsilon > 0.0);
        assert_eq!(acc.compose_query("q2", 1e-5).unwrap().epsilon, 0.0);
    }

    #[test]
    fn composition_is_permutation_invariant() {
        let evts = vec![
            MechanismEvent::gaussian_sum("q", 1.0, 4.0, 0.5, 1e-5),
            MechanismEvent::gaussian_sum("q", 2.0, 9.0, 0.25, 1e-6),
            MechanismEvent::tau_threshold("q", 1.0, 8.0, 0.25, 1e-4),
        ];
        let mut fwd = Accountant::in_memory();
        let mut rev = Accountant::in_memory();
        for e in &evts {
            fwd.record(e.clone()).unwrap();
        }
        for e in evts.iter().rev() {
            rev.record(e.clone()).unwrap();
        }
        assert_eq!(fwd.compose(1e-5).unwrap(), rev.compose(1e-5).unwrap());
    }
}
