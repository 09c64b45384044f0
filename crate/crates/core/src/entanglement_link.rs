//! Heralded remote-entanglement link budgets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Published bulk-optics rate used as a reference point, 1/s.
pub const PUBLISHED_BULK_RATE: f64 = 2e-3;

/// One ion plus its photon collection and detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterNode {
    pub branching_ratio: f64,
    /// Solid-angle fraction times optical losses.
    pub coupling_efficiency: f64,
    pub detector_qe: f64,
}

impl EmitterNode {
    pub fn new(branching_ratio: f64, coupling_efficiency: f64, detector_qe: f64) -> Result<Self> {
        let n = EmitterNode {
            branching_ratio,
            coupling_efficiency,
            detector_qe,
        };
        n.validate("node")?;
        Ok(n)
    }

    fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [
            ("branching_ratio", self.branching_ratio),
            ("coupling_efficiency", self.coupling_efficiency),
            ("detector_qe", self.detector_qe),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{path}.{name}"), "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    fn detected(&self) -> f64 {
        self.coupling_efficiency * self.detector_qe
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// One photon from either node heralds.
    LinearHerald,
    /// Both photons must be detected in coincidence.
    TwoPhotonCoincidence,
}

impl Protocol {
    pub fn default_prefactor(self) -> f64 {
        match self {
            Protocol::LinearHerald => 1.0,
            Protocol::TwoPhotonCoincidence => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementLink {
    pub node_a: EmitterNode,
    pub node_b: EmitterNode,
    #[serde(rename = "attempt_rate_hz")]
    pub attempt_rate: f64,
    pub protocol: Protocol,
    /// Defaults to the protocol's standard value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub herald_prefactor: Option<f64>,
}

impl EntanglementLink {
    pub fn symmetric(node: EmitterNode, attempt_rate: f64, protocol: Protocol) -> Self {
        EntanglementLink {
            node_a: node,
            node_b: node,
            attempt_rate,
            protocol,
            herald_prefactor: None,
        }
    }

    pub fn prefactor(&self) -> f64 {
        self.herald_prefactor.unwrap_or(self.protocol.default_prefactor())
    }

    pub fn validate(&self) -> Result<()> {
        self.node_a.validate("node_a")?;
        self.node_b.validate("node_b")?;
        if !(self.attempt_rate > 0.0) || !self.attempt_rate.is_finite() {
            return Err(Error::invalid("attempt_rate_hz", "must be positive"));
        }
        let p = self.prefactor();
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid("herald_prefactor", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Herald probability per attempt.
    pub fn per_attempt_probability(&self) -> Result<f64> {
        self.validate()?;
        let (a, b) = (&self.node_a, &self.node_b);
        let p = match self.protocol {
            Protocol::LinearHerald => {
                // geometric mean of the branching ratios equals either when nodes match
                let branching = (a.branching_ratio * b.branching_ratio).sqrt();
                self.prefactor() * branching * (a.detected() * b.detected()).sqrt()
            }
            Protocol::TwoPhotonCoincidence => {
                self.prefactor() * a.branching_ratio * a.detected() * b.branching_ratio * b.detected()
            }
        };
        if p > 1.0 {
            return Err(Error::invalid("link", format!("per-attempt probability {p} exceeds 1")));
        }
        Ok(p)
    }
}

/// Solid-angle fraction reduced by fractional stack loss.
pub fn coupling_from_geometry(solid_angle_fraction: f64, stack_loss: f64) -> Result<f64> {
    for (name, v) in [("solid_angle_fraction", solid_angle_fraction), ("stack_loss", stack_loss)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok(solid_angle_fraction * (1.0 - stack_loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub protocol: Protocol,
    pub attempt_rate_hz: f64,
    pub per_attempt_probability: f64,
    pub rate_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_to_baseline: Option<f64>,
}

pub fn entanglement_rate(link: &EntanglementLink) -> Result<RateReport> {
    let p = link.per_attempt_probability()?;
    Ok(RateReport {
        protocol: link.protocol,
        attempt_rate_hz: link.attempt_rate,
        per_attempt_probability: p,
        rate_s: link.attempt_rate * p,
        ratio_to_baseline: None,
    })
}

pub fn rate_ratio(candidate: &RateReport, baseline: &RateReport) -> Result<f64> {
    if !(baseline.rate_s > 0.0) {
        return Err(Error::Domain("baseline rate is zero".into()));
    }
    Ok(candidate.rate_s / baseline.rate_s)
}

/// Result of simulating heralding attempts one by one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub attempts: u64,
    pub successes: u64,
    pub probability: f64,
    pub standard_error: f64,
}

/// Draws every stage of each attempt as an independent Bernoulli trial.
pub fn monte_carlo(link: &EntanglementLink, attempts: u64, seed: u64) -> Result<MonteCarloEstimate> {
    link.validate()?;
    if attempts == 0 {
        return Err(Error::Domain("need at least one attempt".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (&link.node_a, &link.node_b);
    let stages: Vec<f64> = match link.protocol {
        Protocol::LinearHerald => vec![
            link.prefactor(),
            (a.branching_ratio * b.branching_ratio).sqrt(),
            (a.detected() * b.detected()).sqrt(),
        ],
        Protocol::TwoPhotonCoincidence => vec![
            link.prefactor(),
            a.branching_ratio,
            a.coupling_efficiency,
            a.detector_qe,
            b.branching_ratio,
            b.coupling_efficiency,
            b.detector_qe,
        ],
    };
    let mut successes = 0u64;
    for _ in 0..attempts {
        if stages.iter().all(|&p| rng.random::<f64>() < p) {
            successes += 1;
        }
    }
    let p = successes as f64 / attempts as f64;
    let analytic = link.per_attempt_probability()?;
    Ok(MonteCarloEstimate {
        attempts,
        successes,
        probability: p,
        standard_error: (analytic * (1.0 - analytic) / attempts as f64).sqrt(),
    })
}

/// Proposed transparent-trap unit against a bulk-optics baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkComparison {
    pub proposed: RateReport,
    pub baseline_linear: RateReport,
    pub baseline_coincidence: RateReport,
    pub published_baseline_rate_s: f64,
    /// Proposed linear rate over the published baseline.
    pub ratio_to_published: f64,
    /// Proposed over baseline, both linear.
    pub ratio_linear: f64,
    /// True when neither baseline model reproduces the published rate to a factor of 2.
    pub baseline_discrepancy: bool,
}

pub fn compare(proposed: &EntanglementLink, baseline: &EntanglementLink) -> Result<LinkComparison> {
    let mut p = entanglement_rate(proposed)?;
    let lin = EntanglementLink {
        protocol: Protocol::LinearHerald,
        herald_prefactor: None,
        ..*baseline
    };
    let coin = EntanglementLink {
        protocol: Protocol::TwoPhotonCoincidence,
        herald_prefactor: None,
        ..*baseline
    };
    let bl = entanglement_rate(&lin)?;
    let bc = entanglement_rate(&coin)?;
    let ratio_linear = rate_ratio(&p, &bl)?;
    p.ratio_to_baseline = Some(ratio_linear);
    let off = |r: f64| !(r / PUBLISHED_BULK_RATE > 0.5 && r / PUBLISHED_BULK_RATE < 2.0);
    Ok(LinkComparison {
        ratio_to_published: p.rate_s / PUBLISHED_BULK_RATE,
        ratio_linear,
        baseline_discrepancy: off(bl.rate_s) && off(bc.rate_s),
        published_baseline_rate_s: PUBLISHED_BULK_RATE,
        proposed: p,
        baseline_linear: bl,
        baseline_coincidence: bc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn proposed() -> EntanglementLink {
        EntanglementLink::symmetric(EmitterNode::new(0.005, 0.45, 0.15).unwrap(), 1e5, Protocol::LinearHerald)
    }

    fn bulk(protocol: Protocol) -> EntanglementLink {
        EntanglementLink::symmetric(EmitterNode::new(0.005, 0.004, 0.15).unwrap(), 1e5, protocol)
    }

    #[test]
    fn coupling_examples() {
        assert_relative_eq!(coupling_from_geometry(0.5, 0.10).unwrap(), 0.45, max_relative = 1e-15);
        assert_eq!(coupling_from_geometry(0.3, 0.0).unwrap(), 0.3);
        assert_eq!(coupling_from_geometry(0.035, 0.0).unwrap(), 0.035);
        assert!(coupling_from_geometry(1.2, 0.0).is_err());
    }

    #[test]
    fn proposed_unit_rate() {
        let r = entanglement_rate(&proposed()).unwrap();
        assert_relative_eq!(r.per_attempt_probability, 3.375e-4, max_relative = 1e-12);
        assert_relative_eq!(r.rate_s, 33.75, max_relative = 1e-12);
        assert!(r.rate_s / 30.0 < 1.25 && 30.0 / r.rate_s < 1.25);
    }

    #[test]
    fn bulk_baseline_rates() {
        // 0.005 × 0.004 × 0.15 × 1e5
        let oracle_linear = 0.005 * 0.004 * 0.15 * 1e5;
        let lin = entanglement_rate(&bulk(Protocol::LinearHerald)).unwrap();
        assert_relative_eq!(lin.rate_s, oracle_linear, max_relative = 1e-12);
        assert_relative_eq!(lin.rate_s, 0.3, max_relative = 1e-12);
        let coin = entanglement_rate(&bulk(Protocol::TwoPhotonCoincidence)).unwrap();
        assert_relative_eq!(coin.rate_s, 4.5e-7, max_relative = 1e-12);
        let cmp = compare(&proposed(), &bulk(Protocol::LinearHerald)).unwrap();
        assert!(cmp.baseline_discrepancy);
        assert_relative_eq!(cmp.ratio_linear, 112.5, max_relative = 1e-12);
        assert_relative_eq!(cmp.proposed.rate_s / PUBLISHED_BULK_RATE, 16875.0, max_relative = 1e-12);
    }

    #[test]
    fn ratios() {
        let a = RateReport {
            protocol: Protocol::LinearHerald,
            attempt_rate_hz: 1.0,
            per_attempt_probability: 30.0,
            rate_s: 30.0,
            ratio_to_baseline: None,
        };
        let b = RateReport { rate_s: 2e-3, ..a };
        assert_relative_eq!(rate_ratio(&a, &b).unwrap(), 1.5e4, max_relative = 1e-12);
        assert_eq!(rate_ratio(&a, &a).unwrap(), 1.0);
        assert!(rate_ratio(&a, &RateReport { rate_s: 0.0, ..a }).is_err());
    }

    #[test]
    fn zero_branching_gives_zero() {
        let mut l = proposed();
        l.node_b.branching_ratio = 0.0;
        assert_eq!(entanglement_rate(&l).unwrap().rate_s, 0.0);
        l.protocol = Protocol::TwoPhotonCoincidence;
        assert_eq!(entanglement_rate(&l).unwrap().rate_s, 0.0);
    }

    #[test]
    fn invalid_links() {
        let mut l = proposed();
        l.attempt_rate = 0.0;
        assert!(l.validate().is_err());
        let mut l = proposed();
        l.herald_prefactor = Some(1.5);
        assert!(l.validate().is_err());
        assert!(EmitterNode::new(0.5, 1.1, 0.5).is_err());
    }

    #[test]
    fn monte_carlo_agrees() {
        for link in [proposed(), EntanglementLink { protocol: Protocol::TwoPhotonCoincidence, ..proposed() }] {
            let link = EntanglementLink { herald_prefactor: None, ..link };
            let mc = monte_carlo(&link, 10_000_000, 42).unwrap();
            let p = link.per_attempt_probability().unwrap();
            if p > 0.0 {
                assert!((mc.probability - p).abs() <= 3.0 * mc.standard_error, "{} vs {}", mc.probability, p);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn probability_bounded_and_monotone(
            b in 0.0f64..=1.0, c in 0.0f64..=1.0, q in 0.0f64..=1.0,
            c2 in 0.0f64..=1.0, rate in 1.0f64..1e6, bump in 1.0f64..2.0,
        ) {
            let node_a = EmitterNode::new(b, c, q).unwrap();
            let node_b = EmitterNode::new(b, c2, q).unwrap();
            for protocol in [Protocol::LinearHerald, Protocol::TwoPhotonCoincidence] {
                let link = EntanglementLink { node_a, node_b, attempt_rate: rate, protocol, herald_prefactor: Some(1.0) };
                let r = entanglement_rate(&link).unwrap();
                proptest::prop_assert!((0.0..=1.0).contains(&r.per_attempt_probability));
                let faster = EntanglementLink { attempt_rate: rate * bump, ..link };
                let rf = entanglement_rate(&faster).unwrap();
                proptest::prop_assert!((rf.rate_s - bump * r.rate_s).abs() <= 1e-12 * rf.rate_s.max(1e-300));
                let better = EntanglementLink { node_b: EmitterNode { coupling_efficiency: (c2 * bump).min(1.0), ..node_b }, ..link };
                proptest::prop_assert!(entanglement_rate(&better).unwrap().rate_s >= r.rate_s);
            }
            let lin = EntanglementLink { node_a, node_b, attempt_rate: rate, protocol: Protocol::LinearHerald, herald_prefactor: Some(0.5) };
            let coin = EntanglementLink { protocol: Protocol::TwoPhotonCoincidence, ..lin };
            proptest::prop_assert!(entanglement_rate(&coin).unwrap().rate_s <= entanglement_rate(&lin).unwrap().rate_s);
        }
    }
}
