use super::config::ExperimentId;
use serde::Serialize;

/// One experiment of the catalog.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub id: ExperimentId,
    pub title: &'static str,
    /// The result the experiment verifies.
    pub anchor: &'static str,
    pub scenarios: &'static [&'static str],
    /// Expected failures that the suite inverts.
    pub diagnostics: &'static [&'static str],
}

/// The ten experiments in stable order.
pub fn list_experiments() -> Vec<CatalogEntry> {
    use ExperimentId::*;
    vec![
        CatalogEntry {
            id: E1,
            title: "Pseudo-stopping time basics",
            anchor: "pseudo-stopping characterization: uniform A at σ, optional stopping, stopped martingales under f(A_σ)",
            scenarios: &["S2"],
            diagnostics: &[],
        },
        CatalogEntry {
            id: E2,
            title: "Honest time basics",
            anchor: "Doob maximal identity and the exponential law of log max N",
            scenarios: &["S3"],
            diagnostics: &[],
        },
        CatalogEntry {
            id: E3,
            title: "Brownian path decomposition at the last zero before T1",
            anchor: "pre-σ drift of the generalized π density and the post-σ correction",
            scenarios: &["S1"],
            diagnostics: &[
                "post-σ drift with sign flipped to -1/B (must fail)",
                "martingale orthogonality of B stopped at the honest time (must fail)",
                "atom check on a deterministic time (must fail)",
            ],
        },
        CatalogEntry {
            id: E4,
            title: "Dual predictable projection",
            anchor: "Girsanov-type hazard: E[ρ 1{σ<=t}] = E[ρ μ^F at σ∧t]",
            scenarios: &["S2"],
            diagnostics: &[],
        },
        CatalogEntry {
            id: E5,
            title: "Counterexamples",
            anchor: "ρ = 2Z_σ gives h = Z²; ρ = log max N gives D^Q != D^P",
            scenarios: &["S2", "S3"],
            diagnostics: &[],
        },
        CatalogEntry {
            id: E6,
            title: "Invariance of the pseudo-stopping property",
            anchor: "g(x) = x - c construction and the scale-function example",
            scenarios: &["S4", "S5"],
            diagnostics: &[],
        },
        CatalogEntry {
            id: E7,
            title: "Half-bridge time",
            anchor: "last sign change of 2W_t - W_1: closed-form Z and vanishing D",
            scenarios: &["S6"],
            diagnostics: &[],
        },
        CatalogEntry {
            id: E8,
            title: "Relative martingale example",
            anchor: "ρ = |B_1| with the last zero before 1: Gaussian-CDF drift and post-σ correction",
            scenarios: &["S7"],
            diagnostics: &["post-σ drift with sign flipped to -1/B (must fail)"],
        },
        CatalogEntry {
            id: E9,
            title: "Push-to-infinity identity",
            anchor: "E[F_t 1{σ>t}] = E[F_t Z_t]",
            scenarios: &["S1", "S2"],
            diagnostics: &[],
        },
        CatalogEntry {
            id: E10,
            title: "Martingale deflator",
            anchor: "1/N stopped at σ: E[1/max N] = 1/2 and the expectation identity at T = 1",
            scenarios: &["S3"],
            diagnostics: &[],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_ten_entries_in_order() {
        let c = list_experiments();
        assert_eq!(c.len(), 10);
        assert!(c.iter().zip(ExperimentId::ALL).all(|(e, id)| e.id == id));
        assert!(c.iter().all(|e| !e.anchor.is_empty()));
        assert!(c[2].diagnostics.iter().any(|d| d.contains("sign")));
    }
}
