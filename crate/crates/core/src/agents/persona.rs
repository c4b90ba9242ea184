use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Final directive every persona ends with.
pub const DECISION_DIRECTIVE: &str = "Make Decision based on this";

/// A role-instructed debater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub directives: Vec<String>,
    pub domain_tags: BTreeSet<String>,
}

impl Persona {
    fn from_static(name: &str, directives: &[&str], tags: &[&str]) -> Self {
        Persona {
            name: name.to_string(),
            directives: directives.iter().map(|d| d.to_string()).collect(),
            domain_tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn lawyer() -> Self {
        Self::from_static(
            "Lawyer",
            &[
                "Analyze under Common Law and Civil Law frameworks",
                "Simulate arguments from plaintiff/defendant perspectives simultaneously",
                "Identify conflicting precedents across federal circuits",
                "Apply game theory to predict settlement likelihoods using Nash equilibrium",
                "Check legality under local, national, and international law",
                "Identify who could sue whom if this decision is made",
                "Consider precedent this sets for future similar cases",
                "Evaluate enforceability and compliance mechanisms",
                "Assess constitutional and human rights implications",
                DECISION_DIRECTIVE,
            ],
            &["law", "policy", "rights"],
        )
    }

    pub fn scientist() -> Self {
        Self::from_static(
            "Scientist",
            &[
                "Generate two conflicting hypotheses before selecting an option",
                "Conduct a Red Team analysis attacking your own conclusion",
                "Calculate Bayesian probabilities for competing explanations using Bayes' theorem: P(H | E) = P(E | H) * P(H) / P(E)",
                "Model system interactions using both linear and chaotic frameworks",
                "Compare findings against contradictory studies from adjacent fields",
                "Test your reasoning by asking \"what could prove this wrong?\"",
                "Consider environmental and health impacts spanning 50+ years",
                "Demand evidence with statistical significance before accepting claims",
                DECISION_DIRECTIVE,
            ],
            &["science", "evidence", "health"],
        )
    }

    pub fn mathematician() -> Self {
        Self::from_static(
            "Mathematician",
            &[
                "Solve using both frequentist and Bayesian approaches",
                "Model with Monte Carlo and deterministic simulations",
                "Calculate error propagation through all estimation steps",
                "Apply robust optimization against adversarial inputs",
                "Quantify all variables and assign numerical values",
                "Calculate expected outcomes using probability theory",
                "Model best-case, worst-case, and most-likely scenarios",
                "Identify optimization targets and constraints",
                "Express uncertainty using confidence intervals",
                DECISION_DIRECTIVE,
            ],
            &["mathematics", "probability", "quantitative"],
        )
    }

    pub fn ethicist() -> Self {
        Self::from_static(
            "Ethicist",
            &[
                "Apply in sequence: Utilitarian, Deontological, Virtue Ethics lenses",
                "Calculate moral weightings using differentiable ethics equations",
                "Identify irreconcilable value conflicts through geometric mean analysis",
                "Apply multiple ethical tests: \"Is this fair?\", \"Does this reduce suffering?\", \"Would I want this if roles were reversed?\"",
                "Consider moral obligations to future generations",
                "Weigh individual rights against collective good",
                "Identify moral dilemmas and tragic trade-offs",
                "Question the moral legitimacy of the decision-makers",
                "Perform universalizability tests for proposed actions",
                DECISION_DIRECTIVE,
            ],
            &["ethics", "values", "society"],
        )
    }

    pub fn historian() -> Self {
        Self::from_static(
            "Historian",
            &[
                "Contextualize the issue within relevant historical periods and events",
                "Identify historical precedents and analogues for each option",
                "Analyze the long-term consequences of similar decisions in the past",
                "Examine the roles of key actors, institutions, and social forces in shaping outcomes",
                "Assess the reliability and biases of historical sources and narratives",
                "Consider the impact of cultural, economic, and technological changes over time",
                "Highlight lessons learned from both successes and failures in history",
                "Address how collective memory and historiography influence present choices",
                DECISION_DIRECTIVE,
            ],
            &["history", "culture", "precedent"],
        )
    }
}

/// The five-persona debate roster, in debate order.
pub fn default_roster() -> Vec<Persona> {
    vec![
        Persona::lawyer(),
        Persona::scientist(),
        Persona::mathematician(),
        Persona::ethicist(),
        Persona::historian(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_has_five_distinct_personas_ending_in_decision() {
        let roster = default_roster();
        assert_eq!(roster.len(), 5);
        let names: BTreeSet<_> = roster.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names.len(), 5);
        for p in &roster {
            assert!(!p.directives.is_empty());
            assert_eq!(p.directives.last().unwrap(), DECISION_DIRECTIVE);
            assert!(!p.domain_tags.is_empty());
        }
    }

    #[test]
    fn directive_counts() {
        assert_eq!(Persona::scientist().directives.len(), 9);
        assert_eq!(Persona::lawyer().directives.len(), 10);
        assert_eq!(Persona::historian().directives.len(), 9);
        assert_eq!(Persona::mathematician().directives.len(), 10);
        assert_eq!(Persona::ethicist().directives.len(), 10);
    }
}
