use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::automata::{Dfa, ProductImdp, ProductState};
use crate::geometry::{RegionGrid, Transform};
use crate::imdp::RobustStrategy;

/// Action per `(region, automaton state)` for every undecided product state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchingStrategy {
    pub dfa_states: Vec<String>,
    pub action_names: Vec<String>,
    pub entries: BTreeMap<(usize, usize), usize>,
}

#[derive(Serialize, Deserialize)]
struct StrategyEntry {
    region: usize,
    dfa: String,
    action: String,
}

#[derive(Serialize, Deserialize)]
struct StrategyFile {
    dfa_states: Vec<String>,
    entries: Vec<StrategyEntry>,
}

impl SwitchingStrategy {
    /// Lookup with the lowest action as the defined fallback for decided or
    /// unexplored states.
    pub fn action(&self, region: usize, dfa: usize) -> usize {
        self.entries.get(&(region, dfa)).copied().unwrap_or(0)
    }

    pub fn to_json_string(&self) -> String {
        let file = StrategyFile {
            dfa_states: self.dfa_states.clone(),
            entries: self
                .entries
                .iter()
                .map(|(&(region, d), &a)| StrategyEntry {
                    region,
                    dfa: self.dfa_states[d].clone(),
                    action: self.action_names[a].clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("strategy serialises")
    }
}

/// Reads the product strategy back as a table over regions and automaton
/// states.
pub fn map_strategy(
    strategy: &RobustStrategy,
    product: &ProductImdp,
    dfa: &Dfa,
    unsafe_state: usize,
) -> SwitchingStrategy {
    let mut entries = BTreeMap::new();
    for (i, s) in product.states.iter().enumerate() {
        if s.region != unsafe_state && !dfa.is_terminal(s.dfa) {
            entries.insert((s.region, s.dfa), strategy.choice[i]);
        }
    }
    SwitchingStrategy {
        dfa_states: dfa.state_names().to_vec(),
        action_names: product.imdp.action_names().to_vec(),
        entries,
    }
}

/// Runtime view of a switching strategy: tracks the current region through
/// the point map and the automaton state through observed labels.
#[derive(Debug, Clone)]
pub struct Controller {
    pub transform: Transform,
    pub grid: RegionGrid,
    pub dfa: Dfa,
    pub strategy: SwitchingStrategy,
}

/// Status after observing a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Running(ProductState),
    Accepted,
    Rejected,
    /// The state left the domain.
    Exited,
}

impl Controller {
    fn observe(&self, dfa_state: usize, x: &[f64]) -> Observation {
        let z = self.transform.apply(x);
        let Some(q) = self.grid.locate(&z) else {
            return Observation::Exited;
        };
        let d = self
            .dfa
            .step(dfa_state, self.grid.label(q))
            .expect("grid labels validated against the automaton");
        if self.dfa.is_accepting(d) {
            Observation::Accepted
        } else if self.dfa.is_dead(d) {
            Observation::Rejected
        } else {
            Observation::Running(ProductState { region: q, dfa: d })
        }
    }

    /// Consumes the label of the initial state.
    pub fn start(&self, x: &[f64]) -> Observation {
        self.observe(self.dfa.initial(), x)
    }

    pub fn advance(&self, current: ProductState, x: &[f64]) -> Observation {
        self.observe(current.dfa, x)
    }

    pub fn action(&self, current: ProductState) -> usize {
        self.strategy.action(current.region, current.dfa)
    }
}
