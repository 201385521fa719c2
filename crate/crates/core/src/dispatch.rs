//! Merit-order economic dispatch and dispatch-period cost accounting.

use crate::signaling::ProtocolConfig;

/// Output of a type-`g` DER with capacity `own_capacity` under the
/// decentralized merit-order policy.
///
/// `aggregates[j]` is the (believed) total capacity of type `j`, for every
/// `j <= g`. Types below `g` run flat out first, type `g` shares the residual
/// demand in proportion to capacity.
pub fn distributed_policy(own_capacity: f64, g: usize, demand: f64, aggregates: &[f64]) -> f64 {
    let below: f64 = aggregates[..g].iter().sum();
    let through = below + aggregates[g];
    if demand > through {
        own_capacity
    } else if demand < below || aggregates[g] <= 0.0 {
        0.0
    } else {
        own_capacity * (demand - below) / aggregates[g]
    }
}

/// Generation cost of a dispatch, `sum_u c_type(u) p_u`.
pub fn base_cost(policy: &[f64], der_type: &[usize], costs: &[f64]) -> f64 {
    policy.iter().zip(der_type).map(|(p, &g)| costs[g] * p).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Imbalance {
    pub deficit: f64,
    pub surplus: f64,
    pub penalty: f64,
}

pub fn settle_imbalance(policy: &[f64], demand: f64, deficit_cost: f64, surplus_cost: f64) -> Imbalance {
    let supplied: f64 = policy.iter().sum();
    let deficit = (demand - supplied).max(0.0);
    let surplus = (supplied - demand).max(0.0);
    Imbalance { deficit, surplus, penalty: deficit_cost * deficit + surplus_cost * surplus }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOutcome {
    pub policy: Vec<f64>,
    pub imbalance: Imbalance,
    /// Generation cost of the enacted policy.
    pub base_cost: f64,
    /// Base cost plus imbalance penalty.
    pub omega: f64,
}

impl DispatchOutcome {
    pub fn evaluate(
        policy: Vec<f64>,
        der_type: &[usize],
        costs: &[f64],
        demand: f64,
        deficit_cost: f64,
        surplus_cost: f64,
    ) -> Self {
        let imbalance = settle_imbalance(&policy, demand, deficit_cost, surplus_cost);
        let base = base_cost(&policy, der_type, costs);
        Self { policy, imbalance, base_cost: base, omega: base + imbalance.penalty }
    }
}

/// Correction added to `omega` for the time spent signaling at the operating
/// point instead of at the dispatched outputs.
///
/// `operating_cost` is the generation cost of the operating-point outputs.
pub fn communication_overhead(outcome: &DispatchOutcome, protocol: &ProtocolConfig, operating_cost: f64) -> f64 {
    protocol.overhead_fraction() * (operating_cost - outcome.base_cost - outcome.imbalance.penalty)
}

/// Total cost of a dispatch period: `omega` plus the signaling correction.
pub fn period_cost(outcome: &DispatchOutcome, protocol: &ProtocolConfig, operating_cost: f64) -> f64 {
    outcome.omega + communication_overhead(outcome, protocol, operating_cost)
}

/// Same quantity accumulated slot by slot: the dispatch phase is charged at
/// `omega` and every signaling slot at its own enacted generation cost.
pub fn period_cost_by_slots(outcome: &DispatchOutcome, protocol: &ProtocolConfig, slot_costs: &[f64]) -> f64 {
    let fraction = protocol.overhead_fraction();
    let per_slot = protocol.slot_duration / protocol.period;
    (1.0 - fraction) * outcome.omega + per_slot * slot_costs.iter().sum::<f64>()
}

/// Cost-minimal feasible dispatch by filling individual DERs in merit order.
///
/// Serves as the reference the decentralized policy is checked against.
pub fn oracle_centralized(capacities: &[f64], der_type: &[usize], costs: &[f64], demand: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..capacities.len()).collect();
    order.sort_by(|&a, &b| costs[der_type[a]].total_cmp(&costs[der_type[b]]).then(a.cmp(&b)));
    let mut remaining = demand.max(0.0);
    let mut policy = vec![0.0; capacities.len()];
    for u in order {
        let take = capacities[u].min(remaining);
        policy[u] = take;
        remaining -= take;
    }
    policy
}
