use num_traits::{Signed, Zero};

use super::flow::FlowNetwork;
use super::OracleError;
use crate::model::{validate_positive, EligibilityMatrix, UserSet};
use crate::rational::{sum, Rat};

/// Per-user max-min fair rates by water-filling.
///
/// All unfrozen users rise at the same normalized rate `r`; the largest
/// feasible `r` is found by Dinkelbach iteration on min cuts, then every
/// user that can no longer reach the sink in the residual network is
/// frozen. Works for any server count.
pub fn progressive_filling(
    matrix: &EligibilityMatrix,
    rates: &[Rat],
    weights: &[Rat],
    backlogged: &UserSet,
) -> Result<Vec<Rat>, OracleError> {
    validate_positive("server rate", rates, matrix.n_servers())?;
    validate_positive("user weight", weights, matrix.n_users())?;
    let n = matrix.n_users();
    let k_count = matrix.n_servers();
    let mut result = vec![Rat::zero(); n];
    let mut frozen = vec![false; n];
    let mut active: Vec<usize> = backlogged.iter().copied().filter(|&i| i < n).collect();
    let big = sum(rates) + Rat::from_integer(1);

    let build = |demand: &dyn Fn(usize) -> Rat| {
        let (source, sink) = (n + k_count, n + k_count + 1);
        let mut g = FlowNetwork::new(sink + 1);
        for &i in backlogged {
            g.add_edge(source, i, demand(i));
            for k in matrix.servers_of(i) {
                g.add_edge(i, n + k, big);
            }
        }
        for (k, &rho) in rates.iter().enumerate() {
            g.add_edge(n + k, sink, rho);
        }
        (g, source, sink)
    };

    while !active.is_empty() {
        let frozen_load: Rat = backlogged.iter().filter(|&&i| frozen[i]).map(|&i| result[i]).sum();
        let active_weight: Rat = active.iter().map(|&i| weights[i]).sum();
        let mut r = (sum(rates) - frozen_load) / active_weight;
        let mut guard = 0;
        let residual = loop {
            guard += 1;
            if guard > 4 * (n + k_count) + 8 {
                return Err(OracleError::Internal("progressive filling did not converge".into()));
            }
            let demand = |i: usize| if frozen[i] { result[i] } else { weights[i] * r };
            let (mut g, source, sink) = build(&demand);
            let total: Rat = backlogged.iter().map(|&i| demand(i)).sum();
            if g.max_flow(source, sink) == total {
                break g.reaching(sink);
            }
            // the source side of a min cut is an over-subscribed user set
            let side = g.reachable_from(source);
            let cut_capacity: Rat = (0..k_count).filter(|&k| side[n + k]).map(|k| rates[k]).sum();
            let cut_frozen: Rat = backlogged.iter().filter(|&&i| side[i] && frozen[i]).map(|&i| result[i]).sum();
            let cut_weight: Rat = active.iter().filter(|&&i| side[i]).map(|&i| weights[i]).sum();
            if !cut_weight.is_positive() {
                return Err(OracleError::Internal("infeasible cut without active users".into()));
            }
            let next = (cut_capacity - cut_frozen) / cut_weight;
            if next >= r {
                return Err(OracleError::Internal("progressive filling stalled".into()));
            }
            r = next;
        };
        let before = active.len();
        active.retain(|&i| {
            if residual[i] {
                true
            } else {
                frozen[i] = true;
                result[i] = weights[i] * r;
                false
            }
        });
        if active.len() == before {
            return Err(OracleError::Internal("no user froze at the filling level".into()));
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    #[test]
    fn fig3_rates() {
        let m = EligibilityMatrix::from_binary(&[[1, 1, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]]).unwrap();
        let r = progressive_filling(&m, &[ratio(8, 5), rat(2), rat(1)], &[rat(1); 4], &UserSet::from([0, 1, 2, 3]))
            .unwrap();
        assert_eq!(r, vec![ratio(6, 5), ratio(6, 5), ratio(6, 5), rat(1)]);
    }

    #[test]
    fn idle_users_get_nothing() {
        let m = EligibilityMatrix::full(2, 1).unwrap();
        let r = progressive_filling(&m, &[rat(4)], &[rat(1), rat(3)], &UserSet::from([1])).unwrap();
        assert_eq!(r, vec![rat(0), rat(4)]);
    }
}
