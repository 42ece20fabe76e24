use num_traits::Signed;

use super::flow::FlowNetwork;
use super::verify::RateMatrix;
use super::{Foc, OracleError};
use crate::model::EligibilityMatrix;
use crate::rational::{sum, Rat};

/// Concrete allocation realizing the clustering's fair rates.
///
/// Each positive cluster is solved separately as a flow problem: user
/// demands `weight * rate`, server capacities `rate`, edges for eligible
/// pairs inside the cluster.
pub fn witness_allocation(
    foc: &Foc,
    matrix: &EligibilityMatrix,
    rates: &[Rat],
    weights: &[Rat],
) -> Result<RateMatrix, OracleError> {
    let mut out = RateMatrix::zeros(matrix.n_users(), matrix.n_servers());
    for c in foc.clusters.iter().filter(|c| c.rate.is_positive()) {
        let users: Vec<_> = c.users.iter().copied().collect();
        let servers: Vec<_> = c.servers.iter().copied().collect();
        let source = users.len() + servers.len();
        let sink = source + 1;
        let mut g = FlowNetwork::new(sink + 1);
        let mut pair_edges = Vec::new();
        for (a, &i) in users.iter().enumerate() {
            g.add_edge(source, a, weights[i] * c.rate);
            for (b, &k) in servers.iter().enumerate() {
                if matrix.eligible(i, k) {
                    pair_edges.push((i, k, g.add_edge(a, users.len() + b, rates[k])));
                }
            }
        }
        for (b, &k) in servers.iter().enumerate() {
            g.add_edge(users.len() + b, sink, rates[k]);
        }
        let demand = sum(users.iter().map(|&i| &weights[i])) * c.rate;
        let pushed = g.max_flow(source, sink);
        if pushed != demand {
            return Err(OracleError::Internal(format!(
                "cluster with rate {} routes only {pushed} of {demand}",
                c.rate
            )));
        }
        for (i, k, e) in pair_edges {
            out.set(i, k, g.flow(e));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UserSet;
    use crate::oracle::{compute_foc, verify_cm4_fairness};
    use crate::rational::{rat, ratio};

    #[test]
    fn three_server_case_third_server_serves_only_d() {
        let m = EligibilityMatrix::from_binary(&[[1, 1, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]]).unwrap();
        let rho = [ratio(8, 5), rat(2), rat(1)];
        let phi = [rat(1); 4];
        let b = UserSet::from([0, 1, 2, 3]);
        let foc = compute_foc(&m, &rho, &phi, &b).unwrap();
        let w = witness_allocation(&foc, &m, &rho, &phi).unwrap();
        assert_eq!(w.get(3, 2), rat(1));
        assert_eq!(w.get(2, 2), rat(0));
        for i in 0..3 {
            assert_eq!(w.user_rate(i), ratio(6, 5));
        }
        assert!(verify_cm4_fairness(&m, &rho, &phi, &b, &w).is_fair());
    }

    #[test]
    fn single_pair() {
        let m = EligibilityMatrix::full(1, 1).unwrap();
        let foc = compute_foc(&m, &[rat(7)], &[rat(2)], &UserSet::from([0])).unwrap();
        let w = witness_allocation(&foc, &m, &[rat(7)], &[rat(2)]).unwrap();
        assert_eq!(w.get(0, 0), rat(7));
    }
}
