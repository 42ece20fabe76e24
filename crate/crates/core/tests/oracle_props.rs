mod common;

use cm4fq::model::{EligibilityMatrix, UserSet};
use cm4fq::oracle::{
    check_foc_invariants, compute_foc, fair_rates, progressive_filling, verify_cm4_fairness, witness_allocation,
};
use cm4fq::rational::{rat, ratio, Rat};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_instance, random_permutation, Instance};

fn instance(seed: u64) -> Instance {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 7, 5)
}

fn all(n: usize) -> UserSet {
    (0..n).collect()
}

// hand-computed cases first

#[test]
fn one_user_one_server_gets_rate_over_weight() {
    let m = EligibilityMatrix::full(1, 1).unwrap();
    let foc = compute_foc(&m, &[rat(7)], &[rat(2)], &all(1)).unwrap();
    assert_eq!(foc.clusters.len(), 1);
    assert_eq!(foc.clusters[0].rate, ratio(7, 2));
    assert_eq!(fair_rates(&foc, &[rat(2)]), vec![rat(7)]);
}

#[test]
fn dedicated_slow_server_forms_its_own_cluster() {
    // a, b on both servers, c only on the 1 Mb/s one
    let m = EligibilityMatrix::from_binary(&[[1, 1], [1, 1], [0, 1]]).unwrap();
    let rho = [rat(2_500_000), rat(1_000_000)];
    let phi = [rat(1); 3];
    let foc = compute_foc(&m, &rho, &phi, &all(3)).unwrap();
    assert_eq!(
        foc.canonical(),
        vec![(rat(1_000_000), vec![2], vec![1]), (rat(1_250_000), vec![0, 1], vec![0])]
    );
}

#[test]
fn idle_users_and_orphaned_servers_share_the_zero_cluster() {
    let m = EligibilityMatrix::from_binary(&[[1, 0], [0, 1]]).unwrap();
    let foc = compute_foc(&m, &[rat(3), rat(5)], &[rat(1), rat(1)], &[0].into()).unwrap();
    assert_eq!(foc.canonical(), vec![(rat(0), vec![1], vec![1]), (rat(3), vec![0], vec![0])]);
    assert_eq!(foc.positive().count(), 1);
}

#[test]
fn weights_split_a_shared_server_proportionally() {
    let m = EligibilityMatrix::full(2, 1).unwrap();
    let phi = [rat(1), rat(3)];
    let foc = compute_foc(&m, &[rat(8)], &phi, &all(2)).unwrap();
    assert_eq!(fair_rates(&foc, &phi), vec![rat(2), rat(6)]);
}

#[test]
fn witness_of_three_server_case_keeps_the_dedicated_server_for_its_user() {
    let m = EligibilityMatrix::from_binary(&[[1, 1, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]]).unwrap();
    let rho = [rat(1_600_000), rat(2_000_000), rat(1_000_000)];
    let phi = [rat(1); 4];
    let foc = compute_foc(&m, &rho, &phi, &all(4)).unwrap();
    let w = witness_allocation(&foc, &m, &rho, &phi).unwrap();
    assert_eq!(w.get(3, 2), rat(1_000_000));
    assert_eq!(w.get(2, 2), rat(0));
    assert!(verify_cm4_fairness(&m, &rho, &phi, &all(4), &w).is_fair());
}

#[test]
fn shifting_rate_toward_a_richer_user_is_rejected() {
    let m = EligibilityMatrix::from_binary(&[[1, 1], [1, 1], [0, 1]]).unwrap();
    let rho = [rat(2_500_000), rat(1_000_000)];
    let phi = [rat(1); 3];
    let foc = compute_foc(&m, &rho, &phi, &all(3)).unwrap();
    let mut w = witness_allocation(&foc, &m, &rho, &phi).unwrap();
    w.set(2, 1, rat(900_000));
    w.set(0, 1, rat(100_000));
    let report = verify_cm4_fairness(&m, &rho, &phi, &all(3), &w);
    assert!(report.is_well_formed());
    assert!(!report.is_fair());
}

#[test]
fn overloaded_server_is_malformed() {
    let m = EligibilityMatrix::full(1, 1).unwrap();
    let foc = compute_foc(&m, &[rat(2)], &[rat(1)], &all(1)).unwrap();
    let mut w = witness_allocation(&foc, &m, &[rat(2)], &[rat(1)]).unwrap();
    w.set(0, 0, rat(3));
    assert!(!verify_cm4_fairness(&m, &[rat(2)], &[rat(1)], &all(1), &w).is_well_formed());
}

#[test]
fn bad_inputs_are_rejected() {
    let m = EligibilityMatrix::full(2, 1).unwrap();
    assert!(compute_foc(&m, &[rat(0)], &[rat(1), rat(1)], &all(2)).is_err());
    assert!(compute_foc(&m, &[rat(1)], &[rat(1)], &all(2)).is_err());
    assert!(compute_foc(&m, &[rat(1)], &[rat(1), rat(1)], &[5].into()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn clustering_satisfies_its_invariants(seed in any::<u64>()) {
        let inst = instance(seed);
        let foc = compute_foc(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged).unwrap();
        let problems = check_foc_invariants(&foc, &inst.matrix, &inst.rates, &inst.weights, &inst.backlogged);
        prop_assert!(problems.is_empty(), "{:?}", problems);
        let rates: Vec<Rat> = foc.positive().map(|m| foc.clusters[m].rate).collect();
        prop_assert!(rates.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn clustering_matches_progressive_filling(seed in any::<u64>()) {
        let inst = instance(seed);
        let foc = compute_foc(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged).unwrap();
        let filled = progressive_filling(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged).unwrap();
        prop_assert_eq!(filled, fair_rates(&foc, &inst.weights));
    }

    #[test]
    fn relabeling_users_and_servers_relabels_the_clustering(seed in any::<u64>()) {
        let inst = instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
        let up = random_permutation(&mut rng, inst.matrix.n_users());
        let sp = random_permutation(&mut rng, inst.matrix.n_servers());
        let mut new_of = vec![0; up.len()];
        for (new, &old) in up.iter().enumerate() {
            new_of[old] = new;
        }
        let m2 = inst.matrix.permuted(&up, &sp);
        let rho2: Vec<Rat> = sp.iter().map(|&k| inst.rates[k]).collect();
        let phi2: Vec<Rat> = up.iter().map(|&i| inst.weights[i]).collect();
        let b2: UserSet = inst.backlogged.iter().map(|&i| new_of[i]).collect();
        let a = compute_foc(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged).unwrap();
        let b = compute_foc(&m2, &rho2, &phi2, &b2).unwrap();
        let mut mapped: Vec<(Rat, Vec<usize>, Vec<usize>)> = b
            .clusters
            .iter()
            .map(|c| {
                let mut us: Vec<usize> = c.users.iter().map(|&u| up[u]).collect();
                let mut ss: Vec<usize> = c.servers.iter().map(|&s| sp[s]).collect();
                us.sort();
                ss.sort();
                (c.rate, us, ss)
            })
            .collect();
        mapped.sort();
        prop_assert_eq!(mapped, a.canonical());
    }

    #[test]
    fn scaling_all_rates_scales_cluster_rates(seed in any::<u64>(), num in 1i128..6, den in 1i128..6) {
        let inst = instance(seed);
        let c = ratio(num, den);
        let scaled: Vec<Rat> = inst.rates.iter().map(|r| r * c).collect();
        let a = compute_foc(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged).unwrap();
        let b = compute_foc(&inst.matrix, &scaled, &inst.weights, &inst.backlogged).unwrap();
        let expect: Vec<_> = a.canonical().into_iter().map(|(r, u, s)| (r * c, u, s)).collect();
        prop_assert_eq!(b.canonical(), expect);
    }

    #[test]
    fn witness_realizes_the_fair_rates_and_is_accepted(seed in any::<u64>()) {
        let inst = instance(seed);
        let foc = compute_foc(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged).unwrap();
        let w = witness_allocation(&foc, &inst.matrix, &inst.rates, &inst.weights).unwrap();
        let fair = fair_rates(&foc, &inst.weights);
        for i in 0..inst.matrix.n_users() {
            prop_assert_eq!(w.user_rate(i), fair[i]);
            for k in 0..inst.matrix.n_servers() {
                prop_assert!(w.get(i, k) >= rat(0));
                prop_assert!(inst.matrix.eligible(i, k) || w.get(i, k) == rat(0));
            }
        }
        let report = verify_cm4_fairness(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged, &w);
        prop_assert!(report.is_fair(), "{:?}", report);
    }

    #[test]
    fn total_fair_rate_never_exceeds_capacity(seed in any::<u64>()) {
        let inst = instance(seed);
        let foc = compute_foc(&inst.matrix, &inst.rates, &inst.weights, &inst.backlogged).unwrap();
        let total: Rat = fair_rates(&foc, &inst.weights).iter().sum();
        let capacity: Rat = inst.rates.iter().sum();
        prop_assert!(total <= capacity);
    }
}
