use std::cmp::max;

use num_traits::Signed;

use super::{level_min, require_levels, work_between, BoundReport, MetricsError, Relation};
use crate::model::{UserId, UserSet};
use crate::oracle::{compute_foc, Foc};
use crate::rational::{Extended, Rat};
use crate::sim::{StateView, SteadyInterval, Trace};

fn rat_u(v: u64) -> Rat {
    Rat::from_integer(v as i128)
}

/// Users backlogged at some point of the window, and users backlogged
/// throughout it. Transient states inside merged boundaries count.
pub fn interval_sets(trace: &Trace, start: &StateView, end: &StateView) -> (UserSet, UserSet) {
    let mut union = start.backlogged.clone();
    let mut inter = start.backlogged.clone();
    for b in &trace.boundaries {
        if b.after.cursor <= start.cursor || b.after.cursor > end.cursor {
            continue;
        }
        for i in 0..union.len() {
            union[i] |= b.joined[i];
            inter[i] &= !b.dipped[i];
        }
    }
    let set = |m: &[bool]| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    (set(&union), set(&inter))
}

/// `F_i − min V^C` over positive clusters ranked at or above the user's.
/// Each cluster contributes the smallest finite level of its servers.
fn offset_below(foc: &Foc, view: &StateView, i: UserId) -> Option<Rat> {
    let m = foc.cluster_of_user(i)?;
    foc.positive()
        .filter(|&l| l >= m)
        .filter_map(|l| level_min(view, foc.clusters[l].servers.iter().copied()).finite())
        .min()
        .map(|v| view.tags[i] - v)
}

/// `max V̂^C − F_i + L_max/φ_i` over positive clusters ranked at or below the user's.
fn offset_above(foc: &Foc, view: &StateView, i: UserId, l_max: Rat, weight: Rat) -> Option<Rat> {
    let m = foc.cluster_of_user(i)?;
    foc.positive()
        .filter(|&l| l <= m)
        .filter_map(|l| {
            // idle servers sit at infinity and are skipped
            foc.clusters[l].servers.iter().filter_map(|&k| view.levels[k].finite()).max()
        })
        .max()
        .map(|v| v - view.tags[i] + l_max / weight)
}

/// Rejects starting states where a backlogged user's tag sits more than
/// `L_max/φ_j` above every finite level of its servers. This happens after
/// a full drain resets the levels to zero while idle users keep their old
/// tags; the offsets of other users then miss the resulting head start.
fn require_tags_near_levels(trace: &Trace, view: &StateView, users: &UserSet) -> Result<(), MetricsError> {
    let p = &trace.params;
    let l_max = rat_u(p.l_max);
    for &j in users {
        let top = (0..p.n_servers())
            .filter(|&k| p.matrix.eligible(j, k))
            .filter_map(|k| view.levels[k].finite())
            .max();
        if let Some(v) = top {
            if view.tags[j] > v + l_max / p.weights[j] {
                return Err(MetricsError::Precondition(format!(
                    "tag of user {j} ({}) is more than L_max/weight above its highest server level ({v})",
                    view.tags[j]
                )));
            }
        }
    }
    Ok(())
}

/// Rejects starting states where a server's level is not the smallest tag
/// among its backlogged users. Activation sets a level from the other
/// servers, so it can lag the tags until the server next dispatches.
fn require_levels_at_min_tag(trace: &Trace, view: &StateView) -> Result<(), MetricsError> {
    let p = &trace.params;
    for k in 0..p.n_servers() {
        let Some(v) = view.levels[k].finite() else { continue };
        let min_tag = (0..p.n_users())
            .filter(|&j| view.backlogged[j] && p.matrix.eligible(j, k))
            .map(|j| view.tags[j])
            .min();
        if let Some(f) = min_tag {
            if f != v {
                return Err(MetricsError::Precondition(format!(
                    "level of server {k} ({v}) differs from its smallest backlogged tag ({f})"
                )));
            }
        }
    }
    Ok(())
}

/// Rejects starting states whose finite levels spread over more than
/// `(K-1)δ`, which the offset caps take for granted.
fn require_level_spread(trace: &Trace, view: &StateView) -> Result<(), MetricsError> {
    let p = &trace.params;
    let finite = || view.levels.iter().filter_map(|l| l.finite());
    if let (Some(lo), Some(hi)) = (finite().min(), finite().max()) {
        let cap = rat_u(p.n_servers() as u64 - 1) * p.delta;
        if hi - lo > cap {
            return Err(MetricsError::Precondition(format!("levels spread over {} which exceeds (K-1)*delta = {cap}", hi - lo)));
        }
    }
    Ok(())
}

fn server_sum(foc: &Foc, keep: impl Fn(usize) -> bool) -> Rat {
    foc.positive()
        .filter(|&l| keep(l))
        .map(|l| rat_u(foc.clusters[l].servers.len() as u64))
        .sum()
}

fn user_scope(i: UserId) -> String {
    format!("user {i}")
}

/// Deviation of each backlogged user's normalized work from its fluid share
/// over a steady interval.
pub fn check_steady_state(trace: &Trace, interval: &SteadyInterval) -> Result<Vec<BoundReport>, MetricsError> {
    require_levels(&interval.start)?;
    let p = &trace.params;
    let backlogged = interval.backlogged();
    let (union, inter) = interval_sets(trace, &interval.start, &interval.end);
    if union != inter {
        return Err(MetricsError::Precondition("backlogged set changes inside the interval".into()));
    }
    require_tags_near_levels(trace, &interval.start, &backlogged)?;
    let foc = compute_foc(&p.matrix, &p.rates, &p.weights, &backlogged)?;
    let k = rat_u(p.n_servers() as u64);
    let l_max = rat_u(p.l_max);
    let span = interval.t1() - interval.t0();
    let mut out = Vec::new();
    for &i in &backlogged {
        let phi = p.weights[i];
        let share = foc.normalized_rate(i).unwrap_or_default() * span;
        let w = rat_u(work_between(&interval.start, &interval.end, i)) / phi;
        let lhs = (w - share).abs();
        let below = offset_below(&foc, &interval.start, i);
        let above = offset_above(&foc, &interval.start, i, l_max, phi);
        let rhs = match (below, above) {
            (Some(a), Some(b)) => Extended::Finite(k * p.lambda0() + max(a, b)),
            (Some(a), None) | (None, Some(a)) => Extended::Finite(k * p.lambda0() + a),
            (None, None) => Extended::Infinite,
        };
        out.push(BoundReport::new("steady-throughput", interval.t0(), interval.t1(), user_scope(i), lhs, Relation::Le, rhs));
    }
    Ok(out)
}

/// Lower and upper throughput guarantees for user `i` over an arbitrary
/// window, in the refined form with initial offsets and in the coarse form
/// with `Kδ`, plus the offset bounds themselves.
pub fn check_worst_case(trace: &Trace, start: &StateView, end: &StateView, i: UserId) -> Result<Vec<BoundReport>, MetricsError> {
    require_levels(start)?;
    let p = &trace.params;
    let (union, inter) = interval_sets(trace, start, end);
    if !inter.contains(&i) {
        return Err(MetricsError::Precondition(format!("user {i} is not continuously backlogged")));
    }
    require_tags_near_levels(trace, start, &start.backlogged_set())?;
    require_levels_at_min_tag(trace, start)?;
    require_level_spread(trace, start)?;
    let foc_u = compute_foc(&p.matrix, &p.rates, &p.weights, &union)?;
    let foc_i = compute_foc(&p.matrix, &p.rates, &p.weights, &inter)?;
    let (t0, t1) = (start.time, end.time);
    let span = t1 - t0;
    let phi = p.weights[i];
    let l_max = rat_u(p.l_max);
    let k = rat_u(p.n_servers() as u64);
    let lambda0 = p.lambda0();
    let w = rat_u(work_between(start, end, i)) / phi;
    let low_share = foc_u.normalized_rate(i).unwrap_or_default() * span;
    let high_share = foc_i.normalized_rate(i).unwrap_or_default() * span;
    let m = foc_u.cluster_of_user(i).unwrap_or(0);
    let m_t = foc_i.cluster_of_user(i).unwrap_or(0);
    let scope = user_scope(i);

    let below = offset_below(&foc_u, start, i);
    let above = offset_above(&foc_i, start, i, l_max, phi);
    let mut out = Vec::new();
    let low_rhs = match below {
        Some(d) => Extended::Finite(low_share - d - lambda0 * server_sum(&foc_u, |l| l >= m)),
        None => Extended::Infinite,
    };
    out.push(BoundReport::new("worst-lower", t0, t1, scope.clone(), w, Relation::Ge, low_rhs));
    let high_rhs = match above {
        Some(d) => Extended::Finite(high_share + d + lambda0 * server_sum(&foc_i, |l| l <= m_t)),
        None => Extended::Infinite,
    };
    out.push(BoundReport::new("worst-upper", t0, t1, scope.clone(), w, Relation::Le, high_rhs));

    let coarse = k * p.delta;
    out.push(BoundReport::new(
        "worst-lower-coarse",
        t0,
        t1,
        scope.clone(),
        w,
        Relation::Ge,
        Extended::Finite(low_share - coarse),
    ));
    out.push(BoundReport::new(
        "worst-upper-coarse",
        t0,
        t1,
        scope.clone(),
        w,
        Relation::Le,
        Extended::Finite(high_share + coarse),
    ));

    let cap = Extended::Finite((k - Rat::from_integer(1)) * p.delta + l_max / phi);
    if let Some(d) = below {
        out.push(BoundReport::new("init-offset-lower", t0, t0, scope.clone(), d, Relation::Le, cap));
    }
    if let Some(d) = above {
        out.push(BoundReport::new("init-offset-upper", t0, t0, scope, d, Relation::Le, cap));
    }
    Ok(out)
}

/// Normalized work equals tag advance plus accumulated bonus for every user
/// backlogged over a steady interval.
pub fn check_tag_work_identity(trace: &Trace, interval: &SteadyInterval) -> Result<Vec<BoundReport>, MetricsError> {
    require_levels(&interval.start)?;
    let p = &trace.params;
    Ok(interval
        .backlogged()
        .into_iter()
        .map(|i| {
            let (a, b) = (&interval.start, &interval.end);
            let lhs = rat_u(work_between(a, b, i)) / p.weights[i];
            let rhs = (b.tags[i] - a.tags[i]) + (b.bonuses[i] - a.bonuses[i]);
            BoundReport::new("tag-work-identity", a.time, b.time, user_scope(i), lhs, Relation::Eq, Extended::Finite(rhs))
        })
        .collect())
}
