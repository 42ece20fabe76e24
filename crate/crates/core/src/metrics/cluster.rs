use std::collections::BTreeMap;

use super::{interval_sets, level_max, level_min, require_levels, BoundReport, MetricsError, Relation};
use crate::model::ServerId;
use crate::oracle::compute_foc;
use crate::rational::{Extended, Rat, WorkLevel};
use crate::sim::{StateView, SteadyInterval, Trace};

fn keep_worst(slot: &mut BTreeMap<(&'static str, ServerId), BoundReport>, server: ServerId, r: BoundReport) {
    match slot.get(&(r.bound, server)) {
        Some(old) if old.slack <= r.slack => {}
        _ => {
            slot.insert((r.bound, server), r);
        }
    }
}

/// Per-server work and level-spread bounds for cluster `cluster` of the
/// clustering of a steady interval, reporting the tightest instance per
/// server. The cluster must be isolated over the interval, start with equal
/// work levels and have `δ ≥ (K^C+1)λ^C`; otherwise a precondition error
/// names the first hypothesis that fails.
pub fn check_isolated_cluster_bounds(
    trace: &Trace,
    interval: &SteadyInterval,
    cluster: usize,
) -> Result<Vec<BoundReport>, MetricsError> {
    require_levels(&interval.start)?;
    let p = &trace.params;
    let (union, inter) = interval_sets(trace, &interval.start, &interval.end);
    if union != inter {
        return Err(MetricsError::Precondition("backlogged set changes inside the interval".into()));
    }
    let foc = compute_foc(&p.matrix, &p.rates, &p.weights, &union)?;
    let c = foc
        .clusters
        .get(cluster)
        .filter(|c| c.rate > Rat::from_integer(0))
        .ok_or_else(|| MetricsError::Precondition(format!("no positive cluster with index {cluster}")))?;
    let k_c = Rat::from_integer(c.servers.len() as i128);
    let min_phi = c.users.iter().map(|&i| p.weights[i]).min().expect("positive cluster has users");
    let lambda_c = Rat::from_integer(p.l_max as i128) / min_phi;
    let one = Rat::from_integer(1);
    if p.delta < (k_c + one) * lambda_c {
        return Err(MetricsError::Precondition(format!(
            "delta {} is below (K+1)*lambda = {}",
            p.delta,
            (k_c + one) * lambda_c
        )));
    }
    let start = &interval.start;
    let base = level_min(start, c.servers.iter().copied());
    if level_max(start, c.servers.iter().copied()) != base {
        return Err(MetricsError::Precondition("servers of the cluster start at different work levels".into()));
    }
    let Extended::Finite(base) = base else {
        return Err(MetricsError::Precondition("cluster servers start idle".into()));
    };

    let t0 = interval.t0();
    let dispatches = trace.dispatches_between(start.cursor, interval.end.cursor);
    for d in dispatches {
        let inside_user = c.users.contains(&d.user());
        let inside_server = c.servers.contains(&d.server);
        if inside_user != inside_server {
            return Err(MetricsError::Precondition(format!(
                "cluster is not isolated: user {} served by server {} at t={}",
                d.user(),
                d.server,
                d.time
            )));
        }
    }

    let mut worst = BTreeMap::new();
    for d in dispatches.iter().filter(|d| c.servers.contains(&d.server) && d.time > t0) {
        let lv = d
            .levels
            .as_ref()
            .ok_or(MetricsError::MissingData("per-dispatch level detail"))?;
        let k = d.server;
        let scope = format!("server {k}");
        let span = d.time - t0;
        if let Extended::Finite(v) = lv.levels_before[k] {
            let w = v - base + lv.bonuses_before[k] - start.server_bonuses[k];
            let upper = Extended::Finite(c.rate * span + k_c * lambda_c);
            let lower = Extended::Finite(c.rate * span - k_c * lambda_c);
            keep_worst(&mut worst, k, BoundReport::new("server-work-upper", t0, d.time, scope.clone(), w, Relation::Le, upper));
            keep_worst(&mut worst, k, BoundReport::new("server-work-lower", t0, d.time, scope.clone(), w, Relation::Ge, lower));
        }
        let floor = c.servers.iter().map(|&l| lv.levels_before[l]).min().unwrap_or(Extended::Infinite);
        if let (Extended::Finite(after), Extended::Finite(floor)) = (lv.levels_after[k], floor) {
            let cap = Extended::Finite((k_c + one) * lambda_c);
            keep_worst(&mut worst, k, BoundReport::new("level-spread", t0, d.time, scope, after - floor, Relation::Le, cap));
        }
    }
    Ok(worst.into_values().collect())
}

/// States after each recorded event, with work levels, in event order.
fn level_states(trace: &Trace) -> Vec<(u64, Rat, Vec<WorkLevel>)> {
    let mut out: Vec<(u64, Rat, Vec<WorkLevel>)> = trace
        .rows
        .iter()
        .filter(|r| r.kind != crate::sim::RowKind::Sample && r.view.has_levels())
        .map(|r| (r.view.cursor, r.view.time, r.view.levels.clone()))
        .collect();
    if out.is_empty() {
        out.extend(trace.boundaries.iter().map(|b| (b.after.cursor, b.after.time, b.after.levels.clone())));
        out.extend(
            trace
                .dispatches
                .iter()
                .filter_map(|d| d.levels.as_ref().map(|l| (d.event + 1, d.time, l.levels_after.clone()))),
        );
        out.sort_by_key(|s| s.0);
    }
    out
}

/// Once every faster cluster sits at least `δ` above the slowest one, no
/// server of the slowest cluster may serve a user of another cluster until
/// the end of the window. Reports the number of such dispatches.
pub fn check_separation(trace: &Trace, start: &StateView, end: &StateView) -> Result<BoundReport, MetricsError> {
    require_levels(start)?;
    let p = &trace.params;
    let (union, inter) = interval_sets(trace, start, end);
    let foc = compute_foc(&p.matrix, &p.rates, &p.weights, &union)?;
    let slow = foc
        .positive()
        .next()
        .ok_or_else(|| MetricsError::Precondition("no backlogged users".into()))?;
    let c0 = &foc.clusters[slow];
    if !c0.users.is_subset(&inter) {
        return Err(MetricsError::Precondition("slowest cluster is not continuously backlogged".into()));
    }
    let faster: Vec<usize> = foc.positive().filter(|&l| l != slow).collect();
    let states = level_states(trace);
    if states.is_empty() {
        return Err(MetricsError::MissingData("per-event or per-dispatch work levels"));
    }
    let reached = states
        .iter()
        .filter(|s| s.0 >= start.cursor && s.0 <= end.cursor)
        .find(|(_, _, levels)| {
            let top = c0.servers.iter().map(|&k| levels[k]).max().unwrap_or(Extended::Infinite);
            let Extended::Finite(top) = top else { return false };
            faster.iter().all(|&l| {
                let low = foc.clusters[l].servers.iter().map(|&k| levels[k]).min().unwrap_or(Extended::Infinite);
                match low {
                    Extended::Finite(v) => v - top >= p.delta,
                    Extended::Infinite => true,
                }
            })
        })
        .ok_or_else(|| MetricsError::Precondition("faster clusters never reach delta above the slowest".into()))?;
    let crossings = trace
        .dispatches_between(reached.0, end.cursor)
        .iter()
        .filter(|d| c0.servers.contains(&d.server) && !c0.users.contains(&d.user()))
        .count();
    Ok(BoundReport::new(
        "separation",
        reached.1,
        end.time,
        format!("servers {:?}", c0.servers),
        Rat::from_integer(crossings as i128),
        Relation::Eq,
        Extended::Finite(Rat::from_integer(0)),
    ))
}
