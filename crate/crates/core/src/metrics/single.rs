use super::{interval_sets, require_levels, work_between, BoundReport, MetricsError, Relation};
use crate::rational::{Extended, Rat};
use crate::sim::{SteadyInterval, Trace};

/// Work-level growth bounds on a single server over a steady interval.
///
/// The lower pair applies when every user is backlogged, the upper pair to
/// the backlogged set. Each backlogged user must start with a tag in
/// `[V, V + L_max/φ_i]`, and `V` must equal the smallest of those tags
/// (it does not right after an idle server is reactivated while still
/// finishing a departed user's packet).
pub fn check_single_server(trace: &Trace, interval: &SteadyInterval) -> Result<Vec<BoundReport>, MetricsError> {
    require_levels(&interval.start)?;
    let p = &trace.params;
    if p.n_servers() != 1 {
        return Err(MetricsError::Precondition(format!("{} servers, expected one", p.n_servers())));
    }
    let (union, inter) = interval_sets(trace, &interval.start, &interval.end);
    if union != inter {
        return Err(MetricsError::Precondition("backlogged set changes inside the interval".into()));
    }
    let (a, b) = (&interval.start, &interval.end);
    let (Extended::Finite(v0), Extended::Finite(v1)) = (a.levels[0], b.levels[0]) else {
        return Err(MetricsError::Precondition("server is idle at an end of the interval".into()));
    };
    let l_max = Rat::from_integer(p.l_max as i128);
    for &i in &inter {
        let f = a.tags[i];
        if f < v0 || f > v0 + l_max / p.weights[i] {
            return Err(MetricsError::Precondition(format!("tag of user {i} starts outside [V, V + L/phi]")));
        }
    }
    if inter.iter().map(|&i| a.tags[i]).min() != Some(v0) {
        return Err(MetricsError::Precondition("level differs from the smallest backlogged tag".into()));
    }
    let growth = v1 - v0;
    let span = b.time - a.time;
    let rho = p.rates[0];
    let (t0, t1) = (a.time, b.time);
    let work = |set: &mut dyn Iterator<Item = usize>| -> (Rat, Rat, Rat) {
        let mut w = Rat::from_integer(0);
        let mut phi = Rat::from_integer(0);
        let mut n = Rat::from_integer(0);
        for i in set {
            w += Rat::from_integer(work_between(a, b, i) as i128);
            phi += p.weights[i];
            n += Rat::from_integer(1);
        }
        (w, phi, n)
    };
    let one = Rat::from_integer(1);
    let mut out = Vec::new();
    if inter.len() == p.n_users() {
        let (w, phi, n) = work(&mut (0..p.n_users()));
        out.push(BoundReport::new(
            "single-level-lower",
            t0,
            t1,
            "all users".into(),
            growth,
            Relation::Ge,
            Extended::Finite(w / phi - (n - one) * l_max / phi),
        ));
        out.push(BoundReport::new(
            "single-level-rate-lower",
            t0,
            t1,
            "all users".into(),
            growth,
            Relation::Ge,
            Extended::Finite(rho * span / phi - n * l_max / phi),
        ));
    }
    let (w, phi, n) = work(&mut inter.iter().copied());
    let scope = format!("users {:?}", inter);
    out.push(BoundReport::new(
        "single-level-upper",
        t0,
        t1,
        scope.clone(),
        growth,
        Relation::Le,
        Extended::Finite(w / phi + (n - one) * l_max / phi),
    ));
    out.push(BoundReport::new(
        "single-level-rate-upper",
        t0,
        t1,
        scope,
        growth,
        Relation::Le,
        Extended::Finite(rho * span / phi + n * l_max / phi),
    ));
    Ok(out)
}
