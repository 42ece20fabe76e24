//! CSV and text writers for run outputs.

use std::io::Write;

use crate::metrics::BoundReport;
use crate::rational::{format_decimal, to_plain, Extended, Rat};
use crate::sim::{StateView, Trace};

const SIG: usize = 12;

fn dec(v: &Rat) -> String {
    format_decimal(v, SIG)
}

fn ext(v: &Extended) -> (String, String) {
    match v {
        Extended::Finite(r) => (dec(r), to_plain(r)),
        Extended::Infinite => ("inf".into(), "inf".into()),
    }
}

/// One row per recorded trace row; tag and level columns carry both a
/// decimal rendering and the exact value.
pub fn write_trace_csv<W: Write>(trace: &Trace, users: &[String], servers: &[String], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "time_exact".into(), "event".into(), "server".into(), "user".into(), "length".into()];
    for u in users {
        header.extend([format!("F_{u}"), format!("F_{u}_exact"), format!("D_{u}")]);
    }
    for s in servers {
        header.extend([format!("V_{s}"), format!("V_{s}_exact")]);
    }
    for u in users {
        header.push(format!("W_{u}"));
    }
    w.write_record(&header)?;
    for row in &trace.rows {
        let v: &StateView = &row.view;
        let mut rec = vec![
            dec(&v.time),
            to_plain(&v.time),
            row.kind.as_str().to_string(),
            row.server.map(|k| servers[k].clone()).unwrap_or_default(),
            row.user.map(|i| users[i].clone()).unwrap_or_default(),
            row.length.map(|l| l.to_string()).unwrap_or_default(),
        ];
        for i in 0..users.len() {
            match (v.tags.get(i), v.bonuses.get(i)) {
                (Some(f), Some(d)) => rec.extend([dec(f), to_plain(f), dec(d)]),
                _ => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        for k in 0..servers.len() {
            match v.levels.get(k) {
                Some(l) => {
                    let (a, b) = ext(l);
                    rec.extend([a, b]);
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        rec.extend(v.work.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reports_csv<W: Write>(reports: &[(String, BoundReport)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheduler", "bound", "t0", "t1", "scope", "lhs", "relation", "rhs", "pass", "slack", "lhs_exact", "rhs_exact"])?;
    for (sched, r) in reports {
        let (rhs, rhs_exact) = ext(&r.rhs);
        let (slack, _) = ext(&r.slack);
        w.write_record([
            sched.as_str(),
            r.bound,
            &dec(&r.t0),
            &dec(&r.t1),
            &r.scope,
            &dec(&r.lhs),
            &r.relation.to_string(),
            &rhs,
            if r.pass { "pass" } else { "FAIL" },
            &slack,
            &to_plain(&r.lhs),
            &rhs_exact,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rate table rows: `(scheduler, t0, t1, user, measured, fair)` in bits per second.
pub type RateRow = (String, Rat, Rat, String, Rat, Rat);

pub fn write_rates_csv<W: Write>(rows: &[RateRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheduler", "t0", "t1", "user", "measured_bps", "fair_bps", "ratio"])?;
    for (sched, t0, t1, user, measured, fair) in rows {
        let ratio = if *fair == Rat::from_integer(0) {
            String::new()
        } else {
            format_decimal(&(measured / fair), 6)
        };
        w.write_record([sched.as_str(), &dec(t0), &dec(t1), user, &dec(measured), &dec(fair), &ratio])?;
    }
    w.flush()?;
    Ok(())
}
