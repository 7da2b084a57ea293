//! Text comparison reports over metric CSVs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::aggregate::{load_all, pool, PointKey, Pooled, SeriesKey};
use crate::metrics::Metric;
use crate::BenchError;

/// `(method, baseline)` pairs to tabulate.
pub type Baselines = Vec<(String, String)>;

/// Pairs used when the caller names none. A pair is skipped for
/// experiments that lack either side.
pub const DEFAULT_BASELINES: [(&str, &str); 15] = [
    ("deepsic", "sic"),
    ("sic", "map"),
    ("deepsic", "map"),
    ("detnet", "pgd"),
    ("detnet", "map"),
    ("pgd", "map"),
    ("deepsic", "sic-mismatched"),
    ("sic-moment-matched", "sic-mismatched"),
    ("learned-fg", "sp"),
    ("learned-fg", "sp-mismatched"),
    ("dcea-c", "identity"),
    ("csgm", "lasso"),
    ("pnp", "admm-l1"),
    ("hybrid", "smoother"),
    ("hybrid", "blackbox"),
];

type PooledMap = BTreeMap<SeriesKey, Pooled>;

fn methods_of(pooled: &PooledMap, experiment: &str) -> BTreeSet<String> {
    pooled.keys().filter(|k| k.experiment == experiment).map(|k| k.method.clone()).collect()
}

fn ratio(a: f64, b: f64) -> String {
    if b == 0.0 {
        if a == 0.0 { "n/a".into() } else { "inf".into() }
    } else if (a / b).abs() >= 0.01 {
        format!("{:.3}", a / b)
    } else {
        format!("{:.2e}", a / b)
    }
}

fn get<'a>(pooled: &'a PooledMap, experiment: &str, metric: Metric, method: &str, point: PointKey) -> Option<&'a Pooled> {
    pooled.get(&SeriesKey {
        experiment: experiment.to_owned(),
        metric,
        method: method.to_owned(),
        point,
    })
}

/// Renders ratios of each method to its baseline at every shared grid
/// point, parameter counts and the acceptance thresholds that the metrics
/// can decide. With an explicit `baselines` list, a baseline missing from
/// an experiment that contains its method is an error.
pub fn compare_report(dir: &Path, baselines: &[(String, String)]) -> Result<String, BenchError> {
    let rows = load_all(dir)?;
    let pooled = pool(&rows);
    let strict = !baselines.is_empty();
    let pairs: Baselines = if strict {
        baselines.to_vec()
    } else {
        DEFAULT_BASELINES.iter().map(|(a, b)| ((*a).to_owned(), (*b).to_owned())).collect()
    };
    let experiments: BTreeSet<String> = pooled.keys().map(|k| k.experiment.clone()).collect();

    let mut out = String::from("# Comparison report\n\n## Ratios\n\n");
    out.push_str("| experiment | metric | point | method | baseline | method value | baseline value | ratio |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for (method, baseline) in &pairs {
        let mut seen = false;
        for exp in &experiments {
            let present = methods_of(&pooled, exp);
            if !present.contains(method) {
                continue;
            }
            seen = true;
            if !present.contains(baseline) {
                if strict {
                    return Err(BenchError::BaselineAbsent {
                        experiment: exp.clone(),
                        method: method.clone(),
                        baseline: baseline.clone(),
                    });
                }
                continue;
            }
            for (k, v) in pooled.iter().filter(|(k, _)| {
                &k.experiment == exp && &k.method == method && matches!(k.metric, Metric::Ser | Metric::Mse)
            }) {
                let Some(b) = get(&pooled, exp, k.metric, baseline, k.point) else { continue };
                let _ = writeln!(
                    out,
                    "| {exp} | {} | {} | {method} | {baseline} | {:.4e} | {:.4e} | {} |",
                    k.metric.name(),
                    k.point.label(),
                    v.value,
                    b.value,
                    ratio(v.value, b.value)
                );
            }
        }
        if strict && !seen {
            return Err(BenchError::BaselineAbsent {
                experiment: "every experiment".into(),
                method: method.clone(),
                baseline: baseline.clone(),
            });
        }
    }

    out.push_str("\n## Parameter counts\n\n| experiment | method | params |\n|---|---|---|\n");
    let mut params: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for (k, v) in pooled.iter().filter(|(k, _)| k.metric == Metric::Params) {
        let e = params.entry((&k.experiment, &k.method)).or_insert(0.0);
        *e = e.max(v.hi);
    }
    for ((exp, method), n) in &params {
        let _ = writeln!(out, "| {exp} | {method} | {n} |");
    }

    out.push_str("\n## Acceptance thresholds\n\n| criterion | experiment | check | result | detail |\n|---|---|---|---|---|\n");
    for c in acceptance_checks(&pooled, &experiments) {
        let _ = writeln!(out, "| {} | {} | {} | {} | {} |", c.id, c.experiment, c.check, c.status(), c.detail);
    }
    Ok(out)
}

struct Check {
    id: &'static str,
    experiment: String,
    check: &'static str,
    pass: Option<bool>,
    detail: String,
}

impl Check {
    fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "n/a",
        }
    }
}

/// Seeds on which `a` beats `b` under `better`, and the number of shared
/// seeds.
fn seed_wins(a: &Pooled, b: &Pooled, better: impl Fn(f64, f64) -> bool) -> (usize, usize) {
    let bmap: BTreeMap<u64, f64> = b.per_seed.iter().copied().collect();
    let shared: Vec<(f64, f64)> = a.per_seed.iter().filter_map(|(s, v)| bmap.get(s).map(|w| (*v, *w))).collect();
    (shared.iter().filter(|(v, w)| better(*v, *w)).count(), shared.len())
}

fn points_where<'a>(
    pooled: &'a PooledMap,
    exp: &'a str,
    metric: Metric,
    method: &'a str,
    pred: impl Fn(&PointKey) -> bool + 'a,
) -> impl Iterator<Item = (PointKey, &'a Pooled)> + 'a {
    pooled
        .iter()
        .filter(move |(k, _)| k.experiment == exp && k.metric == metric && k.method == method && pred(&k.point))
        .map(|(k, v)| (k.point, v))
}

fn snr_is(p: &PointKey, db: f64) -> bool {
    p.snr_db().is_some_and(|s| (s - db).abs() < 1e-9)
}

fn majority_check(
    pooled: &PooledMap,
    exp: &str,
    metric: Metric,
    (method, baseline): (&str, &str),
    pred: impl Fn(&PointKey) -> bool,
    better: impl Fn(f64, f64) -> bool + Copy,
) -> Option<(bool, String)> {
    let (point, a) = points_where(pooled, exp, metric, method, pred).next()?;
    let b = get(pooled, exp, metric, baseline, point)?;
    let (wins, seeds) = seed_wins(a, b, better);
    Some((
        wins * 2 > seeds,
        format!("{} on {wins}/{seeds} seeds at {}: {:.4e} vs {:.4e}", method, point.label(), a.value, b.value),
    ))
}

fn acceptance_checks(pooled: &PooledMap, experiments: &BTreeSet<String>) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |id, experiment: &str, check, r: Option<(bool, String)>| {
        if let Some((pass, detail)) = r {
            out.push(Check {
                id,
                experiment: experiment.to_owned(),
                check,
                pass: Some(pass),
                detail,
            });
        }
    };
    let lt = |a: f64, b: f64| a < b;
    let le = |a: f64, b: f64| a <= b;
    for exp in experiments {
        let ms = methods_of(pooled, exp);
        let has = |m: &str| ms.contains(m);
        if has("deepsic") && has("sic") && has("map") {
            let r = points_where(pooled, exp, Metric::Ser, "deepsic", |p| snr_is(p, 10.0)).next().and_then(|(p, d)| {
                let s = get(pooled, exp, Metric::Ser, "sic", p)?;
                let m = get(pooled, exp, Metric::Ser, "map", p)?;
                let pass = d.value <= 1.5 * s.value && s.value <= 2.0 * m.value;
                Some((
                    pass,
                    format!(
                        "DeepSIC/SIC {} (≤1.5), SIC/MAP {} (≤2) over {} symbols",
                        ratio(d.value, s.value),
                        ratio(s.value, m.value),
                        d.trials
                    ),
                ))
            });
            push("3", exp, "DeepSIC ≤ 1.5× SIC, SIC ≤ 2× MAP at 10 dB", r);
        }
        if has("deepsic") && has("sic-mismatched") {
            let r = majority_check(pooled, exp, Metric::Ser, ("deepsic", "sic-mismatched"), |p| snr_is(p, 8.0), lt);
            push("4", exp, "DeepSIC < mismatched SIC at 8 dB, majority", r);
        }
        if has("learned-fg") && has("sp-mismatched") {
            let r =
                majority_check(pooled, exp, Metric::Ser, ("learned-fg", "sp-mismatched"), |p| snr_is(p, 8.0), lt);
            push("4", exp, "learned FG < mismatched SP at 8 dB, majority", r);
        }
        if has("detnet") && has("pgd") {
            let r = majority_check(
                pooled,
                exp,
                Metric::Ser,
                ("detnet", "pgd"),
                |p| snr_is(p, 10.0) && p.q == Some(10),
                le,
            );
            push("6", exp, "DetNet Q=10 ≤ PGD at 10 dB, majority", r);
        }
        if has("dcea-c") && has("dense-baseline") {
            let count = |m: &str| points_where(pooled, exp, Metric::Params, m, |_| true).map(|(_, v)| v.hi).next();
            let r = count("dcea-c").zip(count("dense-baseline")).map(|(c, d)| {
                (c <= 0.1 * d, format!("{c} vs {d} parameters ({:.2}%)", 100.0 * c / d))
            });
            push("7", exp, "DCEA-C params ≤ 10% of dense baseline", r);
        }
        if has("csgm") && has("lasso") {
            let smallest = points_where(pooled, exp, Metric::Mse, "csgm", |_| true).filter_map(|(p, _)| p.m).min();
            let r = smallest.and_then(|m| {
                majority_check(pooled, exp, Metric::Mse, ("csgm", "lasso"), |p| p.m == Some(m), lt)
            });
            push("8", exp, "CSGM < LASSO at the fewest measurements, majority", r);
        }
        if has("hybrid") && has("smoother") {
            let r = majority_check(pooled, exp, Metric::Mse, ("hybrid", "smoother"), |p| p.n_t == Some(2000), lt);
            push("9", exp, "hybrid < smoother at n_t=2000, majority", r);
        }
        if has("hybrid") && has("blackbox") {
            let r = majority_check(pooled, exp, Metric::Mse, ("hybrid", "blackbox"), |p| p.n_t == Some(500), lt);
            push("9", exp, "hybrid < black box at n_t=500, majority", r);
        }
    }
    for (id, check) in [
        ("1", "autodiff gradients vs finite differences"),
        ("2", "SIC ≡ analytic DeepSIC, SP ≡ brute force"),
        ("5", "LASSO solver consensus"),
        ("10", "byte-identical reruns"),
    ] {
        out.push(Check {
            id,
            experiment: "-".into(),
            check,
            pass: None,
            detail: "decided by the acceptance test target".into(),
        });
    }
    out
}
