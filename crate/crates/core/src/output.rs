//! Byte-stable machine output: JSON with sorted keys and 12 significant
//! digits, and versioned CSV.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::Theta;
use crate::par;
use crate::risk::Evaluator;
use crate::solvers::{grid_points, Trajectory};

pub const CSV_SCHEMA: &str = "# perflab-schema v1";

/// Scientific notation with 12 significant digits, independent of locale.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(round_value).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with object keys sorted, floats rounded to 12 significant
/// digits, and a trailing newline. Non-finite floats become `null`.
pub fn stable_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Contract(format!("serialization: {e}")))?;
    let mut s = serde_json::to_string_pretty(&round_value(v))
        .map_err(|e| Error::Contract(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn csv(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    out.push_str(CSV_SCHEMA);
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn theta_header(dim: usize) -> impl Iterator<Item = String> {
    (0..dim).map(|i| format!("theta_{i}"))
}

/// `iter, theta_0.., pr_value, pr_stderr, grad_norm`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let dim = traj.final_theta().dim();
    let header: Vec<String> = std::iter::once("iter".to_string())
        .chain(theta_header(dim))
        .chain(["pr_value", "pr_stderr", "grad_norm"].map(String::from))
        .collect();
    let rows = traj
        .iterates
        .iter()
        .zip(&traj.pr_values)
        .zip(&traj.grad_norms)
        .enumerate()
        .map(|(t, ((th, pr), g))| {
            std::iter::once(t.to_string())
                .chain(th.0.iter().map(|&x| fmt_num(x)))
                .chain([fmt_num(pr.value), fmt_num(pr.std_err), fmt_num(*g)])
                .collect()
        });
    csv(&header, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeRow {
    pub theta: Theta,
    pub pr: f64,
    pub pr_stderr: f64,
    /// `DPR(θ_PS, θ)`.
    pub dpr_at_ps: f64,
}

/// PR and `DPR(θ_PS, ·)` over the grid with spacing `h`, in grid order.
pub fn landscape(ev: &Evaluator<'_>, h: f64, theta_ps: &Theta) -> Result<Vec<LandscapeRow>> {
    let grid = grid_points(&ev.instance().domain, h)?;
    par::map(&grid, |th| {
        let pr = ev.pr(th)?;
        let dpr = ev.dpr(theta_ps, th)?;
        Ok(LandscapeRow {
            theta: th.clone(),
            pr: pr.value,
            pr_stderr: pr.std_err,
            dpr_at_ps: dpr.value,
        })
    })
    .into_iter()
    .collect()
}

/// `theta_0.., pr, pr_stderr, dpr_at_ps`.
pub fn landscape_csv(rows: &[LandscapeRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.theta.dim());
    let header: Vec<String> = theta_header(dim)
        .chain(["pr", "pr_stderr", "dpr_at_ps"].map(String::from))
        .collect();
    csv(
        &header,
        rows.iter().map(|r| {
            r.theta
                .0
                .iter()
                .map(|&x| fmt_num(x))
                .chain([fmt_num(r.pr), fmt_num(r.pr_stderr), fmt_num(r.dpr_at_ps)])
                .collect()
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::canonical;
    use serde_json::json;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(2.0 / 3.0), "6.66666666667e-1");
        assert_eq!(fmt_num(-1.75), "-1.75000000000e0");
        assert_eq!(fmt_num(0.0), "0.00000000000e0");
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn json_sorted_and_rounded() {
        let s = stable_json(&json!({"b": 1.0 / 3.0, "a": [2, f64::NAN]})).unwrap();
        assert_eq!(s, "{\n  \"a\": [\n    2,\n    null\n  ],\n  \"b\": 0.333333333333\n}\n");
    }

    #[test]
    fn canonical_landscape() {
        let inst = canonical();
        let ev = Evaluator::closed_form(&inst).unwrap();
        let rows = landscape(&ev, 0.5, &Theta::scalar(1.0)).unwrap();
        assert_eq!(rows.len(), 13);
        let best = rows.iter().min_by(|a, b| a.pr.total_cmp(&b.pr)).unwrap();
        assert_eq!(best.theta.0, vec![0.5]);
        let text = landscape_csv(&rows);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_SCHEMA));
        assert_eq!(lines.next(), Some("theta_0,pr,pr_stderr,dpr_at_ps"));
        assert_eq!(text.lines().count(), 15);
    }
}
