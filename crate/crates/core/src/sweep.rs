//! Parameter sweeps over a base scenario.
//!
//! A sweep parameter is `path=values`. The path is dotted into the scenario
//! (`link.rx_bandwidth`, `apps.0.max_outstanding`); several paths joined by
//! `+` take the same value together. Values are a comma list (`1,2,4`) or an
//! integer range (`1..9`, `1..=9`, `0..=100:25`). Several parameters form a
//! cartesian product.

use rayon::prelude::*;
use serde_json::Value;

use crate::config::ScenarioConfig;
use crate::engine::run_scenario;
use crate::error::{ConfigError, ConfigIssue, Error};
use crate::metrics::MetricsReport;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParam {
    pub paths: Vec<String>,
    pub values: Vec<Value>,
}

fn parse_scalar(s: &str) -> Value {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(f) = s.parse::<f64>() {
        return Value::from(f);
    }
    match s {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(s.to_string()),
    }
}

fn parse_range(s: &str) -> Option<Result<Vec<Value>, String>> {
    let (range, step) = match s.split_once(':') {
        Some((r, st)) => (r, Some(st)),
        None => (s, None),
    };
    let (lo, hi, inclusive) = if let Some((a, b)) = range.split_once("..=") {
        (a, b, true)
    } else {
        let (a, b) = range.split_once("..")?;
        (a, b, false)
    };
    let parse = |x: &str| {
        x.trim()
            .parse::<i64>()
            .map_err(|_| format!("`{x}` is not an integer"))
    };
    Some((|| {
        let lo = parse(lo)?;
        let hi = parse(hi)?;
        let step = match step {
            Some(st) => parse(st)?,
            None => 1,
        };
        if step <= 0 {
            return Err("range step must be positive".to_string());
        }
        let end = if inclusive { hi } else { hi - 1 };
        let mut out = Vec::new();
        let mut v = lo;
        while v <= end {
            out.push(Value::from(v));
            v += step;
        }
        if out.is_empty() {
            return Err(format!("range `{s}` is empty"));
        }
        Ok(out)
    })())
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (paths, values) = s
            .split_once('=')
            .ok_or_else(|| format!("`{s}`: expected path=values"))?;
        let paths: Vec<String> = paths.split('+').map(|p| p.trim().to_string()).collect();
        if paths.iter().any(|p| p.is_empty()) {
            return Err(format!("`{s}`: empty path"));
        }
        let values = match parse_range(values.trim()) {
            Some(r) => r?,
            None => values.split(',').map(parse_scalar).collect(),
        };
        Ok(SweepParam { paths, values })
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| format!("`{part}` is not an index into a list"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("index {idx} out of range (length {len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("cannot descend into `{part}`")),
        };
    }
    Ok(())
}

/// One point of a sweep: its label and the scenario to run.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub config: ScenarioConfig,
}

/// Expands the cartesian product of `params` over `base`.
pub fn expand(
    base: &ScenarioConfig,
    params: &[SweepParam],
) -> Result<Vec<SweepPoint>, ConfigError> {
    let base_value = serde_json::to_value(base).expect("scenario serializes");
    let mut points = vec![(Vec::<String>::new(), base_value)];
    for p in params {
        let mut next = Vec::with_capacity(points.len() * p.values.len());
        for (labels, v) in &points {
            for value in &p.values {
                let mut v = v.clone();
                for path in &p.paths {
                    set_path(&mut v, path, value.clone()).map_err(|message| {
                        ConfigError::Invalid(vec![ConfigIssue {
                            path: path.clone(),
                            message,
                        }])
                    })?;
                }
                let mut labels = labels.clone();
                labels.push(format!("{}={}", p.paths.join("+"), value));
                next.push((labels, v));
            }
        }
        points = next;
    }
    points
        .into_iter()
        .map(|(labels, v)| {
            let config: ScenarioConfig =
                serde_json::from_value(v).map_err(|e| ConfigError::Parse(e.to_string()))?;
            config.validate()?;
            Ok(SweepPoint {
                label: labels.join(";"),
                config,
            })
        })
        .collect()
}

/// Runs every point in parallel; results come back in point order.
pub fn run_sweep(points: &[SweepPoint]) -> Result<Vec<(String, MetricsReport)>, Error> {
    points
        .par_iter()
        .map(|p| Ok((p.label.clone(), run_scenario(&p.config)?)))
        .collect()
}
