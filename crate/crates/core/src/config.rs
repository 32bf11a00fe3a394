//! Scenario configuration: the on-disk TOML (or JSON) schema and its
//! validation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocator::{AccMask, GroupTable, DEFAULT_SG_FETCH_LATENCY_NS, MAX_ACCELERATORS};
use crate::command::{TypeGrouping, DEFAULT_PAGE_SIZE, DEFAULT_QUEUE_CAPACITY};
use crate::controller::{AccelParams, DEFAULT_PAGES_PER_BUFFER};
use crate::error::{ConfigError, ConfigIssue};
use crate::link::{Direction, LinkModel, PriorityTable, DEFAULT_TRANSFER_OVERHEAD_NS};
use crate::workload::{AppSpec, ControllerMode};

pub const DEFAULT_PREP_NS_PER_BYTE: f64 = 0.01;

fn default_page_size() -> u32 {
    DEFAULT_PAGE_SIZE
}
fn default_pages_per_buffer() -> u32 {
    DEFAULT_PAGES_PER_BUFFER
}
fn default_queue_capacity() -> usize {
    DEFAULT_QUEUE_CAPACITY
}
fn default_sg_fetch_latency() -> u64 {
    DEFAULT_SG_FETCH_LATENCY_NS
}
fn default_prep_ns_per_byte() -> f64 {
    DEFAULT_PREP_NS_PER_BYTE
}
fn default_overhead() -> u64 {
    DEFAULT_TRANSFER_OVERHEAD_NS
}
fn default_count() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    /// Host to FPGA bandwidth, bytes/ns.
    pub rx_bandwidth: f64,
    /// FPGA to host bandwidth, bytes/ns.
    pub tx_bandwidth: f64,
    #[serde(default = "default_overhead")]
    pub per_transfer_overhead_ns: u64,
}

impl LinkConfig {
    pub fn symmetric(bandwidth: f64) -> Self {
        LinkConfig {
            rx_bandwidth: bandwidth,
            tx_bandwidth: bandwidth,
            per_transfer_overhead_ns: DEFAULT_TRANSFER_OVERHEAD_NS,
        }
    }
}

/// `count` identical accelerators occupying consecutive indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorConfig {
    pub acc_type: u32,
    #[serde(default = "default_count")]
    pub count: u32,
    #[serde(default)]
    pub startup_latency_ns: u64,
    pub process_rate: f64,
    pub input_bytes_per_frame: u64,
    pub output_bytes_per_frame: u64,
}

impl AcceleratorConfig {
    pub fn new(
        acc_type: u32,
        count: u32,
        process_rate: f64,
        frame_in: u64,
        frame_out: u64,
    ) -> Self {
        AcceleratorConfig {
            acc_type,
            count,
            startup_latency_ns: 0,
            process_rate,
            input_bytes_per_frame: frame_in,
            output_bytes_per_frame: frame_out,
        }
    }

    pub fn startup(mut self, ns: u64) -> Self {
        self.startup_latency_ns = ns;
        self
    }
}

/// One command queue: the types routed to it and the accelerators serving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub acc_types: Vec<u32>,
    pub accelerators: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TimelineAction {
    ReconfigureGroup {
        group: usize,
        accelerators: Vec<usize>,
    },
    SetPriority {
        weights: Vec<u32>,
    },
    /// The channel starts no new transfer for `duration_ns`.
    LinkStall {
        direction: Direction,
        duration_ns: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub at_ns: u64,
    #[serde(flatten)]
    pub action: TimelineAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub duration_ns: u64,
    #[serde(default)]
    pub mode: ControllerMode,
    #[serde(default = "default_page_size")]
    pub page_size: u32,
    #[serde(default = "default_pages_per_buffer")]
    pub pages_per_buffer: u32,
    #[serde(default = "default_queue_capacity")]
    pub queue_capacity: usize,
    #[serde(default = "default_sg_fetch_latency")]
    pub sg_fetch_latency_ns: u64,
    #[serde(default = "default_prep_ns_per_byte")]
    pub prep_ns_per_byte: f64,
    pub link: LinkConfig,
    /// Initial data priority table, one weight per accelerator. Uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<Vec<u32>>,
    pub accelerators: Vec<AcceleratorConfig>,
    /// Explicit grouping. Defaults to one group per accelerator type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<GroupConfig>>,
    #[serde(default)]
    pub apps: Vec<AppSpec>,
    #[serde(default)]
    pub timeline: Vec<TimelineEntry>,
}

impl ScenarioConfig {
    pub fn new(duration_ns: u64, link: LinkConfig, accelerators: Vec<AcceleratorConfig>) -> Self {
        ScenarioConfig {
            seed: 0,
            duration_ns,
            mode: ControllerMode::default(),
            page_size: DEFAULT_PAGE_SIZE,
            pages_per_buffer: DEFAULT_PAGES_PER_BUFFER,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            sg_fetch_latency_ns: DEFAULT_SG_FETCH_LATENCY_NS,
            prep_ns_per_byte: DEFAULT_PREP_NS_PER_BYTE,
            link,
            priority: None,
            accelerators,
            groups: None,
            apps: Vec::new(),
            timeline: Vec::new(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Number of accelerator instances after expanding `count`.
    pub fn accelerator_count(&self) -> usize {
        self.accelerators.iter().map(|a| a.count as usize).sum()
    }

    /// Types are `0..num_types()`.
    pub fn num_types(&self) -> usize {
        self.accelerators
            .iter()
            .map(|a| a.acc_type as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn accelerator_params(&self) -> Vec<AccelParams> {
        let mut out = Vec::with_capacity(self.accelerator_count());
        for a in &self.accelerators {
            for _ in 0..a.count {
                out.push(AccelParams {
                    acc_index: out.len(),
                    acc_type: a.acc_type,
                    startup_latency_ns: a.startup_latency_ns,
                    process_rate: a.process_rate,
                    input_bytes_per_frame: a.input_bytes_per_frame,
                    output_bytes_per_frame: a.output_bytes_per_frame,
                });
            }
        }
        out
    }

    pub fn acc_types(&self) -> Vec<u32> {
        self.accelerator_params()
            .iter()
            .map(|p| p.acc_type)
            .collect()
    }

    pub fn link_model(&self) -> LinkModel {
        LinkModel {
            rx_bandwidth: self.link.rx_bandwidth,
            tx_bandwidth: self.link.tx_bandwidth,
            per_transfer_overhead_ns: self.link.per_transfer_overhead_ns,
        }
    }

    pub fn priority_table(&self) -> PriorityTable {
        match &self.priority {
            Some(w) => PriorityTable::new(w).expect("validated"),
            None => PriorityTable::uniform(self.accelerator_count()),
        }
    }

    /// Group table and type routing for the multi-queue controller.
    pub fn grouping(&self) -> (GroupTable, TypeGrouping) {
        let k = self.accelerator_count();
        match &self.groups {
            None => {
                let t = self.num_types();
                (
                    GroupTable::by_type(&self.acc_types(), t).expect("validated"),
                    TypeGrouping::per_type(t),
                )
            }
            Some(groups) => {
                let mut route = vec![None; self.num_types()];
                for (g, group) in groups.iter().enumerate() {
                    for t in &group.acc_types {
                        route[*t as usize] = Some(g);
                    }
                }
                let rows = groups
                    .iter()
                    .map(|g| AccMask::from_indices(g.accelerators.iter().copied()))
                    .collect();
                (
                    GroupTable::new(k, rows).expect("validated"),
                    TypeGrouping::new(route),
                )
            }
        }
    }

    fn nominal_frame(&self, acc_type: u32) -> Option<(u64, u64)> {
        self.accelerators
            .iter()
            .find(|a| a.acc_type == acc_type)
            .map(|a| (a.input_bytes_per_frame, a.output_bytes_per_frame))
    }

    /// (input bytes, output bytes) of each request of `app`.
    pub fn app_frame(&self, app: &AppSpec) -> (u64, u64) {
        let (nin, nout) = self.nominal_frame(app.acc_type).unwrap_or((1, 1));
        (
            app.frame_bytes_in.unwrap_or(nin),
            app.frame_bytes_out.unwrap_or(nout),
        )
    }

    pub fn app_prep_ns(&self, app: &AppSpec) -> u64 {
        app.prep_ns
            .unwrap_or_else(|| (self.app_frame(app).0 as f64 * self.prep_ns_per_byte).ceil() as u64)
    }

    /// Checks every cross-reference and range; reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |path: String, message: String| issues.push(ConfigIssue { path, message });

        if self.duration_ns == 0 {
            bad("duration_ns".into(), "must be positive".into());
        }
        if self.page_size == 0 {
            bad("page_size".into(), "must be positive".into());
        }
        if self.pages_per_buffer == 0 {
            bad("pages_per_buffer".into(), "must be at least 1".into());
        }
        if self.queue_capacity == 0 {
            bad("queue_capacity".into(), "must be at least 1".into());
        }
        if !(self.prep_ns_per_byte.is_finite() && self.prep_ns_per_byte >= 0.0) {
            bad(
                "prep_ns_per_byte".into(),
                "must be a non-negative number".into(),
            );
        }
        for (name, v) in [
            ("link.rx_bandwidth", self.link.rx_bandwidth),
            ("link.tx_bandwidth", self.link.tx_bandwidth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad(name.into(), format!("must be positive, got {v}"));
            }
        }

        let k = self.accelerator_count();
        let t = self.num_types();
        if self.accelerators.is_empty() {
            bad(
                "accelerators".into(),
                "at least one accelerator is required".into(),
            );
        }
        if k > MAX_ACCELERATORS {
            bad(
                "accelerators".into(),
                format!("{k} accelerators; at most {MAX_ACCELERATORS} are supported"),
            );
        }
        for (i, a) in self.accelerators.iter().enumerate() {
            let p = format!("accelerators[{i}]");
            if a.count == 0 {
                bad(format!("{p}.count"), "must be at least 1".into());
            }
            if !(a.process_rate.is_finite() && a.process_rate > 0.0) {
                bad(
                    format!("{p}.process_rate"),
                    format!("must be positive, got {}", a.process_rate),
                );
            }
            if a.input_bytes_per_frame == 0 {
                bad(
                    format!("{p}.input_bytes_per_frame"),
                    "must be positive".into(),
                );
            }
            if a.output_bytes_per_frame == 0 {
                bad(
                    format!("{p}.output_bytes_per_frame"),
                    "must be positive".into(),
                );
            }
        }

        if let Some(w) = &self.priority {
            if w.len() != k {
                bad(
                    "priority".into(),
                    format!("has {} weights for {k} accelerators", w.len()),
                );
            }
            for (i, x) in w.iter().enumerate() {
                if !(1..=255).contains(x) {
                    bad(
                        format!("priority[{i}]"),
                        format!("weight {x} outside 1..=255"),
                    );
                }
            }
        }

        if let Some(groups) = &self.groups {
            let mut seen = BTreeSet::new();
            for (g, group) in groups.iter().enumerate() {
                for (j, ty) in group.acc_types.iter().enumerate() {
                    if *ty as usize >= t {
                        bad(
                            format!("groups[{g}].acc_types[{j}]"),
                            format!("references accelerator type {ty} but only {t} types exist"),
                        );
                    } else if !seen.insert(*ty) {
                        bad(
                            format!("groups[{g}].acc_types[{j}]"),
                            format!("type {ty} is already routed to another group"),
                        );
                    }
                }
                for (j, acc) in group.accelerators.iter().enumerate() {
                    if *acc >= k {
                        bad(
                            format!("groups[{g}].accelerators[{j}]"),
                            format!("references accelerator {acc} but only {k} exist"),
                        );
                    }
                }
            }
        }

        let groups = match &self.groups {
            Some(g) => g.len(),
            None => t,
        };
        let buffer = self.page_size as u64 * self.pages_per_buffer as u64;
        for (i, app) in self.apps.iter().enumerate() {
            let p = format!("apps[{i}]");
            if app.acc_type as usize >= t {
                bad(
                    format!("{p}.acc_type"),
                    format!(
                        "references accelerator type {} but only {t} types exist",
                        app.acc_type
                    ),
                );
            }
            if app.max_outstanding == 0 {
                bad(format!("{p}.max_outstanding"), "must be at least 1".into());
            }
            if app.threads == 0 {
                bad(format!("{p}.threads"), "must be at least 1".into());
            }
            if app.frame_bytes_in == Some(0) {
                bad(format!("{p}.frame_bytes_in"), "must be positive".into());
            }
            if app.frame_bytes_out == Some(0) {
                bad(format!("{p}.frame_bytes_out"), "must be positive".into());
            }
            let (fin, fout) = self.app_frame(app);
            if fin > 0 && fout > fin.saturating_mul(buffer) {
                bad(
                    format!("{p}.frame_bytes_out"),
                    "output/input ratio exceeds the TX buffer size".into(),
                );
            }
            match &app.static_accs {
                Some(accs) => {
                    if accs.len() != app.threads as usize {
                        bad(
                            format!("{p}.static_accs"),
                            format!("has {} entries for {} threads", accs.len(), app.threads),
                        );
                    }
                    for (j, acc) in accs.iter().enumerate() {
                        if *acc >= k {
                            bad(
                                format!("{p}.static_accs[{j}]"),
                                format!("references accelerator {acc} but only {k} exist"),
                            );
                        }
                    }
                }
                None if self.mode == ControllerMode::Static => {
                    bad(
                        format!("{p}.static_accs"),
                        "static mode needs an accelerator index per thread".into(),
                    );
                }
                None => {}
            }
        }

        for (i, entry) in self.timeline.iter().enumerate() {
            let p = format!("timeline[{i}]");
            match &entry.action {
                TimelineAction::ReconfigureGroup {
                    group,
                    accelerators,
                } => {
                    if *group >= groups {
                        bad(
                            format!("{p}.group"),
                            format!("group {group} out of range ({groups} groups)"),
                        );
                    }
                    for (j, acc) in accelerators.iter().enumerate() {
                        if *acc >= k {
                            bad(
                                format!("{p}.accelerators[{j}]"),
                                format!("references accelerator {acc} but only {k} exist"),
                            );
                        }
                    }
                }
                TimelineAction::SetPriority { weights } => {
                    if weights.len() != k {
                        bad(
                            format!("{p}.weights"),
                            format!("has {} weights for {k} accelerators", weights.len()),
                        );
                    }
                    for (j, x) in weights.iter().enumerate() {
                        if !(1..=255).contains(x) {
                            bad(
                                format!("{p}.weights[{j}]"),
                                format!("weight {x} outside 1..=255"),
                            );
                        }
                    }
                }
                TimelineAction::LinkStall { .. } => {}
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }
}

/// Reads and validates a scenario file. `.json` files are parsed as JSON,
/// everything else as TOML.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        ScenarioConfig::from_json_str(&text)?
    } else {
        ScenarioConfig::from_toml_str(&text)?
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        duration_ns = 1_000_000

        [link]
        rx_bandwidth = 4.0
        tx_bandwidth = 4.0

        [[accelerators]]
        acc_type = 0
        process_rate = 1.0
        input_bytes_per_frame = 4096
        output_bytes_per_frame = 4096

        [[apps]]
        acc_type = 0
    "#;

    fn minimal() -> ScenarioConfig {
        ScenarioConfig::from_toml_str(MINIMAL).unwrap()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = minimal();
        c.validate().unwrap();
        assert_eq!(c.page_size, 4096);
        assert_eq!(c.pages_per_buffer, 4);
        assert_eq!(c.queue_capacity, 64);
        assert_eq!(c.sg_fetch_latency_ns, 500);
        assert_eq!(c.link.per_transfer_overhead_ns, 200);
        assert_eq!(c.mode, ControllerMode::Ultrashare);
        assert_eq!(c.apps[0].max_outstanding, 1);
    }

    #[test]
    fn dangling_app_type_names_field() {
        let mut c = minimal();
        c.accelerators
            .push(AcceleratorConfig::new(2, 1, 1.0, 10, 10));
        c.apps[0].acc_type = 5;
        let err = c.validate().unwrap_err();
        let issue = &err.issues()[0];
        assert_eq!(issue.path, "apps[0].acc_type");
        assert!(issue.message.contains("type 5"), "{}", issue.message);
        assert!(issue.message.contains("3 types"), "{}", issue.message);
    }

    #[test]
    fn zero_weight_is_rejected() {
        let mut c = minimal();
        c.priority = Some(vec![0]);
        let err = c.validate().unwrap_err();
        assert_eq!(err.issues()[0].path, "priority[0]");
    }

    #[test]
    fn non_positive_rate_is_rejected() {
        let mut c = minimal();
        c.accelerators[0].process_rate = 0.0;
        c.link.tx_bandwidth = -1.0;
        let paths: Vec<_> = c
            .validate()
            .unwrap_err()
            .issues()
            .iter()
            .map(|i| i.path.clone())
            .collect();
        assert!(paths.contains(&"accelerators[0].process_rate".to_string()));
        assert!(paths.contains(&"link.tx_bandwidth".to_string()));
    }

    #[test]
    fn missing_field_is_a_parse_error() {
        let text = MINIMAL.replace("duration_ns = 1_000_000", "");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text),
            Err(ConfigError::Parse(msg)) if msg.contains("duration_ns")
        ));
    }

    #[test]
    fn static_mode_requires_pins() {
        let mut c = minimal();
        c.mode = ControllerMode::Static;
        assert_eq!(
            c.validate().unwrap_err().issues()[0].path,
            "apps[0].static_accs"
        );
        c.apps[0].static_accs = Some(vec![3]);
        assert_eq!(
            c.validate().unwrap_err().issues()[0].path,
            "apps[0].static_accs[0]"
        );
    }

    #[test]
    fn count_expands_to_consecutive_indices() {
        let mut c = minimal();
        c.accelerators = vec![
            AcceleratorConfig::new(0, 2, 1.0, 10, 10),
            AcceleratorConfig::new(1, 3, 2.0, 10, 10),
        ];
        let p = c.accelerator_params();
        assert_eq!(p.len(), 5);
        assert_eq!(p[4].acc_index, 4);
        assert_eq!(c.acc_types(), vec![0, 0, 1, 1, 1]);
        let (table, route) = c.grouping();
        assert_eq!(table.row(1), AccMask(0b11100));
        assert_eq!(route.group_of(1), Some(1));
    }

    #[test]
    fn timeline_entries_parse() {
        let text = format!(
            "{MINIMAL}\n[[timeline]]\nat_ns = 10\naction = \"set_priority\"\nweights = [3]\n\n\
             [[timeline]]\nat_ns = 20\naction = \"link_stall\"\ndirection = \"rx\"\nduration_ns = 5\n"
        );
        let c = ScenarioConfig::from_toml_str(&text).unwrap();
        c.validate().unwrap();
        assert_eq!(
            c.timeline[1].action,
            TimelineAction::LinkStall {
                direction: Direction::Rx,
                duration_ns: 5
            }
        );
    }

    #[test]
    fn toml_round_trip() {
        let c = minimal();
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
    }
}
