//! Ready-made scenarios for the standard experiments.
//!
//! Frame sizes use 3 bytes per RGB pixel: 240x180 is 129,600 B.

use crate::config::{AcceleratorConfig, LinkConfig, ScenarioConfig};
use crate::workload::{AppSpec, ControllerMode};

/// 240x180 RGB frame.
pub const SMALL_FRAME: u64 = 240 * 180 * 3;
/// 480x360 RGB frame, 4x the small one.
pub const MEDIUM_FRAME: u64 = 480 * 360 * 3;
/// 960x720 RGB frame, 16x the small one.
pub const LARGE_FRAME: u64 = 960 * 720 * 3;

/// Process rate that turns `frame` bytes into a `service_ns` compute span.
pub fn rate_for(frame: u64, service_ns: u64) -> f64 {
    frame as f64 / service_ns as f64
}

/// Nine accelerators in three types (three each) whose per-frame service
/// times are 100, 400 and 800 us. One app per type, each keeping 24 frames
/// in flight, on a link fast enough not to matter.
///
/// With a shared FIFO the fast app gets roughly `w / (w - 3)` frames
/// through per slow frame, so deep windows are what pin it to the slow
/// type's pace.
pub fn mixed_service_times(mode: ControllerMode) -> ScenarioConfig {
    let services = [100_000u64, 400_000, 800_000];
    let accs = services
        .iter()
        .enumerate()
        .map(|(t, s)| {
            AcceleratorConfig::new(
                t as u32,
                3,
                rate_for(SMALL_FRAME, *s),
                SMALL_FRAME,
                SMALL_FRAME,
            )
        })
        .collect();
    let mut cfg = ScenarioConfig::new(80_000_000, LinkConfig::symmetric(32.0), accs);
    cfg.mode = mode;
    cfg.queue_capacity = 128;
    cfg.apps = (0..3).map(|t| AppSpec::new(t).window(24)).collect();
    cfg
}

/// Three single-request threads sharing two identical compute-bound
/// accelerators (1 ms per frame). `pins` selects static mode with the given
/// thread-to-accelerator map.
pub fn dynamic_vs_static(pins: Option<[usize; 3]>) -> ScenarioConfig {
    let accs = vec![AcceleratorConfig::new(
        0,
        2,
        rate_for(SMALL_FRAME, 1_000_000),
        SMALL_FRAME,
        SMALL_FRAME,
    )];
    let mut cfg = ScenarioConfig::new(50_000_000, LinkConfig::symmetric(32.0), accs);
    let app = AppSpec::new(0);
    cfg.apps = vec![match pins {
        Some(p) => {
            cfg.mode = ControllerMode::Static;
            app.pinned(p.to_vec())
        }
        None => app.threads(3),
    }];
    cfg
}

/// Every static map of three threads onto two accelerators.
pub fn static_maps() -> Vec<[usize; 3]> {
    (0..8usize)
        .map(|m| [m & 1, (m >> 1) & 1, (m >> 2) & 1])
        .collect()
}

/// Link-bound sharing: nine accelerators fed 4 MiB frames over a 4 B/ns
/// link with 200 ns per-transfer overhead, one single-request thread per
/// accelerator. `compute_rates` overrides the (otherwise very fast)
/// process rate of individual accelerators.
pub fn bandwidth_sharing(
    weights: Option<Vec<u32>>,
    compute_rates: &[(usize, f64)],
) -> ScenarioConfig {
    const FRAME: u64 = 1024 * 4096;
    let k = 9;
    let accs = (0..k)
        .map(|i| {
            let rate = compute_rates
                .iter()
                .find(|(a, _)| *a == i)
                .map_or(64.0, |(_, r)| *r);
            AcceleratorConfig::new(0, 1, rate, FRAME, FRAME)
        })
        .collect();
    let mut cfg = ScenarioConfig::new(40_000_000, LinkConfig::symmetric(4.0), accs);
    cfg.priority = weights;
    // one type, so one group holding all nine; each thread's single
    // outstanding frame always lands on the accelerator it just freed
    cfg.apps = vec![AppSpec::new(0).threads(k as u32).prep_ns(0)];
    cfg
}

/// Effective per-direction data rate of a link moving whole pages.
pub fn page_rate(cfg: &ScenarioConfig) -> f64 {
    let page = cfg.page_size;
    page as f64
        / cfg
            .link_model()
            .transfer_ns(crate::link::Direction::Rx, page) as f64
}

/// `n` simultaneous requests from one app to three identical accelerators
/// whose service time is 1 ms.
pub fn staircase(n: u32) -> ScenarioConfig {
    let accs = vec![AcceleratorConfig::new(
        0,
        3,
        rate_for(SMALL_FRAME, 1_000_000),
        SMALL_FRAME,
        SMALL_FRAME,
    )];
    let mut cfg = ScenarioConfig::new(20_000_000, LinkConfig::symmetric(32.0), accs);
    cfg.apps = vec![AppSpec::new(0).window(n).total(n as u64).prep_ns(0)];
    cfg
}

/// Three identical accelerators and three apps whose frames are 1x, 4x and
/// 16x the small frame.
pub fn equal_sharing() -> ScenarioConfig {
    let accs = vec![AcceleratorConfig::new(
        0,
        3,
        rate_for(SMALL_FRAME, 100_000),
        SMALL_FRAME,
        SMALL_FRAME,
    )];
    let mut cfg = ScenarioConfig::new(80_000_000, LinkConfig::symmetric(32.0), accs);
    cfg.apps = [SMALL_FRAME, MEDIUM_FRAME, LARGE_FRAME]
        .iter()
        .map(|f| AppSpec::new(0).frames(*f, *f))
        .collect();
    cfg
}
