//! Wires the allocator, controllers, link channels and workloads into one
//! event-driven run.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

use crate::allocator::{
    allocate_step_filtered, AccMask, AcceleratorStatus, Allocation, CommandRequester, GroupTable,
};
use crate::command::{classify_command, Command, CommandQueue, QueueFull, TypeGrouping};
use crate::config::{ScenarioConfig, TimelineAction};
use crate::controller::{AccelParams, ControllerState};
use crate::error::{Error, SimError};
use crate::link::{Channel, Direction, InFlight, LinkModel, PriorityTable};
use crate::metrics::{MetricsReport, Recorder, TraceEvent, TraceRecord};
use crate::sg::{decode_lists, distribute};
use crate::sim::{EventQueue, RngStreams, SimTime};
use crate::workload::{frame_sg_list, AppState, ControllerMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    ThreadWake { app: usize, thread: usize },
    Prepared { app: usize, thread: usize },
    SgFetchComplete { command_id: u64 },
    TransferComplete { direction: Direction },
    ComputeStep { acc: usize },
    Timeline { index: usize },
    LinkResume { direction: Direction },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Attach the full event trace to the report.
    pub keep_trace: bool,
}

#[derive(Debug, Clone)]
struct HostCommand {
    command: Command,
    app: usize,
    thread: usize,
}

/// A run in progress. Most callers want [`run_scenario`].
pub struct Simulation {
    cfg: ScenarioConfig,
    mode: ControllerMode,
    events: EventQueue<Event>,
    rng: RngStreams,
    params: Vec<AccelParams>,
    controllers: Vec<ControllerState>,
    status: AcceleratorStatus,
    table: GroupTable,
    grouping: TypeGrouping,
    type_masks: Vec<AccMask>,
    queues: Vec<CommandQueue>,
    cursor: usize,
    requester: CommandRequester,
    host: BTreeMap<u64, HostCommand>,
    /// Submissions waiting for a free slot in each queue.
    blocked: Vec<VecDeque<u64>>,
    rx: Channel,
    tx: Channel,
    link: LinkModel,
    apps: Vec<AppState>,
    thread_base: Vec<u32>,
    next_command_id: u64,
    recorder: Recorder,
    trace: Option<Vec<TraceRecord>>,
}

impl Simulation {
    /// Builds the initial state. The config must already be validated.
    pub fn new(cfg: &ScenarioConfig, opts: RunOptions) -> Self {
        let cfg = cfg.clone();
        let mode = cfg.mode;
        let params = cfg.accelerator_params();
        let k = params.len();
        let acc_types = cfg.acc_types();
        let (table, grouping) = match mode {
            ControllerMode::Ultrashare => cfg.grouping(),
            ControllerMode::SingleQueue => (
                GroupTable::new(k, vec![AccMask::first_n(k)]).expect("validated"),
                TypeGrouping::single(cfg.num_types()),
            ),
            ControllerMode::Static => (
                GroupTable::identity(k).expect("validated"),
                TypeGrouping::single(cfg.num_types()),
            ),
        };
        let type_masks = (0..cfg.num_types() as u32)
            .map(|t| {
                AccMask::from_indices(
                    acc_types
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| **a == t)
                        .map(|(i, _)| i),
                )
            })
            .collect();
        let queues = (0..table.groups())
            .map(|g| CommandQueue::new(g, cfg.queue_capacity))
            .collect();
        let priority: PriorityTable = cfg.priority_table();
        let mut rng = RngStreams::new(cfg.seed);
        let mut apps = Vec::new();
        let mut thread_base = Vec::new();
        let mut threads = 0u32;
        for (i, spec) in cfg.apps.iter().enumerate() {
            rng.register(i as u64);
            let (fin, fout) = cfg.app_frame(spec);
            let prep = cfg.app_prep_ns(spec);
            thread_base.push(threads);
            threads += spec.threads;
            apps.push(AppState::new(spec.clone(), fin, fout, prep));
        }
        let link = cfg.link_model();
        let mut recorder = Recorder::new();
        let mut trace = opts.keep_trace.then(Vec::new);
        let start = TraceRecord {
            time: SimTime::ZERO,
            event: TraceEvent::RunStart {
                mode,
                seed: cfg.seed,
                acc_types,
                apps: cfg.apps.iter().map(|a| a.acc_type).collect(),
                queues: table.groups(),
                rx_bandwidth: link.rx_bandwidth,
                tx_bandwidth: link.tx_bandwidth,
            },
        };
        recorder.record_event(&start);
        if let Some(t) = trace.as_mut() {
            t.push(start);
        }
        Simulation {
            mode,
            events: EventQueue::new(),
            rng,
            controllers: (0..k)
                .map(|i| ControllerState::new(i, cfg.page_size, cfg.pages_per_buffer))
                .collect(),
            status: AcceleratorStatus::all_idle(k),
            blocked: vec![VecDeque::new(); table.groups()],
            table,
            grouping,
            type_masks,
            queues,
            cursor: 0,
            requester: CommandRequester::new(cfg.sg_fetch_latency_ns),
            host: BTreeMap::new(),
            rx: Channel::new(Direction::Rx, priority.clone()),
            tx: Channel::new(Direction::Tx, priority),
            link,
            apps,
            thread_base,
            next_command_id: 0,
            recorder,
            trace,
            params,
            cfg,
        }
    }

    pub fn now(&self) -> SimTime {
        self.events.now()
    }

    pub fn controllers(&self) -> &[ControllerState] {
        &self.controllers
    }

    /// Runs to the configured duration and returns the report.
    pub fn run(mut self) -> Result<MetricsReport, SimError> {
        for (app, state) in self.apps.iter().enumerate() {
            for thread in 0..state.threads.len() {
                self.events.schedule(
                    SimTime(state.spec.start_ns),
                    Event::ThreadWake { app, thread },
                )?;
            }
        }
        for (index, entry) in self.cfg.timeline.iter().enumerate() {
            self.events
                .schedule(SimTime(entry.at_ns), Event::Timeline { index })?;
        }
        let end = SimTime(self.cfg.duration_ns);
        while let Some(ev) = self.events.pop_next(end) {
            self.handle(ev.payload)?;
        }
        self.events.advance_to(end);
        self.emit(TraceEvent::RunEnd {
            duration_ns: self.cfg.duration_ns,
        });
        let mut report = self.recorder.finish();
        report.trace = self.trace;
        Ok(report)
    }

    fn emit(&mut self, event: TraceEvent) {
        let rec = TraceRecord {
            time: self.events.now(),
            event,
        };
        self.recorder.record_event(&rec);
        if let Some(t) = self.trace.as_mut() {
            t.push(rec);
        }
    }

    fn handle(&mut self, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::ThreadWake { app, thread } => self.maybe_prepare(app, thread),
            Event::Prepared { app, thread } => self.submit(app, thread),
            Event::SgFetchComplete { command_id } => self.on_sg_fetched(command_id),
            Event::TransferComplete { direction } => self.on_transfer_complete(direction),
            Event::ComputeStep { acc } => {
                if let Some(s) = self.controllers[acc].finish_chunk()? {
                    self.emit(TraceEvent::ComputeComplete {
                        acc,
                        command_id: s.command_id,
                        consumed: s.consumed,
                        produced: s.produced,
                        span_ns: s.span_ns,
                        stall_ns: s.stall_ns,
                    });
                }
                self.pump(acc)
            }
            Event::Timeline { index } => self.on_timeline(index),
            Event::LinkResume { direction } => {
                self.emit(TraceEvent::SchedulerWakeup {
                    action: format!("{direction} link resumed"),
                });
                self.kick(direction)
            }
        }
    }

    fn maybe_prepare(&mut self, app: usize, thread: usize) -> Result<(), SimError> {
        if self.events.now() < SimTime(self.apps[app].spec.start_ns) {
            return Ok(());
        }
        let state = &mut self.apps[app];
        if !state.may_prepare(thread) {
            return Ok(());
        }
        state.threads[thread].preparing = true;
        state.issued += 1;
        let mut prep = state.prep_ns;
        let jitter = state.spec.prep_jitter_ns;
        if jitter > 0 {
            prep += self.rng.stream(app as u64)?.gen_range(0..=jitter);
        }
        self.events
            .schedule_in(prep, Event::Prepared { app, thread })?;
        Ok(())
    }

    fn build_command(&mut self, app: usize, thread: usize) -> Result<Command, SimError> {
        let command_id = self.next_command_id;
        self.next_command_id += 1;
        let page = self.cfg.page_size;
        let (fin, fout, offset, acc_type) = {
            let a = &self.apps[app];
            (
                a.frame_in,
                a.frame_out,
                a.spec.buffer_offset,
                a.spec.acc_type,
            )
        };
        let rng = self.rng.stream(app as u64)?;
        // 36-bit page numbers keep addresses inside a 48-bit space
        let mut next_page = || rng.gen::<u64>() >> 28;
        let bad = |source| SimError::BadSgList { command_id, source };
        let rx = frame_sg_list(fin, offset, page, &mut next_page).map_err(bad)?;
        let tx = frame_sg_list(fout, offset, page, &mut next_page).map_err(bad)?;
        Ok(Command {
            command_id,
            core_id: self.thread_base[app] + thread as u32,
            acc_type,
            rx_lists: vec![rx],
            tx_lists: vec![tx],
            submit_time: self.events.now(),
        })
    }

    fn submit(&mut self, app: usize, thread: usize) -> Result<(), SimError> {
        self.apps[app].threads[thread].preparing = false;
        let command = self.build_command(app, thread)?;
        let command_id = command.command_id;
        self.apps[app].threads[thread].outstanding += 1;
        self.emit(TraceEvent::CommandArrival {
            command_id,
            app_id: app,
            core_id: command.core_id,
            acc_type: command.acc_type,
            rx_bytes: command.rx_bytes(),
            tx_bytes: command.tx_bytes(),
        });
        let queue = match self.route(&command, app, thread) {
            Ok(q) => q,
            Err(reason) => {
                self.emit(TraceEvent::CommandRejected {
                    command_id,
                    app_id: app,
                    reason,
                });
                self.apps[app].threads[thread].outstanding -= 1;
                return self.maybe_prepare(app, thread);
            }
        };
        self.host.insert(
            command_id,
            HostCommand {
                command: command.clone(),
                app,
                thread,
            },
        );
        if !self.blocked[queue].is_empty() {
            return self.block(queue, command_id, app, thread);
        }
        match self.queues[queue].enqueue(command) {
            Ok(()) => {
                let depth = self.queues[queue].len();
                self.emit(TraceEvent::CommandEnqueued {
                    command_id,
                    queue,
                    depth,
                });
                self.maybe_prepare(app, thread)?;
                self.run_allocator()
            }
            Err(QueueFull(_)) => self.block(queue, command_id, app, thread),
        }
    }

    fn block(
        &mut self,
        queue: usize,
        command_id: u64,
        app: usize,
        thread: usize,
    ) -> Result<(), SimError> {
        self.apps[app].threads[thread].blocked = true;
        self.blocked[queue].push_back(command_id);
        self.emit(TraceEvent::CommandBlocked { command_id, queue });
        Ok(())
    }

    /// Which queue a command goes to, or why it cannot be served.
    fn route(&self, command: &Command, app: usize, thread: usize) -> Result<usize, String> {
        let has_acc = self
            .type_masks
            .get(command.acc_type as usize)
            .is_some_and(|m| !m.is_empty());
        if !has_acc {
            return Err(format!("no accelerator of type {}", command.acc_type));
        }
        match self.mode {
            ControllerMode::Ultrashare => classify_command(command, &self.grouping)
                .map_err(|e| format!("type {} is not routed to any queue", e.acc_type)),
            ControllerMode::SingleQueue => Ok(0),
            ControllerMode::Static => self.apps[app]
                .spec
                .static_accs
                .as_ref()
                .and_then(|a| a.get(thread).copied())
                .ok_or_else(|| "thread has no pinned accelerator".to_string()),
        }
    }

    /// Runs the allocation unit until it finds nothing more to do.
    fn run_allocator(&mut self) -> Result<(), SimError> {
        loop {
            let alloc = {
                let masks = &self.type_masks;
                let eligible = |c: &Command| match masks.get(c.acc_type as usize) {
                    Some(m) => *m,
                    None => AccMask::NONE,
                };
                allocate_step_filtered(
                    &mut self.status,
                    &self.table,
                    &mut self.queues,
                    &mut self.cursor,
                    eligible,
                )
            };
            let Some(alloc) = alloc else {
                return Ok(());
            };
            self.on_allocated(alloc)?;
        }
    }

    fn on_allocated(&mut self, alloc: Allocation) -> Result<(), SimError> {
        let command_id = alloc.command.command_id;
        self.emit(TraceEvent::Allocated {
            command_id,
            queue: alloc.queue,
            acc: alloc.acc,
        });
        self.controllers[alloc.acc].begin(
            command_id,
            alloc.command.rx_bytes(),
            alloc.command.tx_bytes(),
        )?;
        self.requester.request_sg_fetch(
            &alloc,
            &mut self.events,
            Event::SgFetchComplete { command_id },
        )?;
        // a slot just freed up
        if let Some(waiting) = self.blocked[alloc.queue].pop_front() {
            let h = &self.host[&waiting];
            let (app, thread, command) = (h.app, h.thread, h.command.clone());
            self.queues[alloc.queue]
                .enqueue(command)
                .map_err(|_| SimError::BufferBound {
                    acc: alloc.acc,
                    detail: "queue still full after a dequeue".into(),
                })?;
            let depth = self.queues[alloc.queue].len();
            self.emit(TraceEvent::CommandEnqueued {
                command_id: waiting,
                queue: alloc.queue,
                depth,
            });
            self.apps[app].threads[thread].blocked = false;
            self.maybe_prepare(app, thread)?;
        }
        Ok(())
    }

    fn on_sg_fetched(&mut self, command_id: u64) -> Result<(), SimError> {
        let acc = self
            .requester
            .info_queue()
            .front()
            .ok_or(SimError::MissingRequestInfo(command_id))?
            .allocated_acc;
        let cmd = &self
            .host
            .get(&command_id)
            .ok_or(SimError::MissingRequestInfo(command_id))?
            .command;
        let mut streams = decode_lists(command_id, Direction::Rx, &cmd.rx_lists, acc)?;
        streams.extend(decode_lists(command_id, Direction::Tx, &cmd.tx_lists, acc)?);
        let count = |d: Direction| {
            streams
                .iter()
                .filter(|s| s.direction == d)
                .map(|s| s.elements.len())
                .sum()
        };
        let (rx_elements, tx_elements) = (count(Direction::Rx), count(Direction::Tx));
        distribute(
            streams,
            self.requester.info_queue_mut(),
            &mut self.controllers,
        )?;
        self.emit(TraceEvent::SgFetchComplete {
            command_id,
            acc,
            rx_elements,
            tx_elements,
        });
        self.pump(acc)
    }

    fn channel(&mut self, dir: Direction) -> &mut Channel {
        match dir {
            Direction::Rx => &mut self.rx,
            Direction::Tx => &mut self.tx,
        }
    }

    /// Lets one accelerator make progress: start compute, raise requests,
    /// and give both link schedulers a chance to grant.
    fn pump(&mut self, acc: usize) -> Result<(), SimError> {
        let now = self.events.now();
        if let Some(at) = self.controllers[acc].start_chunk(now, &self.params[acc]) {
            self.events.schedule(at, Event::ComputeStep { acc })?;
        }
        self.controllers[acc].try_issue_rx();
        self.controllers[acc].try_issue_tx();
        self.kick(Direction::Rx)?;
        self.kick(Direction::Tx)
    }

    /// Starts the next transfer on `dir` if the channel is free.
    fn kick(&mut self, dir: Direction) -> Result<(), SimError> {
        let now = self.events.now();
        if !self.channel(dir).is_available(now) {
            return Ok(());
        }
        let pending: Vec<bool> = self
            .controllers
            .iter()
            .map(|c| c.has_pending(dir))
            .collect();
        let Some(acc) = self.channel(dir).scheduler_mut().schedule_step(&pending) else {
            return Ok(());
        };
        let element = self.controllers[acc].grant(dir).expect("pending request");
        let command_id = self.controllers[acc].command_id().expect("active command");
        let link = self.link;
        let done = self.channel(dir).begin_transfer(
            now,
            InFlight {
                acc,
                command_id,
                element,
            },
            &link,
        )?;
        self.events
            .schedule(done, Event::TransferComplete { direction: dir })?;
        self.emit(TraceEvent::DataChunkStart {
            direction: dir,
            acc,
            command_id,
            bytes: element.length,
        });
        self.controllers[acc].try_issue(dir);
        Ok(())
    }

    fn on_transfer_complete(&mut self, dir: Direction) -> Result<(), SimError> {
        let Some(t) = self.channel(dir).complete() else {
            return Err(SimError::SpuriousCompletion {
                direction: dir,
                acc: usize::MAX,
            });
        };
        self.controllers[t.acc].on_complete(dir, t.element)?;
        self.emit(TraceEvent::DataChunkComplete {
            direction: dir,
            acc: t.acc,
            command_id: t.command_id,
            bytes: t.element.length,
        });
        if dir == Direction::Tx && self.controllers[t.acc].is_command_done() {
            self.complete_command(t.acc)?;
        }
        self.pump(t.acc)
    }

    fn complete_command(&mut self, acc: usize) -> Result<(), SimError> {
        let command_id = self.controllers[acc]
            .finish_command()
            .expect("command in progress");
        self.emit(TraceEvent::CommandComplete { command_id, acc });
        self.status.set_idle(acc);
        let h = self
            .host
            .remove(&command_id)
            .ok_or(SimError::MissingRequestInfo(command_id))?;
        self.apps[h.app].threads[h.thread].outstanding -= 1;
        self.maybe_prepare(h.app, h.thread)?;
        self.run_allocator()
    }

    fn on_timeline(&mut self, index: usize) -> Result<(), SimError> {
        let action = self.cfg.timeline[index].action.clone();
        match action {
            TimelineAction::ReconfigureGroup {
                group,
                accelerators,
            } => {
                self.emit(TraceEvent::SchedulerWakeup {
                    action: format!("group {group} -> accelerators {accelerators:?}"),
                });
                // only the multi-queue controller has a reconfigurable table
                if self.mode == ControllerMode::Ultrashare {
                    self.table
                        .reconfigure(group, AccMask::from_indices(accelerators))
                        .map_err(|e| SimError::BufferBound {
                            acc: usize::MAX,
                            detail: e.to_string(),
                        })?;
                    self.run_allocator()?;
                }
                Ok(())
            }
            TimelineAction::SetPriority { weights } => {
                self.emit(TraceEvent::SchedulerWakeup {
                    action: format!("priority {weights:?}"),
                });
                let table = PriorityTable::new(&weights).expect("validated");
                for dir in [Direction::Rx, Direction::Tx] {
                    self.channel(dir)
                        .scheduler_mut()
                        .set_priority_table(table.clone())
                        .expect("validated width");
                }
                Ok(())
            }
            TimelineAction::LinkStall {
                direction,
                duration_ns,
            } => {
                self.emit(TraceEvent::SchedulerWakeup {
                    action: format!("{direction} link stalled for {duration_ns} ns"),
                });
                let until = self.events.now() + duration_ns;
                self.channel(direction).hold(until);
                self.events
                    .schedule(until, Event::LinkResume { direction })?;
                Ok(())
            }
        }
    }
}

/// Validates `cfg` and runs it to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport, Error> {
    run_scenario_with(cfg, RunOptions::default())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, opts: RunOptions) -> Result<MetricsReport, Error> {
    cfg.validate()?;
    Ok(Simulation::new(cfg, opts).run()?)
}

/// Same workload, one shared queue in front of every accelerator.
pub fn run_single_queue_mode(cfg: &ScenarioConfig) -> Result<MetricsReport, Error> {
    let mut c = cfg.clone();
    c.mode = ControllerMode::SingleQueue;
    run_scenario(&c)
}

/// Same workload, each thread pinned to its `static_accs` entry.
pub fn run_static_mode(cfg: &ScenarioConfig) -> Result<MetricsReport, Error> {
    let mut c = cfg.clone();
    c.mode = ControllerMode::Static;
    run_scenario(&c)
}
