use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::clock::{period_to_ticks, ticks_to_seconds, PacingMode, SimClock, Tick};
use super::message::{Message, Payload, SharedMessage};
use super::trace::{RunTrace, TraceEntry};
use super::BusError;

/// Topic on which callback failures and stack errors are published.
pub const ERRORS_TOPIC: &str = "/errors";
/// Topic carrying runtime parameter commands addressed to nodes by name.
pub const COMMANDS_TOPIC: &str = "/scenario/commands";

const MAX_WAVES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Fatal,
}

impl Severity {
    pub fn code(self) -> f64 {
        match self {
            Severity::Warning => 0.0,
            Severity::Fatal => 1.0,
        }
    }
}

/// Failure raised by a node callback. The scheduler never propagates it;
/// it is turned into a message on [`ERRORS_TOPIC`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeError {
    pub severity: Severity,
    pub code: u32,
    pub description: String,
}

impl NodeError {
    pub fn fatal(code: u32, description: impl Into<String>) -> Self {
        Self {
            severity: Severity::Fatal,
            code,
            description: description.into(),
        }
    }

    pub fn warning(code: u32, description: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code,
            description: description.into(),
        }
    }
}

/// Error codes used on `/errors`.
pub mod codes {
    pub const CALLBACK: u32 = 1;
    pub const SCHEMA: u32 = 2;
    pub const PARAM: u32 = 3;
    pub const LOC_WATCHDOG: u32 = 10;
    pub const LOC_SOURCE_BANNED: u32 = 11;
    pub const PLANNER_NO_OFFSET: u32 = 20;
    pub const PLANNER_LOST: u32 = 21;
    pub const PLANT_DIVERGED: u32 = 30;
    pub const SAFETY_STOP: u32 = 35;
    pub const FAULT_CONFIG: u32 = 40;
}

/// Payload layout of a message on [`ERRORS_TOPIC`].
pub fn error_payload(source: usize, err: &NodeError) -> Payload {
    Payload::new()
        .with("severity", err.severity.code())
        .with("code", err.code as f64)
        .with("source", source as f64)
        .with("description", err.description.as_str())
}

fn error_schema() -> Payload {
    error_payload(0, &NodeError::warning(0, ""))
}

/// Why a run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Scenario manager heartbeat ceased.
    ScenarioComplete,
    /// A fatal error or safety stop was followed by the vehicle halting.
    StackStopCompleted,
    /// Planned run duration reached.
    DurationReached,
    /// Hard wall on sim time; the run counts as failed.
    Timeout,
    /// The vehicle model produced non-finite state.
    PlantDiverged,
    /// The caller-supplied end predicate returned true.
    EndPredicate,
}

impl StopReason {
    pub fn is_failure(&self) -> bool {
        matches!(self, StopReason::Timeout | StopReason::PlantDiverged)
    }
}

/// A topic a node publishes, with its field schema.
#[derive(Debug, Clone)]
pub struct Publication {
    pub topic: String,
    pub schema: Payload,
}

impl Publication {
    pub fn new(topic: impl Into<String>, schema: Payload) -> Self {
        Self {
            topic: topic.into(),
            schema,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemapRule {
    pub from: String,
    pub to: String,
}

/// Static description of a registered node.
#[derive(Debug, Clone)]
pub struct NodeHandle {
    pub name: String,
    /// Declared period in sim seconds.
    pub period: f64,
    pub subscriptions: Vec<String>,
    pub publications: Vec<Publication>,
    pub remap_rules: Vec<RemapRule>,
}

impl NodeHandle {
    pub fn resolve(&self, topic: &str) -> String {
        self.remap_rules
            .iter()
            .find(|r| r.from == topic)
            .map(|r| r.to.clone())
            .unwrap_or_else(|| topic.to_owned())
    }
}

/// A periodic participant on the bus.
pub trait Node {
    fn name(&self) -> &str;
    /// Period in sim seconds; must be an integer multiple of the base step.
    fn period(&self) -> f64;
    /// Topic patterns; `*` matches exactly one path segment.
    fn subscriptions(&self) -> Vec<String> {
        Vec::new()
    }
    fn publications(&self) -> Vec<Publication> {
        Vec::new()
    }
    fn on_message(&mut self, _msg: &Message, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Ok(())
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError>;
    /// Runtime parameter update, `value` is YAML text.
    fn apply_param(&mut self, param: &str, _value: &str) -> Result<(), NodeError> {
        Err(NodeError::warning(
            codes::PARAM,
            format!("node {} has no runtime parameter {param}", self.name()),
        ))
    }
}

/// Per-callback view of the bus handed to a node.
pub struct NodeContext<'a> {
    index: usize,
    tick: Tick,
    handle: &'a NodeHandle,
    schemas: &'a BTreeMap<String, Payload>,
    seqs: &'a mut HashMap<String, u64>,
    outbox: &'a mut Vec<Message>,
    errors: &'a mut Vec<NodeError>,
    stop: &'a mut Option<StopReason>,
}

impl NodeContext<'_> {
    pub fn now(&self) -> f64 {
        ticks_to_seconds(self.tick)
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Publish on `topic` (before remapping) stamped with the current time.
    pub fn publish(&mut self, topic: &str, payload: Payload) {
        let stamp = self.now();
        self.emit(topic, stamp, payload);
    }

    /// Republish `msg` on `topic`, preserving its original stamp.
    pub fn forward(&mut self, topic: &str, msg: &Message) {
        self.emit(topic, msg.stamp, msg.payload.clone());
    }

    /// Republish a payload under an explicit stamp.
    pub fn publish_stamped(&mut self, topic: &str, stamp: f64, payload: Payload) {
        self.emit(topic, stamp, payload);
    }

    fn emit(&mut self, topic: &str, stamp: f64, payload: Payload) {
        if !self.handle.publications.iter().any(|p| p.topic == topic) {
            self.errors.push(NodeError::fatal(
                codes::SCHEMA,
                format!("{} published undeclared topic {topic}", self.handle.name),
            ));
            return;
        }
        let resolved = self.handle.resolve(topic);
        match self.schemas.get(&resolved) {
            Some(schema) if schema.same_shape(&payload) => {}
            _ => {
                self.errors.push(NodeError::fatal(
                    codes::SCHEMA,
                    format!("{} payload does not match schema of {resolved}", self.handle.name),
                ));
                return;
            }
        }
        let seq = self.seqs.entry(resolved.clone()).or_insert(0);
        let msg = Message {
            topic: resolved,
            stamp,
            seq: *seq,
            publisher: self.index,
            payload,
        };
        *seq += 1;
        self.outbox.push(msg);
    }

    /// Ask the scheduler to end the run after this step.
    pub fn request_stop(&mut self, reason: StopReason) {
        if self.stop.is_none() {
            *self.stop = Some(reason);
        }
    }
}

struct Registered {
    handle: NodeHandle,
    period_ticks: Tick,
    node: Box<dyn Node>,
    seqs: HashMap<String, u64>,
}

/// What the end predicate can observe after each step.
pub struct BusState<'a> {
    pub sim_time: f64,
    pub tick: Tick,
    pub trace: &'a RunTrace,
    pub stop_request: Option<&'a StopReason>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reason: StopReason,
    pub end_time: f64,
    pub wall_time: Duration,
}

/// Single-threaded discrete-event scheduler and pub/sub bus.
pub struct Scheduler {
    clock: SimClock,
    nodes: Vec<Registered>,
    schemas: BTreeMap<String, Payload>,
    subscribers: HashMap<String, Vec<usize>>,
    closed: bool,
    trace: RunTrace,
}

impl Scheduler {
    pub fn new(clock: SimClock) -> Self {
        let mut schemas = BTreeMap::new();
        schemas.insert(ERRORS_TOPIC.to_owned(), error_schema());
        Self {
            clock,
            nodes: Vec::new(),
            schemas,
            subscribers: HashMap::new(),
            closed: false,
            trace: RunTrace::default(),
        }
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn clock_mut(&mut self) -> &mut SimClock {
        &mut self.clock
    }

    /// Register a node; returns its registration index.
    pub fn register(&mut self, node: Box<dyn Node>) -> Result<usize, BusError> {
        if self.closed {
            return Err(BusError::RegistrationClosed(node.name().to_owned()));
        }
        let name = node.name().to_owned();
        if self.nodes.iter().any(|n| n.handle.name == name) {
            return Err(BusError::DuplicateNode(name));
        }
        let period_ticks = period_to_ticks(node.period())?;
        let handle = NodeHandle {
            name,
            period: node.period(),
            subscriptions: node.subscriptions(),
            publications: node.publications(),
            remap_rules: Vec::new(),
        };
        self.nodes.push(Registered {
            handle,
            period_ticks,
            node,
            seqs: HashMap::new(),
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn handles(&self) -> impl Iterator<Item = &NodeHandle> {
        self.nodes.iter().map(|n| &n.handle)
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.handle.name == name)
    }

    /// Add a remap rule to one node. A topic may match at most one rule.
    pub fn remap(&mut self, node: &str, from: &str, to: &str) -> Result<(), BusError> {
        let idx = self
            .node_index(node)
            .ok_or_else(|| BusError::UnknownNode(node.to_owned()))?;
        let rules = &mut self.nodes[idx].handle.remap_rules;
        if rules.iter().any(|r| r.from == from) {
            return Err(BusError::DuplicateRemap {
                node: node.to_owned(),
                topic: from.to_owned(),
            });
        }
        rules.push(RemapRule {
            from: from.to_owned(),
            to: to.to_owned(),
        });
        Ok(())
    }

    /// Redirect every producer (other than `except`) whose resolved
    /// publication is `topic` to `to`. Existing rules targeting `topic` are
    /// rewritten rather than chained.
    pub fn remap_producers(&mut self, topic: &str, to: &str, except: &str) -> Vec<String> {
        let mut touched = Vec::new();
        for reg in &mut self.nodes {
            if reg.handle.name == except {
                continue;
            }
            let declared: Vec<String> = reg.handle.publications.iter().map(|p| p.topic.clone()).collect();
            for t in declared {
                if reg.handle.resolve(&t) != topic {
                    continue;
                }
                if let Some(rule) = reg.handle.remap_rules.iter_mut().find(|r| r.from == t) {
                    rule.to = to.to_owned();
                } else {
                    reg.handle.remap_rules.push(RemapRule {
                        from: t.clone(),
                        to: to.to_owned(),
                    });
                }
                touched.push(reg.handle.name.clone());
            }
        }
        touched
    }

    /// Schema registry of all resolved topics; complete after
    /// [`Scheduler::close`].
    pub fn schemas(&self) -> &BTreeMap<String, Payload> {
        &self.schemas
    }

    /// Schema of a resolved topic, available after [`Scheduler::close`] or
    /// for topics whose producers are already registered.
    pub fn schema(&self, topic: &str) -> Option<Payload> {
        if let Some(s) = self.schemas.get(topic) {
            return Some(s.clone());
        }
        self.nodes.iter().find_map(|n| {
            n.handle
                .publications
                .iter()
                .find(|p| n.handle.resolve(&p.topic) == topic)
                .map(|p| p.schema.clone())
        })
    }

    /// Freeze registration and build the schema registry.
    pub fn close(&mut self) -> Result<(), BusError> {
        if self.closed {
            return Ok(());
        }
        for reg in &self.nodes {
            for p in &reg.handle.publications {
                let resolved = reg.handle.resolve(&p.topic);
                match self.schemas.get(&resolved) {
                    Some(existing) if !existing.same_shape(&p.schema) => {
                        return Err(BusError::SchemaConflict(resolved));
                    }
                    Some(_) => {}
                    None => {
                        self.schemas.insert(resolved, p.schema.clone());
                    }
                }
            }
        }
        self.closed = true;
        Ok(())
    }

    fn subscribers_of(&mut self, topic: &str) -> Vec<usize> {
        if let Some(s) = self.subscribers.get(topic) {
            return s.clone();
        }
        let subs: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| {
                n.handle
                    .subscriptions
                    .iter()
                    .any(|pat| topic_matches(&n.handle.resolve(pat), topic))
            })
            .map(|(i, _)| i)
            .collect();
        self.subscribers.insert(topic.to_owned(), subs.clone());
        subs
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn into_trace(self) -> RunTrace {
        self.trace
    }

    /// Run until a node requests a stop, `end` returns true, or `max_time`
    /// elapses (reported as [`StopReason::Timeout`]).
    pub fn run(
        &mut self,
        max_time: f64,
        mut end: impl FnMut(&BusState<'_>) -> bool,
    ) -> Result<RunOutcome, BusError> {
        self.close()?;
        let wall_start = Instant::now();
        let max_ticks = super::clock::seconds_to_ticks(max_time);
        let mut stop: Option<StopReason> = None;
        let mut outbox: Vec<Message> = Vec::new();
        let mut errors: Vec<(usize, NodeError)> = Vec::new();

        loop {
            let tick = self.clock.tick();
            if tick >= max_ticks {
                stop.get_or_insert(StopReason::Timeout);
                break;
            }

            for i in 0..self.nodes.len() {
                if tick % self.nodes[i].period_ticks != 0 {
                    continue;
                }
                let mut errs = Vec::new();
                let reg = &mut self.nodes[i];
                let mut ctx = NodeContext {
                    index: i,
                    tick,
                    handle: &reg.handle,
                    schemas: &self.schemas,
                    seqs: &mut reg.seqs,
                    outbox: &mut outbox,
                    errors: &mut errs,
                    stop: &mut stop,
                };
                if let Err(e) = reg.node.on_tick(&mut ctx) {
                    errs.push(e);
                }
                errors.extend(errs.into_iter().map(|e| (i, e)));
            }
            self.flush_errors(&mut errors, &mut outbox, tick);
            self.deliver(tick, &mut outbox, &mut stop)?;

            let state = BusState {
                sim_time: self.clock.sim_time(),
                tick,
                trace: &self.trace,
                stop_request: stop.as_ref(),
            };
            if stop.is_none() && end(&state) {
                stop = Some(StopReason::EndPredicate);
            }
            if stop.is_some() {
                break;
            }

            self.clock.advance();
            self.pace(wall_start);
        }

        Ok(RunOutcome {
            reason: stop.unwrap_or(StopReason::EndPredicate),
            end_time: self.clock.sim_time(),
            wall_time: wall_start.elapsed(),
        })
    }

    fn pace(&self, wall_start: Instant) {
        if self.clock.pacing() != PacingMode::WallClockScaled {
            return;
        }
        let target = Duration::from_secs_f64(self.clock.sim_time() / self.clock.speedup_factor());
        let elapsed = wall_start.elapsed();
        if target > elapsed + Duration::from_micros(1500) {
            std::thread::sleep(target - elapsed);
        }
    }

    fn flush_errors(&mut self, errors: &mut Vec<(usize, NodeError)>, outbox: &mut Vec<Message>, tick: Tick) {
        for (i, err) in errors.drain(..) {
            let reg = &mut self.nodes[i];
            let seq = reg.seqs.entry(ERRORS_TOPIC.to_owned()).or_insert(0);
            outbox.push(Message {
                topic: ERRORS_TOPIC.to_owned(),
                stamp: ticks_to_seconds(tick),
                seq: *seq,
                publisher: i,
                payload: error_payload(i, &err),
            });
            *seq += 1;
        }
    }

    /// Synchronous end-of-step delivery. Messages published while handling
    /// deliveries go out in a further wave within the same step.
    fn deliver(&mut self, tick: Tick, outbox: &mut Vec<Message>, stop: &mut Option<StopReason>) -> Result<(), BusError> {
        let mut waves = 0;
        while !outbox.is_empty() {
            waves += 1;
            if waves > MAX_WAVES {
                return Err(BusError::DeliveryLoop(tick));
            }
            let mut wave: Vec<Message> = std::mem::take(outbox);
            wave.sort_by(|a, b| {
                a.stamp
                    .total_cmp(&b.stamp)
                    .then(a.publisher.cmp(&b.publisher))
                    .then(a.seq.cmp(&b.seq))
            });
            let mut errors: Vec<(usize, NodeError)> = Vec::new();
            for msg in wave {
                let msg: SharedMessage = Arc::new(msg);
                self.trace.push(TraceEntry {
                    tick,
                    msg: Arc::clone(&msg),
                });
                if msg.topic == COMMANDS_TOPIC {
                    self.dispatch_command(&msg, &mut errors);
                }
                for i in self.subscribers_of(&msg.topic) {
                    let mut errs = Vec::new();
                    let reg = &mut self.nodes[i];
                    let mut ctx = NodeContext {
                        index: i,
                        tick,
                        handle: &reg.handle,
                        schemas: &self.schemas,
                        seqs: &mut reg.seqs,
                        outbox,
                        errors: &mut errs,
                        stop,
                    };
                    if let Err(e) = reg.node.on_message(&msg, &mut ctx) {
                        errs.push(e);
                    }
                    errors.extend(errs.into_iter().map(|e| (i, e)));
                }
            }
            self.flush_errors(&mut errors, outbox, tick);
        }
        Ok(())
    }

    fn dispatch_command(&mut self, msg: &Message, errors: &mut Vec<(usize, NodeError)>) {
        let (Some(target), Some(param), Some(value)) = (
            msg.payload.text("target"),
            msg.payload.text("param"),
            msg.payload.text("value"),
        ) else {
            return;
        };
        match self.node_index(target) {
            Some(i) => {
                if let Err(e) = self.nodes[i].node.apply_param(param, value) {
                    errors.push((i, e));
                }
            }
            None => errors.push((
                msg.publisher,
                NodeError::warning(codes::PARAM, format!("command for unknown node {target}")),
            )),
        }
    }
}

/// Segment-wise topic match; `*` matches one segment.
pub fn topic_matches(pattern: &str, topic: &str) -> bool {
    if !pattern.contains('*') {
        return pattern == topic;
    }
    let p: Vec<&str> = pattern.split('/').collect();
    let t: Vec<&str> = topic.split('/').collect();
    p.len() == t.len() && p.iter().zip(&t).all(|(a, b)| *a == "*" || a == b)
}

/// Convenience wrapper: register `nodes`, run them with `clock`, and return
/// the ordered trace together with the outcome.
pub fn schedule_run(
    nodes: Vec<Box<dyn Node>>,
    clock: SimClock,
    max_time: f64,
    end: impl FnMut(&BusState<'_>) -> bool,
) -> Result<(RunTrace, RunOutcome), BusError> {
    let mut sched = Scheduler::new(clock);
    for n in nodes {
        sched.register(n)?;
    }
    let outcome = sched.run(max_time, end)?;
    Ok((sched.into_trace(), outcome))
}
