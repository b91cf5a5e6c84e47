//! Transparent fault-injection proxy.
//!
//! Producers of every intercepted topic `T` are remapped to `T/_raw`. The
//! proxy subscribes there and republishes on `T`, applying the configured
//! perturbations field by field. Per field the order is fixed: repetition
//! override, multiplier, offset, then Gaussian noise. A delay shifts the
//! delivery time but never the stamp; a delay of -1 drops the message.

mod spec;

use std::collections::{BTreeMap, VecDeque};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use spec::{FaultSpec, FieldFault, Gauss, Repeat, TopicFault};

use crate::simbus::{
    codes, seconds_to_ticks, stream_rng, topic_matches, BusError, Field, Message, Node, NodeContext, NodeError,
    Payload, Publication, Scheduler, Tick, BASE_STEP,
};

/// Registered name of the proxy node; runtime patches target it.
pub const PROXY_NAME: &str = "faults";
/// Suffix appended to intercepted topics.
pub const RAW_SUFFIX: &str = "/_raw";

#[derive(Debug, Error, PartialEq)]
pub enum FaultError {
    #[error("invalid fault configuration: {0}")]
    Invalid(String),
    #[error("fault topic {0} matches no published topic")]
    UnknownTopic(String),
    #[error("fault field {path} not present in schema of {topic}")]
    UnknownField { topic: String, path: String },
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone)]
struct ActiveField {
    path: String,
    fault: FieldFault,
    repeat_left: u64,
    held: Option<Field>,
}

impl ActiveField {
    fn new(path: String, fault: FieldFault) -> Self {
        let repeat_left = fault.fault_repeat.as_ref().map_or(0, |r| r.count);
        Self {
            path,
            fault,
            repeat_left,
            held: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct TopicState {
    schema: Payload,
    delay_ms: f64,
    fields: Vec<ActiveField>,
    /// Due tick, original stamp, perturbed payload. FIFO.
    queue: VecDeque<(Tick, f64, Payload)>,
}

impl TopicState {
    fn patch(&mut self, topic: &str, entry: &TopicFault) -> Result<(), FaultError> {
        for (path, _) in &entry.fields {
            check_path(&self.schema, topic, path)?;
        }
        if let Some(d) = entry.delay {
            self.delay_ms = d;
        }
        for (path, fault) in &entry.fields {
            let fresh = ActiveField::new(path.clone(), fault.clone());
            match self.fields.iter_mut().find(|f| &f.path == path) {
                Some(slot) => *slot = fresh,
                None => self.fields.push(fresh),
            }
        }
        Ok(())
    }
}

fn check_path(schema: &Payload, topic: &str, path: &str) -> Result<(), FaultError> {
    let numeric = match schema.get(path) {
        Some(Field::Scalar(_) | Field::Vector(_)) => true,
        Some(Field::Tree(t)) => !t.numeric_leaves().is_empty(),
        _ => false,
    };
    if numeric {
        Ok(())
    } else {
        Err(FaultError::UnknownField {
            topic: topic.to_owned(),
            path: path.to_owned(),
        })
    }
}

/// Apply one field's faults to `payload` in place.
fn perturb(payload: &mut Payload, f: &mut ActiveField, rng: &mut ChaCha8Rng) {
    if f.repeat_left > 0 {
        f.repeat_left -= 1;
        match f.fault.fault_repeat.as_ref().and_then(|r| r.value) {
            Some(v) => {
                payload.for_each_leaf_mut(&f.path, &mut |leaf| map_leaf(leaf, |_| v));
            }
            None => {
                if let Some(cur) = payload.get_mut(&f.path) {
                    let held = f.held.get_or_insert_with(|| cur.clone());
                    *cur = held.clone();
                }
            }
        }
    }
    if let Some(m) = f.fault.fault_mult {
        payload.for_each_leaf_mut(&f.path, &mut |leaf| map_leaf(leaf, |x| x * m));
    }
    if let Some(b) = f.fault.fault_offset {
        payload.for_each_leaf_mut(&f.path, &mut |leaf| map_leaf(leaf, |x| x + b));
    }
    if let Some(g) = f.fault.fault_gauss {
        if let Ok(dist) = Normal::new(g.mean, g.variance.sqrt()) {
            payload.for_each_leaf_mut(&f.path, &mut |leaf| map_leaf(leaf, |x| x + dist.sample(rng)));
        }
    }
}

fn map_leaf(leaf: &mut Field, mut op: impl FnMut(f64) -> f64) {
    match leaf {
        Field::Scalar(x) => *x = op(*x),
        Field::Vector(xs) => xs.iter_mut().for_each(|x| *x = op(*x)),
        _ => {}
    }
}

/// The proxy node. Build it with [`install_proxy`].
pub struct FaultProxy {
    topics: BTreeMap<String, TopicState>,
    rng: ChaCha8Rng,
}

impl FaultProxy {
    /// Merge a runtime patch into the active configuration. Either every
    /// entry applies or none does.
    pub fn reconfigure(&mut self, patch: &FaultSpec) -> Result<(), FaultError> {
        let mut next = self.topics.clone();
        for entry in patch.topics() {
            let mut hit = false;
            for (topic, state) in next.iter_mut().filter(|(t, _)| topic_matches(&entry.name, t)) {
                state.patch(topic, entry)?;
                hit = true;
            }
            if !hit {
                return Err(FaultError::UnknownTopic(entry.name.clone()));
            }
        }
        for (topic, state) in next.iter_mut() {
            let old = &self.topics[topic];
            state.queue = old.queue.clone();
        }
        self.topics = next;
        Ok(())
    }

    /// Remove all faults from topics matching `pattern` (`*` for all).
    fn clear(&mut self, pattern: &str) {
        for (topic, state) in self.topics.iter_mut() {
            if pattern == "*" || topic_matches(pattern, topic) {
                state.delay_ms = 0.0;
                state.fields.clear();
            }
        }
    }

    pub fn intercepted(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }
}

impl Node for FaultProxy {
    fn name(&self) -> &str {
        PROXY_NAME
    }

    fn period(&self) -> f64 {
        BASE_STEP
    }

    fn subscriptions(&self) -> Vec<String> {
        self.topics.keys().map(|t| format!("{t}{RAW_SUFFIX}")).collect()
    }

    fn publications(&self) -> Vec<Publication> {
        self.topics
            .iter()
            .map(|(t, s)| Publication::new(t.clone(), s.schema.clone()))
            .collect()
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let Some(topic) = msg.topic.strip_suffix(RAW_SUFFIX) else {
            return Ok(());
        };
        let Some(state) = self.topics.get_mut(topic) else {
            return Ok(());
        };
        if state.delay_ms == -1.0 {
            return Ok(());
        }
        let mut payload = msg.payload.clone();
        for f in &mut state.fields {
            perturb(&mut payload, f, &mut self.rng);
        }
        let due = ctx.tick() + seconds_to_ticks(state.delay_ms / 1000.0);
        match state.queue.back() {
            None if due == ctx.tick() => ctx.publish_stamped(topic, msg.stamp, payload),
            back => {
                let due = back.map_or(due, |b| due.max(b.0));
                state.queue.push_back((due, msg.stamp, payload));
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        let now = ctx.tick();
        for (topic, state) in self.topics.iter_mut() {
            while state.queue.front().is_some_and(|m| m.0 <= now) {
                let (_, stamp, payload) = state.queue.pop_front().unwrap_or_default();
                ctx.publish_stamped(topic, stamp, payload);
            }
        }
        Ok(())
    }

    /// `patch` takes a fault file fragment as YAML; `clear` takes a topic
    /// pattern or `*`.
    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        let fail = |e: FaultError| NodeError::warning(codes::FAULT_CONFIG, e.to_string());
        match param {
            "patch" => {
                let spec = FaultSpec::from_yaml(value).map_err(fail)?;
                self.reconfigure(&spec).map_err(fail)
            }
            "clear" => {
                self.clear(value.trim());
                Ok(())
            }
            _ => Err(NodeError::warning(
                codes::PARAM,
                format!("fault proxy has no parameter {param}"),
            )),
        }
    }
}

/// Intercept every topic named in `spec` or matched by a pattern in
/// `also_intercept` (topics that only receive faults later through runtime
/// patches), then register the proxy. Does nothing if there is nothing to
/// intercept. Returns the concrete intercepted topics.
pub fn install_proxy(
    sched: &mut Scheduler,
    spec: &FaultSpec,
    also_intercept: &[String],
    seed: u64,
) -> Result<Vec<String>, FaultError> {
    let patterns: Vec<&str> = spec
        .topics()
        .map(|t| t.name.as_str())
        .chain(also_intercept.iter().map(String::as_str))
        .collect();
    if patterns.is_empty() {
        return Ok(Vec::new());
    }
    let published: Vec<String> = sched
        .handles()
        .flat_map(|h| h.publications.iter().map(|p| h.resolve(&p.topic)).collect::<Vec<_>>())
        .collect();
    let mut topics: BTreeMap<String, TopicState> = BTreeMap::new();
    for pat in &patterns {
        let matched: Vec<&String> = published.iter().filter(|t| topic_matches(pat, t)).collect();
        if matched.is_empty() {
            return Err(FaultError::UnknownTopic((*pat).to_owned()));
        }
        for t in matched {
            let schema = sched.schema(t).ok_or_else(|| FaultError::UnknownTopic(t.clone()))?;
            topics.entry(t.clone()).or_insert_with(|| TopicState {
                schema,
                ..Default::default()
            });
        }
    }
    let mut proxy = FaultProxy {
        topics,
        rng: stream_rng(seed, "faults"),
    };
    proxy.reconfigure(spec)?;
    let names: Vec<String> = proxy.intercepted().map(str::to_owned).collect();
    for t in &names {
        sched.remap_producers(t, &format!("{t}{RAW_SUFFIX}"), PROXY_NAME);
    }
    sched.register(Box::new(proxy))?;
    Ok(names)
}
