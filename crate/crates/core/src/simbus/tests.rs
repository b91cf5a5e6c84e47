use std::cell::RefCell;
use std::rc::Rc;

use super::*;

struct Ticker {
    name: String,
    period: f64,
    topic: String,
    count: u64,
}

impl Ticker {
    fn boxed(name: &str, period: f64, topic: &str) -> Box<dyn Node> {
        Box::new(Self {
            name: name.into(),
            period,
            topic: topic.into(),
            count: 0,
        })
    }
}

impl Node for Ticker {
    fn name(&self) -> &str {
        &self.name
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(&self.topic, Payload::new().with("n", 0.0))]
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        self.count += 1;
        ctx.publish(&self.topic, Payload::new().with("n", self.count as f64));
        Ok(())
    }
}

type Seen = Rc<RefCell<Vec<(String, f64, usize, u64)>>>;

struct Sink {
    pattern: String,
    seen: Seen,
}

impl Node for Sink {
    fn name(&self) -> &str {
        "sink"
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn subscriptions(&self) -> Vec<String> {
        vec![self.pattern.clone()]
    }
    fn on_message(&mut self, msg: &Message, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        self.seen
            .borrow_mut()
            .push((msg.topic.clone(), msg.stamp, msg.publisher, msg.seq));
        Ok(())
    }
    fn on_tick(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Ok(())
    }
}

fn run_for(nodes: Vec<Box<dyn Node>>, seconds: f64, clock: SimClock) -> RunTrace {
    let (trace, outcome) = schedule_run(nodes, clock, seconds, |_| false).unwrap();
    assert_eq!(outcome.reason, StopReason::Timeout);
    trace
}

#[test]
fn activation_counts_follow_periods() {
    let trace = run_for(
        vec![Ticker::boxed("fast", 0.01, "/fast"), Ticker::boxed("slow", 0.1, "/slow")],
        1.0,
        SimClock::default(),
    );
    assert_eq!(trace.on_topic("/fast").count(), 100);
    assert_eq!(trace.on_topic("/slow").count(), 10);
    // at t = 0 both fire; the fast node was registered first
    assert_eq!(trace.entries()[0].msg.topic, "/fast");
    assert_eq!(trace.entries()[1].msg.topic, "/slow");
}

#[test]
fn identical_runs_give_identical_traces() {
    let mk = || vec![Ticker::boxed("a", 0.003, "/a"), Ticker::boxed("b", 0.007, "/b")];
    let t1 = run_for(mk(), 2.0, SimClock::default());
    let t2 = run_for(mk(), 2.0, SimClock::default());
    assert_eq!(t1.canonical_bytes(), t2.canonical_bytes());
}

#[test]
fn speedup_does_not_change_the_trace() {
    let mk = || vec![Ticker::boxed("a", 0.003, "/a"), Ticker::boxed("b", 0.007, "/b")];
    let base = run_for(mk(), 2.0, SimClock::default()).digest();
    for factor in [2.0, 3.0] {
        let clock = SimClock::new(PacingMode::AsFastAsPossible, factor).unwrap();
        assert_eq!(run_for(mk(), 2.0, clock).digest(), base);
    }
}

#[test]
fn remapped_publication_lands_on_new_topic() {
    let seen: Seen = Rc::default();
    let mut sched = Scheduler::new(SimClock::default());
    sched.register(Ticker::boxed("loc", 0.01, "/loc/odom")).unwrap();
    sched
        .register(Box::new(Sink {
            pattern: "/loc/odom_raw".into(),
            seen: seen.clone(),
        }))
        .unwrap();
    sched.remap("loc", "/loc/odom", "/loc/odom_raw").unwrap();
    assert!(sched.remap("loc", "/loc/odom", "/x").is_err());
    sched.run(0.05, |_| false).unwrap();
    assert_eq!(seen.borrow().len(), 5);
    assert_eq!(sched.trace().on_topic("/loc/odom").count(), 0);
}

#[test]
fn unsubscribed_messages_are_still_traced() {
    let trace = run_for(vec![Ticker::boxed("lonely", 0.01, "/nobody")], 0.1, SimClock::default());
    assert_eq!(trace.on_topic("/nobody").count(), 10);
}

#[test]
fn two_publishers_delivered_in_stamp_then_registration_order() {
    let seen: Seen = Rc::default();
    let nodes: Vec<Box<dyn Node>> = vec![
        Ticker::boxed("p0", 0.002, "/shared"),
        Ticker::boxed("p1", 0.001, "/shared"),
        Box::new(Sink {
            pattern: "/shared".into(),
            seen: seen.clone(),
        }),
    ];
    run_for(nodes, 0.004, SimClock::default());
    let got: Vec<(f64, usize, u64)> = seen.borrow().iter().map(|s| (s.1, s.2, s.3)).collect();
    // Enumerated by hand: p1 fires every tick, p0 every other tick; on
    // shared ticks p0 (index 0) precedes p1 (index 1).
    let expected = vec![
        (0.0, 0, 0),
        (0.0, 1, 0),
        (0.001, 1, 1),
        (0.002, 0, 1),
        (0.002, 1, 2),
        (0.003, 1, 3),
    ];
    assert_eq!(got, expected);
}

struct Faulty;

impl Node for Faulty {
    fn name(&self) -> &str {
        "faulty"
    }
    fn period(&self) -> f64 {
        0.5
    }
    fn on_tick(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Err(NodeError::fatal(codes::CALLBACK, "boom"))
    }
}

#[test]
fn callback_errors_become_error_messages() {
    let trace = run_for(vec![Box::new(Faulty)], 1.0, SimClock::default());
    let errs: Vec<_> = trace.on_topic(ERRORS_TOPIC).collect();
    assert_eq!(errs.len(), 2);
    assert_eq!(errs[0].msg.payload.scalar("severity"), Some(1.0));
    assert_eq!(errs[0].msg.payload.text("description"), Some("boom"));
}

struct Echo;

impl Node for Echo {
    fn name(&self) -> &str {
        "echo"
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn subscriptions(&self) -> Vec<String> {
        vec!["/in/*".into()]
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new("/out", Payload::new().with("n", 0.0))]
    }
    fn on_message(&mut self, msg: &Message, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        ctx.forward("/out", msg);
        Ok(())
    }
    fn on_tick(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Ok(())
    }
}

#[test]
fn forwarded_messages_arrive_in_the_same_step_with_original_stamp() {
    let trace = run_for(
        vec![Ticker::boxed("src", 0.01, "/in/a"), Box::new(Echo)],
        0.03,
        SimClock::default(),
    );
    let ins: Vec<_> = trace.on_topic("/in/a").collect();
    let outs: Vec<_> = trace.on_topic("/out").collect();
    assert_eq!(ins.len(), outs.len());
    for (i, o) in ins.iter().zip(&outs) {
        assert_eq!(i.tick, o.tick);
        assert_eq!(i.msg.stamp, o.msg.stamp);
        assert_eq!(i.msg.payload, o.msg.payload);
    }
}

struct BadShape;

impl Node for BadShape {
    fn name(&self) -> &str {
        "bad"
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new("/t", Payload::new().with("n", 0.0))]
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        ctx.publish("/t", Payload::new().with("m", 0.0));
        Ok(())
    }
}

#[test]
fn schema_violations_are_reported_not_delivered() {
    let trace = run_for(vec![Box::new(BadShape)], 0.5, SimClock::default());
    assert_eq!(trace.on_topic("/t").count(), 0);
    assert_eq!(trace.on_topic(ERRORS_TOPIC).count(), 1);
}

struct OtherShape;

impl Node for OtherShape {
    fn name(&self) -> &str {
        "other"
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new("/u", Payload::new().with("m", 0.0))]
    }
    fn on_tick(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Ok(())
    }
}

#[test]
fn conflicting_schemas_rejected_at_startup() {
    let mut sched = Scheduler::new(SimClock::default());
    sched.register(Ticker::boxed("a", 0.01, "/t")).unwrap();
    sched.register(Box::new(OtherShape)).unwrap();
    sched.remap("other", "/u", "/t").unwrap();
    assert_eq!(sched.close(), Err(BusError::SchemaConflict("/t".into())));
}

struct Tunable {
    gain: f64,
    log: Rc<RefCell<Vec<f64>>>,
}

impl Node for Tunable {
    fn name(&self) -> &str {
        "tunable"
    }
    fn period(&self) -> f64 {
        0.1
    }
    fn on_tick(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        self.log.borrow_mut().push(self.gain);
        Ok(())
    }
    fn apply_param(&mut self, param: &str, value: &str) -> Result<(), NodeError> {
        assert_eq!(param, "gain");
        self.gain = value.parse().unwrap();
        Ok(())
    }
}

struct Commander;

impl Node for Commander {
    fn name(&self) -> &str {
        "commander"
    }
    fn period(&self) -> f64 {
        0.25
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(
            COMMANDS_TOPIC,
            Payload::new().with("target", "").with("param", "").with("value", ""),
        )]
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        if ctx.tick() == 250 {
            ctx.publish(
                COMMANDS_TOPIC,
                Payload::new().with("target", "tunable").with("param", "gain").with("value", "2.5"),
            );
        }
        Ok(())
    }
}

#[test]
fn commands_are_applied_at_step_boundary() {
    let log = Rc::new(RefCell::new(Vec::new()));
    run_for(
        vec![
            Box::new(Tunable {
                gain: 1.0,
                log: log.clone(),
            }),
            Box::new(Commander),
        ],
        0.5,
        SimClock::default(),
    );
    assert_eq!(*log.borrow(), vec![1.0, 1.0, 1.0, 2.5, 2.5]);
}

#[test]
fn wall_clock_pacing_tracks_factor() {
    let clock = SimClock::new(PacingMode::WallClockScaled, 4.0).unwrap();
    let (_, outcome) = schedule_run(vec![Ticker::boxed("a", 0.01, "/a")], clock, 0.4, |_| false).unwrap();
    let wall = outcome.wall_time.as_secs_f64();
    assert!((0.09..0.2).contains(&wall), "wall {wall}");
}

#[test]
fn topic_patterns() {
    assert!(topic_matches("/imu/*/data", "/imu/0/data"));
    assert!(!topic_matches("/imu/*/data", "/imu/0/raw"));
    assert!(!topic_matches("/imu/*", "/imu/0/data"));
    assert!(topic_matches("/gps/fix", "/gps/fix"));
}

#[test]
fn random_streams_are_named_and_reproducible() {
    use rand::Rng;
    let a: f64 = stream_rng(7, "gps").random();
    let b: f64 = stream_rng(7, "gps").random();
    let c: f64 = stream_rng(7, "imu0").random();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
