//! Two nodes on the deterministic bus: a 10 Hz counter and a 2 Hz listener
//! that prints what it received. The trace digest is the same on every run.
//!
//! cargo run --example bus_pubsub

use racesim::simbus::{schedule_run, Message, Node, NodeContext, NodeError, Payload, Publication, SimClock};

struct Counter(f64);

impl Node for Counter {
    fn name(&self) -> &str {
        "counter"
    }
    fn period(&self) -> f64 {
        0.1
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new("/count", Payload::new().with("n", 0.0))]
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        self.0 += 1.0;
        ctx.publish("/count", Payload::new().with("n", self.0));
        Ok(())
    }
}

#[derive(Default)]
struct Listener(Vec<f64>);

impl Node for Listener {
    fn name(&self) -> &str {
        "listener"
    }
    fn period(&self) -> f64 {
        0.5
    }
    fn subscriptions(&self) -> Vec<String> {
        vec!["/count".into()]
    }
    fn on_message(&mut self, msg: &Message, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        self.0.extend(msg.payload.scalar("n"));
        Ok(())
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        println!("t={:.1} s  received {:?}", ctx.now(), self.0);
        self.0.clear();
        Ok(())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let nodes: Vec<Box<dyn Node>> = vec![Box::new(Counter(0.0)), Box::new(Listener::default())];
    let (trace, outcome) = schedule_run(nodes, SimClock::default(), 2.0, |_| false)?;
    println!("{:?} at {} s, {} messages, digest {}", outcome.reason, outcome.end_time, trace.len(), trace.digest());
    Ok(())
}
