//! Applies a fault file to a scripted odometry stream and prints the first
//! messages before and after the proxy.
//!
//! cargo run --example fault_file

use racesim::faultinject::{install_proxy, FaultSpec};
use racesim::simbus::{Node, NodeContext, NodeError, Publication, Scheduler, SimClock};
use racesim::stack::{Odometry, LOC_ODOM};

const FAULTS: &str = r#"
localization:
  - name: /loc/odom
    delay: 20
    field_faults:
      pose:
        position: {fault_mult: 100}
        covariance: {fault_mult: 2, fault_repeat: {count: 3, value: 1000}}
      twist:
        covariance: {fault_mult: 0}
"#;

struct Source(u64);

fn odom(k: u64) -> Odometry {
    Odometry {
        x: k as f64,
        y: 0.5 * k as f64,
        pos_cov: [0.01, 0.01],
        vx: 20.0,
        vel_cov: [0.1, 0.1],
        ..Default::default()
    }
}

impl Node for Source {
    fn name(&self) -> &str {
        "source"
    }
    fn period(&self) -> f64 {
        0.01
    }
    fn publications(&self) -> Vec<Publication> {
        vec![Publication::new(LOC_ODOM, odom(0).to_payload())]
    }
    fn on_tick(&mut self, ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        ctx.publish(LOC_ODOM, odom(self.0).to_payload());
        self.0 += 1;
        Ok(())
    }
}

struct Sink;

impl Node for Sink {
    fn name(&self) -> &str {
        "sink"
    }
    fn period(&self) -> f64 {
        1.0
    }
    fn subscriptions(&self) -> Vec<String> {
        vec![LOC_ODOM.into()]
    }
    fn on_tick(&mut self, _ctx: &mut NodeContext<'_>) -> Result<(), NodeError> {
        Ok(())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = FaultSpec::from_yaml(FAULTS)?;
    let mut sched = Scheduler::new(SimClock::default());
    sched.register(Box::new(Source(0)))?;
    sched.register(Box::new(Sink))?;
    let topics = install_proxy(&mut sched, &spec, &[], 1)?;
    println!("intercepted {topics:?}");
    sched.run(0.1, |_| false)?;
    let trace = sched.into_trace();
    let raw_topic = format!("{LOC_ODOM}/_raw");
    let raw = trace.on_topic(&raw_topic);
    let out = trace.on_topic(LOC_ODOM);
    for (i, o) in raw.zip(out).take(5) {
        let (a, b) = (
            Odometry::from_payload(&i.msg.payload).unwrap_or_default(),
            Odometry::from_payload(&o.msg.payload).unwrap_or_default(),
        );
        println!(
            "stamp {:.2}: sent at {:.3} s pos ({}, {}) cov {:?} | delivered at {:.3} s pos ({}, {}) cov {:?} twist cov {:?}",
            i.msg.stamp,
            i.delivered_at(),
            a.x,
            a.y,
            a.pos_cov,
            o.delivered_at(),
            b.x,
            b.y,
            b.pos_cov,
            b.vel_cov
        );
    }
    Ok(())
}
