//! The bare event queue: schedule, cancel, and run to a time limit.
//!
//!     cargo run --example event_queue

use ultrashare::{EventQueue, RngStreams, SimTime};

#[derive(Debug)]
enum Tick {
    Ping(u32),
    Timeout,
}

fn main() {
    let mut q = EventQueue::new();
    let mut rng = RngStreams::new(42);
    rng.register(0);
    q.schedule(SimTime::from_us(1), Tick::Ping(0)).unwrap();
    let timeout = q.schedule(SimTime::from_us(6), Tick::Timeout).unwrap();
    let end = q
        .run_until(SimTime::from_us(10), |q, ev| {
            println!(
                "{:>6} seq {:>2}  {:?}",
                ev.time.to_string(),
                ev.seq,
                ev.payload
            );
            if let Tick::Ping(n) = ev.payload {
                if n < 4 {
                    let gap = 200 + rng.next_u64(0)? % 800;
                    q.schedule_in(gap, Tick::Ping(n + 1))?;
                } else {
                    q.cancel(timeout);
                    println!("       cancelled the timeout");
                }
            }
            Ok(())
        })
        .unwrap();
    println!("clock stops at {end}");
}
