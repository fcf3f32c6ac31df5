//! Turns stopping schedules with simultaneous stops into one-at-a-time
//! schedules that only delay stops.

use multistop::oracle::{serialize_stops, StopSchedule};
use multistop::Result;

fn main() -> Result<()> {
    for (tau, p) in [(vec![0, 0], 2), (vec![1, 1, 1], 2), (vec![2, 0, 2, 3], 4)] {
        let s = StopSchedule::new(tau, p)?;
        let out = serialize_stops(&s);
        println!("{:?} -> {:?} (serialized: {})", s.tau, out.tau, out.is_serialized());
    }
    let total = StopSchedule::enumerate(3, 3).filter(|s| s.is_serialized()).count();
    println!("{total} of 64 schedules in {{0..3}}^3 are already serialized");
    Ok(())
}
