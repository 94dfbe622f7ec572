//! Print one simulated trajectory as CSV under a piecewise transmission schedule.
//!
//! cargo run --release -p epical --example simulate -- [seed] [population]

use epical::sim::{init_state, save_checkpoint, ParamOverrides, SimParams};

fn main() -> epical::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let population: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let schedule = [(33, 0.3), (47, 0.27), (61, 0.25), (75, 0.4)];

    let params = SimParams {
        transmission_rate: schedule[0].1,
        ..SimParams::default()
    };
    let mut state = init_state(population, 10, params, seed)?;
    println!("day,exposures,cases,deaths,S,R,D");
    for (i, &(until, _)) in schedule.iter().enumerate() {
        if i > 0 {
            let ckpt = save_checkpoint(&state)?;
            let o = ParamOverrides {
                transmission_rate: Some(schedule[i].1),
                ..ParamOverrides::none()
            };
            state = ckpt.restore(&o)?;
        }
        let t = state.advance(until)?;
        for k in 0..t.len() {
            let c = &t.census[k];
            println!(
                "{},{},{},{},{},{},{}",
                t.start_day as usize + k,
                t.exposures[k],
                t.cases[k],
                t.deaths[k],
                c[0],
                c[14],
                c[13]
            );
        }
    }
    Ok(())
}
