//! Chord DHT of 128 members on a 4x8 grid. First a probe client writes and
//! reads back every key while objects migrate, then producers and consumers
//! run for a while.

use absnet::cli::{prepare, RunConfig, ScenarioSpec};
use absnet::scenarios::{Behavior, Scenario};
use absnet::{ProcedureKind, World};

fn clients(w: &World) -> Vec<absnet::scenarios::ChordClient> {
    w.objects()
        .filter_map(|o| match &o.behavior {
            Behavior::Client(c) => Some(c.clone()),
            _ => None,
        })
        .collect()
}

fn main() {
    let probe = RunConfig {
        scenario: ScenarioSpec::Full(Scenario::ChordProbe { objects: 128, bits: 7 }),
        procedure: ProcedureKind::BerenbrinkComm,
        ..RunConfig::default()
    };
    let mut w = prepare(&probe).unwrap();
    while !clients(&w)[0].probe_done() {
        w.round().unwrap();
    }
    let c = &clients(&w)[0];
    println!(
        "probe: {} gets hit, {} missed, {} wrong, at most {} forwards, {} migrations",
        c.hits,
        c.misses,
        c.mismatches,
        c.max_forwards,
        w.counters().migrations
    );

    let dht = RunConfig {
        scenario: ScenarioSpec::Name("chord_dht".into()),
        procedure: ProcedureKind::BerenbrinkComm,
        samples: 300,
        ..RunConfig::default()
    };
    let mut w = prepare(&dht).unwrap();
    w.run_samples(dht.samples).unwrap();
    let cs = clients(&w);
    let sum = |f: fn(&absnet::scenarios::ChordClient) -> u64| cs.iter().map(f).sum::<u64>();
    println!(
        "traffic: {} requests, {} hits, {} misses, {} wrong",
        sum(|c| c.completed),
        sum(|c| c.hits),
        sum(|c| c.misses),
        sum(|c| c.mismatches)
    );
}
