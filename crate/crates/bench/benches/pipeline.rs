use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use netsonify::capture::{decode_ethernet, Decoded, RawFrame, SyntheticSource};
use netsonify::flowtable::WindowState;
use netsonify::soundscape::{Mixer, BLOCK_FRAMES};
use netsonify::trafficgen::{generate, ScenarioKind, ScenarioSpec};
use netsonify::{AssetLibrary, Capture, EngineConfig, HomeNetworks, Pipeline, RuleSet, SoundCatalog};

fn flood_frames() -> Vec<RawFrame> {
    let mut spec = ScenarioSpec::new(ScenarioKind::SynFlood, 1);
    spec.flood_packets = 20_000;
    generate(&spec).expect("valid spec").frames
}

fn home() -> HomeNetworks {
    HomeNetworks::parse(&["10.0.0.0/24"]).unwrap()
}

fn decode(c: &mut Criterion) {
    let frames = flood_frames();
    let home = home();
    let mut g = c.benchmark_group("decode");
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("syn_flood", |b| {
        b.iter(|| {
            for f in &frames {
                black_box(decode_ethernet(&f.data, f.timestamp_us, &home));
            }
        })
    });
    g.finish();
}

fn aggregate_and_evaluate(c: &mut Criterion) {
    let home = home();
    let packets: Vec<_> = flood_frames()
        .iter()
        .filter_map(|f| match decode_ethernet(&f.data, f.timestamp_us, &home) {
            Decoded::Packet(p) => Some(p),
            _ => None,
        })
        .collect();
    let rules = RuleSet::defaults();
    let mut g = c.benchmark_group("window");
    g.throughput(Throughput::Elements(packets.len() as u64));
    g.bench_function("record", |b| {
        b.iter(|| {
            let mut w = WindowState::new(0, 1.0, 0);
            for p in &packets {
                w.record(p);
            }
            black_box(w.snapshot())
        })
    });
    let mut w = WindowState::new(0, 1.0, 0);
    for p in &packets {
        w.record(p);
    }
    let snapshot = w.snapshot();
    g.bench_function("evaluate", |b| b.iter(|| black_box(rules.evaluate_window(&snapshot))));
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let frames = flood_frames();
    let cfg = EngineConfig { home_networks: vec!["10.0.0.0/24".into()], ..Default::default() };
    let validated = Arc::new(cfg.validate(&SoundCatalog::stock()).unwrap());
    let mut g = c.benchmark_group("pipeline");
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("capture_to_plan", |b| {
        b.iter_batched(
            || frames.clone(),
            |frames| {
                let mut capture = Capture::new(Box::new(SyntheticSource::new(frames)), home());
                let mut pipeline = Pipeline::new(validated.clone());
                let mut out = Vec::new();
                while let Some(ev) = capture.next_event().unwrap() {
                    pipeline.push(ev, &mut out);
                }
                pipeline.finish(&mut out);
                black_box(out)
            },
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn mixer(c: &mut Criterion) {
    let lib = AssetLibrary::placeholder();
    let ids: Vec<String> = lib.ids().map(str::to_owned).collect();
    let mut g = c.benchmark_group("mixer");
    g.throughput(Throughput::Elements(BLOCK_FRAMES as u64));
    g.bench_function("block_24_voices", |b| {
        let mut m = Mixer::new();
        let mut out = vec![0.0f32; BLOCK_FRAMES * 2];
        b.iter(|| {
            if m.active_voices() < 24 {
                for id in &ids {
                    m.start(lib.get(id).unwrap(), 0.5, 0);
                }
            }
            m.render(&mut out);
            black_box(&out);
        })
    });
    g.finish();
}

criterion_group!(benches, decode, aggregate_and_evaluate, end_to_end, mixer);
criterion_main!(benches);
