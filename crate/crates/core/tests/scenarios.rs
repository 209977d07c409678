use std::collections::BTreeSet;
use std::sync::Arc;

use netsonify::capture::SyntheticSource;
use netsonify::metrics::{confusion_for, WindowSounds};
use netsonify::rules::Category;
use netsonify::trafficgen::{generate, ScanMode, ScenarioKind, ScenarioSpec};
use netsonify::{
    run_offline, AssetLibrary, Capture, ConfusionCounts, EngineConfig, HomeNetworks, OfflineOptions, Pipeline,
    SoundCatalog,
};

fn sounds_for(spec: &ScenarioSpec) -> (Vec<BTreeSet<(String, Category)>>, ConfusionCounts) {
    let g = generate(spec).unwrap();
    let cfg = EngineConfig {
        window_period_s: spec.window_period_s,
        home_networks: vec!["10.0.0.0/24".into()],
        ..Default::default()
    };
    let v = cfg.validate(&SoundCatalog::stock()).unwrap();
    let home = HomeNetworks::parse(&cfg.home_networks).unwrap();
    let mut cap = Capture::new(Box::new(SyntheticSource::new(g.frames.clone())), home);
    let mut windows = Vec::new();
    let mut heard = WindowSounds::new();
    run_offline(&mut cap, Pipeline::new(Arc::new(v)), Arc::new(AssetLibrary::new()), &OfflineOptions::default(), |w| {
        let set: BTreeSet<_> = w.report.events.iter().map(|e| (e.sound_id.clone(), e.category)).collect();
        heard.insert(w.report.window_index(), set.iter().cloned().collect());
        windows.push(set);
    })
    .unwrap();
    (windows, confusion_for(&g.label, &heard))
}

fn names(set: &BTreeSet<(String, Category)>) -> BTreeSet<&str> {
    set.iter().map(|(s, _)| s.as_str()).collect()
}

#[test]
fn each_scenario_fits_one_window_with_its_signature() {
    let mut all = ConfusionCounts::default();
    for kind in ScenarioKind::ALL {
        let spec = ScenarioSpec::new(kind, 42);
        let (windows, c) = sounds_for(&spec);
        assert_eq!(windows.len(), 1, "{kind}");
        println!("{kind}: {:?}", names(&windows[0]));
        all += c;
    }
    assert_eq!(all, ConfusionCounts::new(7, 1, 0, 0));
}

#[test]
fn normal_traffic_is_birds_only() {
    for seed in 0..20 {
        let (windows, _) = sounds_for(&ScenarioSpec::new(ScenarioKind::Normal, seed));
        assert!(windows[0].iter().all(|(_, c)| *c == Category::NormalBird), "{:?}", windows[0]);
        assert!(!windows[0].is_empty());
    }
}

#[test]
fn scenarios_are_audibly_distinct() {
    let sets: Vec<_> = ScenarioKind::ALL.iter().map(|k| sounds_for(&ScenarioSpec::new(*k, 7)).0.remove(0)).collect();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            assert_ne!(names(&sets[i]), names(&sets[j]), "{} vs {}", ScenarioKind::ALL[i], ScenarioKind::ALL[j]);
        }
    }
}

#[test]
fn connect_scan_still_thunders() {
    let mut spec = ScenarioSpec::new(ScenarioKind::SynScan, 5);
    spec.scan_mode = ScanMode::Connect;
    let (w, c) = sounds_for(&spec);
    assert!(names(&w[0]).contains("thunder"));
    assert_eq!(c, ConfusionCounts::new(1, 0, 0, 0));
}

#[test]
fn multi_window_labels_line_up() {
    let mut spec = ScenarioSpec::new(ScenarioKind::XmasScan, 3);
    spec.windows = 4;
    let (w, c) = sounds_for(&spec);
    assert_eq!(w.len(), 4);
    assert_eq!(c, ConfusionCounts::new(4, 0, 0, 0));
}
