use std::fs;
use std::io;
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioKind;

/// Ground truth for one window of a generated capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLabel {
    pub window: u64,
    pub attack: bool,
    /// Groups of sound ids; each group needs at least one member present.
    #[serde(default)]
    pub signature: Vec<Vec<String>>,
}

impl WindowLabel {
    pub fn satisfied_by<'a, I: IntoIterator<Item = &'a str> + Clone>(&self, sounds: I) -> bool {
        self.signature.iter().all(|group| sounds.clone().into_iter().any(|s| group.iter().any(|g| g == s)))
    }
}

/// Sidecar written next to a generated PCAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub window_period_s: f64,
    pub victim: IpAddr,
    pub windows: Vec<WindowLabel>,
}

impl LabelFile {
    pub fn read(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(path, text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signature_groups() {
        let l = WindowLabel {
            window: 0,
            attack: true,
            signature: vec![vec!["thunder".into()], vec!["wind".into(), "wind_on_grass".into()]],
        };
        assert!(l.satisfied_by(["thunder", "wind_on_grass", "rain"]));
        assert!(!l.satisfied_by(["thunder"]));
        assert!(!l.satisfied_by(["wind"]));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.labels.json");
        let l = LabelFile {
            scenario: ScenarioKind::SynFlood,
            seed: 4,
            window_period_s: 1.0,
            victim: "10.0.0.7".parse().unwrap(),
            windows: vec![WindowLabel { window: 0, attack: true, signature: vec![vec!["creek".into()]] }],
        };
        l.write(&p).unwrap();
        assert_eq!(LabelFile::read(&p).unwrap(), l);
        assert!(std::fs::read_to_string(&p).unwrap().contains("\"SYN_FLOOD\""));
    }
}
