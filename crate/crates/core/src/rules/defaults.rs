//! The stock rule table and its sound categories.

use super::Category;

/// Default event conditions. Rule 11's "or" is written as two alternative
/// lines; rules 8 and 9 spell out "every other raw feature is zero".
pub const DEFAULT_RULES: &str = r#"# Stock event-to-sound mappings.
rule1: SYN-in-IP < 30 and SYN-ACK-out-IP > 0 and ACK-in-IP > 0 and RST-out-IP < 10 -> sound "forest_bird"
rule2: SYN-in-IP > 10 and SYN-in-IP < 30 and PSH-ACK-out-IP < 6 -> sound "rain_on_roof"
rule3: SYN-in-IP > 20 and SYN-ACK-out-IP < 10 -> sound "rain_on_roof"
rule4: SYN-in-IP > 300 and SYN-ACK-out-IP < 50 and SYN-in-IP < 1000 -> sound "thunder"
rule5: SYN-in-IP > 1000 -> sound "creek"
rule6: SYN-out-IP < 10 and SYN-ACK-in-IP < 2 and ACK-out-IP < 3 -> sound "rain"
rule7: SYN-out-IP < 30 and SYN-ACK-in-IP > 0 and ACK-out-IP > 0 and RST-in-IP < 10 -> sound "forest_bird"
rule8: ACK-in-IP > 1 and SYN-in-IP == 0 and SYN-out-IP == 0 and SYN-ACK-in-IP == 0 and SYN-ACK-out-IP == 0 and ACK-out-IP == 0 and FIN-in-IP == 0 and FIN-out-IP == 0 and RST-in-IP == 0 and RST-out-IP == 0 and PSH-ACK-in-IP == 0 and PSH-ACK-out-IP == 0 and NULL-in-IP == 0 and NULL-out-IP == 0 and URG-PSH-FIN-in-IP == 0 and URG-PSH-FIN-out-IP == 0 and LAND-in-IP == 0 and LAND-out-IP == 0 and ICMP-in == 0 and ICMP-out == 0 -> sound "seagulls"
rule9: ACK-out-IP > 1 and SYN-in-IP == 0 and SYN-out-IP == 0 and SYN-ACK-in-IP == 0 and SYN-ACK-out-IP == 0 and ACK-in-IP == 0 and FIN-in-IP == 0 and FIN-out-IP == 0 and RST-in-IP == 0 and RST-out-IP == 0 and PSH-ACK-in-IP == 0 and PSH-ACK-out-IP == 0 and NULL-in-IP == 0 and NULL-out-IP == 0 and URG-PSH-FIN-in-IP == 0 and URG-PSH-FIN-out-IP == 0 and LAND-in-IP == 0 and LAND-out-IP == 0 and ICMP-in == 0 and ICMP-out == 0 -> sound "loon"
rule10: FIN-in-IP > 9 and FIN-in-IP > SYN-out-IP and FIN-in-IP > SYN-in-IP and FC-4 > 10 -> sound "cricket"
rule11: FIN-in-IP < 50 and FIN-in-IP <= SYN-out-IP -> sound "forest_bird"
rule11: FIN-in-IP < 50 and FIN-in-IP <= SYN-in-IP -> sound "forest_bird"
rule12: FIN-out-IP > 9 and FIN-out-IP > SYN-out-IP and FIN-out-IP > SYN-in-IP and FC-3 > 10 -> sound "sheep"
rule13: FC-7 > 9 -> sound "owl"
rule14: FC-7 < 10 -> sound "forest_bird"
rule15: FC-8 > 9 -> sound "horse_snort"
rule16: FC-8 < 10 -> sound "forest_bird"
rule17: NULL-in-IP > 0 -> sound "frog"
rule18: NULL-out-IP > 0 -> sound "frog"
rule19: URG-PSH-FIN-in-IP > 0 -> sound "wolf"
rule20: URG-PSH-FIN-out-IP > 0 -> sound "wolf"
rule21: LAND-in-IP > 0 -> sound "beach"
rule22: LAND-out-IP > 0 -> sound "beach"
rule23: RST-in-IP > 25 and ACK-in-IP < 250 -> sound "wind_on_grass"
rule24: RST-out-IP > 25 and ACK-out-IP < 250 -> sound "wind_on_grass"
rule25: FC-1 > 4 -> sound "fountain"
rule26: FC-1 < 5 -> sound "forest_bird"
rule27: FC-2 > 4 -> sound "heavy_rain"
rule28: FC-2 < 5 -> sound "forest_bird"
rule29: RST-out-IP > 5 and FC-5 < RST-out-IP and ACK-out-IP < 7 -> sound "wind"
rule30: RST-in-IP > 5 and FC-6 < RST-in-IP and ACK-in-IP < 7 -> sound "wind"
rule31: SYN-ACK-out-IP > 20 -> sound "snow_storm"
rule32: SYN-ACK-in-IP > 20 -> sound "walk_in_snow"
rule33: TrafficFlowCounter > 1000 -> sound "fire"
rule34: IPFlowCounter > 600 -> sound "fire"
rule35: ICMP-in > 0 -> sound "woodpecker"
"#;

/// Number of rules (not lines) in [`DEFAULT_RULES`].
pub const DEFAULT_RULE_COUNT: usize = 35;

/// Category of each stock rule, by the flag family that drives it.
pub fn default_category(rule_id: &str) -> Option<Category> {
    let n: usize = rule_id.strip_prefix("rule")?.parse().ok()?;
    use Category::*;
    Some(match n {
        1 | 7 | 11 | 14 | 16 | 26 | 28 => NormalBird,
        2..=6 | 21 | 22 | 25 | 27 | 31 | 32 => SynWeather,
        8 | 9 | 10 | 12 | 13 | 15 | 17..=20 => FinAnimal,
        23 | 24 | 29 | 30 => RstWind,
        33 | 34 => CounterFire,
        35 => Ping,
        _ => return None,
    })
}

/// Sound ids shipped with the stock mapping, plus a few spares for
/// re-assignment, with the category each belongs to.
pub const SOUND_CATALOG: &[(&str, Category)] = &[
    ("forest_bird", Category::NormalBird),
    ("rain_on_roof", Category::SynWeather),
    ("thunder", Category::SynWeather),
    ("creek", Category::SynWeather),
    ("rain", Category::SynWeather),
    ("heavy_rain", Category::SynWeather),
    ("fountain", Category::SynWeather),
    ("beach", Category::SynWeather),
    ("snow_storm", Category::SynWeather),
    ("walk_in_snow", Category::SynWeather),
    ("waterfall", Category::SynWeather),
    ("seagulls", Category::FinAnimal),
    ("loon", Category::FinAnimal),
    ("cricket", Category::FinAnimal),
    ("sheep", Category::FinAnimal),
    ("owl", Category::FinAnimal),
    ("horse_snort", Category::FinAnimal),
    ("frog", Category::FinAnimal),
    ("wolf", Category::FinAnimal),
    ("wind_on_grass", Category::RstWind),
    ("wind", Category::RstWind),
    ("heavy_wind", Category::RstWind),
    ("fire", Category::CounterFire),
    ("woodpecker", Category::Ping),
];

pub fn catalog_category(sound_id: &str) -> Option<Category> {
    SOUND_CATALOG.iter().find(|(id, _)| *id == sound_id).map(|(_, c)| *c)
}
