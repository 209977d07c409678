//! Threshold rules over feature views, and the events they raise.

mod defaults;
pub mod parser;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use defaults::{catalog_category, default_category, DEFAULT_RULES, DEFAULT_RULE_COUNT, SOUND_CATALOG};
pub use parser::{parse_document, CmpOp, ComparisonSrc, Item, ParseError, RuleLine, RulesDocument};

use crate::features::{combine, FeatureError, FeatureId, FeatureSpace, FeatureView, TermRef, WindowCounts};
use crate::flowtable::{IpFlowKey, PacketTypeCounters, WindowSnapshot};

/// Sound family of a rule, by the packet type that drives it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    /// SYN / SYN-ACK activity: rain and water.
    SynWeather,
    /// FIN, ACK, URG, PSH or NULL activity: animals and unusual birds.
    FinAnimal,
    /// RST activity: wind.
    RstWind,
    /// Flow-counter activity: fire.
    CounterFire,
    /// Confirmed-normal conditions: forest birds.
    NormalBird,
    /// ICMP echo.
    Ping,
    /// A user asset outside the stock catalogue.
    Other,
}

impl Category {
    /// Whether firing this category indicates something other than normal
    /// operation.
    pub fn is_anomalous(self) -> bool {
        self != Category::NormalBird
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// Sound ids available for assignment, with their categories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SoundCatalog(BTreeMap<String, Category>);

impl SoundCatalog {
    /// Every id in the stock catalogue.
    pub fn stock() -> Self {
        SoundCatalog(SOUND_CATALOG.iter().map(|(id, c)| (id.to_string(), *c)).collect())
    }

    /// Ids from an asset library; stock ids keep their category.
    pub fn from_ids<I: IntoIterator<Item = S>, S: Into<String>>(ids: I) -> Self {
        SoundCatalog(
            ids.into_iter()
                .map(Into::into)
                .map(|id: String| {
                    let c = catalog_category(&id).unwrap_or(Category::Other);
                    (id, c)
                })
                .collect(),
        )
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains_key(id)
    }

    pub fn category(&self, id: &str) -> Option<Category> {
        self.0.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

/// Everything that shapes a rule set, as it appears in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleSettings {
    /// Start from the stock table. Rules in `document` with a stock id
    /// replace that rule; other ids are appended.
    pub include_defaults: bool,
    pub document: String,
    pub gains: BTreeMap<String, f64>,
    pub muted: BTreeSet<String>,
    pub disabled: BTreeSet<String>,
    pub sounds: BTreeMap<String, String>,
    pub master_gain: f64,
}

impl Default for RuleSettings {
    fn default() -> Self {
        RuleSettings {
            include_defaults: true,
            document: String::new(),
            gains: BTreeMap::new(),
            muted: BTreeSet::new(),
            disabled: BTreeSet::new(),
            sounds: BTreeMap::new(),
            master_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleError {
    #[error("{0}")]
    Parse(#[serde(serialize_with = "display")] ParseError),
    #[error("line {line}: rule {rule}: unknown feature {name:?}")]
    UnknownFeature { rule: String, name: String, line: usize },
    #[error("line {line}: {source}")]
    Feature {
        #[serde(serialize_with = "display")]
        source: FeatureError,
        line: usize,
    },
    #[error("rule {rule}: unknown sound asset {sound:?}")]
    UnknownSound { rule: String, sound: String },
    #[error("rule {rule}: gain {gain} outside [0, 1]")]
    GainOutOfRange { rule: String, gain: f64 },
    #[error("master gain {0} outside [0, 1]")]
    MasterGainOutOfRange(f64),
    #[error("rule {rule}: alternative lines disagree on sound or gain")]
    InconsistentAlternatives { rule: String },
    #[error("unknown rule id {0:?}")]
    UnknownRule(String),
}

fn display<T: fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Feature(FeatureId),
    Literal(i64),
}

impl Operand {
    #[inline]
    fn value(self, view: &FeatureView) -> i64 {
        match self {
            Operand::Feature(id) => view.value(id),
            Operand::Literal(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Comparison {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

impl Comparison {
    #[inline]
    pub fn holds(&self, view: &FeatureView) -> bool {
        self.op.apply(self.lhs.value(view), self.rhs.value(view))
    }
}

/// Whether a rule looks at one IP flow or only at window-wide counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Flow,
    Window,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    /// Disjunction of conjunctions; almost always a single clause.
    pub clauses: Vec<Vec<Comparison>>,
    pub sound_id: String,
    pub category: Category,
    pub gain: f64,
    pub muted: bool,
    pub enabled: bool,
    pub scope: Scope,
    referenced: Vec<FeatureId>,
}

impl Rule {
    pub fn matches(&self, view: &FeatureView) -> bool {
        self.clauses.iter().any(|clause| clause.iter().all(|c| c.holds(view)))
    }

    /// Features named in the condition, in first-mention order.
    pub fn referenced_features(&self) -> &[FeatureId] {
        &self.referenced
    }

    /// Gain that reaches the mixer.
    pub fn effective_gain(&self, master_gain: f64) -> f64 {
        if self.muted {
            0.0
        } else {
            (self.gain * master_gain).clamp(0.0, 1.0)
        }
    }
}

/// One firing of one rule for one IP flow (or for the whole window, for
/// window-scoped rules).
#[derive(Debug, Clone, PartialEq)]
pub struct EventInstance {
    pub window_index: u64,
    pub rule_id: String,
    pub flow: Option<IpFlowKey>,
    pub features: FeatureView,
    pub sound_id: String,
    pub category: Category,
}

/// Orders ids so that embedded numbers compare by value: rule2 < rule10.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, _) => return Ordering::Less,
            (_, None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let da = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let db = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (na, nb) = (&a[..da], &b[..db]);
                let ta = trim_zeros(na);
                let tb = trim_zeros(nb);
                let ord = ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then_with(|| da.cmp(&db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[da..];
                b = &b[db..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(d: &[u8]) -> &[u8] {
    let n = d.iter().take_while(|c| **c == b'0').count();
    &d[n.min(d.len().saturating_sub(1))..]
}

/// Canonical event order: rule id (natural), then flow key.
pub fn sort_events(events: &mut [EventInstance]) {
    events.sort_by(|a, b| natural_cmp(&a.rule_id, &b.rule_id).then_with(|| a.flow.cmp(&b.flow)));
}

/// A validated, immutable rule set together with its feature namespace.
#[derive(Debug, Clone)]
pub struct RuleSet {
    space: Arc<FeatureSpace>,
    rules: Vec<Rule>,
    index: HashMap<String, usize>,
    document: RulesDocument,
    master_gain: f64,
}

impl RuleSet {
    /// Stock rules against the stock sound catalogue.
    pub fn defaults() -> Self {
        RuleSet::build(&RuleSettings::default(), &SoundCatalog::stock()).expect("stock rules validate")
    }

    /// Validates settings against the catalogue. All problems are reported.
    pub fn build(settings: &RuleSettings, catalog: &SoundCatalog) -> Result<Self, Vec<RuleError>> {
        let mut errors = Vec::new();

        let stock = if settings.include_defaults {
            parse_document(DEFAULT_RULES).expect("stock rules parse")
        } else {
            RulesDocument::default()
        };
        let user = match parse_document(&settings.document) {
            Ok(doc) => doc,
            Err(errs) => {
                errors.extend(errs.into_iter().map(RuleError::Parse));
                RulesDocument::default()
            }
        };

        // Merge: user rule ids replace stock ones in place, new ids append.
        let mut combos = Vec::new();
        let mut order: Vec<String> = Vec::new();
        let mut groups: HashMap<String, Vec<RuleLine>> = HashMap::new();
        let mut user_groups: HashMap<String, Vec<RuleLine>> = HashMap::new();
        for item in stock.items {
            if let Item::Rule(line) = item {
                if !groups.contains_key(&line.id) {
                    order.push(line.id.clone());
                }
                groups.entry(line.id.clone()).or_default().push(line);
            }
        }
        for item in user.items {
            match item {
                Item::Rule(line) => {
                    if !groups.contains_key(&line.id) && !user_groups.contains_key(&line.id) {
                        order.push(line.id.clone());
                    }
                    user_groups.entry(line.id.clone()).or_default().push(line);
                }
                Item::Combination(def, line) => combos.push((def, line)),
            }
        }
        for (id, lines) in user_groups {
            groups.insert(id, lines);
        }

        let mut space = FeatureSpace::builtin();
        for (def, line) in &combos {
            if let Err(errs) = space.add_combination(def.clone()) {
                errors.extend(errs.into_iter().map(|source| RuleError::Feature { source, line: *line }));
            }
        }

        let mut rules = Vec::with_capacity(order.len());
        let mut merged_items: Vec<Item> = combos.into_iter().map(|(d, l)| Item::Combination(d, l)).collect();
        for id in &order {
            let lines = &groups[id];
            merged_items.extend(lines.iter().cloned().map(Item::Rule));
            if let Some(rule) = resolve_rule(id, lines, &space, settings, catalog, &mut errors) {
                rules.push(rule);
            }
        }

        let index: HashMap<String, usize> = rules.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        let known = |id: &String| groups.contains_key(id);
        for id in settings
            .gains
            .keys()
            .chain(settings.muted.iter())
            .chain(settings.disabled.iter())
            .chain(settings.sounds.keys())
        {
            if !known(id) {
                errors.push(RuleError::UnknownRule(id.clone()));
            }
        }
        if !(0.0..=1.0).contains(&settings.master_gain) {
            errors.push(RuleError::MasterGainOutOfRange(settings.master_gain));
        }

        if !errors.is_empty() {
            errors.dedup();
            return Err(errors);
        }
        Ok(RuleSet {
            space: Arc::new(space),
            rules,
            index,
            document: RulesDocument { items: merged_items },
            master_gain: settings.master_gain,
        })
    }

    pub fn space(&self) -> &Arc<FeatureSpace> {
        &self.space
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.index.get(id).map(|i| &self.rules[*i])
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn master_gain(&self) -> f64 {
        self.master_gain
    }

    /// The merged document (stock rules with user replacements), without
    /// gain, mute, or sound overrides.
    pub fn document(&self) -> &RulesDocument {
        &self.document
    }

    /// Ids of every rule whose condition holds, ignoring scope and the
    /// enabled flag.
    pub fn matching_ids(&self, view: &FeatureView) -> Vec<&str> {
        self.rules.iter().filter(|r| r.matches(view)).map(|r| r.id.as_str()).collect()
    }

    /// Events raised by flow-scoped, enabled rules for one IP flow. No rule
    /// suppresses another.
    pub fn evaluate(&self, window_index: u64, view: &FeatureView, key: IpFlowKey) -> Vec<EventInstance> {
        self.rules
            .iter()
            .filter(|r| r.enabled && r.scope == Scope::Flow && r.matches(view))
            .map(|r| self.event(r, window_index, Some(key), view))
            .collect()
    }

    /// All events for a finished window, in canonical order.
    pub fn evaluate_window(&self, snapshot: &WindowSnapshot) -> Vec<EventInstance> {
        let globals = WindowCounts { traffic_flows: snapshot.traffic_flow_count(), ip_flows: snapshot.ip_flow_count() };
        let mut events = Vec::new();
        for (key, counters) in &snapshot.ip_flows {
            let view = combine(counters, globals, &self.space);
            events.extend(self.evaluate(snapshot.window_index, &view, *key));
        }
        // Window-scoped rules see the window counters with every per-flow
        // feature at zero, and fire at most once.
        let window_view = combine(&PacketTypeCounters::default(), globals, &self.space);
        for rule in self.rules.iter().filter(|r| r.enabled && r.scope == Scope::Window) {
            if rule.matches(&window_view) {
                events.push(self.event(rule, snapshot.window_index, None, &window_view));
            }
        }
        sort_events(&mut events);
        events
    }

    fn event(&self, rule: &Rule, window_index: u64, flow: Option<IpFlowKey>, view: &FeatureView) -> EventInstance {
        EventInstance {
            window_index,
            rule_id: rule.id.clone(),
            flow,
            features: view.clone(),
            sound_id: rule.sound_id.clone(),
            category: rule.category,
        }
    }
}

fn resolve_rule(
    id: &str,
    lines: &[RuleLine],
    space: &FeatureSpace,
    settings: &RuleSettings,
    catalog: &SoundCatalog,
    errors: &mut Vec<RuleError>,
) -> Option<Rule> {
    let first = &lines[0];
    if lines.iter().any(|l| l.sound != first.sound || l.gain != first.gain) {
        errors.push(RuleError::InconsistentAlternatives { rule: id.to_string() });
    }
    let mut ok = true;
    let mut referenced = Vec::new();
    let mut resolve = |t: &TermRef, line: usize, referenced: &mut Vec<FeatureId>| match t {
        TermRef::Literal(v) => Some(Operand::Literal(*v)),
        TermRef::Name(n) => match space.lookup(n) {
            Some(fid) => {
                if !referenced.contains(&fid) {
                    referenced.push(fid);
                }
                Some(Operand::Feature(fid))
            }
            None => {
                errors.push(RuleError::UnknownFeature { rule: id.to_string(), name: n.clone(), line });
                None
            }
        },
    };
    let mut clauses = Vec::with_capacity(lines.len());
    for line in lines {
        let mut clause = Vec::with_capacity(line.clause.len());
        for c in &line.clause {
            let lhs = resolve(&c.lhs, line.line, &mut referenced);
            let rhs = resolve(&c.rhs, line.line, &mut referenced);
            match (lhs, rhs) {
                (Some(lhs), Some(rhs)) => clause.push(Comparison { lhs, op: c.op, rhs }),
                _ => ok = false,
            }
        }
        clauses.push(clause);
    }

    let sound_id = settings.sounds.get(id).cloned().unwrap_or_else(|| first.sound.clone());
    if !catalog.contains(&sound_id) {
        errors.push(RuleError::UnknownSound { rule: id.to_string(), sound: sound_id.clone() });
        ok = false;
    }
    let gain = settings.gains.get(id).copied().or(first.gain).unwrap_or(1.0);
    if !(0.0..=1.0).contains(&gain) {
        errors.push(RuleError::GainOutOfRange { rule: id.to_string(), gain });
        ok = false;
    }
    if !ok {
        return None;
    }
    let scope = if referenced.iter().all(|f| FeatureSpace::is_window_global(*f)) { Scope::Window } else { Scope::Flow };
    let category = default_category(id).or_else(|| catalog.category(&sound_id)).unwrap_or(Category::Other);
    Some(Rule {
        id: id.to_string(),
        clauses,
        sound_id,
        category,
        gain,
        muted: settings.muted.contains(id),
        enabled: !settings.disabled.contains(id),
        scope,
        referenced,
    })
}
