//! Named per-IP-flow features: raw direction-tagged counts, the eight built-in
//! flag combinations, window-wide flow counters, and user-defined sums.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::ser::{Serialize, SerializeMap, Serializer};

use crate::flowtable::{Bucket, PacketType, PacketTypeCounters};

/// Index into a [`FeatureSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureId(pub usize);

/// Raw features, in namespace order. Each is a sum of packet-type counters
/// in one direction.
const RAW: [(&str, &[PacketType], Bucket); 20] = [
    ("SYN-in-IP", &[PacketType::Syn], Bucket::In),
    ("SYN-out-IP", &[PacketType::Syn], Bucket::Out),
    ("SYN-ACK-in-IP", &[PacketType::SynAck], Bucket::In),
    ("SYN-ACK-out-IP", &[PacketType::SynAck], Bucket::Out),
    ("ACK-in-IP", &[PacketType::Ack], Bucket::In),
    ("ACK-out-IP", &[PacketType::Ack], Bucket::Out),
    ("FIN-in-IP", &[PacketType::Fin, PacketType::FinAck], Bucket::In),
    ("FIN-out-IP", &[PacketType::Fin, PacketType::FinAck], Bucket::Out),
    ("RST-in-IP", &[PacketType::Rst, PacketType::RstAck], Bucket::In),
    ("RST-out-IP", &[PacketType::Rst, PacketType::RstAck], Bucket::Out),
    ("PSH-ACK-in-IP", &[PacketType::PshAck], Bucket::In),
    ("PSH-ACK-out-IP", &[PacketType::PshAck], Bucket::Out),
    ("NULL-in-IP", &[PacketType::Null], Bucket::In),
    ("NULL-out-IP", &[PacketType::Null], Bucket::Out),
    ("URG-PSH-FIN-in-IP", &[PacketType::Xmas], Bucket::In),
    ("URG-PSH-FIN-out-IP", &[PacketType::Xmas], Bucket::Out),
    ("LAND-in-IP", &[PacketType::Land], Bucket::In),
    ("LAND-out-IP", &[PacketType::Land], Bucket::Out),
    ("ICMP-in", &[PacketType::IcmpEcho], Bucket::In),
    ("ICMP-out", &[PacketType::IcmpEcho], Bucket::Out),
];

pub const RAW_COUNT: usize = RAW.len();
const FC_COUNT: usize = 8;
pub const BUILTIN_COUNT: usize = RAW_COUNT + FC_COUNT + 2;

pub const SYN_IN: FeatureId = FeatureId(0);
pub const SYN_OUT: FeatureId = FeatureId(1);
pub const SYN_ACK_IN: FeatureId = FeatureId(2);
pub const SYN_ACK_OUT: FeatureId = FeatureId(3);
pub const ACK_IN: FeatureId = FeatureId(4);
pub const ACK_OUT: FeatureId = FeatureId(5);
pub const FIN_IN: FeatureId = FeatureId(6);
pub const FIN_OUT: FeatureId = FeatureId(7);
pub const RST_IN: FeatureId = FeatureId(8);
pub const RST_OUT: FeatureId = FeatureId(9);
pub const FC1: FeatureId = FeatureId(RAW_COUNT);
pub const TRAFFIC_FLOW_COUNTER: FeatureId = FeatureId(RAW_COUNT + FC_COUNT);
pub const IP_FLOW_COUNTER: FeatureId = FeatureId(RAW_COUNT + FC_COUNT + 1);

pub const TRAFFIC_FLOW_COUNTER_NAME: &str = "TrafficFlowCounter";
pub const IP_FLOW_COUNTER_NAME: &str = "IPFlowCounter";

/// Window-wide values replicated into every view of the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowCounts {
    pub traffic_flows: u64,
    pub ip_flows: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Operand of a combination before name resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermRef {
    Name(String),
    Literal(i64),
}

/// A user combination as written, e.g. `FC9 = SYN-in-IP + NULL-in-IP`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinationDef {
    pub name: String,
    pub terms: Vec<(Sign, TermRef)>,
}

impl fmt::Display for CombinationDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} =", self.name)?;
        for (i, (sign, term)) in self.terms.iter().enumerate() {
            match (i, sign) {
                (0, Sign::Plus) => {}
                (0, Sign::Minus) => f.write_str(" -")?,
                (_, Sign::Plus) => f.write_str(" +")?,
                (_, Sign::Minus) => f.write_str(" -")?,
            }
            match term {
                TermRef::Name(n) => write!(f, " {n}")?,
                TermRef::Literal(v) => write!(f, " {v}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown feature {name:?} in definition of {defining:?}")]
    UnknownFeature { defining: String, name: String },
    #[error("feature {0:?} is already defined")]
    Collision(String),
    #[error("combination {0:?} has no terms")]
    Empty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Operand {
    Feature(FeatureId),
    Literal(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Combination {
    terms: Vec<(Sign, Operand)>,
}

/// The set of feature names visible to rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpace {
    names: Vec<String>,
    index: HashMap<String, FeatureId>,
    user: Vec<(CombinationDef, Combination)>,
}

impl FeatureSpace {
    pub fn builtin() -> Self {
        let mut names: Vec<String> = RAW.iter().map(|(n, _, _)| n.to_string()).collect();
        names.extend((1..=FC_COUNT).map(|i| format!("FC{i}")));
        names.push(TRAFFIC_FLOW_COUNTER_NAME.to_string());
        names.push(IP_FLOW_COUNTER_NAME.to_string());
        let mut index: HashMap<String, FeatureId> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), FeatureId(i))).collect();
        // Rule tables write the combinations as FC-1 … FC-8.
        for i in 1..=FC_COUNT {
            index.insert(format!("FC-{i}"), FeatureId(RAW_COUNT + i - 1));
        }
        FeatureSpace { names, index, user: Vec::new() }
    }

    /// Built-ins plus user combinations. Definitions may refer to earlier
    /// ones. All errors are collected.
    pub fn with_combinations(defs: &[CombinationDef]) -> Result<Self, Vec<FeatureError>> {
        let mut space = FeatureSpace::builtin();
        let mut errors = Vec::new();
        for def in defs {
            if let Err(e) = space.add_combination(def.clone()) {
                errors.extend(e);
            }
        }
        if errors.is_empty() {
            Ok(space)
        } else {
            Err(errors)
        }
    }

    pub fn add_combination(&mut self, def: CombinationDef) -> Result<FeatureId, Vec<FeatureError>> {
        let mut errors = Vec::new();
        if self.index.contains_key(&def.name) {
            errors.push(FeatureError::Collision(def.name.clone()));
        }
        if def.terms.is_empty() {
            errors.push(FeatureError::Empty(def.name.clone()));
        }
        let mut terms = Vec::with_capacity(def.terms.len());
        for (sign, term) in &def.terms {
            match term {
                TermRef::Literal(v) => terms.push((*sign, Operand::Literal(*v))),
                TermRef::Name(n) => match self.index.get(n) {
                    Some(id) => terms.push((*sign, Operand::Feature(*id))),
                    None => errors.push(FeatureError::UnknownFeature { defining: def.name.clone(), name: n.clone() }),
                },
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let id = FeatureId(self.names.len());
        self.names.push(def.name.clone());
        self.index.insert(def.name.clone(), id);
        self.user.push((def, Combination { terms }));
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<FeatureId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: FeatureId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn user_combinations(&self) -> impl Iterator<Item = &CombinationDef> {
        self.user.iter().map(|(d, _)| d)
    }

    pub fn is_window_global(id: FeatureId) -> bool {
        id == TRAFFIC_FLOW_COUNTER || id == IP_FLOW_COUNTER
    }

    pub fn raw_ids() -> impl Iterator<Item = FeatureId> {
        (0..RAW_COUNT).map(FeatureId)
    }
}

/// Feature values for one IP flow in one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureView {
    space: Arc<FeatureSpace>,
    values: Vec<i64>,
}

impl FeatureView {
    pub fn get(&self, name: &str) -> Option<i64> {
        self.space.lookup(name).map(|id| self.values[id.0])
    }

    pub fn value(&self, id: FeatureId) -> i64 {
        self.values[id.0]
    }

    pub fn space(&self) -> &Arc<FeatureSpace> {
        &self.space
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.space.names().zip(self.values.iter().copied())
    }

    /// Assembles a view from explicit values for every feature.
    ///
    /// Values are taken as given: combinations are not recomputed, which lets
    /// tests probe rule evaluation with arbitrary vectors.
    pub fn from_values(space: Arc<FeatureSpace>, values: Vec<i64>) -> Self {
        assert_eq!(space.len(), values.len(), "one value per feature");
        FeatureView { space, values }
    }
}

impl Serialize for FeatureView {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len()))?;
        for (name, value) in self.iter() {
            map.serialize_entry(name, &value)?;
        }
        map.end()
    }
}

/// Builds the view for one IP flow: raw aliases, FC1–FC8, the window
/// counters, then user combinations in declaration order.
pub fn combine(counters: &PacketTypeCounters, globals: WindowCounts, space: &Arc<FeatureSpace>) -> FeatureView {
    let mut v = vec![0i64; space.len()];
    for (slot, (_, types, bucket)) in v.iter_mut().zip(RAW.iter()) {
        *slot = types.iter().map(|t| counters.get(*t, *bucket) as i64).sum();
    }
    let f = |id: FeatureId| v[id.0];
    let fc = [
        f(SYN_OUT) - f(SYN_ACK_IN),
        f(SYN_IN) - f(SYN_ACK_OUT),
        f(FIN_OUT) - f(FIN_IN),
        f(FIN_IN) - f(FIN_OUT),
        f(SYN_IN) + f(SYN_OUT) - f(FIN_OUT),
        f(SYN_IN) + f(SYN_OUT) - f(FIN_IN),
        f(FIN_IN) - f(FIN_OUT) - f(RST_OUT),
        f(FIN_OUT) - f(FIN_IN) - f(RST_IN),
    ];
    v[FC1.0..FC1.0 + FC_COUNT].copy_from_slice(&fc);
    v[TRAFFIC_FLOW_COUNTER.0] = globals.traffic_flows as i64;
    v[IP_FLOW_COUNTER.0] = globals.ip_flows as i64;

    for (offset, (_, combo)) in space.user.iter().enumerate() {
        let total = combo.terms.iter().fold(0i64, |acc, (sign, op)| {
            let x = match op {
                Operand::Feature(id) => v[id.0],
                Operand::Literal(l) => *l,
            };
            match sign {
                Sign::Plus => acc + x,
                Sign::Minus => acc - x,
            }
        });
        v[BUILTIN_COUNT + offset] = total;
    }
    FeatureView { space: Arc::clone(space), values: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space() -> Arc<FeatureSpace> {
        Arc::new(FeatureSpace::builtin())
    }

    fn counters(pairs: &[(PacketType, Bucket, u64)]) -> PacketTypeCounters {
        let mut c = PacketTypeCounters::default();
        for &(t, b, n) in pairs {
            c.set(t, b, n);
        }
        c
    }

    #[test]
    fn fc1_example() {
        let c = counters(&[(PacketType::Syn, Bucket::Out, 10), (PacketType::SynAck, Bucket::In, 3)]);
        let v = combine(&c, WindowCounts::default(), &space());
        assert_eq!(v.get("FC1"), Some(7));
        assert_eq!(v.get("FC-1"), Some(7));
    }

    #[test]
    fn zero_counters_zero_combinations() {
        let v = combine(&PacketTypeCounters::default(), WindowCounts::default(), &space());
        for i in 1..=8 {
            assert_eq!(v.get(&format!("FC{i}")), Some(0));
        }
    }

    #[test]
    fn fc5_example() {
        let c = counters(&[(PacketType::Syn, Bucket::In, 500), (PacketType::FinAck, Bucket::Out, 2)]);
        let v = combine(&c, WindowCounts::default(), &space());
        assert_eq!(v.get("FC5"), Some(498));
    }

    #[test]
    fn fin_and_rst_aliases_include_ack_variants() {
        let c = counters(&[
            (PacketType::Fin, Bucket::In, 2),
            (PacketType::FinAck, Bucket::In, 3),
            (PacketType::Rst, Bucket::Out, 1),
            (PacketType::RstAck, Bucket::Out, 4),
        ]);
        let v = combine(&c, WindowCounts { traffic_flows: 9, ip_flows: 4 }, &space());
        assert_eq!(v.get("FIN-in-IP"), Some(5));
        assert_eq!(v.get("RST-out-IP"), Some(5));
        assert_eq!(v.get("FC7"), Some(0));
        assert_eq!(v.get("TrafficFlowCounter"), Some(9));
        assert_eq!(v.get("IPFlowCounter"), Some(4));
    }

    #[test]
    fn subtraction_goes_negative() {
        let c = counters(&[(PacketType::SynAck, Bucket::In, 6)]);
        let v = combine(&c, WindowCounts::default(), &space());
        assert_eq!(v.get("FC1"), Some(-6));
    }

    #[test]
    fn user_combination_sums() {
        let def = CombinationDef {
            name: "FC9".into(),
            terms: vec![
                (Sign::Plus, TermRef::Name("SYN-in-IP".into())),
                (Sign::Plus, TermRef::Name("NULL-in-IP".into())),
            ],
        };
        let space = Arc::new(FeatureSpace::with_combinations(&[def]).unwrap());
        let c = counters(&[(PacketType::Syn, Bucket::In, 5), (PacketType::Null, Bucket::In, 2)]);
        assert_eq!(combine(&c, WindowCounts::default(), &space).get("FC9"), Some(7));
    }

    #[test]
    fn user_combination_errors() {
        let bad =
            CombinationDef { name: "FC_bad".into(), terms: vec![(Sign::Plus, TermRef::Name("NOPE-in-IP".into()))] };
        let errs = FeatureSpace::with_combinations(&[bad]).unwrap_err();
        assert!(matches!(&errs[0], FeatureError::UnknownFeature { name, .. } if name == "NOPE-in-IP"));

        let dup = CombinationDef { name: "FC1".into(), terms: vec![(Sign::Plus, TermRef::Literal(1))] };
        let errs = FeatureSpace::with_combinations(&[dup]).unwrap_err();
        assert_eq!(errs, vec![FeatureError::Collision("FC1".into())]);
    }

    #[test]
    fn combinations_chain_and_display() {
        let a = CombinationDef {
            name: "A".into(),
            terms: vec![(Sign::Plus, TermRef::Name("FC1".into())), (Sign::Minus, TermRef::Literal(2))],
        };
        let b = CombinationDef { name: "B".into(), terms: vec![(Sign::Minus, TermRef::Name("A".into()))] };
        assert_eq!(a.to_string(), "A = FC1 - 2");
        assert_eq!(b.to_string(), "B = - A");
        let space = Arc::new(FeatureSpace::with_combinations(&[a, b]).unwrap());
        let c = counters(&[(PacketType::Syn, Bucket::Out, 10)]);
        let v = combine(&c, WindowCounts::default(), &space);
        assert_eq!(v.get("A"), Some(8));
        assert_eq!(v.get("B"), Some(-8));
    }

    fn arb_counters() -> impl Strategy<Value = PacketTypeCounters> {
        proptest::collection::vec(0u64..2000, PacketType::COUNT * 2)
            .prop_map(|cols| PacketTypeCounters::from_columns(&cols).unwrap())
    }

    proptest! {
        #[test]
        fn fc3_is_minus_fc4_and_mirroring_swaps_fc1_fc2(c in arb_counters()) {
            let s = space();
            let v = combine(&c, WindowCounts::default(), &s);
            prop_assert_eq!(v.get("FC3").unwrap(), -v.get("FC4").unwrap());
            let m = combine(&c.mirrored(), WindowCounts::default(), &s);
            prop_assert_eq!(m.get("FC1"), v.get("FC2"));
            prop_assert_eq!(m.get("FC7"), v.get("FC8"));
        }

        #[test]
        fn combine_is_pure(c in arb_counters(), t in 0u64..5000, i in 0u64..5000) {
            let s = space();
            let g = WindowCounts { traffic_flows: t, ip_flows: i };
            prop_assert_eq!(combine(&c, g, &s), combine(&c, g, &s));
        }
    }
}
