use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cohort::CurveCohort;
use super::raw::RawTable;
use super::recode::{DefaultAction, FeatureRule, Predicate, RecodeRuleSet, Rule};
use super::synth::{crash_schema, generate_synthetic, GenerativeRules};
use super::table::{Code, FeatureSpec};
use crate::error::Result;

/// A synthetic raw extract with the recode rules and cohort that turn it into
/// a coded table of `expected_rows` rows over [`crash_schema`].
#[derive(Clone, Debug, PartialEq)]
pub struct CrashFixture {
    pub raw: RawTable,
    pub rules: RecodeRuleSet,
    pub cohort: CurveCohort,
    pub expected_rows: usize,
}

/// How a coded value is spelled in the raw extract.
enum RawCoding {
    Same,
    /// Code 0 below the cut, code 1 at or above it.
    Cut { below: &'static [i64], above: &'static [i64], cut: i64 },
    Months,
    Shifted(i64),
}

const COLUMNS: [(&str, &str); 22] = [
    ("urban_rural", "RUR_URB"),
    ("motor_vehicles", "VE_TOTAL"),
    ("occupants", "NUMOCCS"),
    ("first_harmful_event", "HARM_EV"),
    ("vehicle_model_year", "MOD_YEAR"),
    ("initial_contact", "IMPACT1"),
    ("extent_of_damage", "DEFORMED"),
    ("most_harmful_event", "M_HARM"),
    ("speeding_related", "SPEEDREL"),
    ("driver_error", "DR_ERR"),
    ("trafficway", "VTRAFWAY"),
    ("speed_limit", "VSPD_LIM"),
    ("roadway_alignment", "VALIGN"),
    ("grade", "VPROFILE"),
    ("surface_condition", "VSURCOND"),
    ("traffic_control", "VTRAFCON"),
    ("critical_event", "P_CRASH2"),
    ("avoidance_maneuver", "P_CRASH3"),
    ("pre_impact_stability", "PCRASH4"),
    ("pre_impact_location", "PCRASH5"),
    ("crash_type", "ACC_TYPE"),
    ("month_of_crash", "MONTH"),
];

const TARGET_COLUMN: &str = "MAX_SEV";
const MOVEMENT_COLUMN: &str = "P_CRASH1";
const NEGOTIATING_CURVE: i64 = 6;
const STRAIGHT: i64 = 1;

fn coding(feature: &str) -> RawCoding {
    match feature {
        "vehicle_model_year" => RawCoding::Cut {
            below: &[1998, 2001, 2004, 2006, 2008, 2009],
            above: &[2010, 2012, 2014, 2016, 2018],
            cut: 2010,
        },
        "speed_limit" => RawCoding::Cut { below: &[25, 30, 35, 40, 45], above: &[50, 55, 60, 65], cut: 46 },
        "month_of_crash" => RawCoding::Months,
        "roadway_alignment" => RawCoding::Shifted(1),
        _ => RawCoding::Same,
    }
}

fn missing(feature: &str) -> BTreeSet<i64> {
    match feature {
        "vehicle_model_year" => [9998, 9999].into(),
        "speed_limit" => [98, 99].into(),
        "roadway_alignment" => [8, 9].into(),
        _ => BTreeSet::new(),
    }
}

fn encode(rng: &mut ChaCha8Rng, coding: &RawCoding, code: Code) -> i64 {
    let pick = |rng: &mut ChaCha8Rng, xs: &[i64]| xs[rng.random_range(0..xs.len())];
    match coding {
        RawCoding::Same => i64::from(code),
        RawCoding::Cut { below, above, .. } => pick(rng, if code == 0 { below } else { above }),
        RawCoding::Months => {
            if code == 1 {
                pick(rng, &[12, 1, 2])
            } else {
                rng.random_range(3..=11)
            }
        }
        RawCoding::Shifted(k) => i64::from(code) + k,
    }
}

fn rule(when: Predicate, code: Code) -> Rule {
    Rule { when, field: None, code }
}

fn feature_rule(spec: &FeatureSpec, column: &str) -> FeatureRule {
    let rules = match coding(&spec.name) {
        RawCoding::Same => spec.allowed_codes.iter().map(|&c| rule(Predicate::Eq(i64::from(c)), c)).collect(),
        RawCoding::Cut { cut, .. } => vec![rule(Predicate::Lt(cut), 0), rule(Predicate::Ge(cut), 1)],
        RawCoding::Months => vec![rule(Predicate::In(vec![12, 1, 2]), 1), rule(Predicate::Between([3, 11]), 0)],
        RawCoding::Shifted(k) => spec
            .allowed_codes
            .iter()
            .map(|&c| rule(Predicate::Eq(i64::from(c) + k), c))
            .collect(),
    };
    FeatureRule {
        name: spec.name.clone(),
        source: Some(column.to_string()),
        sources: Vec::new(),
        missing: missing(&spec.name),
        labels: spec.code_labels.iter().map(|(c, l)| (c.to_string(), l.clone())).collect(),
        rules,
        otherwise: DefaultAction::Error,
    }
}

/// Build a raw extract whose curve cohort recodes to `n` rows. Alongside the
/// cohort it holds vehicles on straight road or not negotiating a curve, and
/// cohort rows with a missing model year or speed limit that strict
/// recoding drops.
pub fn crash_fixture(n: usize, seed: u64) -> Result<CrashFixture> {
    let schema = crash_schema();
    let n_missing = n / 37;
    let n_other = n / 4;
    let coded = generate_synthetic(&schema, n + n_missing, seed, &GenerativeRules::crash_default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1c7);
    let codings: Vec<RawCoding> = schema.iter().map(|f| coding(&f.name)).collect();
    let align = schema.iter().position(|f| f.name == "roadway_alignment").expect("alignment feature");
    let year = schema.iter().position(|f| f.name == "vehicle_model_year").expect("model year feature");
    let speed = schema.iter().position(|f| f.name == "speed_limit").expect("speed limit feature");

    let mut rows: Vec<Vec<i64>> = Vec::with_capacity(n + n_missing + n_other);
    for (i, (row, &y)) in coded.rows().iter().zip(coded.target()).enumerate() {
        let mut raw: Vec<i64> = row.iter().zip(&codings).map(|(&c, k)| encode(&mut rng, k, c)).collect();
        if i >= n {
            if i % 2 == 0 {
                raw[year] = 9999;
            } else {
                raw[speed] = 99;
            }
        }
        let severity = if y == 1 { rng.random_range(3..=4) } else { rng.random_range(0..=2) };
        raw.push(severity);
        raw.push(NEGOTIATING_CURVE);
        rows.push(raw);
    }
    let others = generate_synthetic(&schema, n_other, seed.wrapping_add(1), &GenerativeRules::crash_default())?;
    for (i, (row, &y)) in others.rows().iter().zip(others.target()).enumerate() {
        let mut raw: Vec<i64> = row.iter().zip(&codings).map(|(&c, k)| encode(&mut rng, k, c)).collect();
        let movement = if i % 2 == 0 {
            raw[align] = STRAIGHT;
            rng.random_range(1..=12)
        } else {
            [1, 2, 3, 4, 5, 7, 8][rng.random_range(0..7)]
        };
        raw.push(if y == 1 { 3 } else { 0 });
        raw.push(movement);
        rows.push(raw);
    }
    rows.shuffle(&mut rng);

    let mut columns: Vec<String> = COLUMNS.iter().map(|(_, c)| c.to_string()).collect();
    columns.push(TARGET_COLUMN.into());
    columns.push(MOVEMENT_COLUMN.into());
    let target = FeatureRule {
        name: "severe_injury".into(),
        source: Some(TARGET_COLUMN.into()),
        sources: Vec::new(),
        missing: [9].into(),
        labels: BTreeMap::from([("0".into(), "no serious injury".into()), ("1".into(), "serious or fatal".into())]),
        rules: vec![rule(Predicate::Between([0, 2]), 0), rule(Predicate::Between([3, 4]), 1)],
        otherwise: DefaultAction::Error,
    };
    let rules = RecodeRuleSet {
        target,
        features: schema.iter().zip(COLUMNS).map(|(f, (_, col))| feature_rule(f, col)).collect(),
    };
    Ok(CrashFixture {
        raw: RawTable::new(columns, rows)?,
        rules,
        cohort: CurveCohort {
            alignment_field: "VALIGN".into(),
            curve_codes: vec![2, 3, 4],
            negotiating_field: MOVEMENT_COLUMN.into(),
            negotiating_codes: vec![NEGOTIATING_CURVE],
        },
        expected_rows: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{filter_curve_cohort, recode};

    #[test]
    fn cohort_recodes_to_expected_rows() {
        let fx = crash_fixture(740, 11).unwrap();
        let (cohort, counts) = filter_curve_cohort(&fx.raw, &fx.cohort).unwrap();
        assert_eq!(counts.retained, 740 + 740 / 37);
        let (table, audit) = recode(&cohort, &fx.rules, true).unwrap();
        assert_eq!(table.n_rows(), fx.expected_rows);
        assert_eq!(audit.dropped(), 20);
        for (got, want) in table.schema().iter().zip(crash_schema()) {
            assert_eq!((&got.name, &got.allowed_codes, &got.code_labels), (&want.name, &want.allowed_codes, &want.code_labels));
        }
        let rules = RecodeRuleSet::from_toml(&fx.rules.to_toml().unwrap()).unwrap();
        assert_eq!(rules, fx.rules);
    }

    #[test]
    fn deterministic() {
        assert_eq!(crash_fixture(100, 3).unwrap(), crash_fixture(100, 3).unwrap());
    }
}
