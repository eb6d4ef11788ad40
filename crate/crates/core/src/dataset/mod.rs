//! Ingest, recoding, cohort filtering and frequency reporting.

mod cohort;
mod crosstab;
mod fixture;
mod raw;
mod recode;
mod synth;
mod table;

pub use cohort::{filter_curve_cohort, CohortCounts, CurveCohort};
pub use fixture::{crash_fixture, CrashFixture};
pub use crosstab::{crosstab, crosstab_raw, CrosstabReport};
pub use raw::{load_delimited, parse_delimited, DelimitedOptions, RawTable};
pub use recode::{
    coded_as_raw, recode, DefaultAction, FeatureRule, Predicate, RecodeAudit, RecodeRuleSet, Rule,
};
pub use synth::{
    binary_schema, crash_schema, generate_synthetic, planted_interaction, planted_noisy_rule, planted_relevance,
    GenerativeRules, TargetModel, Term,
};
pub use table::{schema_hash, CategoricalTable, Code, FeatureSpec};
