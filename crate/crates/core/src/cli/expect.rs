//! Checks a fixture's `expected` block against fresh runs.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use super::commands::{run_command, Command, Property, Report, RunOptions};
use super::fixture::{Fixture, FixtureKind};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

struct Runner<'a> {
    fixture: &'a Fixture,
    base: &'a RunOptions,
    cache: BTreeMap<(&'static str, &'static str), Report>,
}

impl Runner<'_> {
    fn results(&mut self, cmd: Command, property: Property) -> Result<&Value> {
        let key = (cmd.name(), property_name(property));
        if !self.cache.contains_key(&key) {
            let opts = RunOptions {
                property,
                ..self.base.clone()
            };
            let report = run_command(cmd, self.fixture, &opts)?;
            self.cache.insert(key, report);
        }
        Ok(&self.cache[&key].results)
    }
}

fn property_name(p: Property) -> &'static str {
    match p {
        Property::Metric => "metric",
        Property::Sub => "sub",
        Property::PseudoLower => "pseudo-lower",
        Property::PseudoFull => "pseudo-full",
    }
}

fn at<'v>(v: &'v Value, path: &[&str]) -> &'v Value {
    path.iter().fold(v, |v, k| &v[*k])
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn verdict_check(name: &str, want: &str, got: &Value) -> ExpectationCheck {
    let got = text(got);
    ExpectationCheck {
        name: name.into(),
        passed: got == want,
        detail: format!("expected {want}, got {got}"),
    }
}

fn alpha_check(name: &str, want: f64, tol: f64, got: &Value) -> ExpectationCheck {
    let a = got.as_f64();
    ExpectationCheck {
        name: name.into(),
        passed: a.is_some_and(|a| (a - want).abs() <= tol),
        detail: format!("expected {want} ± {tol}, got {}", text(got)),
    }
}

/// Runs whatever commands the fixture's expectations need and compares.
pub fn check_expected(fixture: &Fixture, opts: &RunOptions) -> Result<Vec<ExpectationCheck>> {
    let Some(exp) = fixture.expected.clone() else {
        return Ok(Vec::new());
    };
    let mut r = Runner {
        fixture,
        base: opts,
        cache: BTreeMap::new(),
    };
    let kind = fixture.kind;
    let tol = exp.alpha_tol.unwrap_or(0.05);
    let mut out = Vec::new();
    if let Some(a) = exp.alpha {
        let got = match kind {
            FixtureKind::MapAnalysis => at(r.results(Command::EstimateHolder, Property::PseudoLower)?, &["fit", "alpha"]).clone(),
            FixtureKind::ViProblem => at(r.results(Command::SweepVi, Property::default())?, &["holder_fit", "alpha"]).clone(),
            FixtureKind::LojaPair => at(r.results(Command::FitLoja, Property::default())?, &["fit", "alpha"]).clone(),
        };
        out.push(alpha_check("alpha", a, tol, &got));
    }
    if let Some(a) = exp.metric_alpha {
        let got = at(r.results(Command::EstimateHolder, Property::Metric)?, &["fit", "alpha"]).clone();
        out.push(alpha_check("metric_alpha", a, tol, &got));
    }
    if let Some(v) = &exp.pseudo_holder {
        let got = at(r.results(Command::EstimateHolder, Property::PseudoLower)?, &["fit", "verdict"]).clone();
        out.push(verdict_check("pseudo_holder", v, &got));
    }
    if let Some(v) = &exp.subregularity {
        let got = at(r.results(Command::EstimateHolder, Property::Sub)?, &["fit", "verdict"]).clone();
        out.push(verdict_check("subregularity", v, &got));
    }
    if let Some(v) = &exp.openness {
        let got = at(r.results(Command::CheckOpenness, Property::default())?, &["verdict"]).clone();
        out.push(verdict_check("openness", v, &got));
    }
    if let Some(v) = &exp.lsc {
        let got = at(r.results(Command::SweepVi, Property::default())?, &["lsc", "verdict"]).clone();
        out.push(verdict_check("lsc", v, &got));
    }
    if let Some(n) = exp.max_cardinality {
        let got = at(r.results(Command::SweepVi, Property::default())?, &["max_cardinality"]).clone();
        out.push(verdict_check("max_cardinality", &n.to_string(), &got));
    }
    if let Some(v) = &exp.consistency {
        let got = at(r.results(Command::Audit, Property::default())?, &["consistency"]).clone();
        out.push(verdict_check("consistency", v, &got));
    }
    Ok(out)
}
