//! JSON fixtures: a map, VI or Łojasiewicz pair plus named boxes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::map_model::{build_from_spec, AnalysisBox, ExprMap, MapModel, MapSpec};
use crate::metrics::ConvexSet;
use crate::vi::VIProblem;

pub const BUILTINS: &[(&str, &str)] = &[
    ("example-5.1-d3", include_str!("../../fixtures/example-5.1-d3.json")),
    ("example-5.1-d5", include_str!("../../fixtures/example-5.1-d5.json")),
    ("example-5.2-bounded", include_str!("../../fixtures/example-5.2-bounded.json")),
    ("example-5.3-squaring", include_str!("../../fixtures/example-5.3-squaring.json")),
    ("example-5.4-exp", include_str!("../../fixtures/example-5.4-exp.json")),
    ("cubic-fold", include_str!("../../fixtures/cubic-fold.json")),
    ("lcp-identity-halfline", include_str!("../../fixtures/lcp-identity-halfline.json")),
    ("identity-map", include_str!("../../fixtures/identity-map.json")),
    ("pair-abs-square", include_str!("../../fixtures/pair-abs-square.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    MapAnalysis,
    ViProblem,
    LojaPair,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    pub ystar: Option<Vec<f64>>,
    pub pstar: Option<Vec<f64>>,
    /// Parameter for `solve-vi`.
    pub p: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub tol: Option<f64>,
    pub shell_depth: Option<usize>,
    pub ball_resolution: Option<usize>,
    /// Safety factor applied to the fitted Łojasiewicz constant.
    pub margin: Option<f64>,
    /// Exponent checked alongside the fitted one; expected to fail.
    pub wrong_alpha: Option<f64>,
}

/// Regression thresholds. Verdicts are compared by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    /// Map fixtures: lower pseudo-Hölder exponent of `F⁻¹` at `ystar`.
    /// VI fixtures: lower pseudo-Hölder exponent of `𝒮` at `pstar`.
    /// Łojasiewicz pairs: the fitted exponent.
    pub alpha: Option<f64>,
    pub alpha_tol: Option<f64>,
    /// Metric regularity exponent at `ystar` (VI: of the normal map at `−pstar`).
    pub metric_alpha: Option<f64>,
    pub pseudo_holder: Option<String>,
    pub subregularity: Option<String>,
    pub openness: Option<String>,
    pub lsc: Option<String>,
    pub max_cardinality: Option<usize>,
    pub consistency: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub kind: FixtureKind,
    pub dimension: usize,
    #[serde(default)]
    pub expressions: Vec<String>,
    /// Alternative to `expressions` for map fixtures.
    #[serde(default)]
    pub map: Option<MapSpec>,
    #[serde(default)]
    pub convex_set: Option<ConvexSet>,
    pub boxes: BTreeMap<String, AnalysisBox>,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub expected: Option<Expected>,
    #[serde(default = "yes")]
    pub semialgebraic: bool,
}

fn yes() -> bool {
    true
}

/// Parses fixture text; schema errors carry the offending field path.
pub fn parse_fixture(text: &str, origin: &str) -> Result<Fixture> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let fixture: Fixture = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::fixture(format!("{origin}: {path}"), e.into_inner().to_string())
    })?;
    fixture.validate()?;
    Ok(fixture)
}

/// Loads `builtin:NAME` or a JSON file.
pub fn load_fixture(source: &str) -> Result<Fixture> {
    if let Some(name) = source.strip_prefix("builtin:") {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::fixture(source, format!("unknown builtin; known: {}", builtin_names().join(", "))))?;
        return parse_fixture(text, source);
    }
    let text = std::fs::read_to_string(Path::new(source)).map_err(|e| Error::fixture(source, e.to_string()))?;
    parse_fixture(&text, source)
}

pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

fn check_len(path: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(Error::fixture(path, format!("expected {want} coordinates, got {}", v.len())));
    }
    Ok(())
}

impl Fixture {
    fn expressions_for(&self, want: Option<usize>) -> Result<Vec<Expression>> {
        if let Some(w) = want {
            if self.expressions.len() != w {
                return Err(Error::fixture(
                    "expressions",
                    format!("expected {w} expressions, got {}", self.expressions.len()),
                ));
            }
        }
        if self.expressions.is_empty() {
            return Err(Error::fixture("expressions", "at least one expression is required"));
        }
        self.expressions
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let e = Expression::parse(s).map_err(|e| Error::fixture(format!("expressions[{i}]"), e.to_string()))?;
                if e.arity() > self.dimension {
                    return Err(Error::fixture(
                        format!("expressions[{i}]"),
                        format!("uses x{} but dimension is {}", e.arity(), self.dimension),
                    ));
                }
                Ok(e)
            })
            .collect()
    }

    pub fn box_named(&self, name: &str) -> Result<&AnalysisBox> {
        self.boxes
            .get(name)
            .ok_or_else(|| Error::fixture(format!("boxes.{name}"), "missing box"))
    }

    /// The map of a map fixture, or the normal map of a VI fixture.
    pub fn map_model(&self) -> Result<MapModel> {
        match self.kind {
            FixtureKind::MapAnalysis => {
                if let Some(spec) = &self.map {
                    if !self.expressions.is_empty() {
                        return Err(Error::fixture("map", "give either `map` or `expressions`, not both"));
                    }
                    let m = build_from_spec(spec).map_err(|e| match e {
                        Error::Fixture { .. } => e,
                        other => Error::fixture("map", other.to_string()),
                    })?;
                    if m.n() != self.dimension {
                        return Err(Error::fixture("map", format!("map has n = {}, dimension is {}", m.n(), self.dimension)));
                    }
                    return Ok(m);
                }
                let f = ExprMap::new(self.dimension, self.expressions_for(None)?)?;
                Ok(MapModel::single_valued(f))
            }
            FixtureKind::ViProblem => Ok(MapModel::single_valued(crate::vi::NormalMap::new(self.vi_problem()?))),
            FixtureKind::LojaPair => Err(Error::fixture("kind", "a loja_pair fixture has no map")),
        }
    }

    pub fn vi_problem(&self) -> Result<VIProblem> {
        if self.kind != FixtureKind::ViProblem {
            return Err(Error::fixture("kind", "expected a vi_problem fixture"));
        }
        let c = self
            .convex_set
            .clone()
            .ok_or_else(|| Error::fixture("convex_set", "missing convex set"))?;
        if c.dim() != self.dimension {
            return Err(Error::fixture("convex_set", format!("dimension {} but fixture dimension is {}", c.dim(), self.dimension)));
        }
        c.validate().map_err(|e| Error::fixture("convex_set", e.to_string()))?;
        let f = ExprMap::new(self.dimension, self.expressions_for(Some(self.dimension))?)?;
        VIProblem::new(f, c)
    }

    /// `(φ, ψ)` of a Łojasiewicz pair.
    pub fn loja_pair(&self) -> Result<(Expression, Expression)> {
        if self.kind != FixtureKind::LojaPair {
            return Err(Error::fixture("kind", "expected a loja_pair fixture"));
        }
        let mut e = self.expressions_for(Some(2))?;
        let psi = e.pop().unwrap();
        let phi = e.pop().unwrap();
        Ok((phi, psi))
    }

    /// Shape checks that do not need any numerics.
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::fixture("dimension", "must be at least 1"));
        }
        for (name, b) in &self.boxes {
            b.validate().map_err(|e| Error::fixture(format!("boxes.{name}"), e.to_string()))?;
        }
        let p = &self.parameters;
        for (path, v) in [("parameters.eps", p.eps), ("parameters.tol", p.tol), ("parameters.margin", p.margin)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::fixture(path, format!("must be positive and finite, got {v}")));
                }
            }
        }
        match self.kind {
            FixtureKind::MapAnalysis => {
                let m = self.map_model()?;
                for name in ["x", "y"] {
                    let want = if name == "x" { m.n() } else { m.m() };
                    if let Some(b) = self.boxes.get(name) {
                        check_len(&format!("boxes.{name}.lo"), &b.lo, want)?;
                    }
                }
                self.box_named("x")?;
                if let Some(y) = &p.ystar {
                    check_len("parameters.ystar", y, m.m())?;
                }
            }
            FixtureKind::ViProblem => {
                self.vi_problem()?;
                for name in ["u", "p"] {
                    check_len(&format!("boxes.{name}.lo"), &self.box_named(name)?.lo, self.dimension)?;
                }
                for (path, v) in [("parameters.pstar", &p.pstar), ("parameters.p", &p.p)] {
                    if let Some(v) = v {
                        check_len(path, v, self.dimension)?;
                    }
                }
            }
            FixtureKind::LojaPair => {
                self.loja_pair()?;
                check_len("boxes.k.lo", &self.box_named("k")?.lo, self.dimension)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in builtin_names() {
            let f = load_fixture(&format!("builtin:{name}")).unwrap();
            assert_eq!(f.name, name);
        }
        let d3 = load_fixture("builtin:example-5.1-d3").unwrap();
        assert_eq!(d3.expressions, vec!["x1^3"]);
        assert!((d3.expected.unwrap().alpha.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = r#"{"name": "bad", "kind": "map_analysis", "expressions": ["x1"], "boxes": {}}"#;
        let err = parse_fixture(text, "t").unwrap_err().to_string();
        assert!(err.contains("dimension"), "{err}");
        let text = r#"{"name": "bad", "kind": "map_analysis", "dimension": 1, "expressions": ["x1 +"],
            "boxes": {"x": {"lo": [0], "hi": [1], "resolution": 3}}}"#;
        let err = parse_fixture(text, "t").unwrap_err().to_string();
        assert!(err.contains("expressions[0]") && err.contains("byte"), "{err}");
        let text = r#"{"name": "bad", "kind": "map_analysis", "dimension": 1, "expressions": ["x1"],
            "boxes": {"x": {"lo": [0], "hi": [1], "resolution": "many"}}}"#;
        let err = parse_fixture(text, "t").unwrap_err().to_string();
        assert!(err.contains("boxes.x.resolution"), "{err}");
    }
}
