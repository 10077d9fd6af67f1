//! Command dispatch: fixture plus options in, [`Report`] out.

use serde::Serialize;
use serde_json::{json, Value};

use super::fixture::{Fixture, FixtureKind};
use crate::error::{Error, Result};
use crate::lojasiewicz::{compute_mu, fit_growth, verify_inequality, LojaOptions};
use crate::map_model::{AnalysisBox, MapModel};
use crate::metrics::PREIMAGE_TOL;
use crate::regularity::{
    equivalence_audit, estimate_metric_regularity, estimate_pseudo_holder, estimate_subregularity, test_extremum_free,
    test_openness, Estimate, EstimatorOptions, PseudoMode,
};
use crate::vi::{
    solve_normal_equation, sweep_solution_map, vi_equivalence_audit, vi_residual, NormalMap, ViSolver,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    AnalyzeMap,
    EstimateHolder,
    CheckOpenness,
    FitLoja,
    SolveVi,
    SweepVi,
    Audit,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::AnalyzeMap,
        Command::EstimateHolder,
        Command::CheckOpenness,
        Command::FitLoja,
        Command::SolveVi,
        Command::SweepVi,
        Command::Audit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::AnalyzeMap => "analyze-map",
            Command::EstimateHolder => "estimate-holder",
            Command::CheckOpenness => "check-openness",
            Command::FitLoja => "fit-loja",
            Command::SolveVi => "solve-vi",
            Command::SweepVi => "sweep-vi",
            Command::Audit => "audit",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    Metric,
    Sub,
    #[default]
    PseudoLower,
    PseudoFull,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the primary box (`x`, `u` or `k`).
    pub box_name: Option<String>,
    pub resolution: Option<usize>,
    pub tol: Option<f64>,
    pub property: Property,
}

/// One CSV file of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub fixture: String,
    pub command: Command,
    pub parameters: Value,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_seconds: Option<f64>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{}", crate::report::round_sig(v))
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

fn to_value(v: &impl Serialize) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Boxes and points resolved from the fixture and options.
struct Context<'a> {
    fixture: &'a Fixture,
    opts: &'a RunOptions,
    tol: f64,
    est: EstimatorOptions,
}

/// `F` with its boxes: the fixture map, or the normal map of a VI at `−pstar`.
struct MapView {
    model: MapModel,
    xbox: AnalysisBox,
    ybox: Option<AnalysisBox>,
    ystar: Vec<f64>,
}

impl<'a> Context<'a> {
    fn new(fixture: &'a Fixture, opts: &'a RunOptions) -> Result<Self> {
        let p = &fixture.parameters;
        let tol = opts.tol.or(p.tol).unwrap_or(PREIMAGE_TOL);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Invalid {
                what: "tolerance",
                reason: format!("must be positive and finite, got {tol}"),
            });
        }
        let d = EstimatorOptions::default();
        let est = EstimatorOptions {
            tol,
            shell_depth: p.shell_depth.unwrap_or(d.shell_depth),
            ball_resolution: p.ball_resolution.unwrap_or(d.ball_resolution),
        };
        Ok(Context { fixture, opts, tol, est })
    }

    fn sized(&self, b: &AnalysisBox) -> Result<AnalysisBox> {
        let b = match self.opts.resolution {
            Some(r) => b.with_resolution(r),
            None => b.clone(),
        };
        b.validate()?;
        Ok(b)
    }

    fn primary(&self, default: &str) -> Result<AnalysisBox> {
        let name = self.opts.box_name.as_deref().unwrap_or(default);
        self.sized(self.fixture.box_named(name)?)
    }

    fn secondary(&self, name: &str) -> Result<AnalysisBox> {
        self.sized(self.fixture.box_named(name)?)
    }

    fn pstar(&self) -> Vec<f64> {
        self.fixture
            .parameters
            .pstar
            .clone()
            .unwrap_or_else(|| vec![0.0; self.fixture.dimension])
    }

    fn view(&self) -> Result<MapView> {
        match self.fixture.kind {
            FixtureKind::MapAnalysis => {
                let model = self.fixture.map_model()?;
                let ystar = self.fixture.parameters.ystar.clone().unwrap_or_else(|| vec![0.0; model.m()]);
                let ybox = match self.fixture.boxes.get("y") {
                    Some(b) => Some(self.sized(b)?),
                    None => None,
                };
                Ok(MapView {
                    xbox: self.primary("x")?,
                    ybox,
                    ystar,
                    model,
                })
            }
            FixtureKind::ViProblem => {
                let pbox = self.secondary("p")?;
                let ybox = AnalysisBox {
                    lo: pbox.hi.iter().map(|v| -v).collect(),
                    hi: pbox.lo.iter().map(|v| -v).collect(),
                    resolution: pbox.resolution,
                };
                Ok(MapView {
                    model: self.fixture.map_model()?,
                    xbox: self.primary("u")?,
                    ybox: Some(ybox),
                    ystar: self.pstar().iter().map(|v| -v).collect(),
                })
            }
            FixtureKind::LojaPair => Err(Error::fixture("kind", "this command needs a map_analysis or vi_problem fixture")),
        }
    }

    fn eps(&self, ybox: Option<&AnalysisBox>) -> f64 {
        self.fixture
            .parameters
            .eps
            .unwrap_or_else(|| ybox.map_or(0.5, |b| 0.25 * b.diameter()))
    }
}

fn need_y(view: &MapView) -> Result<&AnalysisBox> {
    view.ybox.as_ref().ok_or_else(|| Error::fixture("boxes.y", "missing box"))
}

fn sample_table(e: &Estimate) -> Table {
    Table {
        file: "samples.csv",
        header: ["s", "r", "x_index", "y_index"].map(String::from).to_vec(),
        rows: e
            .samples
            .samples
            .iter()
            .map(|s| vec![num(s.s), num(s.r), s.x.to_string(), s.y.to_string()])
            .collect(),
    }
}

/// Runs `cmd` on `fixture`. The report has no timing; callers add it.
pub fn run_command(cmd: Command, fixture: &Fixture, opts: &RunOptions) -> Result<Report> {
    let ctx = Context::new(fixture, opts)?;
    let mut tables = Vec::new();
    let mut params = json!({ "tol": ctx.tol, "estimator": ctx.est });
    let results = match cmd {
        Command::AnalyzeMap => {
            let v = ctx.view()?;
            params["boxes"] = json!({ "x": v.xbox });
            params["ystar"] = json!(v.ystar);
            let fiber = v.model.inverse_set(&v.ystar, &v.xbox, ctx.tol)?;
            let closed_graph = match v.model.check_closed_graph(&v.xbox) {
                Ok(()) => json!({ "verdict": "Closed" }),
                Err(e @ Error::ClosedGraph { .. }) => json!({ "verdict": "Violated", "detail": e.to_string() }),
                Err(e) => return Err(e),
            };
            let extremum = if v.model.n() == 1 && v.model.m() == 1 && v.model.as_single_valued().is_some() {
                to_value(&test_extremum_free(&v.model, &v.xbox, ctx.tol)?)?
            } else {
                Value::Null
            };
            json!({
                "n": v.model.n(),
                "m": v.model.m(),
                "fiber": fiber,
                "closed_graph": closed_graph,
                "extremum": extremum,
            })
        }
        Command::EstimateHolder => {
            let v = ctx.view()?;
            let ybox = need_y(&v)?;
            let eps = ctx.eps(Some(ybox));
            params["boxes"] = json!({ "x": v.xbox, "y": ybox });
            params["ystar"] = json!(v.ystar);
            params["eps"] = json!(eps);
            params["property"] = json!(opts.property);
            let est = match opts.property {
                Property::Metric => estimate_metric_regularity(&v.model, &v.ystar, &v.xbox, eps, ybox, &ctx.est)?,
                Property::Sub => estimate_subregularity(&v.model, &v.ystar, &v.xbox, ybox, &ctx.est)?,
                Property::PseudoLower | Property::PseudoFull => {
                    let mode = if opts.property == Property::PseudoLower { PseudoMode::Lower } else { PseudoMode::Full };
                    estimate_pseudo_holder(&v.model.clone().inverse(), &v.ystar, &v.xbox, eps, mode, &ctx.est)?
                }
            };
            tables.push(sample_table(&est));
            json!({ "fit": est.fit, "samples_total": est.samples.total, "samples_kept": est.samples.samples.len() })
        }
        Command::CheckOpenness => {
            let v = ctx.view()?;
            let ybox = need_y(&v)?;
            params["boxes"] = json!({ "x": v.xbox, "y": ybox });
            let rep = test_openness(&v.model, &v.xbox, ybox, ctx.tol)?;
            tables.push(Table {
                file: "modulus.csv",
                header: ["level", "step", "max_oscillation"].map(String::from).to_vec(),
                rows: rep
                    .modulus_table
                    .iter()
                    .map(|r| vec![r.level.to_string(), num(r.step), num(r.max_oscillation)])
                    .collect(),
            });
            to_value(&rep)?
        }
        Command::FitLoja => {
            let (phi, psi) = fixture.loja_pair()?;
            let k = ctx.primary("k")?;
            let margin = fixture.parameters.margin.unwrap_or(2.0);
            params["boxes"] = json!({ "k": k });
            params["margin"] = json!(margin);
            let lopts = LojaOptions::default();
            let profile = compute_mu(&phi, &psi, &k, None, None, &lopts)?;
            let fit = fit_growth(&profile, &lopts);
            let violation = if fit.c.is_finite() && fit.alpha.is_finite() {
                Some(verify_inequality(&phi, &psi, &k, fit.c, fit.alpha, margin)?)
            } else {
                None
            };
            let wrong = match fixture.parameters.wrong_alpha {
                Some(a) if fit.c.is_finite() => {
                    params["wrong_alpha"] = json!(a);
                    Some(verify_inequality(&phi, &psi, &k, fit.c, a, margin)?)
                }
                _ => None,
            };
            tables.push(Table {
                file: "mu.csv",
                header: ["t", "mu", "band", "count"].map(String::from).to_vec(),
                rows: profile
                    .t_grid
                    .iter()
                    .zip(&profile.mu_values)
                    .zip(profile.band.iter().zip(&profile.counts))
                    .map(|((t, m), (b, c))| vec![num(*t), m.map_or(String::new(), num), num(*b), c.to_string()])
                    .collect(),
            });
            json!({
                "fit": fit,
                "violation": violation.map(num),
                "wrong_alpha_violation": wrong.map(num),
                "m_sup": profile.m_sup,
                "zero_gap": profile.zero_gap,
                "zero_gap_refined": profile.zero_gap_refined,
            })
        }
        Command::SolveVi => {
            let problem = fixture.vi_problem()?;
            let ubox = ctx.primary("u")?;
            let p = fixture.parameters.p.clone().unwrap_or_else(|| ctx.pstar());
            params["boxes"] = json!({ "u": ubox });
            params["p"] = json!(p);
            let roots = solve_normal_equation(&problem, &p, &ubox, ctx.tol)?;
            let normal = NormalMap::new(problem.clone());
            let solver = ViSolver::new(&normal, &ubox, ctx.tol)?;
            let solutions = solver.solutions(&p)?;
            let residuals = solutions
                .points()
                .iter()
                .map(|x| vi_residual(&problem, &p, x, solver.probes(), ctx.tol).map(|r| num(r.value())))
                .collect::<Result<Vec<String>>>()?;
            json!({
                "p": p,
                "normal_roots": roots,
                "solutions": solutions,
                "cardinality": solutions.len(),
                "vi_residuals": residuals,
            })
        }
        Command::SweepVi => {
            let problem = fixture.vi_problem()?;
            let ubox = ctx.primary("u")?;
            let pbox = ctx.secondary("p")?;
            let pstar = ctx.pstar();
            let eps = ctx.eps(Some(&pbox));
            params["boxes"] = json!({ "u": ubox, "p": pbox });
            params["pstar"] = json!(pstar);
            params["eps"] = json!(eps);
            let rep = sweep_solution_map(&problem, &pbox, &ubox, ctx.tol, Some(&pstar), Some(eps), &ctx.est)?;
            let n = problem.n();
            let mut header: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
            header.push("cardinality".into());
            header.push("index".into());
            header.extend((1..=n).map(|i| format!("x{i}")));
            let mut rows = Vec::new();
            for (p, set) in rep.p_grid.iter().zip(&rep.solutions) {
                let lead: Vec<String> = p.iter().map(|v| num(*v)).chain([set.len().to_string()]).collect();
                if set.is_empty() {
                    let mut r = lead.clone();
                    r.extend(std::iter::repeat(String::new()).take(n + 1));
                    rows.push(r);
                }
                for (i, x) in set.points().iter().enumerate() {
                    let mut r = lead.clone();
                    r.push(i.to_string());
                    r.extend(x.iter().map(|v| num(*v)));
                    rows.push(r);
                }
            }
            tables.push(Table {
                file: "sweep.csv",
                header,
                rows,
            });
            to_value(&rep)?
        }
        Command::Audit => match fixture.kind {
            FixtureKind::MapAnalysis => {
                let v = ctx.view()?;
                let ybox = need_y(&v)?;
                let eps = ctx.eps(Some(ybox));
                params["boxes"] = json!({ "x": v.xbox, "y": ybox });
                params["ystar"] = json!(v.ystar);
                params["eps"] = json!(eps);
                to_value(&equivalence_audit(&v.model, &v.ystar, &v.xbox, ybox, eps, fixture.semialgebraic, &ctx.est)?)?
            }
            FixtureKind::ViProblem => {
                let problem = fixture.vi_problem()?;
                let ubox = ctx.primary("u")?;
                let pbox = ctx.secondary("p")?;
                let pstar = ctx.pstar();
                let eps = ctx.eps(Some(&pbox));
                params["boxes"] = json!({ "u": ubox, "p": pbox });
                params["pstar"] = json!(pstar);
                params["eps"] = json!(eps);
                to_value(&vi_equivalence_audit(&problem, &ubox, &pbox, &pstar, eps, &ctx.est)?)?
            }
            FixtureKind::LojaPair => {
                return Err(Error::fixture("kind", "audit needs a map_analysis or vi_problem fixture"));
            }
        },
    };
    Ok(Report {
        tool: "regulab",
        version: env!("CARGO_PKG_VERSION"),
        fixture: fixture.name.clone(),
        command: cmd,
        parameters: params,
        results,
        timing_seconds: None,
        tables,
    })
}
