use std::path::Path;

use jointfx_core::bootstrap::quantile_sorted;
use jointfx_core::counterexample::verify_unidentifiability;
use jointfx_core::data::{read_regime_csv_file, write_regime_csv};
use jointfx_core::estimator::{fit, fit_reg_baseline, FitConfig, FittedAnm};
use jointfx_core::graph::GraphDoc;
use jointfx_core::harness::{self, num, ExperimentConfig, Manifest, OutputFile, Table};
use jointfx_core::identify2::{identify, DEFAULT_GRID_POINTS};
use jointfx_core::rng::split_seed;
use jointfx_core::simgen::{build_semisynthetic_10, build_synthetic_k2, build_synthetic_k3, generate_regime_suite, random_correlation_matrix};
use jointfx_core::{CausalGraph, PolynomialEquation, RegimeDataset};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{out_dir, Cli, Command, Failure, Global, Method, Model};

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Simulate { model, n, c } => {
            no_config(g, "simulate")?;
            simulate(g, model, n, c)
        }
        Command::Fit { data, graph, method } => fit_cmd(g, &data, &graph, method),
        Command::Predict { model, points } => {
            no_config(g, "predict")?;
            predict(g, &model, &points)
        }
        Command::Identify2 { data, grid } => {
            no_config(g, "identify2")?;
            identify2(g, &data, grid)
        }
        Command::Counterexample { p, csv } => {
            no_config(g, "counterexample")?;
            counterexample(g, p, csv)
        }
        Command::Experiment { kind, verify } => experiment(g, kind, verify),
    }
}

fn no_config(g: &Global, command: &str) -> Result<(), Failure> {
    match g.config {
        Some(_) => Err(Failure::Usage(format!("--config is not used by `{command}`"))),
        None => Ok(()),
    }
}

fn finish(g: &Global, default_dir: &str, command: &str, config: serde_json::Value, files: &[OutputFile]) -> Result<(), Failure> {
    let dir = out_dir(g, default_dir);
    let manifest = Manifest::new(command, g.seed.unwrap_or(0), config, files);
    for p in harness::write_outputs(&dir, &manifest, files)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn simulate(g: &Global, model: Model, n: usize, c: f64) -> Result<(), Failure> {
    let seed = g.seed.unwrap_or(0);
    let scm = match model {
        Model::K2 => {
            let sigma = random_correlation_matrix(3, c, split_seed(seed, 1))?;
            build_synthetic_k2(&[0.0, 0.8], &[0.2, 0.5, -0.7, 0.3], &sigma)?
        }
        Model::K3 => build_synthetic_k3(None, &random_correlation_matrix(4, c, split_seed(seed, 1))?, split_seed(seed, 0))?,
        Model::Network => build_semisynthetic_10(split_seed(seed, 0), c)?,
    };
    let suite = generate_regime_suite(&scm, n, split_seed(seed, 2))?;
    let mut csv = Vec::new();
    write_regime_csv(&suite, &mut csv)?;
    let mut scm_json = scm.to_json()?;
    scm_json.push('\n');
    let mut graph_json = serde_json::to_string_pretty(&scm.graph().to_doc())?;
    graph_json.push('\n');
    let files = vec![
        OutputFile::new("scm.json", scm_json),
        OutputFile::new("graph.json", graph_json),
        OutputFile::new("data.csv", String::from_utf8(csv).expect("csv is utf-8")),
    ];
    let model_name = format!("{model:?}").to_lowercase();
    finish(g, "out", "simulate", json!({ "model": model_name, "n": n, "c": c }), &files)
}

/// Pooled-regression model as written by `fit --method reg`.
#[derive(Debug, Serialize, Deserialize)]
struct RegModel {
    method: String,
    graph: GraphDoc,
    outcome: PolynomialEquation,
}

fn read_graph(path: &Path) -> Result<CausalGraph, Failure> {
    let doc: GraphDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(CausalGraph::from_doc(&doc)?)
}

fn fit_cmd(g: &Global, data: &Path, graph: &Path, method: Method) -> Result<(), Failure> {
    let datasets = read_regime_csv_file(data)?;
    let graph = read_graph(graph)?;
    let config: FitConfig = match &g.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => FitConfig::default(),
    };
    let (name, mut body) = match method {
        Method::Anm => {
            let model = fit(&datasets, &graph, &config)?;
            eprintln!("status {:?} after {} rounds, log-likelihood {}", model.status, model.rounds, model.fit_trace.last().copied().unwrap_or(f64::NAN));
            ("model.json", model.to_json()?)
        }
        Method::Reg => {
            let y = graph.outcome();
            let outcome = fit_reg_baseline(&datasets, &graph.parent_names(y))?;
            let m = RegModel { method: "reg".into(), graph: graph.to_doc(), outcome };
            ("model.json", serde_json::to_string_pretty(&m)?)
        }
    };
    body.push('\n');
    let files = vec![OutputFile::new(name, body)];
    let cfg = json!({ "data": data, "method": format!("{method:?}").to_lowercase(), "fit": config });
    finish(g, "out", "fit", cfg, &files)
}

enum Predictor {
    Anm(FittedAnm),
    Reg(CausalGraph, PolynomialEquation),
}

impl Predictor {
    fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("method").and_then(|m| m.as_str()) == Some("reg") {
            let m: RegModel = serde_json::from_value(value)?;
            Ok(Predictor::Reg(CausalGraph::from_doc(&m.graph)?, m.outcome))
        } else {
            Ok(Predictor::Anm(FittedAnm::from_json(&text)?))
        }
    }

    fn graph(&self) -> &CausalGraph {
        match self {
            Predictor::Anm(m) => &m.graph,
            Predictor::Reg(g, _) => g,
        }
    }

    fn predict(&self, x: &[f64]) -> Result<f64, Failure> {
        match self {
            Predictor::Anm(m) => Ok(m.predict_joint_effect(x)?),
            Predictor::Reg(g, eq) => {
                let pv: Vec<f64> = g.parents(g.outcome()).iter().map(|&p| x[p]).collect();
                Ok(eq.eval(&pv)?)
            }
        }
    }
}

fn predict(g: &Global, model: &Path, points: &Path) -> Result<(), Failure> {
    let predictor = Predictor::load(model)?;
    let graph = predictor.graph();
    let treatments: Vec<String> = graph.nodes()[..graph.n_treatments()].to_vec();
    let mut reader = csv::Reader::from_path(points)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let cols: Vec<usize> = treatments
        .iter()
        .map(|t| header.iter().position(|h| h == t).ok_or_else(|| Failure::Usage(format!("points file lacks column `{t}`"))))
        .collect::<Result<_, _>>()?;
    let mut names: Vec<&str> = treatments.iter().map(String::as_str).collect();
    names.push("prediction");
    let mut table = Table::new(&names);
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let x: Vec<f64> = cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Failure::Usage(format!("row {}: bad number in column `{}`", i + 1, header[c])))
            })
            .collect::<Result<_, _>>()?;
        let y = predictor.predict(&x)?;
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.push(num(y));
        table.push(row);
    }
    let files = vec![OutputFile::new("predictions.csv", table.to_csv())];
    finish(g, "out", "predict", json!({ "model": model, "points": points }), &files)
}

#[derive(Debug, Serialize)]
struct Identify2Summary {
    f2_coefficients: Vec<f64>,
    sigma_ux: [[f64; 2]; 2],
    sigma_y1: f64,
    sigma_y2: f64,
    degenerate: bool,
    surface_coefficients: Vec<f64>,
}

fn identify2(g: &Global, paths: &[std::path::PathBuf], grid: usize) -> Result<(), Failure> {
    if grid < 2 {
        return Err(Failure::Usage("--grid must be at least 2".into()));
    }
    let mut data: Vec<RegimeDataset> = Vec::new();
    for p in paths {
        data.extend(read_regime_csv_file(p)?);
    }
    let id = identify(&data, DEFAULT_GRID_POINTS)?;
    let summary = Identify2Summary {
        f2_coefficients: id.f2.coefficients.clone(),
        sigma_ux: id.geometry.sigma_ux,
        sigma_y1: id.geometry.sigma_uy[0],
        sigma_y2: id.geometry.sigma_uy[1],
        degenerate: id.geometry.degenerate,
        surface_coefficients: id.surface.coefficients(),
    };
    let obs = data.iter().find(|d| d.tag() == &jointfx_core::RegimeTag::Observational).expect("identify checked regimes");
    let axis = |j: usize| {
        let mut v = obs.column(j);
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (quantile_sorted(&v, 0.05), quantile_sorted(&v, 0.95));
        (0..grid).map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64).collect::<Vec<_>>()
    };
    let (a, b) = (axis(0), axis(1));
    let names = obs.names();
    let mut table = Table::with_header(vec![names[0].clone(), names[1].clone(), "effect".into()]);
    for &x1 in &a {
        for &x2 in &b {
            table.push(vec![num(x1), num(x2), num(id.surface.eval(x1, x2))]);
        }
    }
    let mut body = serde_json::to_string_pretty(&summary)?;
    body.push('\n');
    let files = vec![OutputFile::new("identify2.json", body), OutputFile::new("surface.csv", table.to_csv())];
    finish(g, "out", "identify2", json!({ "data": paths, "grid": grid }), &files)
}

fn counterexample(g: &Global, p: f64, csv: bool) -> Result<(), Failure> {
    let report = verify_unidentifiability(p)?;
    if csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_text());
    }
    if g.out.is_some() {
        let files = vec![OutputFile::new("counterexample.txt", report.to_text()), OutputFile::new("counterexample.csv", report.to_csv())];
        finish(g, "out", "counterexample", json!({ "p": p }), &files)?;
    }
    Ok(())
}

fn experiment(g: &Global, kind: harness::ExperimentKind, verify: bool) -> Result<(), Failure> {
    let mut config = match &g.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?, Some(kind))?,
        None => ExperimentConfig::defaults(kind),
    };
    if let Some(s) = g.seed {
        config.seed = s;
    }
    let dir = g
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(kind.name()));
    if verify {
        let bad = harness::verify_run(&config, &dir)?;
        if bad.is_empty() {
            println!("verified {}: outputs are identical", dir.display());
            return Ok(());
        }
        return Err(Failure::Usage(format!("outputs differ from {}: {}", dir.display(), bad.join(", "))));
    }
    let out = harness::run_and_write(&config, &dir)?;
    print!("{}", out.report.to_table().to_csv());
    println!("wrote {} files and {} to {}", out.files.len(), harness::MANIFEST_NAME, dir.display());
    Ok(())
}
