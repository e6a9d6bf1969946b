use nalgebra::DMatrix;
use rand_distr::{Distribution, Uniform};

use super::{num, ExperimentConfig, ExperimentKind, ExperimentOutput, KdeColumns, MetricReport, MetricRow, OutputFile, Summary, Table};
use crate::bootstrap::{bootstrap, quantile_sorted, Interval};
use crate::counterexample::verify_unidentifiability;
use crate::data::RegimeDataset;
use crate::error::{Error, Result};
use crate::estimator::{fit, fit_reg_baseline, mechanism_parameters, FitConfig, FittedAnm};
use crate::graph::CausalGraph;
use crate::identify2::{bootstrap_identify, identify, DEFAULT_GRID_POINTS};
use crate::metrics::{kde_rank, mae, spearman, uniform_test_points};
use crate::parallel::map_indexed;
use crate::poly::{term_names, PolynomialEquation};
use crate::rng::{rng_from_seed, split_seed};
use crate::scm::{Regime, Scm};
use crate::simgen::{build_semisynthetic_10, build_synthetic_k2, build_synthetic_k3, generate_regime_suite, random_correlation_matrix};

/// Rows of the reference observational sample that defines the test box.
const TEST_BOX_ROWS: usize = 10_000;

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    match config.kind {
        ExperimentKind::Consistency => run_consistency(config),
        ExperimentKind::Bias => run_bias(config).map(|(out, _)| out),
        ExperimentKind::Confounding => run_confounding(config),
        ExperimentKind::Uncertainty => run_uncertainty(config).map(|(out, _)| out),
        ExperimentKind::Counterexample => run_counterexample(config),
        ExperimentKind::Identify2Check => run_identify2_check(config).map(|(out, _)| out),
    }
}

fn k3_truth(seed: u64, c: f64) -> Result<Scm> {
    let sigma = random_correlation_matrix(4, c, split_seed(seed, 1))?;
    build_synthetic_k3(None, &sigma, split_seed(seed, 0))
}

/// Test points in the observational box of `scm` and the true joint effect
/// at each.
fn test_set(scm: &Scm, count: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let obs = scm.sample(&Regime::Observational, TEST_BOX_ROWS, split_seed(seed, 0))?;
    let pts = uniform_test_points(&obs, count, split_seed(seed, 1));
    let truth = rows(&pts).map(|x| scm.joint_effect_oracle(&x)).collect::<Result<_>>()?;
    Ok((pts, truth))
}

fn rows(m: &DMatrix<f64>) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..m.nrows()).map(move |i| m.row(i).iter().copied().collect())
}

fn predict_anm(model: &FittedAnm, pts: &DMatrix<f64>) -> Result<Vec<f64>> {
    rows(pts).map(|x| model.predict_joint_effect(&x)).collect()
}

fn predict_reg(graph: &CausalGraph, eq: &PolynomialEquation, pts: &DMatrix<f64>) -> Vec<f64> {
    let parents = graph.parents(graph.outcome());
    rows(pts)
        .map(|x| {
            let pv: Vec<f64> = parents.iter().map(|&p| x[p]).collect();
            eq.eval_unchecked(&pv)
        })
        .collect()
}

fn condition(c: f64, n: usize) -> String {
    format!("c={c},n={n}")
}

/// Per-replication outcome: metric values by name, or the failure message.
type RepResult = std::result::Result<Vec<(&'static str, f64)>, String>;

struct Cell {
    condition: String,
    method: &'static str,
    metrics: &'static [&'static str],
    results: Vec<RepResult>,
}

fn aggregate(kind: ExperimentKind, cells: &[Cell], level: f64) -> MetricReport {
    let mut out = Vec::new();
    for cell in cells {
        let failures = cell.results.iter().filter(|r| r.is_err()).count();
        for &metric in cell.metrics {
            let values: Vec<f64> = cell
                .results
                .iter()
                .filter_map(|r| r.as_ref().ok())
                .filter_map(|v| v.iter().find(|(m, _)| *m == metric).map(|(_, x)| *x))
                .collect();
            out.push(MetricRow {
                condition: cell.condition.clone(),
                method: cell.method.into(),
                metric: metric.into(),
                summary: Summary::of(&values, level),
                failures,
            });
        }
    }
    MetricReport { kind, rows: out }
}

fn replication_table(cells: &[Cell], columns: &[&'static str]) -> Table {
    let mut header = vec!["condition", "method", "replication", "status"];
    header.extend_from_slice(columns);
    let mut t = Table::new(&header);
    for cell in cells {
        for (r, res) in cell.results.iter().enumerate() {
            let mut row = vec![cell.condition.clone(), cell.method.to_string(), r.to_string()];
            match res {
                Ok(v) => {
                    row.push("ok".into());
                    for c in columns {
                        row.push(v.iter().find(|(m, _)| m == c).map(|(_, x)| num(*x)).unwrap_or_default());
                    }
                }
                Err(e) => {
                    row.push(format!("failed: {e}"));
                    row.extend(columns.iter().map(|_| String::new()));
                }
            }
            t.push(row);
        }
    }
    t
}

/// Joint-effect and parameter MAE of ANM and REG across sample sizes.
pub fn run_consistency(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    const METRICS: &[&str] = &["joint_mae", "param_mae", "outcome_param_mae"];
    let reps = config.replications;
    let mut cells = Vec::new();
    for (ci, &c) in config.confounding_levels.iter().enumerate() {
        let truths: Vec<Result<(Scm, DMatrix<f64>, Vec<f64>)>> = map_indexed(reps, |r| {
            let s = split_seed(split_seed(config.seed, ci as u64), r as u64);
            let scm = k3_truth(s, c)?;
            let (pts, truth) = test_set(&scm, config.test_points, split_seed(s, 2))?;
            Ok((scm, pts, truth))
        });
        let sizes = &config.sample_sizes;
        let results: Vec<(RepResult, RepResult)> = map_indexed(reps * sizes.len(), |task| {
            let (si, r) = (task / reps, task % reps);
            let (scm, pts, truth) = match &truths[r] {
                Ok(t) => t,
                Err(e) => return (Err(e.to_string()), Err(e.to_string())),
            };
            let s = split_seed(split_seed(split_seed(config.seed, ci as u64), r as u64), 100 + si as u64);
            match generate_regime_suite(scm, sizes[si], s) {
                Ok(suite) => (anm_metrics(scm, &suite, pts, truth, &config.fit), reg_metrics(scm, &suite, pts, truth)),
                Err(e) => (Err(e.to_string()), Err(e.to_string())),
            }
        });
        for (si, &n) in sizes.iter().enumerate() {
            let chunk = &results[si * reps..(si + 1) * reps];
            cells.push(Cell { condition: condition(c, n), method: "ANM", metrics: METRICS, results: chunk.iter().map(|x| x.0.clone()).collect() });
            cells.push(Cell { condition: condition(c, n), method: "REG", metrics: METRICS, results: chunk.iter().map(|x| x.1.clone()).collect() });
        }
    }
    let report = aggregate(ExperimentKind::Consistency, &cells, config.interval_level);
    let files = vec![
        OutputFile::new("consistency.csv", report.to_table().to_csv()),
        OutputFile::new("consistency_replications.csv", replication_table(&cells, METRICS).to_csv()),
    ];
    Ok(ExperimentOutput { report, files })
}

fn anm_metrics(scm: &Scm, suite: &[RegimeDataset], pts: &DMatrix<f64>, truth: &[f64], cfg: &FitConfig) -> RepResult {
    let run = || -> Result<Vec<(&'static str, f64)>> {
        let model = fit(suite, scm.graph(), cfg)?;
        let pred = predict_anm(&model, pts)?;
        let y = scm.graph().outcome();
        Ok(vec![
            ("joint_mae", mae(&pred, truth)?),
            ("param_mae", mae(&model.mechanism_parameters(), &mechanism_parameters(scm.equations()))?),
            ("outcome_param_mae", mae(&model.equations[y].coefficients, &scm.equations()[y].coefficients)?),
        ])
    };
    run().map_err(|e| e.to_string())
}

fn reg_metrics(scm: &Scm, suite: &[RegimeDataset], pts: &DMatrix<f64>, truth: &[f64]) -> RepResult {
    let run = || -> Result<Vec<(&'static str, f64)>> {
        let y = scm.graph().outcome();
        let eq = fit_reg_baseline(suite, &scm.graph().parent_names(y))?;
        let pred = predict_reg(scm.graph(), &eq, pts);
        let p = mae(&eq.coefficients, &scm.equations()[y].coefficients)?;
        Ok(vec![("joint_mae", mae(&pred, truth)?), ("param_mae", p), ("outcome_param_mae", p)])
    };
    run().map_err(|e| e.to_string())
}

/// One coefficient's sampling distribution for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub condition: String,
    pub method: String,
    pub coefficient: String,
    pub truth: f64,
    pub summary: Summary,
}

impl BiasRow {
    pub fn bias(&self) -> f64 {
        self.summary.mean - self.truth
    }

    /// Bias in units of the Monte-Carlo standard error.
    pub fn z(&self) -> f64 {
        self.bias() / self.summary.se()
    }
}

fn coefficient_labels(equations: &[PolynomialEquation]) -> Vec<String> {
    equations
        .iter()
        .filter(|e| !e.parents.is_empty())
        .flat_map(|e| term_names(&e.parents).into_iter().map(move |t| format!("{}:{}", e.child, t)))
        .collect()
}

/// Sampling distributions of ANM and REG coefficients against a fixed truth.
pub fn run_bias(config: &ExperimentConfig) -> Result<(ExperimentOutput, Vec<BiasRow>)> {
    let reps = config.replications;
    let mut bias_rows = Vec::new();
    let mut samples = Table::new(&["condition", "method", "replication", "coefficient", "estimate"]);
    for (ci, &c) in config.confounding_levels.iter().enumerate() {
        let scm = k3_truth(split_seed(config.seed, ci as u64), c)?;
        let y = scm.graph().outcome();
        let truth_all = mechanism_parameters(scm.equations());
        let labels_all = coefficient_labels(scm.equations());
        let truth_y = scm.equations()[y].coefficients.clone();
        let labels_y = coefficient_labels(&scm.equations()[y..]);
        for (si, &n) in config.sample_sizes.iter().enumerate() {
            let cond = condition(c, n);
            let fits: Vec<(Result<Vec<f64>>, Result<Vec<f64>>)> = map_indexed(reps, |r| {
                let s = split_seed(split_seed(split_seed(config.seed, ci as u64), 1000 + si as u64), r as u64);
                let suite = match generate_regime_suite(&scm, n, s) {
                    Ok(s) => s,
                    Err(e) => return (Err(Error::Degenerate(e.to_string())), Err(e)),
                };
                let anm = fit(&suite, scm.graph(), &config.fit).map(|m| m.mechanism_parameters());
                let reg = fit_reg_baseline(&suite, &scm.graph().parent_names(y)).map(|e| e.coefficients);
                (anm, reg)
            });
            for (method, labels, truth, pick) in [
                ("ANM", &labels_all, &truth_all, 0usize),
                ("REG", &labels_y, &truth_y, 1usize),
            ] {
                let ok: Vec<(usize, &Vec<f64>)> = fits
                    .iter()
                    .enumerate()
                    .filter_map(|(r, f)| if pick == 0 { f.0.as_ref().ok() } else { f.1.as_ref().ok() }.map(|v| (r, v)))
                    .collect();
                for (j, label) in labels.iter().enumerate() {
                    let values: Vec<f64> = ok.iter().map(|(_, v)| v[j]).collect();
                    bias_rows.push(BiasRow {
                        condition: cond.clone(),
                        method: method.into(),
                        coefficient: label.clone(),
                        truth: truth[j],
                        summary: Summary::of(&values, config.interval_level),
                    });
                }
                for (r, v) in &ok {
                    for (j, label) in labels.iter().enumerate() {
                        samples.push(vec![cond.clone(), method.into(), r.to_string(), label.clone(), num(v[j])]);
                    }
                }
            }
        }
    }
    let mut table = Table::new(&["condition", "method", "coefficient", "truth", "mean", "se", "bias", "z", "replications"]);
    let mut report_rows = Vec::new();
    for b in &bias_rows {
        table.push(vec![
            b.condition.clone(),
            b.method.clone(),
            b.coefficient.clone(),
            num(b.truth),
            num(b.summary.mean),
            num(b.summary.se()),
            num(b.bias()),
            num(b.z()),
            b.summary.count.to_string(),
        ]);
        let s = b.summary;
        report_rows.push(MetricRow {
            condition: b.condition.clone(),
            method: b.method.clone(),
            metric: format!("bias:{}", b.coefficient),
            summary: Summary { mean: s.mean - b.truth, ci_lower: s.ci_lower - b.truth, ci_upper: s.ci_upper - b.truth, ..s },
            failures: config.replications - s.count,
        });
    }
    let report = MetricReport { kind: ExperimentKind::Bias, rows: report_rows };
    let files = vec![OutputFile::new("bias.csv", table.to_csv()), OutputFile::new("bias_samples.csv", samples.to_csv())];
    Ok((ExperimentOutput { report, files }, bias_rows))
}

/// MAE and Spearman of ANM, REG and the true model on the 10-node network
/// across confounding levels.
pub fn run_confounding(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    const METRICS: &[&str] = &["mae", "spearman"];
    let reps = config.replications;
    let n = config.sample_sizes[0];
    let mut cells = Vec::new();
    for &c in &config.confounding_levels {
        let scm = build_semisynthetic_10(split_seed(config.seed, 0), c)?;
        let y = scm.graph().outcome();
        let results: Vec<[RepResult; 3]> = map_indexed(reps, |r| {
            let s = split_seed(split_seed(config.seed, 1), r as u64);
            let prepared = test_set(&scm, config.test_points, split_seed(s, 0))
                .and_then(|(pts, truth)| Ok((generate_regime_suite(&scm, n, split_seed(s, 1))?, pts, truth)));
            let (suite, pts, truth) = match prepared {
                Ok(p) => p,
                Err(e) => return [Err(e.to_string()), Err(e.to_string()), Err(e.to_string())],
            };
            let score = |pred: Result<Vec<f64>>| -> RepResult {
                let run = || -> Result<Vec<(&'static str, f64)>> {
                    let p = pred?;
                    Ok(vec![("mae", mae(&p, &truth)?), ("spearman", spearman(&p, &truth)?)])
                };
                run().map_err(|e| e.to_string())
            };
            let anm = score(fit(&suite, scm.graph(), &config.fit).and_then(|m| predict_anm(&m, &pts)));
            let reg = score(fit_reg_baseline(&suite, &scm.graph().parent_names(y)).map(|eq| predict_reg(scm.graph(), &eq, &pts)));
            let oracle = score(rows(&pts).map(|x| scm.joint_effect_oracle(&x)).collect());
            [anm, reg, oracle]
        });
        for (i, method) in ["ANM", "REG", "ORACLE"].into_iter().enumerate() {
            cells.push(Cell {
                condition: condition(c, n),
                method,
                metrics: METRICS,
                results: results.iter().map(|r| r[i].clone()).collect(),
            });
        }
    }
    let report = aggregate(ExperimentKind::Confounding, &cells, config.interval_level);
    let files = vec![
        OutputFile::new("confounding.csv", report.to_table().to_csv()),
        OutputFile::new("confounding_replications.csv", replication_table(&cells, METRICS).to_csv()),
    ];
    Ok(ExperimentOutput { report, files })
}

/// Percentile prediction intervals of the joint effect at each test point
/// from `b` regime-stratified refits. Returns the intervals and the number of
/// failed refits.
pub fn bootstrap_intervals(
    data: &[RegimeDataset],
    graph: &CausalGraph,
    fit_config: &FitConfig,
    test_points: &DMatrix<f64>,
    b: usize,
    seed: u64,
    level: f64,
) -> Result<(Vec<Interval>, usize)> {
    let run = bootstrap(data, b, seed, |d| {
        let model = fit(d, graph, fit_config)?;
        predict_anm(&model, test_points)
    })?;
    Ok((run.intervals(level), run.failures))
}

/// One test point of the uncertainty experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyRow {
    pub replication: usize,
    pub point: Vec<f64>,
    pub prediction: f64,
    pub truth: f64,
    pub interval: Interval,
    pub kde_rank: usize,
}

/// Bootstrap interval width against observational density rank on the
/// 10-node network.
pub fn run_uncertainty(config: &ExperimentConfig) -> Result<(ExperimentOutput, Vec<UncertaintyRow>)> {
    let c = config.confounding_levels[0];
    let n = config.sample_sizes[0];
    let scm = build_semisynthetic_10(split_seed(config.seed, 0), c)?;
    let k = scm.n_treatments();
    let kde_cols: Vec<usize> = match config.kde_columns {
        KdeColumns::Treatments => (0..k).collect(),
        KdeColumns::OutcomeParents => scm.graph().parents(scm.graph().outcome()),
    };
    let mut all = Vec::new();
    let mut correlations = Vec::new();
    let mut failures = 0;
    for r in 0..config.replications {
        let s = split_seed(split_seed(config.seed, 1), r as u64);
        let suite = generate_regime_suite(&scm, n, split_seed(s, 0))?;
        let obs = &suite[0];
        let pts = uniform_test_points(obs, config.test_points, split_seed(s, 1));
        let model = fit(&suite, scm.graph(), &config.fit)?;
        let pred = predict_anm(&model, &pts)?;
        let (intervals, failed) =
            bootstrap_intervals(&suite, scm.graph(), &config.fit, &pts, config.bootstrap_samples, split_seed(s, 2), config.interval_level)?;
        failures += failed;
        let train = obs.values().select_columns(&kde_cols);
        let ranks = kde_rank(&train, &pts.select_columns(&kde_cols))?;
        let widths: Vec<f64> = intervals.iter().map(Interval::width).collect();
        let rank_f: Vec<f64> = ranks.iter().map(|&x| x as f64).collect();
        correlations.push(spearman(&widths, &rank_f)?);
        for (i, x) in rows(&pts).enumerate() {
            all.push(UncertaintyRow {
                replication: r,
                truth: scm.joint_effect_oracle(&x)?,
                point: x,
                prediction: pred[i],
                interval: intervals[i],
                kde_rank: ranks[i],
            });
        }
    }
    let mut header = vec!["replication".to_string(), "point".to_string()];
    header.extend(scm.names()[..k].iter().cloned());
    header.extend(["prediction", "truth", "lower", "upper", "width", "kde_rank"].map(String::from));
    let mut table = Table::with_header(header);
    for (i, u) in all.iter().enumerate() {
        let mut row = vec![u.replication.to_string(), (i % config.test_points).to_string()];
        row.extend(u.point.iter().map(|v| num(*v)));
        row.extend([u.prediction, u.truth, u.interval.lower, u.interval.upper, u.interval.width()].map(num));
        row.push(u.kde_rank.to_string());
        table.push(row);
    }
    let report = MetricReport {
        kind: ExperimentKind::Uncertainty,
        rows: vec![MetricRow {
            condition: condition(c, n),
            method: "ANM".into(),
            metric: "spearman_width_kde_rank".into(),
            summary: Summary::of(&correlations, config.interval_level),
            failures,
        }],
    };
    let files = vec![
        OutputFile::new("uncertainty.csv", table.to_csv()),
        OutputFile::new("uncertainty_summary.csv", report.to_table().to_csv()),
    ];
    Ok((ExperimentOutput { report, files }, all))
}

/// Exact tables of the two binary models for every configured `p`.
pub fn run_counterexample(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut table = Table::new(&["p", "regime", "variables", "assignment", "p_ddot", "p_tilde"]);
    let mut text = String::new();
    let mut report_rows = Vec::new();
    for &p in &config.probabilities {
        let rep = verify_unidentifiability(p)?;
        for c in rep.shared.iter().chain(&rep.joint) {
            for (k, v) in &c.ddot.probs {
                let key: Vec<String> = k.iter().map(u8::to_string).collect();
                table.push(vec![num(p), c.regime.label(), c.ddot.variables.join(";"), key.join(";"), num(*v), num(c.tilde.prob(k))]);
            }
        }
        text.push_str(&rep.to_text());
        text.push('\n');
        let shared_max = rep.shared.iter().map(|c| c.max_abs_diff).fold(0.0, f64::max);
        for (metric, v) in [("shared_max_abs_diff", shared_max), ("joint_tv_distance", rep.divergence)] {
            report_rows.push(MetricRow {
                condition: format!("p={p}"),
                method: "enumeration".into(),
                metric: metric.into(),
                summary: Summary::of(&[v], config.interval_level),
                failures: 0,
            });
        }
    }
    let report = MetricReport { kind: ExperimentKind::Counterexample, rows: report_rows };
    let files = vec![
        OutputFile::new("counterexample.csv", table.to_csv()),
        OutputFile::new("counterexample.txt", text),
        OutputFile::new("counterexample_summary.csv", report.to_table().to_csv()),
    ];
    Ok(ExperimentOutput { report, files })
}

/// One grid point of the cross-estimator comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Identify2CheckRow {
    pub replication: usize,
    pub x1: f64,
    pub x2: f64,
    pub truth: f64,
    pub constructive: f64,
    pub likelihood: f64,
    pub interval: Interval,
}

impl Identify2CheckRow {
    pub fn agrees(&self) -> bool {
        (self.constructive - self.likelihood).abs() <= 2.0 * self.interval.width()
    }
}

fn k2_truth(seed: u64, c: f64) -> Result<Scm> {
    let mut rng = rng_from_seed(split_seed(seed, 0));
    let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let f2 = [0.0, u.sample(&mut rng)];
    let fy: Vec<f64> = (0..4).map(|_| u.sample(&mut rng)).collect();
    let sigma = random_correlation_matrix(3, c, split_seed(seed, 1))?;
    build_synthetic_k2(&f2, &fy, &sigma)
}

/// Equispaced `side x side` grid between the 10th and 90th percentiles of
/// the observational treatment columns.
fn k2_grid(obs: &RegimeDataset, side: usize) -> Vec<[f64; 2]> {
    let axis = |j: usize| {
        let mut v = obs.column(j);
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (quantile_sorted(&v, 0.1), quantile_sorted(&v, 0.9));
        (0..side).map(|i| if side == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * i as f64 / (side - 1) as f64 }).collect::<Vec<_>>()
    };
    let (a, b) = (axis(0), axis(1));
    a.iter().flat_map(|&x1| b.iter().map(move |&x2| [x1, x2])).collect()
}

/// Constructive two-treatment surface against the likelihood fit, with the
/// constructive surface's bootstrap interval as the yardstick.
pub fn run_identify2_check(config: &ExperimentConfig) -> Result<(ExperimentOutput, Vec<Identify2CheckRow>)> {
    let c = config.confounding_levels[0];
    let n = config.sample_sizes[0];
    let side = ((config.test_points as f64).sqrt().floor() as usize).max(1);
    let per_rep: Vec<Result<Vec<Identify2CheckRow>>> = map_indexed(config.replications, |r| {
        let s = split_seed(split_seed(config.seed, 2), r as u64);
        let scm = k2_truth(split_seed(s, 0), c)?;
        let suite = generate_regime_suite(&scm, n, split_seed(s, 1))?;
        let grid = k2_grid(&suite[0], side);
        let id = identify(&suite, DEFAULT_GRID_POINTS)?;
        let model = fit(&suite, scm.graph(), &config.fit)?;
        let boot = bootstrap_identify(&suite, &grid, config.bootstrap_samples, split_seed(s, 2))?;
        let intervals = boot.intervals(config.interval_level);
        grid.iter()
            .enumerate()
            .map(|(i, p)| {
                Ok(Identify2CheckRow {
                    replication: r,
                    x1: p[0],
                    x2: p[1],
                    truth: scm.joint_effect_oracle(p)?,
                    constructive: id.surface.eval(p[0], p[1]),
                    likelihood: model.predict_joint_effect(p)?,
                    interval: intervals[2 + i],
                })
            })
            .collect()
    });
    let mut all = Vec::new();
    let mut fractions = Vec::new();
    let mut ratios = Vec::new();
    let mut failures = 0;
    let mut table = Table::new(&["replication", "x1", "x2", "truth", "constructive", "likelihood", "lower", "upper", "width", "abs_diff", "agrees"]);
    for rep in per_rep {
        let rows = match rep {
            Ok(r) => r,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let agree = rows.iter().filter(|r| r.agrees()).count() as f64 / rows.len() as f64;
        fractions.push(agree);
        let worst = rows
            .iter()
            .map(|r| (r.constructive - r.likelihood).abs() / r.interval.width())
            .fold(0.0, f64::max);
        ratios.push(worst);
        for r in &rows {
            table.push(vec![
                r.replication.to_string(),
                num(r.x1),
                num(r.x2),
                num(r.truth),
                num(r.constructive),
                num(r.likelihood),
                num(r.interval.lower),
                num(r.interval.upper),
                num(r.interval.width()),
                num((r.constructive - r.likelihood).abs()),
                r.agrees().to_string(),
            ]);
        }
        all.extend(rows);
    }
    let cond = condition(c, n);
    let report = MetricReport {
        kind: ExperimentKind::Identify2Check,
        rows: vec![
            MetricRow { condition: cond.clone(), method: "identify2-vs-ANM".into(), metric: "agreement_fraction".into(), summary: Summary::of(&fractions, config.interval_level), failures },
            MetricRow { condition: cond, method: "identify2-vs-ANM".into(), metric: "max_diff_over_width".into(), summary: Summary::of(&ratios, config.interval_level), failures },
        ],
    };
    let files = vec![
        OutputFile::new("identify2_check.csv", table.to_csv()),
        OutputFile::new("identify2_check_summary.csv", report.to_table().to_csv()),
    ];
    Ok((ExperimentOutput { report, files }, all))
}
