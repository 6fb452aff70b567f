//! The subcommands. Every output carries the configuration hash, the seed and
//! the schema version; CSV files carry them as leading `#` comment lines.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use serde_json::{json, Map, Value};

use roughhedge::asymptotics::{
    cost_surfaces, general_cost_stats, hw_stdev_surface, predicted_cost_stats, CostStats, EffectiveParams,
};
use roughhedge::hedger::{
    accumulate_costs, at_moneyness, calibrate_dcal, dcal_from_d_param, joint_stdev_stderr, relative_risk, CostTask,
    HedgeOutcome, HedgeScheme, SchemeKind,
};
use roughhedge::mathkit::QuadSpec;
use roughhedge::pricer::{MarketParams, Payoff};
use roughhedge::volsim::io::write_binary;
use roughhedge::volsim::{simulate_market, MarketSimulator};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::errors::invalid;

pub const LOCK_FILE: &str = ".roughhedge.lock";

struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// A validated configuration bound to its locked output directory.
pub struct Context {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
    _lock: Lock,
}

impl Context {
    pub fn open(cfg: ExperimentConfig) -> Result<Self> {
        let out = cfg.output_dir.clone();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let lock = out.join(LOCK_FILE);
        OpenOptions::new().write(true).create_new(true).open(&lock).with_context(|| {
            format!("{} is in use by another command (remove {} if it is stale)", out.display(), lock.display())
        })?;
        Ok(Self { hash: cfg.hash_hex(), out, cfg, _lock: Lock(lock) })
    }

    fn comments(&self) -> Vec<String> {
        vec![
            format!("schema_version={SCHEMA_VERSION}"),
            format!("config_hash={}", self.hash),
            format!("seed={}", self.cfg.seed),
        ]
    }

    fn write_json(&self, name: &str, command: &str, body: Value) -> Result<()> {
        let mut doc = Map::new();
        doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
        doc.insert("command".into(), json!(command));
        doc.insert("config_hash".into(), json!(self.hash));
        doc.insert("seed".into(), json!(self.cfg.seed));
        if let Value::Object(fields) = body {
            doc.extend(fields);
        }
        let path = self.out.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, &Value::Object(doc))?;
        writeln!(w)?;
        w.flush()?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn csv(&self, name: &str, extra: &[String]) -> Result<csv::Writer<BufWriter<File>>> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        for c in self.comments().iter().chain(extra) {
            writeln!(file, "# {c}")?;
        }
        Ok(csv::Writer::from_writer(file))
    }

    fn market(&self) -> Result<(EffectiveParams, MarketParams)> {
        let eff = EffectiveParams::from_model(&self.cfg.model, &QuadSpec::default())
            .context("computing the effective market parameters")?;
        Ok((eff, eff.market_params(&self.cfg.model)))
    }

    fn simulator(&self) -> Result<MarketSimulator> {
        let c = &self.cfg;
        c.grid.check_resolution(c.model.epsilon());
        Ok(MarketSimulator::new(c.model, c.grid, c.x0, c.n_paths, c.seed)?)
    }

    fn theoretical_dcal(&self, mp: &MarketParams) -> f64 {
        dcal_from_d_param(mp.d_param, self.cfg.option.strike, mp.sigma_bar)
    }

    fn market_json(&self, eff: &EffectiveParams, mp: &MarketParams) -> Value {
        json!({
            "effective_params": eff,
            "market_params": mp,
            "theoretical_dcal": self.theoretical_dcal(mp),
        })
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn simulate(ctx: &Context) -> Result<()> {
    let c = &ctx.cfg;
    c.grid.check_resolution(c.model.epsilon());
    let batch = simulate_market(&c.model, &c.grid, c.x0, c.n_paths, c.seed)?;
    write_binary(&batch, &ctx.out.join("paths.bin"))?;
    ctx.write_json(
        "manifest.json",
        "simulate",
        json!({
            "paths_file": "paths.bin",
            "model_hash": batch.model_hash,
            "method": batch.method,
            "n_paths": batch.n_paths,
            "steps": batch.grid.steps,
            "maturity": batch.grid.maturity,
            "x0": batch.x0,
        }),
    )
}

pub fn surfaces(ctx: &Context) -> Result<()> {
    let g = &ctx.cfg.surfaces;
    let k = ctx.cfg.option.strike;
    let spec = QuadSpec::default();
    let mut s = cost_surfaces(&g.theta, &g.d_minus, &spec)?;
    let scale = |m: &mut Vec<Vec<f64>>, f: f64| m.iter_mut().flatten().for_each(|v| *v *= f);
    scale(&mut s.g, k);
    for m in [&mut s.v, &mut s.w_h, &mut s.w_bs, &mut s.w_htilde] {
        scale(m, k * k);
    }
    let mut comments = ctx.comments();
    comments.push(format!("strike={k}; g in units of K, v and w columns in units of K^2"));
    s.write_csv(&ctx.out.join("surfaces.csv"), &comments)?;

    let hw = hw_stdev_surface(&g.tau, &g.moneyness, &spec)?;
    let mut w = ctx.csv("hw_stdev.csv", &["stdev(Y_T^HW) * sigma_bar / (K * Gamma)".into()])?;
    w.write_record(["tau", "moneyness", "normalized_stdev"])?;
    for (tau, row) in g.tau.iter().zip(&hw) {
        for (m, v) in g.moneyness.iter().zip(row) {
            w.write_record([fmt(*tau), fmt(*m), fmt(*v)])?;
        }
    }
    w.flush()?;

    ctx.write_json(
        "surfaces.json",
        "surfaces",
        json!({
            "strike": k,
            "grids": g,
            "files": { "cost_surfaces": "surfaces.csv", "hw_stdev": "hw_stdev.csv" },
        }),
    )
}

struct Run {
    moneyness: f64,
    scheme_index: usize,
    lambda: f64,
    outcome: HedgeOutcome,
}

fn hedge_runs(ctx: &Context, mp: &MarketParams) -> Result<Vec<Run>> {
    let c = &ctx.cfg;
    if c.schemes.is_empty() {
        return Err(invalid(anyhow::anyhow!("no hedging schemes configured")));
    }
    let sim = ctx.simulator()?;
    let mut tasks = Vec::new();
    let mut meta = Vec::new();
    for &m in &c.moneyness_grid {
        for (i, scheme) in c.schemes.iter().enumerate() {
            let (s, o, lambda) = at_moneyness(scheme, &c.option, c.x0, m);
            for &t in &c.exercise_times() {
                tasks.push(CostTask { stride: c.rebalance_stride, ..CostTask::new(s.clone(), o.clone(), t) });
                meta.push((m, i, lambda));
            }
        }
    }
    let outcomes = accumulate_costs(&tasks, mp, &sim)?;
    Ok(meta
        .into_iter()
        .zip(outcomes)
        .map(|((moneyness, scheme_index, lambda), o)| Run {
            moneyness,
            scheme_index,
            lambda,
            outcome: o.rescaled(lambda),
        })
        .collect())
}

pub fn hedge(ctx: &Context) -> Result<()> {
    let c = &ctx.cfg;
    let (eff, mp) = ctx.market()?;
    let runs = hedge_runs(ctx, &mp)?;
    let k = c.option.strike;

    let mut rr = ctx.csv("relative_risk.csv", &[])?;
    rr.write_record([
        "run", "scheme", "scheme_index", "dcal", "moneyness", "exercise_time", "mean_y", "stdev", "stderr",
        "relative_risk",
    ])?;
    let mut entries = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let o = &r.outcome;
        let risk = relative_risk(o, &c.option, &mp, r.moneyness * k)?;
        let file = format!("costs/run_{i:03}.csv");
        let mut w = ctx.csv(
            &file,
            &[format!(
                "scheme={} dcal={} moneyness={} exercise_time={}",
                o.scheme.kind, c.schemes[r.scheme_index].dcal, r.moneyness, o.exercise_time
            )],
        )?;
        w.write_record(["path_id", "cost"])?;
        for (p, cost) in o.costs.iter().enumerate() {
            w.write_record([p.to_string(), fmt(*cost)])?;
        }
        w.flush()?;
        let dcal = c.schemes[r.scheme_index].dcal;
        rr.write_record([
            i.to_string(),
            o.scheme.kind.to_string(),
            r.scheme_index.to_string(),
            fmt(dcal),
            fmt(r.moneyness),
            fmt(o.exercise_time),
            fmt(o.mean_y()),
            fmt(o.stdev),
            fmt(o.stderr),
            fmt(risk),
        ])?;
        let mut summary = serde_json::to_value(o.summary())?;
        summary["dcal"] = json!(dcal);
        let extra = json!({
            "run": i,
            "scheme_index": r.scheme_index,
            "moneyness": r.moneyness,
            "lambda": r.lambda,
            "relative_risk": risk,
            "cost_file": file,
        });
        if let (Value::Object(s), Value::Object(e)) = (&mut summary, extra) {
            s.extend(e);
        }
        entries.push(summary);
    }
    rr.flush()?;

    let mut pairs = ctx.csv("scheme_pairs.csv", &[])?;
    pairs.write_record([
        "moneyness", "exercise_time", "run_a", "scheme_a", "run_b", "scheme_b", "stdev_a", "stdev_b", "joint_stderr",
    ])?;
    for (i, a) in runs.iter().enumerate() {
        for (j, b) in runs.iter().enumerate().skip(i + 1) {
            let same_case = a.moneyness == b.moneyness && a.outcome.exercise_time == b.outcome.exercise_time;
            if !same_case {
                continue;
            }
            let se = joint_stdev_stderr(&a.outcome.costs, &b.outcome.costs);
            pairs.write_record([
                fmt(a.moneyness),
                fmt(a.outcome.exercise_time),
                i.to_string(),
                a.outcome.scheme.kind.to_string(),
                j.to_string(),
                b.outcome.scheme.kind.to_string(),
                fmt(a.outcome.stdev),
                fmt(b.outcome.stdev),
                fmt(se),
            ])?;
        }
    }
    pairs.flush()?;

    let mut body = ctx.market_json(&eff, &mp);
    body["n_paths"] = json!(c.n_paths);
    body["steps"] = json!(c.grid.steps);
    body["strike"] = json!(k);
    body["runs"] = Value::Array(entries);
    ctx.write_json("hedge_summary.json", "hedge", body)
}

pub fn calibrate(ctx: &Context) -> Result<()> {
    let c = &ctx.cfg;
    let (eff, mp) = ctx.market()?;
    let mut kinds: Vec<SchemeKind> = Vec::new();
    for s in &c.schemes {
        if matches!(s.kind, SchemeKind::HW | SchemeKind::BS) && !kinds.contains(&s.kind) {
            kinds.push(s.kind);
        }
    }
    if kinds.is_empty() {
        kinds = vec![SchemeKind::BS, SchemeKind::HW];
    }
    let sim = ctx.simulator()?;
    let search = c.search();
    let theory = ctx.theoretical_dcal(&mp);

    // Objective at the theoretical value, from the same paths.
    let mut tasks = Vec::new();
    let mut lambdas = Vec::new();
    for &kind in &kinds {
        for &m in &search.moneyness {
            let (s, o, lambda) = at_moneyness(&HedgeScheme::new(kind, theory), &c.option, c.x0, m);
            tasks.push(CostTask::new(s, o, c.option.maturity));
            lambdas.push(lambda);
        }
    }
    let at_theory = accumulate_costs(&tasks, &mp, &sim)?;
    let per_kind = search.moneyness.len();

    let mut results = Vec::new();
    for (ki, &kind) in kinds.iter().enumerate() {
        let res = calibrate_dcal(kind, &c.option, &mp, &sim, &search)?;
        let range = ki * per_kind..(ki + 1) * per_kind;
        let objective_at_theory = at_theory[range.clone()]
            .iter()
            .zip(&lambdas[range])
            .map(|(o, l)| l * o.stdev)
            .sum::<f64>()
            / per_kind as f64;
        let curve: Vec<Value> = res.curve.iter().map(|(d, v)| json!({ "dcal": d, "objective": v })).collect();
        results.push(json!({
            "kind": kind,
            "dcal": res.dcal,
            "objective": res.objective,
            "multiple_minima": res.multiple_minima,
            "objective_at_theoretical": objective_at_theory,
            "curve": curve,
        }));
    }
    let mut body = ctx.market_json(&eff, &mp);
    body["n_paths"] = json!(c.n_paths);
    body["steps"] = json!(c.grid.steps);
    body["search"] = json!(search);
    body["results"] = Value::Array(results);
    ctx.write_json("calibration.json", "calibrate", body)
}

/// Monte Carlo results from a `hedge` run of the same configuration.
fn load_mc(ctx: &Context) -> Result<Vec<Value>> {
    let path = ctx.out.join("hedge_summary.json");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    if doc["config_hash"] != json!(ctx.hash) {
        log::warn!("{} comes from a different configuration; ignoring it", path.display());
        return Ok(Vec::new());
    }
    Ok(doc["runs"].as_array().cloned().unwrap_or_default())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

pub fn predict(ctx: &Context) -> Result<()> {
    let c = &ctx.cfg;
    let (eff, mp) = ctx.market()?;
    let k = c.option.strike;
    let mc = load_mc(ctx)?;
    let mut rows = Vec::new();
    for (si, scheme) in c.schemes.iter().enumerate() {
        if scheme.kind == SchemeKind::CustomDa {
            log::warn!("scheme {si} ({}) has no asymptotic prediction; skipped", scheme.kind);
            continue;
        }
        for &m in &c.moneyness_grid {
            for &t in &c.exercise_times() {
                let stats: CostStats = match c.option.payoff {
                    Payoff::Call => predicted_cost_stats(scheme.kind, &c.option, &mp, m * k, t)?,
                    _ => general_cost_stats(scheme.kind, &c.option, &mp, m * k, t)?,
                };
                let found = mc.iter().find(|r| {
                    r["scheme_index"] == json!(si)
                        && r["moneyness"].as_f64().is_some_and(|v| close(v, m))
                        && r["exercise_time"].as_f64().is_some_and(|v| close(v, t))
                });
                let monte_carlo = found.map(|r| {
                    let sd = r["stdev"].as_f64().unwrap_or(f64::NAN);
                    json!({
                        "mean_y": r["mean_y"],
                        "stdev": sd,
                        "variance": sd * sd,
                        "stderr": r["stderr"],
                        "n_paths": r["n_paths"],
                        "variance_ratio": sd * sd / stats.variance,
                    })
                });
                rows.push(json!({
                    "scheme": scheme.kind,
                    "scheme_index": si,
                    "moneyness": m,
                    "exercise_time": t,
                    "predicted": {
                        "mean_y": stats.mean,
                        "variance": stats.variance,
                        "stdev": stats.variance.max(0.0).sqrt(),
                    },
                    "monte_carlo": monte_carlo,
                }));
            }
        }
    }
    let mut body = ctx.market_json(&eff, &mp);
    body["strike"] = json!(k);
    body["predictions"] = Value::Array(rows);
    ctx.write_json("prediction.json", "predict", body)
}
