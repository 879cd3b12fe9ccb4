use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::LoadedConfig;
use super::data::{ingest, write_dataset, write_rows, write_text};
use super::geo::{points_geojson, Mask};
use super::store::{default_requests, save, summary_table, write_json, Store};
use super::{Command, GridSize, Provenance};
use crate::clustering::cluster_surface;
use crate::error::{Error, Result};
use crate::inference::{diagnose, fit, summary_stats, waic, DiagnosticsReport, Scale, SummaryRequest, WaicReport};
use crate::model::{build_time_grid, GpApprox, Model, SpatialMode};
use crate::simulate::{generate_dataset, SimConfig, SimTruth, COVARIATE_NAMES};
use crate::spatial::{krige_exact, krige_hsgp, sum_to_zero, MaternParams};

pub(super) fn dispatch(cmd: &Command, config: &LoadedConfig, seed: u64) -> Result<()> {
    let prov = Provenance::new(config, seed);
    match cmd {
        Command::Simulate { out, n } => simulate(config, &prov, out, *n),
        Command::Fit { data, out } => fit_cmd(config, &prov, data, out),
        Command::Krige { draws, out, grid } => krige(config, &prov, draws, out, *grid),
        Command::Cluster { draws, out, k } => cluster(config, &prov, draws, out, *k),
        Command::Diagnose { draws, out } => diagnose_cmd(&prov, draws, out.as_deref()),
        Command::Waic { draws, out } => waic_cmd(&prov, draws, out.as_deref()),
        Command::Summarize { draws, quantity, out } => summarize_cmd(&prov, draws, quantity, out.as_deref()),
    }
}

#[derive(Serialize)]
struct TruthFile<'a> {
    n: usize,
    censor_time: f64,
    covariates: &'a [&'a str],
    truth: &'a SimTruth,
}

fn simulate(config: &LoadedConfig, prov: &Provenance, out: &Path, n: Option<usize>) -> Result<()> {
    let section = config.config.simulation.as_ref();
    let n = n
        .or(section.map(|s| s.n))
        .ok_or_else(|| Error::Config("simulation.n is required (config or --n)".into()))?;
    let mut sim = SimConfig::default_design(n, prov.seed);
    if let Some(s) = section {
        sim.truth.censoring = s.censoring;
    }
    let result = generate_dataset(&sim)?;
    std::fs::create_dir_all(out)?;
    let ids: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    write_dataset(&out.join("data.csv"), prov, &ids, &result.dataset)?;
    let truth = TruthFile { n, censor_time: result.censor_time, covariates: &COVARIATE_NAMES, truth: &result.truth };
    write_json(&out.join("truth.json"), prov, &truth)?;
    let header: Vec<String> = ["id", "coord_x", "coord_y", "theta0_1", "theta1_1", "theta0_2", "theta1_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let c = result.dataset.coords()[i];
            let mut r = vec![ids[i].clone(), c[0].to_string(), c[1].to_string()];
            r.extend(result.surfaces.iter().map(|s| s[i].to_string()));
            r
        })
        .collect();
    write_rows(&out.join("surfaces.csv"), prov, &header, &rows)?;
    let events = |code: u8| result.dataset.events().iter().filter(|&&e| e == code).count();
    println!(
        "simulated {n} subjects: {} censored, {} risk 1, {} risk 2 (censoring time {:.4})",
        events(0),
        events(1),
        events(2),
        result.censor_time
    );
    Ok(())
}

fn fit_cmd(config: &LoadedConfig, prov: &Provenance, data: &Path, out: &Path) -> Result<()> {
    let spec = config.config.model_spec();
    let ingested = ingest(data, spec.spatial != SpatialMode::None)?;
    let grid = build_time_grid(ingested.dataset.max_time(), spec.intervals)?;
    let model = Model::new(ingested.dataset.clone(), spec, config.config.hyper.clone(), grid)?;
    let sampler = config.config.sampler_config(prov.seed);
    let mut draws = fit(&model, &sampler)?;
    draws.config_hash = Some(prov.config.clone());
    save(out, prov, &ingested, &model, &sampler, &draws)?;
    let report = diagnose(&draws)?;
    let w = waic(&draws.loglik_rows())?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "{} draws, {} divergent transitions, max R-hat {}, WAIC {:.2}",
        draws.total_draws(),
        report.divergences,
        report.max_rhat().map_or("n/a".into(), |r| format!("{r:.4}")),
        w.waic
    );
    Ok(())
}

/// Posterior draws of one surface at prediction locations.
#[derive(Debug, Clone)]
pub struct PredictedSurface {
    /// `intercept` or `slope`; slopes are on the hazard-ratio scale
    /// `exp(beta_w + theta1)`.
    pub kind: &'static str,
    /// 1-based risk index.
    pub risk: usize,
    /// Rows are draws, columns locations.
    pub draws: Vec<Vec<f64>>,
}

/// Kriges every spatial surface of a fitted model to `coords` (normalized
/// scale). Intercept draws are centered to sum to zero.
pub fn predict_surfaces(model: &Model, draws: &crate::inference::PosteriorDraws, coords: &[[f64; 2]], seed: u64) -> Result<Vec<PredictedSurface>> {
    let spatial = model.spec().spatial;
    if spatial == SpatialMode::None {
        return Err(Error::InvalidArgument("the model has no spatial surfaces".into()));
    }
    if coords.is_empty() {
        return Err(Error::InvalidArgument("no prediction locations".into()));
    }
    let states = draws.states(model.layout())?;
    let new_basis = match (model.spec().gp, model.hsgp_basis()) {
        (GpApprox::Hsgp(_), Some(b)) => Some(b.at(coords)?),
        _ => None,
    };
    let mut out = Vec::new();
    for j in 0..model.data().n_risks() {
        for (kind, on) in [("intercept", spatial.has_intercept()), ("slope", spatial.has_slope())] {
            if !on {
                continue;
            }
            let rows: Result<Vec<Vec<f64>>> = states
                .par_iter()
                .enumerate()
                .map(|(s, state)| {
                    let risk = &state.risks[j];
                    let sp = if kind == "intercept" { &risk.intercept } else { &risk.slope };
                    let sp = sp.as_ref().expect("layout provides the surface");
                    let params = MaternParams::new(sp.tau, sp.lengthscale)?;
                    let mut v = match &new_basis {
                        Some(nb) => krige_hsgp(&sp.z, model.hsgp_basis().expect("hsgp model"), nb, params)?,
                        None => {
                            let (th0, th1) = model.surfaces(state, j)?;
                            let obs = if kind == "intercept" { th0 } else { th1 }.expect("surface present");
                            let mut rng = ChaCha8Rng::seed_from_u64(seed);
                            rng.set_stream(s as u64);
                            krige_exact(&obs, model.data().coords(), coords, params, &mut rng)?
                        }
                    };
                    if kind == "intercept" {
                        sum_to_zero(&mut v);
                    } else {
                        let bw = risk.beta_w.unwrap_or(0.0);
                        v.iter_mut().for_each(|t| *t = (bw + *t).exp());
                    }
                    Ok(v)
                })
                .collect();
            out.push(PredictedSurface { kind, risk: j + 1, draws: rows? });
        }
    }
    Ok(out)
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
}

fn read_xy(path: &Path) -> Result<Vec<[f64; 2]>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let h = rdr.headers()?.clone();
    let (ix, iy) = match (h.iter().position(|c| c == "x"), h.iter().position(|c| c == "y")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidArgument(format!("{}: expected columns x,y", path.display()))),
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = |i: usize| {
            rec[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::InvalidArgument(format!("{}: bad coordinate '{}'", path.display(), &rec[i]))
            })
        };
        out.push([p(ix)?, p(iy)?]);
    }
    Ok(out)
}

fn krige(config: &LoadedConfig, prov: &Provenance, dir: &Path, out: &Path, grid: Option<GridSize>) -> Result<()> {
    let store = Store::load(dir)?;
    let k = &config.config.kriging;
    let tr = store.manifest.coord_transform;
    let mut raw: Vec<[f64; 2]> = match &k.coords {
        Some(p) => read_xy(&config.resolve(p))?,
        None => {
            let [nx, ny] = grid.map_or(k.grid, |g| g.0);
            let obs = store.model.data().coords();
            let lo = |d: usize| obs.iter().map(|c| c[d]).fold(f64::INFINITY, f64::min);
            let hi = |d: usize| obs.iter().map(|c| c[d]).fold(f64::NEG_INFINITY, f64::max);
            let ys: Vec<f64> = linspace(lo(1), hi(1), ny).collect();
            linspace(lo(0), hi(0), nx).flat_map(|x| ys.iter().map(move |&y| tr.invert([x, y]))).collect()
        }
    };
    if let Some(m) = &k.mask {
        let mask = Mask::from_path(&config.resolve(m))?;
        raw.retain(|&p| mask.contains(p));
    }
    let coords: Vec<[f64; 2]> = raw.iter().map(|&p| tr.apply(p)).collect();
    let surfaces = predict_surfaces(&store.model, &store.draws, &coords, prov.seed)?;
    std::fs::create_dir_all(out)?;
    let stat_cols = ["mean", "sd", "q2.5", "q97.5"];
    for s in &surfaces {
        let stem = format!("{}_{}", s.kind, s.risk);
        let q = coords.len();
        let stats: Vec<Vec<f64>> = (0..q)
            .map(|i| {
                let col: Vec<f64> = s.draws.iter().map(|r| r[i]).collect();
                summary_stats(&col).map(|st| vec![st.mean, st.sd, st.q025, st.q975])
            })
            .collect::<Result<_>>()?;
        let mut header = vec!["x".to_string(), "y".into()];
        header.extend(stat_cols.iter().map(|c| c.to_string()));
        let rows: Vec<Vec<String>> = (0..q)
            .map(|i| {
                let mut r = vec![raw[i][0].to_string(), raw[i][1].to_string()];
                r.extend(stats[i].iter().map(f64::to_string));
                r
            })
            .collect();
        write_rows(&out.join(format!("{stem}.csv")), prov, &header, &rows)?;
        let mut dheader = vec!["x".to_string(), "y".into()];
        dheader.extend((1..=s.draws.len()).map(|d| format!("d{d}")));
        let drows: Vec<Vec<String>> = (0..q)
            .map(|i| {
                let mut r = vec![raw[i][0].to_string(), raw[i][1].to_string()];
                r.extend(s.draws.iter().map(|d| d[i].to_string()));
                r
            })
            .collect();
        write_rows(&out.join(format!("{stem}_draws.csv")), prov, &dheader, &drows)?;
        if k.geojson {
            write_text(&out.join(format!("{stem}.geojson")), &points_geojson(&raw, &stat_cols, &stats))?;
        }
    }
    println!("kriged {} surface(s) at {} location(s)", surfaces.len(), coords.len());
    Ok(())
}

/// Reads `x,y,d1..dS` and returns locations and the draws × locations matrix.
fn read_surface_draws(path: &Path) -> Result<(Vec<[f64; 2]>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let h = rdr.headers()?.clone();
    if h.len() < 3 || &h[0] != "x" || &h[1] != "y" {
        return Err(Error::InvalidArgument(format!("{}: expected columns x,y,d1,...", path.display())));
    }
    let s = h.len() - 2;
    let mut locs = Vec::new();
    let mut draws = vec![Vec::new(); s];
    for rec in rdr.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        locs.push([vals[0], vals[1]]);
        for (d, v) in draws.iter_mut().zip(&vals[2..]) {
            d.push(*v);
        }
    }
    Ok((locs, draws))
}

fn cluster(config: &LoadedConfig, prov: &Provenance, path: &Path, out: &Path, k: Option<usize>) -> Result<()> {
    let c = &config.config.clustering;
    let k = k.unwrap_or(c.k);
    let (locs, draws) = read_surface_draws(path)?;
    let res = cluster_surface(&draws, k, c.restarts, prov.seed)?;
    std::fs::create_dir_all(out)?;
    let header: Vec<String> = ["x", "y", "label", "prob"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = locs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let l = res.labels[i];
            vec![p[0].to_string(), p[1].to_string(), l.to_string(), res.assignment_probs[i][l - 1].to_string()]
        })
        .collect();
    write_rows(&out.join("labels.csv"), prov, &header, &rows)?;
    let mut pheader = vec!["x".to_string(), "y".into()];
    pheader.extend((1..=k).map(|j| format!("p{j}")));
    let prows: Vec<Vec<String>> = locs
        .iter()
        .zip(&res.assignment_probs)
        .map(|(p, pr)| {
            let mut r = vec![p[0].to_string(), p[1].to_string()];
            r.extend(pr.iter().map(f64::to_string));
            r
        })
        .collect();
    write_rows(&out.join("probabilities.csv"), prov, &pheader, &prows)?;
    #[derive(Serialize)]
    struct Centers<'a> {
        k: usize,
        restarts: usize,
        centers: &'a [f64],
        loss: f64,
    }
    write_json(&out.join("centers.json"), prov, &Centers { k, restarts: c.restarts, centers: &res.centers, loss: res.loss })?;
    println!("centers {:?}, expected loss {:.6}", res.centers, res.loss);
    Ok(())
}

fn load_stores(dirs: &[PathBuf]) -> Result<Vec<Store>> {
    if dirs.len() > 2 {
        return Err(Error::InvalidArgument("at most two fit directories can be compared".into()));
    }
    let stores: Vec<Store> = dirs.iter().map(|d| Store::load(d)).collect::<Result<_>>()?;
    if let [a, b] = stores.as_slice() {
        if a.manifest.data_hash != b.manifest.data_hash {
            return Err(Error::InvalidArgument(format!(
                "fits use different data ({} vs {})",
                a.manifest.data_hash, b.manifest.data_hash
            )));
        }
    }
    Ok(stores)
}

fn emit_json<T: Serialize>(prov: &Provenance, value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, prov, value),
        None => {
            let mut v = serde_json::to_value(value)?;
            if let serde_json::Value::Object(map) = &mut v {
                map.insert("provenance".into(), serde_json::to_value(prov)?);
            }
            let mut o = std::io::stdout().lock();
            writeln!(o, "{}", serde_json::to_string_pretty(&v)?)?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Labeled<T> {
    model: String,
    #[serde(flatten)]
    report: T,
}

fn model_label(s: &Store) -> String {
    let spec = s.manifest.spec;
    let gp = match spec.gp {
        GpApprox::Hsgp(_) => "hsgp",
        GpApprox::Exact => "exact",
    };
    if spec.spatial == SpatialMode::None {
        "non-spatial".into()
    } else {
        format!("{} ({gp})", spec.spatial.label())
    }
}

fn diagnose_cmd(prov: &Provenance, dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let stores = load_stores(dirs)?;
    let reports: Vec<Labeled<DiagnosticsReport>> = stores
        .iter()
        .map(|s| Ok(Labeled { model: model_label(s), report: diagnose(&s.draws)? }))
        .collect::<Result<_>>()?;
    for r in &reports {
        for w in &r.report.warnings {
            eprintln!("warning [{}]: {w}", r.model);
        }
    }
    #[derive(Serialize)]
    struct Fits<T> {
        fits: Vec<T>,
    }
    emit_json(prov, &Fits { fits: reports }, out)
}

fn waic_cmd(prov: &Provenance, dirs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let stores = load_stores(dirs)?;
    let reports: Vec<Labeled<WaicReport>> = stores
        .iter()
        .map(|s| Ok(Labeled { model: model_label(s), report: waic(&s.draws.loglik_rows())? }))
        .collect::<Result<_>>()?;
    #[derive(Serialize)]
    struct Comparison {
        /// Second WAIC minus first.
        difference: f64,
        se_difference: f64,
    }
    #[derive(Serialize)]
    struct Fits<T> {
        fits: Vec<T>,
        comparison: Option<Comparison>,
    }
    let comparison = match reports.as_slice() {
        [a, b] => {
            let d: Vec<f64> = a.report.pointwise.iter().zip(&b.report.pointwise).map(|(x, y)| y - x).collect();
            let n = d.len() as f64;
            let m = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
            Some(Comparison { difference: b.report.waic - a.report.waic, se_difference: (n * var).sqrt() })
        }
        _ => None,
    };
    for r in &reports {
        eprintln!("{}: WAIC {:.2} (p_waic {:.2})", r.model, r.report.waic, r.report.p_waic);
    }
    emit_json(prov, &Fits { fits: reports, comparison }, out)
}

fn parse_request(q: &str) -> SummaryRequest {
    match q.strip_prefix("exp(").and_then(|s| s.strip_suffix(')')) {
        Some(inner) => SummaryRequest::new(inner, Scale::Exp),
        None => SummaryRequest::new(q, Scale::Identity),
    }
}

fn summarize_cmd(prov: &Provenance, dir: &Path, quantities: &[String], out: Option<&Path>) -> Result<()> {
    let store = Store::load(dir)?;
    let requests: Vec<SummaryRequest> = if quantities.is_empty() {
        default_requests(&store.draws)
    } else {
        quantities.iter().map(|q| parse_request(q)).collect()
    };
    let (header, rows) = summary_table(&store.manifest, &store.draws, &requests)?;
    match out {
        Some(p) => write_rows(p, prov, &header, &rows),
        None => {
            let mut w = prov.csv_to(std::io::stdout().lock())?;
            w.write_record(&header)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}
