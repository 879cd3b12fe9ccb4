use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{read_dataset_verbatim, write_dataset, write_rows, write_text, ColumnTransform, Ingested};
use super::Provenance;
use crate::error::{Error, Result};
use crate::inference::{
    diagnose, summarize, waic, ChainDraws, DrawStats, PosteriorDraws, SamplerConfig, Scale, SummaryRequest,
};
use crate::model::{Hyperparameters, Model, ModelSpec, TimeGrid};
use crate::spatial::CoordTransform;

const MANIFEST: &str = "manifest.json";
const DATASET: &str = "dataset.csv";
const DRAWS: &str = "draws.csv";
const LOGLIK: &str = "loglik.csv";
const STAT_COLUMNS: [&str; 7] = ["chain", "draw", "lp", "accept_stat", "tree_depth", "n_leapfrog", "divergent"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub divergences: usize,
    pub post_warmup: usize,
}

/// Everything needed to rebuild the fitted model and its draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: Provenance,
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub sampler: SamplerConfig,
    pub knots: Vec<f64>,
    pub n_risks: usize,
    pub coord_transform: CoordTransform,
    pub covariates: Vec<ColumnTransform>,
    pub w: Option<ColumnTransform>,
    pub data_hash: String,
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub chains: Vec<ChainMeta>,
}

/// A fit reloaded from disk.
pub struct Store {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub model: Model,
    pub draws: PosteriorDraws,
}

/// Summary labels: covariate names for coefficients.
fn label_of(name: &str, m: &Manifest) -> String {
    if name.starts_with("beta_w[") {
        return "w".into();
    }
    name.strip_prefix("beta[")
        .and_then(|s| s.strip_suffix(']'))
        .and_then(|s| s.split_once(','))
        .and_then(|(_, c)| c.parse::<usize>().ok())
        .and_then(|c| m.covariates.get(c - 1))
        .map(|t| t.name.clone())
        .unwrap_or_default()
}

/// Default summary rows: every non-weight parameter, coefficients also on
/// the hazard-ratio scale, then derived hazard rates.
pub fn default_requests(draws: &PosteriorDraws) -> Vec<SummaryRequest> {
    let mut out = Vec::new();
    for n in draws.names() {
        if n.starts_with("z0[") || n.starts_with("z1[") {
            continue;
        }
        out.push(SummaryRequest::new(n.clone(), Scale::Identity));
        if n.starts_with("beta") {
            out.push(SummaryRequest::new(n.clone(), Scale::Exp));
        }
    }
    out.extend(draws.hazard_rate_names().into_iter().map(|n| SummaryRequest::new(n, Scale::Identity)));
    out
}

/// Header and rows of a summary table.
pub fn summary_table(m: &Manifest, draws: &PosteriorDraws, req: &[SummaryRequest]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let rows = summarize(draws, req)?;
    let header: Vec<String> =
        ["name", "label", "scale", "mean", "sd", "q2.5", "q50", "q97.5"].iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let scale = match r.scale {
                Scale::Identity => "identity",
                Scale::Exp => "exp",
            };
            let s = &r.stats;
            vec![
                r.name.clone(),
                label_of(&r.name, m),
                scale.into(),
                s.mean.to_string(),
                s.sd.to_string(),
                s.q025.to_string(),
                s.q50.to_string(),
                s.q975.to_string(),
            ]
        })
        .collect();
    Ok((header, body))
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("provenance".into(), serde_json::to_value(prov)?);
    }
    write_text(path, &(serde_json::to_string_pretty(&v)? + "\n"))
}

/// Writes a complete fit directory.
pub fn save(
    dir: &Path,
    prov: &Provenance,
    ingested: &Ingested,
    model: &Model,
    sampler: &SamplerConfig,
    draws: &PosteriorDraws,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        provenance: prov.clone(),
        spec: *model.spec(),
        hyper: model.hyper().clone(),
        sampler: sampler.clone(),
        knots: model.grid().knots().to_vec(),
        n_risks: model.data().n_risks(),
        coord_transform: ingested.coords,
        covariates: ingested.covariates.clone(),
        w: ingested.w.clone(),
        data_hash: ingested.hash.clone(),
        ids: ingested.ids.clone(),
        names: draws.names().to_vec(),
        chains: draws
            .chains()
            .iter()
            .map(|c| ChainMeta {
                step_size: c.step_size,
                inv_metric: c.inv_metric.clone(),
                divergences: c.divergences,
                post_warmup: c.post_warmup,
            })
            .collect(),
    };
    write_text(&dir.join(MANIFEST), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    write_dataset(&dir.join(DATASET), prov, &ingested.ids, model.data())?;

    let lambda = draws.hazard_rate_names();
    let lambda_draws: Vec<Vec<Vec<f64>>> = lambda.iter().map(|n| draws.quantity(n)).collect::<Result<_>>()?;
    let mut header: Vec<String> = STAT_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(draws.names().iter().cloned());
    header.extend(lambda.iter().cloned());
    let mut rows = Vec::with_capacity(draws.total_draws());
    let mut ll_rows = Vec::with_capacity(draws.total_draws());
    for (c, chain) in draws.chains().iter().enumerate() {
        for (d, (vals, st)) in chain.values.iter().zip(&chain.stats).enumerate() {
            let mut row = vec![
                (c + 1).to_string(),
                (d + 1).to_string(),
                st.lp.to_string(),
                st.accept_stat.to_string(),
                st.tree_depth.to_string(),
                st.n_leapfrog.to_string(),
                u8::from(st.divergent).to_string(),
            ];
            row.extend(vals.iter().map(f64::to_string));
            row.extend(lambda_draws.iter().map(|q| q[c][d].to_string()));
            rows.push(row);
            let mut ll = vec![(c + 1).to_string(), (d + 1).to_string()];
            ll.extend(chain.loglik[d].iter().map(f64::to_string));
            ll_rows.push(ll);
        }
    }
    write_rows(&dir.join(DRAWS), prov, &header, &rows)?;
    let mut ll_header = vec!["chain".to_string(), "draw".into()];
    ll_header.extend(ingested.ids.iter().cloned());
    write_rows(&dir.join(LOGLIK), prov, &ll_header, &ll_rows)?;

    write_json(&dir.join("diagnostics.json"), prov, &diagnose(draws)?)?;
    write_json(&dir.join("waic.json"), prov, &waic(&draws.loglik_rows())?)?;
    let (header, body) = summary_table(&manifest, draws, &default_requests(draws))?;
    write_rows(&dir.join("summary.csv"), prov, &header, &body)?;
    Ok(manifest)
}

fn read_matrix(path: &Path, skip: usize) -> Result<(Vec<String>, Vec<(usize, Vec<f64>)>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let chain: usize = rec[0].parse().map_err(|_| corrupt(path, "chain index"))?;
        let vals = rec.iter().skip(skip).map(|s| s.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
        rows.push((chain, vals.map_err(|_| corrupt(path, "numeric field"))?));
    }
    Ok((header, rows))
}

fn corrupt(path: &Path, what: &str) -> Error {
    Error::InvalidState(format!("{}: malformed {what}", path.display()))
}

impl Store {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Error::InvalidArgument(format!("{} is not a fit directory: {e}", dir.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let data = read_dataset_verbatim(&dir.join(DATASET), manifest.n_risks)?;
        let grid = TimeGrid::from_knots(manifest.knots.clone())?;
        let model = Model::new(data, manifest.spec, manifest.hyper.clone(), grid)?;

        let path = dir.join(DRAWS);
        let (header, rows) = read_matrix(&path, 2)?;
        let dim = manifest.names.len();
        if header.len() < STAT_COLUMNS.len() + dim || header[STAT_COLUMNS.len()..STAT_COLUMNS.len() + dim] != manifest.names[..] {
            return Err(corrupt(&path, "header"));
        }
        let ll_path = dir.join(LOGLIK);
        let (_, ll_rows) = read_matrix(&ll_path, 2)?;
        if ll_rows.len() != rows.len() {
            return Err(corrupt(&ll_path, "row count"));
        }
        let mut chains: Vec<ChainDraws> = manifest
            .chains
            .iter()
            .map(|m| ChainDraws {
                values: Vec::new(),
                loglik: Vec::new(),
                stats: Vec::new(),
                step_size: m.step_size,
                inv_metric: m.inv_metric.clone(),
                divergences: m.divergences,
                post_warmup: m.post_warmup,
            })
            .collect();
        for ((c, r), (_, ll)) in rows.into_iter().zip(ll_rows) {
            let chain = chains.get_mut(c.wrapping_sub(1)).ok_or_else(|| corrupt(&path, "chain index"))?;
            let st = DrawStats {
                lp: r[0],
                accept_stat: r[1],
                tree_depth: r[2] as usize,
                n_leapfrog: r[3] as usize,
                divergent: r[4] != 0.0,
            };
            chain.stats.push(st);
            chain.values.push(r[5..5 + dim].to_vec());
            chain.loglik.push(ll);
        }
        let mut draws = PosteriorDraws::new(manifest.names.clone(), chains, manifest.provenance.seed);
        draws.config_hash = Some(manifest.provenance.config.clone());
        Ok(Store { dir: dir.to_path_buf(), manifest, model, draws })
    }
}
