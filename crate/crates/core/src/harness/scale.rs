use std::time::Duration;

use serde::Serialize;

use crate::classifier::Gamma;
use crate::data::shard;
use crate::error::Result;
use crate::federated::{comm_report, train_flynn_fl, FederationPlan};
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::records::{available_cores, mean_sd, ResultRecord};
use crate::rng::derive_seed;

#[derive(Clone, Debug, Serialize)]
pub struct ScaleRow {
    pub parties: usize,
    pub mean_seconds: f64,
    pub sd_seconds: f64,
    /// Mean time of the first listed party count divided by this row's.
    pub speedup: f64,
    pub bytes_sent: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleSummary {
    pub cores: usize,
    pub rows: Vec<ScaleRow>,
    /// Every party count produced the same model as the first one.
    pub parity: bool,
    pub warnings: Vec<String>,
}

pub struct ScaleOutput {
    pub records: Vec<ResultRecord>,
    pub summary: ScaleSummary,
}

pub fn run_scale(cfg: &ExperimentConfig) -> Result<ScaleOutput> {
    cfg.validate(ExperimentKind::Scale)?;
    let id = cfg.id(ExperimentKind::Scale);
    let model = cfg.model()?;
    let gamma = Gamma::new(model.gamma)?;
    let fed = &cfg.federation;
    let cores = available_cores();
    let mut warnings = Vec::new();
    let most = fed.parties.iter().copied().max().unwrap_or(1);
    if cores < most {
        warnings.push(format!(
            "host has {cores} cores but up to {most} parties were requested; speedups will be understated"
        ));
    }

    let mut records = Vec::new();
    let mut times = vec![Vec::new(); fed.parties.len()];
    let mut bytes = vec![0u64; fed.parties.len()];
    let mut parity = true;
    for rep in 0..cfg.repetitions {
        let rep_seed = derive_seed(cfg.seed, rep as u64);
        let ds = cfg.dataset.load(derive_seed(rep_seed, 0))?;
        let params = model.params(derive_seed(rep_seed, 1000));
        let mut first = None;
        for (slot, &parties) in fed.parties.iter().enumerate() {
            let mut plan = FederationPlan::new(shard(&ds, parties, fed.policy)?, params, gamma.clone());
            plan.transport = fed.transport;
            plan.timeout = Duration::from_secs_f64(fed.timeout_secs);
            if rep == 0 && slot == 0 {
                // Untimed warm-up so the first measurement does not pay for cold pages.
                train_flynn_fl(&plan)?;
            }
            let out = train_flynn_fl(&plan)?;
            let comm = comm_report(&out);
            let secs = out.wall_time.as_secs_f64();
            times[slot].push(secs);
            bytes[slot] = comm.total.bytes_sent;
            match &first {
                None => first = Some(out.model().counts().clone()),
                Some(c) => parity &= c == out.model().counts(),
            }
            let mut r = ResultRecord::new(
                &id,
                "flynn-fl",
                format!(
                    "parties={parties};m={};s={};rho={};gamma={};seed={}",
                    params.m,
                    params.s,
                    params.rho,
                    gamma.text(),
                    params.seed
                ),
                rep,
                rep_seed,
            );
            r.wall_time_s = Some(secs);
            r.bytes_sent = Some(comm.total.bytes_sent);
            r.bytes_received = Some(comm.total.bytes_received);
            records.push(r);
        }
    }

    let base = mean_sd(&times[0]).0;
    let rows = fed
        .parties
        .iter()
        .zip(&times)
        .zip(bytes)
        .map(|((&parties, t), bytes_sent)| {
            let (mean_seconds, sd_seconds) = mean_sd(t);
            ScaleRow {
                parties,
                mean_seconds,
                sd_seconds,
                speedup: base / mean_seconds,
                bytes_sent,
            }
        })
        .collect();
    Ok(ScaleOutput {
        records,
        summary: ScaleSummary {
            cores,
            rows,
            parity,
            warnings,
        },
    })
}
