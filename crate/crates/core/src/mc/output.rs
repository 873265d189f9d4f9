use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::Mode;
use super::engine::{BiasRow, Experiment, Replication};
use crate::error::Result;
use crate::perturb::{BoundRow, OpNormSummary};

pub const REPLICATIONS_HEADER: &str = "rep,seed,raw,normalized,covered";
pub const PERTURB_HEADER: &str =
    "index,cluster,seed,ensemble,e_norm,ratio_projector,ratio_nonlinear,ratio_remainder,pass";
pub const BIAS_HEADER: &str = "n,p,df,reps,bias,std_err,naive_bias,naive_std_err,predicted_scale,ratio";
pub const OPNORM_HEADER: &str = "n,reps,mean_norm,std_err,scale,ratio";

// Floats use Rust's shortest round-trip formatting, so files re-parse to the
// exact values.

pub fn write_replications<W: Write>(rows: &[Replication], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{REPLICATIONS_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.rep, r.seed, r.raw, r.normalized, r.covered)?;
    }
    out.flush()
}

pub fn write_bound_rows<W: Write>(rows: &[BoundRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PERTURB_HEADER}")?;
    for b in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            b.index,
            b.cluster,
            b.seed,
            b.ensemble.name(),
            b.e_norm,
            b.report.projector.ratio,
            b.report.nonlinear.ratio,
            b.report.remainder.ratio,
            b.report.pass()
        )?;
    }
    out.flush()
}

pub fn write_bias_table<W: Write>(rows: &[BiasRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{BIAS_HEADER}")?;
    for b in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            b.n, b.p, b.df, b.reps, b.bias, b.std_err, b.naive_bias, b.naive_std_err, b.predicted_scale, b.ratio
        )?;
    }
    out.flush()
}

pub fn write_opnorm_table<W: Write>(rows: &[OpNormSummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{OPNORM_HEADER}")?;
    for o in rows {
        writeln!(out, "{},{},{},{},{},{}", o.n, o.reps, o.mean_norm, o.std_err, o.scale, o.ratio)?;
    }
    out.flush()
}

/// Writes `summary.json` and the mode's CSV into `dir`, creating it if
/// needed. Returns the paths written.
pub fn write_outputs(experiment: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let (name, result) = match experiment.summary.mode {
        Mode::KsGaussian | Mode::KsChisq | Mode::Coverage => {
            let path = dir.join("replications.csv");
            let r = write_replications(&experiment.replications, BufWriter::new(File::create(&path)?));
            (path, r)
        }
        Mode::BiasSweep => {
            let path = dir.join("bias.csv");
            let r = write_bias_table(&experiment.summary.bias_table, BufWriter::new(File::create(&path)?));
            (path, r)
        }
        Mode::PerturbCheck => {
            let path = dir.join("perturb.csv");
            let r = write_bound_rows(&experiment.bound_rows, BufWriter::new(File::create(&path)?));
            (path, r)
        }
        Mode::OpnormCheck => {
            let path = dir.join("opnorm.csv");
            let r = write_opnorm_table(&experiment.summary.opnorm_table, BufWriter::new(File::create(&path)?));
            (path, r)
        }
    };
    result?;
    written.push(name);
    let summary = dir.join("summary.json");
    std::fs::write(&summary, serde_json::to_string_pretty(&experiment.summary)?)?;
    written.push(summary);
    Ok(written)
}

/// Reads a `replications.csv` back.
pub fn read_replications(path: &Path) -> Result<Vec<Replication>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(REPLICATIONS_HEADER) => {}
        other => {
            return Err(crate::error::Error::InvalidArgument(format!(
                "unexpected replications header {other:?}"
            )))
        }
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let bad = || crate::error::Error::InvalidArgument(format!("malformed replications row {line:?}"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(Replication {
                rep: f[0].parse().map_err(|_| bad())?,
                seed: f[1].parse().map_err(|_| bad())?,
                raw: f[2].parse().map_err(|_| bad())?,
                normalized: f[3].parse().map_err(|_| bad())?,
                covered: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
