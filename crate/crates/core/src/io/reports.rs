use std::io::Write;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;
use crate::evaluation::{EvalReport, RankingReport};

pub fn write_report<T: Serialize, W: Write>(report: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_report<T: DeserializeOwned, R: std::io::Read>(input: R) -> Result<T> {
    Ok(serde_json::from_reader(input)?)
}

/// `theoretical,empirical` rows for a Q-Q plot against Exp(1).
pub fn write_qq_csv<W: Write>(points: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theoretical", "empirical"])?;
    for (x, y) in points {
        w.write_record([format!("{x:.17e}"), format!("{y:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

fn ranking_rows<W: Write>(w: &mut csv::Writer<W>, model: &str, r: &RankingReport) -> Result<()> {
    for (target, scores) in [("tag", &r.tags), ("parent", &r.parents), ("pooled", &r.pooled)] {
        for (k, s) in scores {
            w.write_record([model, target, &k.to_string(), &s.precision.to_string(), &s.ndcg.to_string()])?;
        }
    }
    Ok(())
}

/// Long-format ranking curves: `model,target,k,precision,ndcg`.
pub fn write_ranking_csv<W: Write>(report: &EvalReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "target", "k", "precision", "ndcg"])?;
    ranking_rows(&mut w, "badge", &report.ranking)?;
    ranking_rows(&mut w, "popularity", &report.baselines.popularity)?;
    ranking_rows(&mut w, "recency", &report.baselines.recency)?;
    w.flush()?;
    Ok(())
}
