//! Plot rendering from the CSVs a run leaves behind.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evalstats::EvaluationRecord;
use crate::importance::CfibpBars;
use crate::plot::{cfibp_svg, curves_svg, mean_curve, Reference};

/// `algorithm,fold,curve,x,y`; curve is `roc`, `prc` or `no_skill`.
pub fn write_curves_csv(path: &Path, records: &[EvaluationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "fold", "curve", "x", "y"])?;
    for r in records {
        let fold = r.fold.to_string();
        for (curve, pts) in [("roc", &r.roc_points), ("prc", &r.prc_points)] {
            for (x, y) in pts {
                w.write_record([r.algorithm.as_str(), &fold, curve, &format!("{x}"), &format!("{y}")])?;
            }
        }
        if !r.prc_points.is_empty() {
            w.write_record([r.algorithm.as_str(), &fold, "no_skill", "0", &format!("{}", r.no_skill)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| Error::data(format!("{}: '{s}' is not a number", path.display())))
}

pub fn read_cfibp_csv(path: &Path, variant: u8) -> Result<CfibpBars> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "feature" || &header[1] != "total_bar" {
        return Err(Error::data(format!("{} is not a composite importance table", path.display())));
    }
    let algorithms: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let (mut features, mut totals, mut contributions) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        features.push(rec[0].to_string());
        totals.push(parse_f64(&rec[1], path)?);
        contributions.push(rec.iter().skip(2).map(|v| parse_f64(v, path)).collect::<Result<Vec<_>>>()?);
    }
    Ok(CfibpBars { variant, algorithms, features, totals, contributions })
}

type Curves = BTreeMap<String, BTreeMap<(String, usize), Vec<(f64, f64)>>>;

fn read_curves(path: &Path) -> Result<(Curves, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut curves: Curves = BTreeMap::new();
    let mut no_skill = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::data(format!("{}: expected 5 columns", path.display())));
        }
        let fold: usize = rec[1].parse().map_err(|_| Error::data(format!("{}: bad fold '{}'", path.display(), &rec[1])))?;
        let (x, y) = (parse_f64(&rec[3], path)?, parse_f64(&rec[4], path)?);
        if &rec[2] == "no_skill" {
            no_skill.push(y);
            continue;
        }
        curves.entry(rec[2].to_string()).or_default().entry((rec[0].to_string(), fold)).or_default().push((x, y));
    }
    Ok((curves, no_skill))
}

fn mean_series(by_fold: Option<&BTreeMap<(String, usize), Vec<(f64, f64)>>>) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut grouped: BTreeMap<&str, Vec<&[(f64, f64)]>> = BTreeMap::new();
    for ((alg, _), pts) in by_fold.into_iter().flatten() {
        grouped.entry(alg.as_str()).or_default().push(pts);
    }
    grouped.into_iter().map(|(alg, c)| (alg.to_string(), mean_curve(&c))).collect()
}

/// Write `plots/` from `importance/cfibp_v*.csv` and `evaluation/curves.csv`.
pub fn render_plots(dir: &Path, top_n: usize) -> Result<()> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    for v in 1..=4u8 {
        let bars = read_cfibp_csv(&dir.join("importance").join(format!("cfibp_v{v}.csv")), v)?.top(top_n);
        std::fs::write(plots.join(format!("cfibp_v{v}.svg")), cfibp_svg(&bars, &format!("Composite feature importance, variant {v}")))?;
    }
    let (curves, no_skill) = read_curves(&dir.join("evaluation").join("curves.csv"))?;
    let roc = mean_series(curves.get("roc"));
    std::fs::write(
        plots.join("roc_summary.svg"),
        curves_svg("Mean ROC", "False positive rate", "True positive rate", &roc, Reference::Diagonal),
    )?;
    let ratio = if no_skill.is_empty() { 0.0 } else { no_skill.iter().sum::<f64>() / no_skill.len() as f64 };
    let prc = mean_series(curves.get("prc"));
    std::fs::write(
        plots.join("prc_summary.svg"),
        curves_svg("Mean PRC", "Recall", "Precision", &prc, Reference::Horizontal(ratio)),
    )?;
    Ok(())
}
