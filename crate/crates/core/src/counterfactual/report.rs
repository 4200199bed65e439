use std::path::{Path, PathBuf};

use super::{CounterfactualError, CounterfactualReport, Experiment, ExperimentRequest, PredictionDelta};
use crate::data::Label;
use crate::store::{create_artifact_dir, short_digest, write_atomic};

/// Which mean fills the "Average" column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Statistic {
    #[default]
    Absolute,
    Signed,
}

pub struct TableRow<'a> {
    pub feature: &'a str,
    pub report: &'a CounterfactualReport,
}

fn line(feature: &str, kind: &str, avg: &str, max: &str) -> String {
    format!("{feature:<15}{kind:<6}{avg:>7}{max:>9}\n")
}

/// Text table with columns Added feature / Type / Average / Maximum, one
/// line per present class (malignant first), values in percentage points.
pub fn render_table(rows: &[TableRow<'_>], stat: Statistic) -> String {
    let mut out = line("Added feature", "Type", "Average", "Maximum");
    for row in rows {
        let mut feature = row.feature;
        for (label, short) in [(Label::Malignant, "Mal"), (Label::Benign, "Ben")] {
            let Some(s) = row.report.class(label) else {
                continue;
            };
            let avg = match stat {
                Statistic::Absolute => s.mean_abs_pp,
                Statistic::Signed => s.mean_signed_pp,
            };
            out.push_str(&line(feature, short, &format!("{avg:.2}"), &format!("{:.2}", s.max_abs_pp)));
            feature = "";
        }
    }
    out
}

fn flip_token(d: &PredictionDelta) -> &'static str {
    if d.flipped_to_malignant {
        "to_malignant"
    } else if d.flipped_to_benign {
        "to_benign"
    } else {
        "none"
    }
}

/// CSV with header `id,label,p_before,p_after,delta_pp,flip`.
pub fn deltas_csv(deltas: &[PredictionDelta]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "label", "p_before", "p_after", "delta_pp", "flip"])
        .expect("in-memory write");
    for d in deltas {
        w.write_record([
            d.sample_id.as_str(),
            d.label.as_str(),
            &d.p_before.to_string(),
            &d.p_after.to_string(),
            &d.delta_pp.to_string(),
            flip_token(d),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Contents of a persisted experiment directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentFiles {
    pub dir: PathBuf,
    pub request: ExperimentRequest,
    pub report: CounterfactualReport,
    pub deltas_csv: String,
    pub table: String,
}

pub const REQUEST_FILE: &str = "request.json";
pub const REPORT_FILE: &str = "report.json";
pub const DELTAS_FILE: &str = "deltas.csv";
pub const TABLE_FILE: &str = "table.txt";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CounterfactualError + '_ {
    move |source| CounterfactualError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `request.json`, `deltas.csv`, `table.txt` and finally
/// `report.json`; a directory without `report.json` is incomplete.
pub fn persist_experiment(
    root: &Path,
    req: &ExperimentRequest,
    exp: &Experiment,
) -> Result<String, CounterfactualError> {
    let request = serde_json::to_vec_pretty(req).expect("request serializes");
    let (id, dir) = create_artifact_dir(root, &short_digest(&request)).map_err(io_err(root))?;
    let table = render_table(
        &[TableRow {
            feature: req.bias_spec.kind.display_name(),
            report: &exp.report,
        }],
        Statistic::Absolute,
    );
    let report = serde_json::to_vec_pretty(&exp.report).expect("report serializes");
    for (name, bytes) in [
        (REQUEST_FILE, request.as_slice()),
        (DELTAS_FILE, deltas_csv(&exp.deltas).as_bytes()),
        (TABLE_FILE, table.as_bytes()),
        (REPORT_FILE, report.as_slice()),
    ] {
        let path = dir.join(name);
        write_atomic(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(id)
}

pub fn load_experiment(dir: &Path) -> Result<ExperimentFiles, CounterfactualError> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(io_err(&path))
    };
    let parse_err = |name: &str, e: serde_json::Error| CounterfactualError::Corrupt {
        path: dir.join(name),
        message: e.to_string(),
    };
    let report = serde_json::from_str(&read(REPORT_FILE)?).map_err(|e| parse_err(REPORT_FILE, e))?;
    let request = serde_json::from_str(&read(REQUEST_FILE)?).map_err(|e| parse_err(REQUEST_FILE, e))?;
    Ok(ExperimentFiles {
        dir: dir.to_path_buf(),
        request,
        report,
        deltas_csv: read(DELTAS_FILE)?,
        table: read(TABLE_FILE)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterfactual::{summarize, ClassStats};

    fn stats(avg: f64, max: f64) -> ClassStats {
        ClassStats {
            n: 1,
            mean_signed_pp: avg,
            mean_abs_pp: avg,
            max_abs_pp: max,
            flips_to_malignant: 0,
            flips_to_benign: 0,
        }
    }

    fn report(mal: (f64, f64), ben: (f64, f64)) -> CounterfactualReport {
        CounterfactualReport {
            threshold: 0.5,
            malignant: Some(stats(mal.0, mal.1)),
            benign: Some(stats(ben.0, ben.1)),
            pooled: stats(0.0, 0.0),
            n_unlabeled: 0,
            bias_spec: None,
        }
    }

    #[test]
    fn table_layout_golden() {
        let ruler = report((2.21, 22.01), (1.23, 19.91));
        let frame = report((30.77, 62.43), (32.04, 63.66));
        let circle = report((2.27, 15.51), (1.50, 12.78));
        let rows = [
            TableRow { feature: "Ruler", report: &ruler },
            TableRow { feature: "Frame", report: &frame },
            TableRow { feature: "Red circle", report: &circle },
        ];
        let expected = "\
Added feature  Type  Average  Maximum
Ruler          Mal      2.21    22.01
               Ben      1.23    19.91
Frame          Mal     30.77    62.43
               Ben     32.04    63.66
Red circle     Mal      2.27    15.51
               Ben      1.50    12.78
";
        assert_eq!(render_table(&rows, Statistic::Absolute), expected);
    }

    #[test]
    fn signed_column_and_missing_class() {
        let ds = [
            PredictionDelta::new("a", Label::Benign, 0.6, 0.5, 0.5),
            PredictionDelta::new("b", Label::Benign, 0.6, 0.4, 0.5),
        ];
        let r = summarize(&ds, 0.5).unwrap();
        let t = render_table(&[TableRow { feature: "Frame", report: &r }], Statistic::Signed);
        assert_eq!(t.lines().nth(1).unwrap(), "Frame          Ben    -15.00    20.00");
        assert_eq!(t.lines().count(), 2);
    }

    #[test]
    fn csv_layout() {
        let ds = [
            PredictionDelta::new("x,1", Label::Benign, 0.25, 0.75, 0.5),
            PredictionDelta::new("y", Label::Malignant, 0.75, 0.25, 0.5),
        ];
        assert_eq!(
            deltas_csv(&ds),
            "id,label,p_before,p_after,delta_pp,flip\n\"x,1\",benign,0.25,0.75,50,to_malignant\ny,malignant,0.75,0.25,-50,to_benign\n"
        );
    }
}
