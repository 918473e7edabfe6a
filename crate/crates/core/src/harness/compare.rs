use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::train::{read_final, FinalReport};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Better {
    Lower,
    Higher,
    Neither,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub better: Better,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run: String,
    pub method: String,
    pub masking: bool,
    pub values: Vec<Option<f64>>,
    /// Difference from the first run, per column.
    pub deltas: Vec<Option<f64>>,
    /// Whether this row holds the best value of each column.
    pub best: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
}

const COLUMNS: [(&str, Better); 9] = [
    ("student_cer", Better::Lower),
    ("student_wer", Better::Lower),
    ("teacher_cer", Better::Lower),
    ("teacher_wer", Better::Lower),
    ("agree_total", Better::Higher),
    ("agree_active", Better::Higher),
    ("blank_student", Better::Neither),
    ("blank_teacher", Better::Neither),
    ("align_shift", Better::Lower),
];

fn values(f: &FinalReport) -> Vec<Option<f64>> {
    let t = &f.test;
    let teacher = t.teacher();
    vec![
        Some(t.student().cer),
        Some(t.student().wer),
        teacher.map(|p| p.cer),
        teacher.map(|p| p.wer),
        t.agreement.map(|a| a.total_acc),
        t.agreement.and_then(|a| a.active_acc),
        Some(t.student().blank_ratio),
        teacher.map(|p| p.blank_ratio),
        t.alignment_shift.and_then(|s| s.mean),
    ]
}

impl Comparison {
    pub fn from_reports(runs: &[(String, FinalReport)]) -> Self {
        let columns: Vec<Column> = COLUMNS
            .iter()
            .map(|&(n, b)| Column { name: n.into(), better: b })
            .collect();
        let vals: Vec<Vec<Option<f64>>> = runs.iter().map(|(_, f)| values(f)).collect();
        let best_of = |c: usize| -> Option<f64> {
            let it = vals.iter().filter_map(|v| v[c]);
            match COLUMNS[c].1 {
                Better::Lower => it.reduce(f64::min),
                Better::Higher => it.reduce(f64::max),
                Better::Neither => None,
            }
        };
        let best: Vec<Option<f64>> = (0..COLUMNS.len()).map(best_of).collect();
        let rows = runs
            .iter()
            .zip(&vals)
            .map(|((name, f), v)| Row {
                run: name.clone(),
                method: f.method.clone(),
                masking: f.masking,
                values: v.clone(),
                deltas: v
                    .iter()
                    .zip(&vals[0])
                    .map(|(x, base)| Some(x.as_ref()? - base.as_ref()?))
                    .collect(),
                best: v.iter().zip(&best).map(|(x, b)| x.is_some() && x == b).collect(),
            })
            .collect();
        Comparison { columns, rows }
    }

    /// Fixed-width table; `*` marks the best entry of a column.
    pub fn to_text(&self) -> String {
        let mut header = vec!["run".to_string(), "method".into(), "mask".into()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        let cell = |v: Option<f64>, best: bool| match v {
            Some(x) => format!("{x:.4}{}", if best { "*" } else { "" }),
            None => "-".into(),
        };
        let mut body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut line = vec![r.run.clone(), r.method.clone(), if r.masking { "on" } else { "off" }.into()];
                line.extend(r.values.iter().zip(&r.best).map(|(&v, &b)| cell(v, b)));
                line
            })
            .collect();
        let base = self.rows.first().map_or("", |r| r.run.as_str()).to_string();
        let mut deltas: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut line = vec![r.run.clone(), format!("-{base}"), String::new()];
                line.extend(r.deltas.iter().map(|d| d.map_or("-".into(), |x| format!("{x:+.4}"))));
                line
            })
            .collect();
        let mut all = vec![header];
        all.append(&mut body);
        let split_at = all.len();
        all.append(&mut deltas);
        let widths: Vec<usize> = (0..all[0].len())
            .map(|c| all.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in all.iter().enumerate() {
            if i == split_at {
                out.push('\n');
            }
            let cells: Vec<String> = r.iter().zip(&widths).map(|(s, &w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Side-by-side test metrics of completed runs.
pub fn cmd_compare(run_dirs: &[PathBuf]) -> Result<Comparison> {
    if run_dirs.len() < 2 {
        return Err(Error::invalid("compare needs at least two run directories"));
    }
    let runs = run_dirs
        .iter()
        .map(|d| {
            let name = d
                .file_name()
                .map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((name, read_final(d)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison::from_reports(&runs))
}
