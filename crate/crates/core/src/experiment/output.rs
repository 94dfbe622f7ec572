use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::summary::{Ribbon, WindowCloud, QUANTILES};
use super::{ExperimentConfig, GroundTruth, PosteriorSummary};
use crate::error::{Error, Result};
use crate::likelihood::ObservationSeries;
use crate::sis::{BundleMember, SequentialResult, TrajectoryBundle};

pub struct EmitInput<'a> {
    pub config: &'a ExperimentConfig,
    pub summary: &'a PosteriorSummary,
    pub result: &'a SequentialResult,
    pub truth: Option<&'a GroundTruth>,
}

fn parse_err(path: &Path, line: usize, reason: impl std::fmt::Display) -> Error {
    Error::Parse {
        what: format!("{}:{line}", path.display()),
        reason: reason.to_string(),
    }
}

fn ribbons_csv(s: &PosteriorSummary) -> String {
    let mut out = String::from("day,series,q05,q25,q50,q75,q95\n");
    for r in &s.ribbons {
        for t in 0..r.len() {
            write!(out, "{},{}", s.first_day + t as u32, r.series).unwrap();
            for b in &r.bands {
                write!(out, ",{}", b[t]).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

fn cloud_csv(c: &WindowCloud) -> String {
    let mut out = String::from("theta,rho,class\n");
    for (class, pts) in [("prior", &c.prior), ("posterior", &c.posterior)] {
        for (t, r) in pts {
            writeln!(out, "{t},{r},{class}").unwrap();
        }
    }
    out
}

fn trajectories_csv(b: &TrajectoryBundle) -> String {
    let mut out = String::from("member,particle,lineage,day,true_cases,reported_cases,deaths\n");
    for (i, m) in b.members.iter().enumerate() {
        let lineage = m
            .lineage
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        for t in 0..m.true_cases.len() {
            writeln!(
                out,
                "{i},{},{lineage},{},{},{},{}",
                m.particle,
                b.first_day + t as u32,
                m.true_cases[t],
                m.reported_cases[t],
                m.deaths[t]
            )
            .unwrap();
        }
    }
    out
}

fn truth_csv(t: &GroundTruth) -> String {
    let mut out = String::from("day,theta,rho,true_cases,reported_cases,deaths\n");
    let tr = &t.trajectory;
    for i in 0..tr.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            tr.start_day + i as u32,
            t.theta_by_day[i],
            t.rho_by_day[i],
            tr.cases[i],
            t.observations.cases[i],
            tr.deaths[i]
        )
        .unwrap();
    }
    out
}

fn observations_csv(o: &ObservationSeries) -> String {
    let mut out = String::from("day,reported_cases,deaths\n");
    for (i, c) in o.cases.iter().enumerate() {
        let d = o
            .deaths
            .as_ref()
            .map(|d| d[i].to_string())
            .unwrap_or_default();
        writeln!(out, "{},{c},{d}", o.start_day + i as u32).unwrap();
    }
    out
}

fn manifest_json(input: &EmitInput) -> Result<String> {
    let windows: Vec<serde_json::Value> = input
        .result
        .windows
        .iter()
        .map(|w| {
            serde_json::json!({
                "window": w.window,
                "days": [w.days.0, w.days.1],
                "fit_days": [w.fit_days.0, w.fit_days.1],
                "particles": w.particles.len(),
                "ess": w.ess,
                "distinct_survivors": w.outputs.len(),
            })
        })
        .collect();
    let doc = serde_json::json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": input.config,
        "windows": windows,
    });
    serde_json::to_string_pretty(&doc)
        .map(|s| s + "\n")
        .map_err(|e| Error::Parse {
            what: "manifest.json".into(),
            reason: e.to_string(),
        })
}

/// Write every artifact into `out_dir`. On failure nothing written by this
/// call is left behind.
pub fn emit(input: &EmitInput, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let s = input.summary;
    if s.ribbons.iter().any(Ribbon::is_empty)
        || s.clouds.is_empty()
        || s.clouds.iter().any(|c| c.posterior.is_empty())
    {
        return Err(Error::InvalidArgument(
            "empty posterior: nothing to emit".into(),
        ));
    }
    let mut files: Vec<(String, String)> = vec![("ribbons.csv".into(), ribbons_csv(s))];
    for c in &s.clouds {
        files.push((format!("posterior_window_{}.csv", c.window), cloud_csv(c)));
    }
    files.push((
        "trajectories.csv".into(),
        trajectories_csv(&input.result.bundle),
    ));
    if let Some(t) = input.truth {
        files.push(("ground_truth.csv".into(), truth_csv(t)));
        files.push(("observations.csv".into(), observations_csv(&t.observations)));
    }
    files.push(("manifest.json".into(), manifest_json(input)?));

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let path = out_dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(Error::io(path, e));
        }
        written.push(path);
    }
    Ok(written)
}

fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => return Err(parse_err(path, 1, format!("expected header `{header}`"))),
    }
    Ok(lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::to_string).collect()))
        .collect())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| parse_err(path, line, format!("`{v}`: {e}")))
}

/// Inverse of the `ribbons.csv` writer: first day and the ribbons.
pub fn read_ribbons(path: &Path) -> Result<(u32, Vec<Ribbon>)> {
    let mut first_day = None;
    let mut ribbons: Vec<Ribbon> = Vec::new();
    for (line, row) in read_rows(path, "day,series,q05,q25,q50,q75,q95")? {
        if row.len() != 2 + QUANTILES.len() {
            return Err(parse_err(path, line, "wrong number of fields"));
        }
        let day: u32 = field(path, line, &row[0])?;
        first_day.get_or_insert(day);
        let idx = match ribbons.iter().position(|r| r.series == row[1]) {
            Some(i) => i,
            None => {
                ribbons.push(Ribbon {
                    series: row[1].clone(),
                    bands: Default::default(),
                });
                ribbons.len() - 1
            }
        };
        for (b, v) in ribbons[idx].bands.iter_mut().zip(&row[2..]) {
            b.push(field(path, line, v)?);
        }
    }
    let first_day = first_day.ok_or_else(|| parse_err(path, 2, "no rows"))?;
    Ok((first_day, ribbons))
}

/// Inverse of the `trajectories.csv` writer.
pub fn read_trajectories(path: &Path) -> Result<TrajectoryBundle> {
    let mut first_day = None;
    let mut members: Vec<BundleMember> = Vec::new();
    for (line, row) in read_rows(
        path,
        "member,particle,lineage,day,true_cases,reported_cases,deaths",
    )? {
        if row.len() != 7 {
            return Err(parse_err(path, line, "wrong number of fields"));
        }
        let m: usize = field(path, line, &row[0])?;
        let day: u32 = field(path, line, &row[3])?;
        first_day.get_or_insert(day);
        if m == members.len() {
            let lineage = row[2]
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| field(path, line, s))
                .collect::<Result<Vec<u64>>>()?;
            members.push(BundleMember {
                particle: field(path, line, &row[1])?,
                lineage,
                thetas: Vec::new(),
                true_cases: Vec::new(),
                reported_cases: Vec::new(),
                deaths: Vec::new(),
            });
        } else if m + 1 != members.len() {
            return Err(parse_err(path, line, "members out of order"));
        }
        let mem = members.last_mut().expect("pushed above");
        mem.true_cases.push(field(path, line, &row[4])?);
        mem.reported_cases.push(field(path, line, &row[5])?);
        mem.deaths.push(field(path, line, &row[6])?);
    }
    Ok(TrajectoryBundle {
        first_day: first_day.unwrap_or(1),
        members,
    })
}

/// Read `posterior_window_{m}.csv` back into a cloud.
pub fn read_cloud(path: &Path, window: u32) -> Result<WindowCloud> {
    let mut c = WindowCloud {
        window,
        prior: Vec::new(),
        posterior: Vec::new(),
    };
    for (line, row) in read_rows(path, "theta,rho,class")? {
        if row.len() != 3 {
            return Err(parse_err(path, line, "wrong number of fields"));
        }
        let pt = (field(path, line, &row[0])?, field(path, line, &row[1])?);
        match row[2].as_str() {
            "prior" => c.prior.push(pt),
            "posterior" => c.posterior.push(pt),
            other => return Err(parse_err(path, line, format!("unknown class `{other}`"))),
        }
    }
    Ok(c)
}

pub fn write_ground_truth(t: &GroundTruth, path: &Path) -> Result<()> {
    fs::write(path, truth_csv(t)).map_err(|e| Error::io(path, e))
}

pub fn write_ribbons(s: &PosteriorSummary, path: &Path) -> Result<()> {
    fs::write(path, ribbons_csv(s)).map_err(|e| Error::io(path, e))
}

pub fn write_observations(o: &ObservationSeries, path: &Path) -> Result<()> {
    fs::write(path, observations_csv(o)).map_err(|e| Error::io(path, e))
}

pub fn read_observations(path: &Path) -> Result<ObservationSeries> {
    let rows = read_rows(path, "day,reported_cases,deaths")?;
    let mut start = None;
    let mut cases = Vec::with_capacity(rows.len());
    let mut deaths = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row.len() != 3 {
            return Err(parse_err(path, line, "wrong number of fields"));
        }
        let day: u32 = field(path, line, &row[0])?;
        let expected = *start.get_or_insert(day) + cases.len() as u32;
        if day != expected {
            return Err(parse_err(path, line, format!("expected day {expected}")));
        }
        cases.push(field(path, line, &row[1])?);
        if row[2].is_empty() {
            deaths.push(None);
        } else {
            deaths.push(Some(field::<u64>(path, line, &row[2])?));
        }
    }
    let deaths = if deaths.iter().all(Option::is_some) && !deaths.is_empty() {
        Some(deaths.into_iter().map(Option::unwrap).collect())
    } else if deaths.iter().all(Option::is_none) {
        None
    } else {
        return Err(parse_err(
            path,
            1,
            "deaths must be given for every day or none",
        ));
    };
    ObservationSeries::new(start.unwrap_or(1), cases, deaths)
}
