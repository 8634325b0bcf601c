//! CSV output with a `#`-prefixed metadata header.
//!
//! Floats are written as `{:.16e}`, booleans as `0`/`1`, lines end in `\n`. Nothing in the
//! output depends on wall-clock time, so repeated runs are byte-identical.

use std::io::{self, Write};

use crate::fluctuations::{SweepTable, VarianceTrajectory};
use crate::positivep::EnsembleMoments;
use crate::qsd::QsdEnsemble;
use crate::semiclassical::SemiclassicalTrajectory;
use crate::VERSION;

/// Header lines written before the column names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetadata {
    pub config_json: String,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub extra: Vec<(String, String)>,
}

impl RunMetadata {
    pub fn new(config_json: impl Into<String>) -> Self {
        Self { config_json: config_json.into(), ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# nopo {VERSION}")?;
        writeln!(w, "# config {}", self.config_json)?;
        if let Some(seed) = self.seed {
            writeln!(w, "# seed {seed}")?;
        }
        if let Some(dt) = self.dt {
            writeln!(w, "# dt {}", num(dt))?;
        }
        for (k, v) in &self.extra {
            writeln!(w, "# {k} {v}")?;
        }
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn table<W: Write>(w: &mut W, meta: &RunMetadata, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    meta.write(w)?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_semiclassical<W: Write>(w: &mut W, meta: &RunMetadata, traj: &SemiclassicalTrajectory) -> io::Result<()> {
    let rows = traj.t_grid.iter().zip(&traj.n0).map(|(&t, &n)| vec![num(t), num(n)]);
    table(w, meta, "t,n0", rows)
}

pub fn write_variance<W: Write>(w: &mut W, meta: &RunMetadata, traj: &VarianceTrajectory) -> io::Result<()> {
    let rows = (0..traj.t_grid.len()).map(|i| vec![num(traj.t_grid[i]), num(traj.v[i]), num(traj.n0[i])]);
    table(w, meta, "t,V,n0", rows)
}

/// Failed cells keep their coordinates and leave the result columns empty.
pub fn write_sweep<W: Write>(w: &mut W, meta: &RunMetadata, sweep: &SweepTable) -> io::Result<()> {
    let rows = sweep.rows.iter().map(|row| {
        let mut cells = vec![num(row.fbar_over_fth), num(row.f1_over_fbar)];
        match &row.result {
            Ok(r) => cells.extend([
                num(r.v_min),
                num(r.t0),
                num(r.n0_at_t0),
                flag(r.criteria.inseparable).to_string(),
                flag(r.criteria.epr).to_string(),
            ]),
            Err(_) => cells.extend(std::iter::repeat_n(String::new(), 5)),
        }
        cells.push(num(row.validity_ratio));
        cells
    });
    table(w, meta, "fbar_over_fth,f1_over_fbar,v_min,t0,n0_at_t0,inseparable,epr,validity_ratio", rows)
}

pub fn write_positivep<W: Write>(w: &mut W, meta: &RunMetadata, m: &EnsembleMoments) -> io::Result<()> {
    let rows = (0..m.t_grid.len()).map(|k| {
        vec![
            num(m.t_grid[k]),
            num(m.n_plus[k].mean),
            num(m.n_plus[k].stderr),
            num(m.r[k].mean),
            num(m.r[k].stderr),
            num(m.z[k].mean),
            num(m.z[k].stderr),
            num(m.v[k].mean),
            num(m.v[k].stderr),
            m.n_traj.to_string(),
            m.discarded.to_string(),
        ]
    });
    table(
        w,
        meta,
        "t,n_plus_mean,n_plus_stderr,R_mean,R_stderr,Z_mean,Z_stderr,V_mean,V_stderr,n_traj,discarded",
        rows,
    )
}

pub fn write_qsd<W: Write>(w: &mut W, meta: &RunMetadata, e: &QsdEnsemble) -> io::Result<()> {
    let rows = (0..e.t_grid.len()).map(|k| {
        vec![
            num(e.t_grid[k]),
            num(e.v[k].mean),
            num(e.v[k].stderr),
            num(e.n1[k].mean),
            num(e.n2[k].mean),
            num(e.tail_pop[k]),
            e.n_traj.to_string(),
        ]
    });
    table(w, meta, "t,V_mean,V_stderr,n1_mean,n2_mean,tail_pop,n_traj", rows)
}

/// Linearized variance next to a QSD ensemble on the same grid.
pub fn write_comparison<W: Write>(w: &mut W, meta: &RunMetadata, analytic: &[f64], e: &QsdEnsemble) -> io::Result<()> {
    let rows = (0..e.t_grid.len()).map(|k| vec![num(e.t_grid[k]), num(analytic[k]), num(e.v[k].mean), num(e.v[k].stderr)]);
    table(w, meta, "t,V_analytic,V_qsd,V_qsd_stderr", rows)
}

/// Column-oriented table; all columns must have the same length.
pub fn write_columns<W: Write>(w: &mut W, meta: &RunMetadata, names: &[&str], columns: &[Vec<f64>]) -> io::Result<()> {
    assert_eq!(names.len(), columns.len(), "one name per column");
    let rows = columns.first().map_or(0, Vec::len);
    assert!(columns.iter().all(|c| c.len() == rows), "columns differ in length");
    table(w, meta, &names.join(","), (0..rows).map(|i| columns.iter().map(|c| num(c[i])).collect()))
}
