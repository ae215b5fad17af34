//! Segmentation quality metrics (VOE, VD, AvgD, RMSD, MaxD) and the
//! challenge-style 0..100 score mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{nearest_feature_transform, Mask3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Voe,
    Vd,
    Avgd,
    Rmsd,
    Maxd,
}

pub const METRICS: [Metric; 5] = [Metric::Voe, Metric::Vd, Metric::Avgd, Metric::Rmsd, Metric::Maxd];

impl Metric {
    /// Value scoring 75 points; fitted by least squares to published
    /// (value, score) pairs, see [`fit_reference`].
    pub fn reference(self) -> f64 {
        match self {
            Metric::Voe => 6.4,
            Metric::Vd => 4.7,
            Metric::Avgd => 1.0,
            Metric::Rmsd => 1.8,
            Metric::Maxd => 19.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Voe => "VOE",
            Metric::Vd => "VD",
            Metric::Avgd => "AvgD",
            Metric::Rmsd => "RMSD",
            Metric::Maxd => "MaxD",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::Voe | Metric::Vd => "%",
            _ => "mm",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        METRICS
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown metric {s:?}")))
    }
}

/// `max(0, 100 − 25·|value|/reference)`. The magnitude is used so that
/// under- and over-segmentation in VD score alike.
pub fn score(metric: Metric, value: f64) -> f64 {
    (100.0 - 25.0 * value.abs() / metric.reference()).max(0.0)
}

/// Least-squares reference for `score = 100 − 25·|v|/ref` from `(value, score)` pairs.
pub fn fit_reference(pairs: &[(f64, f64)]) -> Result<f64> {
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(n, d), &(v, s)| {
        let a = 25.0 * v.abs();
        (n + a * (100.0 - s), d + a * a)
    });
    if !(num > 0.0) {
        return Err(Error::Degenerate("reference fit needs nonzero values below 100 points".into()));
    }
    Ok(den / num)
}

fn check_pair(h: &Mask3D, t: &Mask3D) -> Result<()> {
    h.check_same_geometry(t.geometry())
}

/// Volumetric overlap error in percent.
pub fn voe(h: &Mask3D, t: &Mask3D) -> Result<f64> {
    check_pair(h, t)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in h.data().iter().zip(t.data()) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    if union == 0 {
        return Err(Error::Degenerate("both masks are empty".into()));
    }
    if t.is_blank() {
        return Err(Error::EmptyInput("reference mask is empty".into()));
    }
    Ok(100.0 * (1.0 - inter as f64 / union as f64))
}

/// Signed relative volume difference `100·(|H| − |T|)/|T|` in percent.
pub fn vd(h: &Mask3D, t: &Mask3D) -> Result<f64> {
    check_pair(h, t)?;
    let nt = t.count();
    if nt == 0 {
        return Err(Error::EmptyInput("reference mask is empty".into()));
    }
    Ok(100.0 * (h.count() as f64 - nt as f64) / nt as f64)
}

/// Foreground voxels with a background 6-neighbour or on the volume border.
pub fn surface_voxels(m: &Mask3D) -> Mask3D {
    let [nx, ny, nz] = m.dims();
    Mask3D::from_fn(*m.geometry(), |x, y, z| {
        if !m.get(x, y, z) {
            return false;
        }
        if x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz {
            return true;
        }
        !(m.get(x - 1, y, z)
            && m.get(x + 1, y, z)
            && m.get(x, y - 1, z)
            && m.get(x, y + 1, z)
            && m.get(x, y, z - 1)
            && m.get(x, y, z + 1))
    })
}

/// Distance in mm from every surface voxel of `h` to the surface of `t`,
/// followed by the same from `t` to `h`.
pub fn surface_distances(h: &Mask3D, t: &Mask3D) -> Result<Vec<f64>> {
    check_pair(h, t)?;
    if h.is_blank() || t.is_blank() {
        return Err(Error::EmptyInput("surface distance of an empty mask".into()));
    }
    let sh = surface_voxels(h);
    let st = surface_voxels(t);
    let (ft, fh) = rayon::join(|| nearest_feature_transform(&st), || nearest_feature_transform(&sh));
    let (ft, fh) = (ft.expect("nonempty surface"), fh.expect("nonempty surface"));
    let mut out: Vec<f64> = sh.foreground_indices().map(|i| ft.distance(i)).collect();
    out.extend(st.foreground_indices().map(|i| fh.distance(i)));
    Ok(out)
}

fn nonempty(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(Error::EmptyInput("no surface distances".into()));
    }
    Ok(())
}

pub fn avgd(d: &[f64]) -> Result<f64> {
    nonempty(d)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

pub fn rmsd(d: &[f64]) -> Result<f64> {
    nonempty(d)?;
    Ok((d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt())
}

pub fn maxd(d: &[f64]) -> Result<f64> {
    nonempty(d)?;
    Ok(d.iter().copied().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub voe: f64,
    pub vd: f64,
    pub avgd: f64,
    pub rmsd: f64,
    pub maxd: f64,
    pub scores: [f64; 5],
    pub total: f64,
}

impl MetricsReport {
    /// Report for metric values in the order VOE, VD, AvgD, RMSD, MaxD.
    pub fn from_values(v: [f64; 5]) -> Self {
        let scores = [0, 1, 2, 3, 4].map(|i| score(METRICS[i], v[i]));
        MetricsReport {
            voe: v[0],
            vd: v[1],
            avgd: v[2],
            rmsd: v[3],
            maxd: v[4],
            scores,
            total: scores.iter().sum::<f64>() / 5.0,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.voe, self.vd, self.avgd, self.rmsd, self.maxd]
    }

    /// Summary row over several cases: each metric, each score and the total
    /// are averaged separately (the mean score is not the score of the mean).
    pub fn mean(reports: &[MetricsReport]) -> Result<MetricsReport> {
        if reports.is_empty() {
            return Err(Error::EmptyInput("no reports to average".into()));
        }
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let v = [0, 1, 2, 3, 4].map(|i| avg(&|r| r.values()[i]));
        let scores = [0, 1, 2, 3, 4].map(|i| avg(&|r| r.scores[i]));
        Ok(MetricsReport {
            voe: v[0],
            vd: v[1],
            avgd: v[2],
            rmsd: v[3],
            maxd: v[4],
            scores,
            total: avg(&|r| r.total),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "case,voe,voe_score,vd,vd_score,avgd,avgd_score,rmsd,rmsd_score,maxd,maxd_score,total"
    }

    pub fn csv_row(&self, case: &str) -> String {
        let mut s = case.to_string();
        for (v, sc) in self.values().iter().zip(&self.scores) {
            s.push_str(&format!(",{v},{sc}"));
        }
        s.push_str(&format!(",{}", self.total));
        s
    }

    /// Text table with one row per `(label, report)`.
    pub fn table(rows: &[(String, MetricsReport)]) -> String {
        let mut s = format!("{:<8}", "Case");
        for m in METRICS {
            s.push_str(&format!(" {:>9} {:>6}", format!("{} [{}]", m.name(), m.unit()), "Scr"));
        }
        s.push_str(&format!(" {:>9}\n", "Total"));
        for (label, r) in rows {
            s.push_str(&format!("{label:<8}"));
            for (v, sc) in r.values().iter().zip(&r.scores) {
                s.push_str(&format!(" {v:>9.2} {sc:>6.1}"));
            }
            s.push_str(&format!(" {:>9.1}\n", r.total));
        }
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&MetricsReport::table(&[("result".into(), *self)]))
    }
}

/// All five metrics of segmentation `h` against reference `t`.
pub fn evaluate(h: &Mask3D, t: &Mask3D) -> Result<MetricsReport> {
    let v = voe(h, t)?;
    let d = vd(h, t)?;
    let dist = surface_distances(h, t)?;
    Ok(MetricsReport::from_values([v, d, avgd(&dist)?, rmsd(&dist)?, maxd(&dist)?]))
}
