//! Channel parameter estimation: local-maximum MPC extraction from directional
//! soundings, path-loss aggregation and the log-distance (ABG) fit.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::raytrace::{Mpc, UNRESOLVED_ORDER};
use crate::scene::{AntennaPattern, Condition};
use crate::sounder::Sounding;
use crate::units::{db_to_lin, fmt9, lin_to_db, wrap_180, wrap_360};

/// Dynamic range kept below the strongest delay-angle cell.
pub const DEFAULT_REL_THRESHOLD_DB: f64 = 25.0;
pub const DEFAULT_MIN_SEPARATION_BINS: usize = 2;
/// Zero-padding factor of the delay transform.
const PAD_FACTOR: usize = 4;
/// Noise floor estimate: median cell power raised by this margin.
const NOISE_MARGIN_DB: f64 = 6.0;

/// Power-delay profiles of every scan direction on an oversampled delay axis.
struct DelayAngleMap {
    /// `power[dir * n_delay + bin]`, linear, referenced to the scanning horn output.
    power: Vec<f64>,
    n_delay: usize,
    n_az: usize,
    n_el: usize,
    bin_ns: f64,
}

impl DelayAngleMap {
    fn build(s: &Sounding) -> Self {
        let (nf, na, ne) = s.shape();
        let m = (PAD_FACTOR * nf).next_power_of_two();
        let window: Vec<f64> = (0..nf)
            .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (nf - 1) as f64).cos())
            .collect();
        let coherent_gain: f64 = window.iter().sum();
        let fft = FftPlanner::new().plan_fft_inverse(m);
        let mut power = vec![0.0; na * ne * m];
        power.par_chunks_mut(m).enumerate().for_each(|(dir, out)| {
            let (a, e) = (dir / ne, dir % ne);
            let mut buf = vec![Complex64::new(0.0, 0.0); m];
            for k in 0..nf {
                buf[k] = s.at(k, a, e) * window[k];
            }
            fft.process(&mut buf);
            for (o, c) in out.iter_mut().zip(&buf) {
                *o = c.norm_sqr() / (coherent_gain * coherent_gain);
            }
        });
        Self {
            power,
            n_delay: m,
            n_az: na,
            n_el: ne,
            bin_ns: 1e9 / (m as f64 * s.freqs.spacing_hz()),
        }
    }

    fn at(&self, a: usize, e: usize, n: usize) -> f64 {
        self.power[(a * self.n_el + e) * self.n_delay + n]
    }

    /// Strict-then-weak comparison against the 26 neighbors so plateaus yield
    /// a single maximum.
    fn is_local_max(&self, a: usize, e: usize, n: usize, az_wraps: bool) -> bool {
        let v = self.at(a, e, n);
        let here = (a, e, n);
        for da in [-1i64, 0, 1] {
            let aa = a as i64 + da;
            let aa = if aa < 0 || aa >= self.n_az as i64 {
                if !az_wraps {
                    continue;
                }
                aa.rem_euclid(self.n_az as i64)
            } else {
                aa
            } as usize;
            for de in [-1i64, 0, 1] {
                let ee = e as i64 + de;
                if ee < 0 || ee >= self.n_el as i64 {
                    continue;
                }
                let ee = ee as usize;
                for dn in [-1i64, 0, 1] {
                    if da == 0 && de == 0 && dn == 0 {
                        continue;
                    }
                    let nn = (n as i64 + dn).rem_euclid(self.n_delay as i64) as usize;
                    let w = self.at(aa, ee, nn);
                    if (aa, ee, nn) == here {
                        continue;
                    }
                    if w > v || (w == v && (aa, ee, nn) < here) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Parabolic refinement on dB values: (fractional bin offset, peak power dB).
    fn refine(&self, a: usize, e: usize, n: usize) -> (f64, f64) {
        let prev = self.at(a, e, (n + self.n_delay - 1) % self.n_delay);
        let next = self.at(a, e, (n + 1) % self.n_delay);
        let (l, c, r) = (lin_to_db(prev), lin_to_db(self.at(a, e, n)), lin_to_db(next));
        let denom = l - 2.0 * c + r;
        if !(denom < 0.0) || !l.is_finite() || !r.is_finite() {
            return (0.0, c);
        }
        let delta = (0.5 * (l - r) / denom).clamp(-0.5, 0.5);
        (delta, c - 0.25 * (l - r) * delta)
    }

    /// Refinement across scan directions at delay bin `n`. `curvature` is the
    /// beam's dB roll-off per squared grid step along (azimuth, zenith); a
    /// Gaussian beam is exactly quadratic in dB, so the peak cell and its
    /// stronger neighbour pin the off-grid arrival angle and the gain lost to
    /// the grid. Without a known curvature a three-point parabola is used.
    /// Returns (azimuth offset, zenith offset) in grid steps and the dB gain.
    fn refine_angle(&self, a: usize, e: usize, n: usize, az_wraps: bool, curvature: Option<(f64, f64)>) -> (f64, f64, f64) {
        let c = lin_to_db(self.at(a, e, n));
        let fit = |l: Option<f64>, r: Option<f64>, k: Option<f64>| {
            let (l, r) = (l.map(lin_to_db), r.map(lin_to_db));
            match k {
                Some(k) => {
                    // the stronger neighbour sits on the side of the true direction
                    let (side, nb) = match (l, r) {
                        (Some(l), Some(r)) if l > r => (-1.0, l),
                        (_, Some(r)) => (1.0, r),
                        (Some(l), None) => (-1.0, l),
                        (None, None) => return (0.0, 0.0),
                    };
                    if !nb.is_finite() {
                        return (0.0, 0.0);
                    }
                    let d = (0.5 * (1.0 - (c - nb) / k)).clamp(-0.5, 0.5);
                    (side * d, k * d * d)
                }
                None => match (l, r) {
                    (Some(l), Some(r)) if l.is_finite() && r.is_finite() && l - 2.0 * c + r < 0.0 => {
                        let d = (0.5 * (l - r) / (l - 2.0 * c + r)).clamp(-0.5, 0.5);
                        (d, -0.25 * (l - r) * d)
                    }
                    _ => (0.0, 0.0),
                },
            }
        };
        let az_at = |da: i64| {
            let aa = a as i64 + da;
            if aa >= 0 && aa < self.n_az as i64 {
                Some(self.at(aa as usize, e, n))
            } else if az_wraps {
                Some(self.at(aa.rem_euclid(self.n_az as i64) as usize, e, n))
            } else {
                None
            }
        };
        let el_at = |de: i64| {
            let ee = e as i64 + de;
            (ee >= 0 && ee < self.n_el as i64).then(|| self.at(a, ee as usize, n))
        };
        let (da, ga) = fit(az_at(-1), az_at(1), curvature.map(|k| k.0));
        let (de, ge) = fit(el_at(-1), el_at(1), curvature.map(|k| k.1));
        (da, de, ga + ge)
    }
}

/// Local-maximum multipath extraction.
///
/// Every cell of the delay-angle power map that is a local maximum, lies
/// within `rel_threshold_db` of the strongest cell and above the noise floor
/// estimate becomes a component. Delay and both angles are refined by
/// interpolation of the dB map around the peak cell, and the
/// scanning horn's boresight gain is removed from the reported power. Results
/// closer than `min_separation_bins` delay bins and one grid step in both
/// angles are merged keeping the strongest. Sorted by descending power.
pub fn extract_mpcs(s: &Sounding, rel_threshold_db: f64, min_separation_bins: usize) -> Result<Vec<Mpc>> {
    if !(rel_threshold_db > 0.0) {
        return Err(Error::invalid("rel_threshold_db", "must be positive"));
    }
    let (nf, na, ne) = s.shape();
    if s.cfr.len() != nf * na * ne {
        return Err(Error::Dimension(format!("cfr length {} vs {nf}x{na}x{ne}", s.cfr.len())));
    }
    if s.cfr.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
        return Ok(Vec::new());
    }
    let map = DelayAngleMap::build(s);
    let peak = map.power.iter().copied().fold(0.0, f64::max);
    let mut sorted = map.power.clone();
    let mid = sorted.len() / 2;
    let (_, median, _) = sorted.select_nth_unstable_by(mid, f64::total_cmp);
    let noise_floor = *median * db_to_lin(NOISE_MARGIN_DB);
    let floor = (peak * db_to_lin(-rel_threshold_db)).max(noise_floor);

    let az_wraps = s.grid.az_wraps();
    let boresight = s.rx_pattern.boresight_gain_dbi();
    let curvature = match s.rx_pattern {
        AntennaPattern::Gaussian { hpbw_az_deg, hpbw_el_deg, .. } => Some((
            12.0 * (s.grid.az_step / hpbw_az_deg).powi(2),
            12.0 * (s.grid.el_step / hpbw_el_deg).powi(2),
        )),
        AntennaPattern::Isotropic { .. } => None,
    };
    let mut candidates: Vec<Mpc> = Vec::new();
    for a in 0..na {
        for e in 0..ne {
            for n in 0..map.n_delay {
                let v = map.at(a, e, n);
                if v < floor || v <= 0.0 || !map.is_local_max(a, e, n, az_wraps) {
                    continue;
                }
                let (delta, peak_db) = map.refine(a, e, n);
                let (da, de, angle_gain_db) = map.refine_angle(a, e, n, az_wraps, curvature);
                candidates.push(Mpc {
                    power_db: peak_db + angle_gain_db - boresight,
                    delay_ns: (n as f64 + delta) * map.bin_ns,
                    az_deg: wrap_360(s.grid.az(a) + da * s.grid.az_step),
                    el_deg: s.grid.el(e) + de * s.grid.el_step,
                    bounce_order: UNRESOLVED_ORDER,
                });
            }
        }
    }
    candidates.sort_by(|p, q| q.power_db.total_cmp(&p.power_db));

    let resolution_ns = 1e9 / s.freqs.bandwidth_hz();
    let delay_gap = min_separation_bins as f64 * resolution_ns;
    let mut kept: Vec<Mpc> = Vec::new();
    for c in candidates {
        let duplicate = kept.iter().any(|k| {
            (k.delay_ns - c.delay_ns).abs() <= delay_gap + 1e-12
                && wrap_180(k.az_deg - c.az_deg).abs() <= s.grid.az_step + 1e-9
                && (k.el_deg - c.el_deg).abs() <= s.grid.el_step + 1e-9
        });
        if !duplicate {
            kept.push(c);
        }
    }
    Ok(kept)
}

/// Path loss of the linear power sum of all components, dB.
pub fn total_path_loss(mpcs: &[Mpc]) -> Result<f64> {
    if mpcs.is_empty() {
        return Err(Error::NoDetection);
    }
    Ok(-total_power_db(mpcs))
}

/// `10 log10(sum_l 10^(P_l / 10))`.
pub fn total_power_db(mpcs: &[Mpc]) -> f64 {
    lin_to_db(mpcs.iter().map(|m| db_to_lin(m.power_db)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossSample {
    pub d_m: f64,
    pub pl_db: f64,
    pub los: bool,
}

/// `PL(d) = alpha log10(d) + beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbgModel {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    pub n_samples: usize,
}

impl AbgModel {
    pub fn path_loss_db(&self, d_m: f64) -> f64 {
        self.alpha * d_m.log10() + self.beta
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("abg serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: AbgModel = serde_json::from_str(text).map_err(|e| Error::parse("abg model", e))?;
        if !(m.alpha.is_finite() && m.beta.is_finite()) {
            return Err(Error::invalid("abg model", "alpha and beta must be finite"));
        }
        Ok(m)
    }
}

/// Least-squares fit of path loss against `log10(d)`.
pub fn fit_abg(samples: &[PathLossSample]) -> Result<AbgModel> {
    if let Some(s) = samples.iter().find(|s| !(s.d_m > 0.0) || !s.pl_db.is_finite()) {
        return Err(Error::invalid("path loss sample", format!("d = {} m, pl = {} dB", s.d_m, s.pl_db)));
    }
    let first = samples.first().map(|s| s.d_m);
    if samples.len() < 2 || samples.iter().all(|s| Some(s.d_m) == first) {
        return Err(Error::InsufficientData("ABG fit needs at least 2 distinct distances".into()));
    }
    let n = samples.len() as f64;
    let xm = samples.iter().map(|s| s.d_m.log10()).sum::<f64>() / n;
    let ym = samples.iter().map(|s| s.pl_db).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for s in samples {
        let dx = s.d_m.log10() - xm;
        sxy += dx * (s.pl_db - ym);
        sxx += dx * dx;
    }
    let alpha = sxy / sxx;
    let all_los = samples.iter().all(|s| s.los);
    let all_nlos = samples.iter().all(|s| !s.los);
    Ok(AbgModel {
        alpha,
        beta: ym - alpha * xm,
        condition: if all_los {
            Some(Condition::Los)
        } else if all_nlos {
            Some(Condition::Nlos)
        } else {
            None
        },
        n_samples: samples.len(),
    })
}

/// Separate fits of the LoS and NLoS subsets.
pub fn fit_abg_by_condition(samples: &[PathLossSample]) -> Result<(AbgModel, AbgModel)> {
    let (los, nlos): (Vec<_>, Vec<_>) = samples.iter().partition(|s| s.los);
    Ok((fit_abg(&los)?, fit_abg(&nlos)?))
}

pub const PL_CSV_HEADER: [&str; 5] = ["tx", "rx", "d_m", "pl_db", "los"];

pub fn path_loss_to_csv(rows: &[(String, String, PathLossSample)]) -> String {
    io::csv_text(
        &PL_CSV_HEADER,
        rows.iter().map(|(tx, rx, s)| {
            vec![
                tx.clone(),
                rx.clone(),
                fmt9(s.d_m),
                fmt9(s.pl_db),
                (s.los as u8).to_string(),
            ]
        }),
    )
}

pub fn path_loss_from_csv(text: &str) -> Result<Vec<PathLossSample>> {
    Ok(path_loss_rows_from_csv(text)?.into_iter().map(|(_, _, s)| s).collect())
}

/// Rows with their `(tx, rx)` link names.
pub fn path_loss_rows_from_csv(text: &str) -> Result<Vec<(String, String, PathLossSample)>> {
    let ctx = "path loss csv";
    io::csv_records(text, ctx, &PL_CSV_HEADER)?
        .iter()
        .map(|r| {
            Ok((
                r[0].to_string(),
                r[1].to_string(),
                PathLossSample {
                    d_m: io::field_f64(r, 2, ctx)?,
                    pl_db: io::field_f64(r, 3, ctx)?,
                    los: io::field_bool(r, 4, ctx)?,
                },
            ))
        })
        .collect()
}
