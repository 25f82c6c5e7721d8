//! Measurement-to-RT calibration: match measured components to traced paths
//! in delay-angle space and correct the traced powers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::raytrace::{mpc_fields, LinkPaths, Mpc};
use crate::units::wrap_180;

/// Weights of the matching cost, reciprocal squared sounder resolutions by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWeights {
    /// Per ns^2.
    pub w_tau: f64,
    /// Per deg^2, azimuth.
    pub w_theta: f64,
    /// Per deg^2, zenith.
    pub w_phi: f64,
    /// Largest admissible pair cost.
    pub gate: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            w_tau: 1.0 / (0.05 * 0.05),
            w_theta: 1.0 / (5.0 * 5.0),
            w_phi: 1.0 / (10.0 * 10.0),
            gate: 12.0,
        }
    }
}

impl MatchWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_tau, self.w_theta, self.w_phi].iter().any(|w| !(*w > 0.0)) || !(self.gate > 0.0) {
            return Err(Error::invalid("match weights", "weights and gate must be positive"));
        }
        Ok(())
    }
}

/// `w_tau |dtau|^2 + w_theta |daz|^2 + w_phi |del|^2`, azimuth wrapped to [-180, 180).
pub fn match_cost(measured: &Mpc, rt: &Mpc, w: &MatchWeights) -> f64 {
    let dt = measured.delay_ns - rt.delay_ns;
    let da = wrap_180(measured.az_deg - rt.az_deg);
    let de = measured.el_deg - rt.el_deg;
    w.w_tau * dt * dt + w.w_theta * da * da + w.w_phi * de * de
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub measured: usize,
    pub rt: usize,
    pub cost: f64,
    /// Measured minus traced power, dB.
    pub offset_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<Pair>,
    pub unmatched_measured: Vec<usize>,
    pub unmatched_rt: Vec<usize>,
    pub weights: MatchWeights,
    /// Lengths of the lists the matching was computed against.
    pub n_measured: usize,
    pub n_rt: usize,
}

impl Matching {
    pub fn mean_offset_db(&self) -> Option<f64> {
        if self.pairs.is_empty() {
            return None;
        }
        Some(self.pairs.iter().map(|p| p.offset_db).sum::<f64>() / self.pairs.len() as f64)
    }
}

/// Greedy best-first assignment: repeatedly take the cheapest remaining
/// (measured, rt) pair, ties broken by lower measured then lower rt index,
/// until no admissible pair (cost within the gate) is left.
pub fn match_paths(measured: &[Mpc], rt: &[Mpc], w: &MatchWeights) -> Matching {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(measured.len() * rt.len());
    for (l, m) in measured.iter().enumerate() {
        for (k, r) in rt.iter().enumerate() {
            let c = match_cost(m, r, w);
            if c <= w.gate {
                candidates.push((c, l, k));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_m = vec![false; measured.len()];
    let mut used_r = vec![false; rt.len()];
    let mut pairs = Vec::new();
    for (cost, l, k) in candidates {
        if used_m[l] || used_r[k] {
            continue;
        }
        used_m[l] = true;
        used_r[k] = true;
        pairs.push(Pair {
            measured: l,
            rt: k,
            cost,
            offset_db: measured[l].power_db - rt[k].power_db,
        });
    }
    Matching {
        pairs,
        unmatched_measured: (0..measured.len()).filter(|&i| !used_m[i]).collect(),
        unmatched_rt: (0..rt.len()).filter(|&i| !used_r[i]).collect(),
        weights: *w,
        n_measured: measured.len(),
        n_rt: rt.len(),
    }
}

/// How unmatched traced paths are corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPolicy {
    /// Mean offset of matched pairs with the same bounce order, else the global mean.
    #[default]
    PerOrderMean,
    /// Global mean offset of all matched pairs.
    GlobalMean,
    /// Leave unmatched paths untouched.
    MatchedOnly,
}

/// Applies the power offsets of `m` to `rt`; geometry is never changed.
pub fn apply_calibration(rt: &[Mpc], m: &Matching, policy: OffsetPolicy) -> Result<Vec<Mpc>> {
    if m.n_rt != rt.len() || m.pairs.iter().any(|p| p.rt >= rt.len()) {
        return Err(Error::StaleMatching(format!(
            "matching built for {} traced paths, got {}",
            m.n_rt,
            rt.len()
        )));
    }
    let table = CalibrationTable::from_pairs(m.pairs.iter().map(|p| (rt[p.rt].bounce_order, p.offset_db)));
    let mut out = rt.to_vec();
    let mut direct = vec![false; rt.len()];
    for p in &m.pairs {
        out[p.rt].power_db += p.offset_db;
        direct[p.rt] = true;
    }
    for (k, path) in out.iter_mut().enumerate() {
        if !direct[k] {
            path.power_db += table.offset_for(path.bounce_order, policy);
        }
    }
    Ok(out)
}

/// Pooled offsets for correcting traces at locations without measurements.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub per_order_db: BTreeMap<u8, f64>,
    pub global_db: f64,
    pub n_pairs: usize,
}

impl CalibrationTable {
    pub fn from_pairs(offsets: impl IntoIterator<Item = (u8, f64)>) -> Self {
        let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
        let (mut total, mut n) = (0.0, 0);
        for (order, off) in offsets {
            let e = sums.entry(order).or_default();
            e.0 += off;
            e.1 += 1;
            total += off;
            n += 1;
        }
        Self {
            per_order_db: sums.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
            global_db: if n > 0 { total / n as f64 } else { 0.0 },
            n_pairs: n,
        }
    }

    /// Pools the matched pairs of several links.
    pub fn from_links<'a>(links: impl IntoIterator<Item = (&'a [Mpc], &'a Matching)>) -> Self {
        let mut offsets = Vec::new();
        for (rt, m) in links {
            offsets.extend(m.pairs.iter().map(|p| (rt[p.rt].bounce_order, p.offset_db)));
        }
        Self::from_pairs(offsets)
    }

    pub fn offset_for(&self, order: u8, policy: OffsetPolicy) -> f64 {
        match policy {
            OffsetPolicy::MatchedOnly => 0.0,
            OffsetPolicy::GlobalMean => self.global_db,
            OffsetPolicy::PerOrderMean => self.per_order_db.get(&order).copied().unwrap_or(self.global_db),
        }
    }

    /// Corrects every path of a fresh trace.
    pub fn apply(&self, paths: &[Mpc]) -> Vec<Mpc> {
        paths
            .iter()
            .map(|p| Mpc {
                power_db: p.power_db + self.offset_for(p.bounce_order, OffsetPolicy::PerOrderMean),
                ..*p
            })
            .collect()
    }
}

#[derive(Serialize)]
struct MatchingReport<'a> {
    tx: &'a str,
    rx: &'a str,
    policy: OffsetPolicy,
    matching: &'a Matching,
}

pub fn matching_to_json(tx: &str, rx: &str, m: &Matching, policy: OffsetPolicy) -> String {
    serde_json::to_string_pretty(&MatchingReport {
        tx,
        rx,
        policy,
        matching: m,
    })
    .expect("matching serializes")
}

/// Path CSV with an extra `calibrated` column: 1 for directly matched paths.
pub fn calibrated_to_csv(links: &[(LinkPaths, Vec<bool>)]) -> String {
    let mut header = crate::raytrace::PATH_CSV_HEADER.to_vec();
    header.push("calibrated");
    io::csv_text(
        &header,
        links.iter().flat_map(|(l, flags)| {
            l.paths.iter().zip(flags).map(move |(m, f)| {
                let mut row = mpc_fields(&l.tx, &l.rx, m);
                row.push((*f as u8).to_string());
                row
            })
        }),
    )
}
