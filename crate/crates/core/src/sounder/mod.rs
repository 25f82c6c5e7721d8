//! Synthetic directional channel sounder standing in for the VNA campaign.
//!
//! The transmitter is fixed; the receive horn is stepped over an
//! azimuth/zenith grid and a channel frequency response is recorded per
//! direction. Back-to-back calibration is the identity here: there is no
//! hardware response to remove.

pub mod truth;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use truth::{ScatterModel, TruthModel};

use crate::error::{Error, Result};
use crate::io;
use crate::raytrace::Mpc;
use crate::scene::{antenna_gain, AntennaPattern};
use crate::units::{db_to_lin, fmt9, wrap_180, PROPAGATION_SPEED};

/// Default per-sample complex noise power, dB relative to transmit power.
pub const DEFAULT_NOISE_DB: f64 = -120.0;

/// Receiver positioner grid, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub az_start: f64,
    pub az_stop: f64,
    pub az_step: f64,
    pub el_start: f64,
    pub el_stop: f64,
    pub el_step: f64,
}

impl Default for ScanGrid {
    fn default() -> Self {
        Self {
            az_start: 0.0,
            az_stop: 355.0,
            az_step: 5.0,
            el_start: -20.0,
            el_stop: 20.0,
            el_step: 10.0,
        }
    }
}

impl ScanGrid {
    pub fn validate(&self) -> Result<()> {
        for (name, start, stop, step) in [
            ("azimuth", self.az_start, self.az_stop, self.az_step),
            ("zenith", self.el_start, self.el_stop, self.el_step),
        ] {
            let n = (stop - start) / step;
            if !(step > 0.0) || !(n >= 0.0) || (n - n.round()).abs() > 1e-9 {
                return Err(Error::invalid(
                    "scan grid",
                    format!("{name} step {step} does not divide [{start}, {stop}]"),
                ));
            }
        }
        if self.az_stop - self.az_start >= 360.0 {
            return Err(Error::invalid("scan grid", "azimuth range must be below 360 degrees"));
        }
        Ok(())
    }

    pub fn n_az(&self) -> usize {
        ((self.az_stop - self.az_start) / self.az_step).round() as usize + 1
    }

    pub fn n_el(&self) -> usize {
        ((self.el_stop - self.el_start) / self.el_step).round() as usize + 1
    }

    pub fn az(&self, i: usize) -> f64 {
        self.az_start + i as f64 * self.az_step
    }

    pub fn el(&self, j: usize) -> f64 {
        self.el_start + j as f64 * self.el_step
    }

    /// True when the azimuth axis closes on itself (last step wraps to the first).
    pub fn az_wraps(&self) -> bool {
        ((self.az_stop - self.az_start) + self.az_step - 360.0).abs() < 1e-9
    }
}

/// Uniform frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqSweep {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Default for FreqSweep {
    fn default() -> Self {
        Self {
            start_hz: 290e9,
            stop_hz: 310e9,
            points: 2001,
        }
    }
}

impl FreqSweep {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || !(self.stop_hz > self.start_hz) {
            return Err(Error::invalid("frequency sweep", "need >= 2 points and stop > start"));
        }
        Ok(())
    }

    pub fn spacing_hz(&self) -> f64 {
        (self.stop_hz - self.start_hz) / (self.points - 1) as f64
    }

    pub fn freq(&self, k: usize) -> f64 {
        self.start_hz + k as f64 * self.spacing_hz()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.freq(k)).collect()
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.stop_hz - self.start_hz
    }
}

/// Delay resolution `1 / bandwidth` of a uniform frequency grid, in ns.
pub fn delay_resolution(freqs: &[f64]) -> Result<f64> {
    Ok(1e9 / uniform_bandwidth(freqs)?)
}

/// Range resolution `c / bandwidth`, in meters.
pub fn distance_accuracy(freqs: &[f64]) -> Result<f64> {
    Ok(PROPAGATION_SPEED / uniform_bandwidth(freqs)?)
}

fn uniform_bandwidth(freqs: &[f64]) -> Result<f64> {
    if freqs.len() < 2 {
        return Err(Error::invalid("frequency grid", "need at least 2 points"));
    }
    let bw = freqs[freqs.len() - 1] - freqs[0];
    let step = bw / (freqs.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::invalid("frequency grid", "must be increasing"));
    }
    for (k, f) in freqs.iter().enumerate() {
        if (f - (freqs[0] + k as f64 * step)).abs() > 1e-6 * step {
            return Err(Error::invalid("frequency grid", format!("non-uniform at index {k}")));
        }
    }
    Ok(bw)
}

/// One directional scan of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct Sounding {
    pub freqs: FreqSweep,
    pub grid: ScanGrid,
    /// Row-major `(frequency, azimuth index, elevation index)`.
    pub cfr: Vec<Complex64>,
    pub tx_id: String,
    pub rx_id: String,
    /// `None` for a noiseless synthesis.
    pub noise_db: Option<f64>,
    pub seed: u64,
    /// Receive horn used for scanning; its boresight gain is de-embedded on extraction.
    pub rx_pattern: AntennaPattern,
}

impl Sounding {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.freqs.points, self.grid.n_az(), self.grid.n_el())
    }

    pub fn index(&self, f: usize, a: usize, e: usize) -> usize {
        let (_, na, ne) = self.shape();
        (f * na + a) * ne + e
    }

    pub fn at(&self, f: usize, a: usize, e: usize) -> Complex64 {
        self.cfr[self.index(f, a, e)]
    }

    fn check_dims(&self) -> Result<()> {
        let (nf, na, ne) = self.shape();
        if self.cfr.len() != nf * na * ne {
            return Err(Error::Dimension(format!(
                "cfr has {} samples, expected {nf} x {na} x {ne}",
                self.cfr.len()
            )));
        }
        Ok(())
    }
}

/// Stable 64-bit stream id for a link, independent of evaluation order.
pub fn link_stream(seed: u64, tx_id: &str, rx_id: &str) -> u64 {
    // FNV-1a over the ids, mixed with the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tx_id.bytes().chain([0u8]).chain(rx_id.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Parameters of one synthesis besides the path list.
#[derive(Debug, Clone)]
pub struct SoundingSetup {
    pub rx_pattern: AntennaPattern,
    pub grid: ScanGrid,
    pub freqs: FreqSweep,
    pub noise_db: Option<f64>,
    pub seed: u64,
    pub tx_id: String,
    pub rx_id: String,
}

impl SoundingSetup {
    pub fn campaign(tx_id: &str, rx_id: &str, seed: u64) -> Self {
        Self {
            rx_pattern: AntennaPattern::thz_horn(),
            grid: ScanGrid::default(),
            freqs: FreqSweep::default(),
            noise_db: Some(DEFAULT_NOISE_DB),
            seed,
            tx_id: tx_id.to_string(),
            rx_id: rx_id.to_string(),
        }
    }
}

/// Directional CFR of a path list:
/// `cfr(f, dir) = sum_l a_l sqrt(G_rx(dir - dir_l)) exp(-j 2 pi f tau_l) + n`.
///
/// Path powers must exclude the receive antenna; the sounder applies the
/// scanning horn per direction using positioner angle offsets.
pub fn synthesize_cfr(paths: &[Mpc], setup: &SoundingSetup) -> Result<Sounding> {
    setup.grid.validate()?;
    setup.freqs.validate()?;
    let (nf, na, ne) = (setup.freqs.points, setup.grid.n_az(), setup.grid.n_el());
    let mut cfr = vec![Complex64::new(0.0, 0.0); nf * na * ne];

    let df = setup.freqs.spacing_hz();
    for p in paths {
        let amp = db_to_lin(p.power_db).sqrt();
        let tau = p.delay_ns * 1e-9;
        // phasor(k) = exp(-j 2 pi (f0 + k df) tau), built by direct evaluation per
        // bin so rounding does not accumulate along the sweep
        let phase0 = -2.0 * std::f64::consts::PI * (setup.freqs.start_hz * tau).fract();
        let dphase = -2.0 * std::f64::consts::PI * df * tau;
        let phasors: Vec<Complex64> = (0..nf)
            .map(|k| Complex64::from_polar(1.0, phase0 + dphase * k as f64))
            .collect();
        for a in 0..na {
            let d_az = wrap_180(setup.grid.az(a) - p.az_deg);
            for e in 0..ne {
                let d_el = setup.grid.el(e) - p.el_deg;
                let g = db_to_lin(antenna_gain(&setup.rx_pattern, d_az, d_el)).sqrt();
                let w = amp * g;
                for (k, ph) in phasors.iter().enumerate() {
                    cfr[(k * na + a) * ne + e] += ph * w;
                }
            }
        }
    }

    if let Some(noise_db) = setup.noise_db {
        let sigma = (db_to_lin(noise_db) / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Numerical(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(link_stream(setup.seed, &setup.tx_id, &setup.rx_id));
        for c in cfr.iter_mut() {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *c += Complex64::new(re, im);
        }
    }

    Ok(Sounding {
        freqs: setup.freqs,
        grid: setup.grid,
        cfr,
        tx_id: setup.tx_id.clone(),
        rx_id: setup.rx_id.clone(),
        noise_db: setup.noise_db,
        seed: setup.seed,
        rx_pattern: setup.rx_pattern,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SoundingHeader {
    tx_id: String,
    rx_id: String,
    seed: u64,
    noise_db: Option<f64>,
    freqs: FreqSweep,
    grid: ScanGrid,
    rx_pattern: AntennaPattern,
    samples: String,
    layout: String,
}

const SAMPLE_LAYOUT: &str = "re,im rows in (frequency, azimuth, elevation) row-major order";

/// Header JSON and sample CSV texts. `samples_name` is recorded in the header.
pub fn sounding_to_text(s: &Sounding, samples_name: &str) -> (String, String) {
    let header = SoundingHeader {
        tx_id: s.tx_id.clone(),
        rx_id: s.rx_id.clone(),
        seed: s.seed,
        noise_db: s.noise_db,
        freqs: s.freqs,
        grid: s.grid,
        rx_pattern: s.rx_pattern,
        samples: samples_name.to_string(),
        layout: SAMPLE_LAYOUT.to_string(),
    };
    let mut csv = String::with_capacity(s.cfr.len() * 32);
    csv.push_str("re,im\n");
    for c in &s.cfr {
        csv.push_str(&fmt9(c.re));
        csv.push(',');
        csv.push_str(&fmt9(c.im));
        csv.push('\n');
    }
    (
        serde_json::to_string_pretty(&header).expect("header serializes"),
        csv,
    )
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`.
pub fn save_sounding(s: &Sounding, dir: &std::path::Path, stem: &str) -> Result<std::path::PathBuf> {
    let csv_name = format!("{stem}.csv");
    let (header, csv) = sounding_to_text(s, &csv_name);
    io::write_atomic(&dir.join(&csv_name), csv.as_bytes())?;
    let json_path = dir.join(format!("{stem}.json"));
    io::write_atomic(&json_path, header.as_bytes())?;
    Ok(json_path)
}

pub fn load_sounding(header_path: &std::path::Path) -> Result<Sounding> {
    let header: SoundingHeader = serde_json::from_str(&io::read_to_string(header_path)?)
        .map_err(|e| Error::parse("sounding header", e))?;
    let samples_path = header_path
        .parent()
        .unwrap_or_else(|| std::path::Path::new("."))
        .join(&header.samples);
    let text = io::read_to_string(&samples_path)?;
    let ctx = "sounding samples";
    let mut cfr = Vec::new();
    for rec in io::csv_records(&text, ctx, &["re", "im"])? {
        cfr.push(Complex64::new(io::field_f64(&rec, 0, ctx)?, io::field_f64(&rec, 1, ctx)?));
    }
    header.grid.validate()?;
    header.freqs.validate()?;
    let s = Sounding {
        freqs: header.freqs,
        grid: header.grid,
        cfr,
        tx_id: header.tx_id,
        rx_id: header.rx_id,
        noise_db: header.noise_db,
        seed: header.seed,
        rx_pattern: header.rx_pattern,
    };
    s.check_dims()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    fn mpc(power_db: f64, delay_ns: f64, az: f64, el: f64) -> Mpc {
        Mpc {
            power_db,
            delay_ns,
            az_deg: az,
            el_deg: el,
            bounce_order: 0,
        }
    }

    fn noiseless(freqs: FreqSweep) -> SoundingSetup {
        SoundingSetup {
            noise_db: None,
            freqs,
            ..SoundingSetup::campaign("t", "r", 1)
        }
    }

    #[test]
    fn campaign_resolution() {
        let f = FreqSweep::default().values();
        assert_eq!(delay_resolution(&f).unwrap(), 0.05);
        assert_eq!(distance_accuracy(&f).unwrap(), 0.015);
        let one_ghz: Vec<f64> = (0..11).map(|k| 300e9 + k as f64 * 1e8).collect();
        assert!((delay_resolution(&one_ghz).unwrap() - 1.0).abs() < 1e-12);
        assert!(delay_resolution(&[1.0, 2.0, 4.0]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let s = synthesize_cfr(&[], &noiseless(FreqSweep::default())).unwrap();
        assert_eq!(s.shape(), (2001, 72, 5));
        assert_eq!(s.cfr.len(), 2001 * 72 * 5);
    }

    #[test]
    fn zero_delay_path_is_flat() {
        let freqs = FreqSweep { points: 11, ..FreqSweep::default() };
        let s = synthesize_cfr(&[mpc(0.0, 0.0, 40.0, 0.0)], &noiseless(freqs)).unwrap();
        let p = AntennaPattern::thz_horn();
        for a in 0..s.grid.n_az() {
            for e in 0..s.grid.n_el() {
                let g = db_to_lin(antenna_gain(&p, wrap_180(s.grid.az(a) - 40.0), s.grid.el(e))).sqrt();
                for f in 0..11 {
                    let c = s.at(f, a, e);
                    assert!((c.re - g).abs() < 1e-12 * g.max(1.0) && c.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ten_ns_peaks_at_bin_200() {
        // plain N-point inverse FFT of the boresight direction, no window
        let s = synthesize_cfr(&[mpc(0.0, 10.0, 0.0, 0.0)], &noiseless(FreqSweep::default())).unwrap();
        let n = s.freqs.points;
        let mut buf: Vec<Complex64> = (0..n).map(|k| s.at(k, 0, 2)).collect();
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        let peak = (0..n).max_by(|&i, &j| buf[i].norm().total_cmp(&buf[j].norm())).unwrap();
        assert_eq!(peak, 200);
    }

    #[test]
    fn parseval_single_path() {
        let s = synthesize_cfr(&[mpc(-80.0, 7.3, 90.0, 10.0)], &noiseless(FreqSweep::default())).unwrap();
        let n = s.freqs.points;
        let mut buf: Vec<Complex64> = (0..n).map(|k| s.at(k, 18, 3)).collect();
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        // unnormalized inverse FFT: sum |x|^2 = n * sum |X|^2, so PDP energy of
        // the 1/n-scaled transform equals |a g|^2 per frequency sample
        let energy: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n) as f64;
        let expected = db_to_lin(-80.0) * db_to_lin(26.0);
        assert!((energy - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let freqs = FreqSweep { points: 64, ..FreqSweep::default() };
        let paths = [mpc(-90.0, 12.0, 10.0, 0.0)];
        let mut setup = noiseless(freqs);
        let clean = synthesize_cfr(&paths, &setup).unwrap();
        setup.noise_db = Some(-120.0);
        let a = synthesize_cfr(&paths, &setup).unwrap();
        let b = synthesize_cfr(&paths, &setup).unwrap();
        assert_eq!(a, b);
        setup.seed = 2;
        let c = synthesize_cfr(&paths, &setup).unwrap();
        assert_ne!(a.cfr, c.cfr);
        // the difference between seeds lives entirely in the noise
        let na: Vec<_> = a.cfr.iter().zip(&clean.cfr).map(|(x, y)| x - y).collect();
        let nc: Vec<_> = c.cfr.iter().zip(&clean.cfr).map(|(x, y)| x - y).collect();
        let pa = na.iter().map(|z| z.norm_sqr()).sum::<f64>() / na.len() as f64;
        let pc = nc.iter().map(|z| z.norm_sqr()).sum::<f64>() / nc.len() as f64;
        for p in [pa, pc] {
            assert!((10.0 * p.log10() + 120.0).abs() < 0.5, "{p}");
        }
    }

    #[test]
    fn linear_in_paths() {
        let freqs = FreqSweep { points: 32, ..FreqSweep::default() };
        let setup = noiseless(freqs);
        let a = [mpc(-70.0, 5.0, 30.0, 0.0)];
        let b = [mpc(-75.0, 9.0, 200.0, -10.0), mpc(-85.0, 14.0, 300.0, 20.0)];
        let ab: Vec<Mpc> = a.iter().chain(&b).copied().collect();
        let sa = synthesize_cfr(&a, &setup).unwrap();
        let sb = synthesize_cfr(&b, &setup).unwrap();
        let sab = synthesize_cfr(&ab, &setup).unwrap();
        for i in 0..sab.cfr.len() {
            let d = sab.cfr[i] - sa.cfr[i] - sb.cfr[i];
            assert!(d.norm() < 1e-15);
        }
    }

    #[test]
    fn bad_grid_rejected() {
        let mut setup = noiseless(FreqSweep { points: 4, ..FreqSweep::default() });
        setup.grid.az_step = 7.0;
        assert!(synthesize_cfr(&[], &setup).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let setup = SoundingSetup {
            freqs: FreqSweep { points: 8, ..FreqSweep::default() },
            ..SoundingSetup::campaign("tx1", "rx3", 5)
        };
        let s = synthesize_cfr(&[mpc(-60.0, 3.0, 15.0, 0.0)], &setup).unwrap();
        let path = save_sounding(&s, dir.path(), "tx1_rx3").unwrap();
        let back = load_sounding(&path).unwrap();
        assert_eq!(back.shape(), s.shape());
        for (x, y) in back.cfr.iter().zip(&s.cfr) {
            assert!((x - y).norm() <= 1e-8 * y.norm().max(1e-30));
        }
    }
}
