//! Physical constants, decibel helpers and number formatting shared by all modules.

/// Propagation speed used for every delay/distance conversion, in m/s.
///
/// The rounded value keeps the sounder's 0.05 ns delay bin equal to 1.5 cm.
pub const PROPAGATION_SPEED: f64 = 3.0e8;

/// Carrier frequency used for free-space spreading loss, in Hz.
pub const CARRIER_HZ: f64 = 300.0e9;

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Free-space spreading loss `20 log10(4 pi d f / c)` in dB.
pub fn fspl_db(distance_m: f64, freq_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * distance_m * freq_hz / PROPAGATION_SPEED).log10()
}

pub fn meters_to_ns(d: f64) -> f64 {
    d / PROPAGATION_SPEED * 1e9
}

pub fn ns_to_meters(t: f64) -> f64 {
    t * 1e-9 * PROPAGATION_SPEED
}

/// Wraps an angle to `[0, 360)`.
pub fn wrap_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps an angle difference to `[-180, 180)`.
pub fn wrap_180(deg: f64) -> f64 {
    let w = wrap_360(deg + 180.0) - 180.0;
    if w < -180.0 {
        w + 360.0
    } else {
        w
    }
}

/// Formats a value with 9 significant digits, `%.9g` style.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    // rounding may bump the exponent (e.g. 9.999999999 -> 10.0000000)
    let sci = format!("{:.8e}", x);
    let (mantissa, e) = sci.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap();
    let exp = exp.max(e);
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), e)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".to_string()
        } else {
            t.to_string()
        }
    } else {
        s
    }
}
