//! Calendar dates, MJD, and the UTC → TDB offset.
//!
//! TDB − UTC is approximated as ΔAT + 32.184 s, with ΔAT from a static
//! leap-second table that ends with the 2017-01-01 step (ΔAT = 37 s).
//! The periodic TDB − TT terms (< 2 ms) are ignored.

use crate::constants::SECONDS_PER_DAY;

/// TT − TAI [s].
const TT_MINUS_TAI: f64 = 32.184;

/// (year, month, TAI − UTC) for each leap-second step.
const LEAP_SECONDS: [(i64, u32, f64); 28] = [
    (1972, 1, 10.0),
    (1972, 7, 11.0),
    (1973, 1, 12.0),
    (1974, 1, 13.0),
    (1975, 1, 14.0),
    (1976, 1, 15.0),
    (1977, 1, 16.0),
    (1978, 1, 17.0),
    (1979, 1, 18.0),
    (1980, 1, 19.0),
    (1981, 7, 20.0),
    (1982, 7, 21.0),
    (1983, 7, 22.0),
    (1985, 7, 23.0),
    (1988, 1, 24.0),
    (1990, 1, 25.0),
    (1991, 1, 26.0),
    (1992, 7, 27.0),
    (1993, 7, 28.0),
    (1994, 7, 29.0),
    (1996, 1, 30.0),
    (1997, 7, 31.0),
    (1999, 1, 32.0),
    (2006, 1, 33.0),
    (2009, 1, 34.0),
    (2012, 7, 35.0),
    (2015, 7, 36.0),
    (2017, 1, 37.0),
];

/// Days since 1970-01-01 of a proleptic Gregorian date.
fn days_from_civil(year: i64, month: u32, day: u32) -> i64 {
    let y = if month <= 2 { year - 1 } else { year };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = month as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

const MJD_UNIX_EPOCH: i64 = 40_587;

/// MJD of a calendar date with a fractional day (e.g. `day = 1.5` is noon
/// on the first of the month).
pub fn mjd_from_calendar(year: i64, month: u32, day: f64) -> f64 {
    let whole = day.floor();
    let frac = day - whole;
    (days_from_civil(year, month, whole as u32) + MJD_UNIX_EPOCH) as f64 + frac
}

/// Calendar date `(year, month, fractional day)` of an MJD.
pub fn calendar_from_mjd(mjd: f64) -> (i64, u32, f64) {
    let whole = mjd.floor();
    let (y, m, d) = civil_from_days(whole as i64 - MJD_UNIX_EPOCH);
    (y, m, d as f64 + (mjd - whole))
}

fn tai_minus_utc(mjd_utc: f64) -> f64 {
    let mut offset = LEAP_SECONDS[0].2;
    for &(y, m, dat) in LEAP_SECONDS.iter() {
        let start = (days_from_civil(y, m, 1) + MJD_UNIX_EPOCH) as f64;
        if mjd_utc >= start {
            offset = dat;
        } else {
            break;
        }
    }
    offset
}

/// TDB − UTC in seconds at a UTC epoch.
pub fn tdb_minus_utc(mjd_utc: f64) -> f64 {
    tai_minus_utc(mjd_utc) + TT_MINUS_TAI
}

pub fn utc_to_tdb(mjd_utc: f64) -> f64 {
    mjd_utc + tdb_minus_utc(mjd_utc) / SECONDS_PER_DAY
}

pub fn tdb_to_utc(mjd_tdb: f64) -> f64 {
    let guess = mjd_tdb - tdb_minus_utc(mjd_tdb) / SECONDS_PER_DAY;
    mjd_tdb - tdb_minus_utc(guess) / SECONDS_PER_DAY
}
