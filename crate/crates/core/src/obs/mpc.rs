//! Minor Planet Center 80-column optical astrometry records.
//!
//! Column layout (1-based, inclusive):
//!
//! | columns | content                                   |
//! |---------|-------------------------------------------|
//! | 1–12    | packed number / provisional designation   |
//! | 15      | observation type (note 2)                 |
//! | 16–32   | UTC date `YYYY MM DD.dddddd`              |
//! | 33–44   | right ascension `HH MM SS.ddd`            |
//! | 45–56   | declination `sDD MM SS.dd`                |
//! | 66–70   | magnitude                                 |
//! | 71      | band                                      |
//! | 78–80   | observatory code                          |

use std::f64::consts::PI;

use crate::constants::ARCSEC;
use crate::error::{Error, Result};
use crate::obs::time::{calendar_from_mjd, mjd_from_calendar, tdb_to_utc, utc_to_tdb};
use crate::obs::Observation;

/// Default astrometric uncertainty applied to parsed records [arcsec].
pub const DEFAULT_SIGMA_ARCSEC: f64 = 1.0;

/// Observation-type codes accepted as ground-based optical astrometry.
const OPTICAL_TYPES: &[char] = &[
    ' ', 'A', 'B', 'C', 'c', 'E', 'H', 'K', 'M', 'N', 'n', 'O', 'P', 'T', 'X', 'x', 'e',
];

fn span_err(start: usize, end: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        start,
        end,
        message: message.into(),
    }
}

/// Slice of 1-based inclusive columns.
fn cols(line: &str, start: usize, end: usize) -> &str {
    &line[start - 1..end]
}

fn parse_field<T: std::str::FromStr>(line: &str, start: usize, end: usize, what: &str) -> Result<T> {
    let raw = cols(line, start, end).trim();
    if raw.is_empty() {
        return Err(span_err(start, end, format!("missing {what}")));
    }
    raw.parse::<T>()
        .map_err(|_| span_err(start, end, format!("malformed {what} {raw:?}")))
}

/// Parse one 80-column record into an [`Observation`] with default sigmas.
pub fn parse_mpc80(line: &str) -> Result<Observation> {
    let line = line.trim_end_matches(['\n', '\r']);
    if !line.is_ascii() {
        return Err(span_err(1, 80, "record contains non-ASCII characters"));
    }
    if line.len() > 80 {
        return Err(span_err(81, line.len(), "record longer than 80 columns"));
    }
    // Editors strip trailing blanks; the layout is fixed-width so pad back.
    let padded;
    let line = if line.len() < 80 {
        padded = format!("{line:<80}");
        padded.as_str()
    } else {
        line
    };

    let year: i64 = parse_field(line, 16, 19, "year")?;
    let month: u32 = parse_field(line, 21, 22, "month")?;
    let day: f64 = parse_field(line, 24, 32, "day")?;
    if !(1..=12).contains(&month) {
        return Err(span_err(21, 22, format!("month {month} out of range")));
    }
    if !(1.0..32.0).contains(&day) {
        return Err(span_err(24, 32, format!("day {day} out of range")));
    }

    let obs_type = line.as_bytes()[14] as char;
    if !OPTICAL_TYPES.contains(&obs_type) {
        return Err(span_err(
            15,
            15,
            format!("unsupported record type {obs_type:?}"),
        ));
    }

    let hours: f64 = parse_field(line, 33, 34, "RA hours")?;
    let minutes: f64 = parse_field(line, 36, 37, "RA minutes")?;
    let seconds: f64 = parse_field(line, 39, 44, "RA seconds")?;
    if !(0.0..24.0).contains(&hours) || !(0.0..60.0).contains(&minutes) || !(0.0..60.0).contains(&seconds) {
        return Err(span_err(33, 44, "right ascension out of range"));
    }
    let ra = (hours + minutes / 60.0 + seconds / 3600.0) * PI / 12.0;

    let sign = match line.as_bytes()[44] {
        b'+' | b' ' => 1.0,
        b'-' => -1.0,
        other => {
            return Err(span_err(
                45,
                45,
                format!("invalid declination sign {:?}", other as char),
            ))
        }
    };
    let deg: f64 = parse_field(line, 46, 47, "Dec degrees")?;
    let arcmin: f64 = parse_field(line, 49, 50, "Dec arcminutes")?;
    let arcsec: f64 = parse_field(line, 52, 56, "Dec arcseconds")?;
    if !(0.0..60.0).contains(&arcmin) || !(0.0..60.0).contains(&arcsec) {
        return Err(span_err(45, 56, "declination minutes/seconds out of range"));
    }
    let dec = sign * (deg + arcmin / 60.0 + arcsec / 3600.0).to_radians();
    if dec.abs() >= PI / 2.0 {
        return Err(span_err(45, 56, "declination outside (-90, +90) degrees"));
    }

    let mag_raw = cols(line, 66, 70).trim();
    let magnitude = if mag_raw.is_empty() {
        None
    } else {
        Some(
            mag_raw
                .parse::<f64>()
                .map_err(|_| span_err(66, 70, format!("malformed magnitude {mag_raw:?}")))?,
        )
    };

    let obs_code = cols(line, 78, 80).to_string();
    if obs_code.trim().len() != 3 {
        return Err(span_err(78, 80, "missing observatory code"));
    }

    let epoch = utc_to_tdb(mjd_from_calendar(year, month, day));
    Observation::new(
        epoch,
        ra,
        dec,
        obs_code,
        DEFAULT_SIGMA_ARCSEC,
        DEFAULT_SIGMA_ARCSEC,
        magnitude,
    )
}

/// Format an observation as an 80-column record (type `C`, CCD).
///
/// Precision is the layout's: 10⁻⁶ day, 0.001 s of RA, 0.01″ of Dec.
pub fn format_mpc80(obs: &Observation, designation: &str) -> String {
    let utc = (tdb_to_utc(obs.epoch) * 1e6).round() / 1e6;
    let (year, month, day) = calendar_from_mjd(utc);
    let date = format!("{year:04} {month:02} {day:09.6}");

    let mut ra_ms = (obs.ra * 12.0 / PI * 3_600_000.0).round() as i64;
    ra_ms = ra_ms.rem_euclid(24 * 3_600_000);
    let (h, rem) = (ra_ms / 3_600_000, ra_ms % 3_600_000);
    let (m, s_ms) = (rem / 60_000, rem % 60_000);
    let ra = format!("{h:02} {m:02} {:02}.{:03}", s_ms / 1000, s_ms % 1000);

    let sign = if obs.dec < 0.0 { '-' } else { '+' };
    let dec_cas = (obs.dec.abs() / ARCSEC * 100.0).round() as i64;
    let (d, rem) = (dec_cas / 360_000, dec_cas % 360_000);
    let (am, as_c) = (rem / 6000, rem % 6000);
    let dec = format!("{sign}{d:02} {am:02} {:02}.{:02}", as_c / 100, as_c % 100);

    let mag = match obs.magnitude {
        Some(v) => format!("{v:5.2}V"),
        None => "      ".to_string(),
    };

    let desig: String = designation.chars().take(12).collect();
    let line = format!(
        "{desig:<12}  C{date}{ra}{dec}         {mag}      {:>3}",
        obs.obs_code
    );
    debug_assert_eq!(line.len(), 80, "{line:?}");
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NOON_LINE: &str =
        "     K24A00A  C2024 01 01.50000 12 00 00.000+30 00 00.00         20.50V      500";

    #[test]
    fn hand_decoded_record() {
        assert_eq!(NOON_LINE.len(), 80);
        let obs = parse_mpc80(NOON_LINE).unwrap();
        assert!((obs.ra - PI).abs() < 1e-15);
        assert!((obs.dec - PI / 6.0).abs() < 1e-15);
        assert_eq!(obs.obs_code, "500");
        assert_eq!(obs.magnitude, Some(20.5));
        assert_eq!(obs.sigma_ra, 1.0);
        // 2024-01-01.5 UTC + 69.184 s
        assert!((obs.epoch - (60_310.5 + 69.184 / 86_400.0)).abs() < 1e-10);
    }

    #[test]
    fn blank_line_is_missing_date() {
        let err = parse_mpc80(&" ".repeat(80)).unwrap_err();
        match err {
            Error::Parse { start, message, .. } => {
                assert_eq!(start, 16);
                assert!(message.contains("missing"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn declination_beyond_pole_is_rejected() {
        let line = NOON_LINE.replace("+30 00 00.00", "+95 00 00.0 ");
        let err = parse_mpc80(&line).unwrap_err();
        assert!(matches!(err, Error::Parse { start: 45, .. }), "{err:?}");
    }

    #[test]
    fn radar_records_are_rejected() {
        let mut line = NOON_LINE.to_string();
        line.replace_range(14..15, "R");
        assert!(matches!(
            parse_mpc80(&line).unwrap_err(),
            Error::Parse { start: 15, .. }
        ));
    }

    #[test]
    fn malformed_month_names_its_columns() {
        let line = NOON_LINE.replace("2024 01 01", "2024 0x 01");
        assert!(matches!(
            parse_mpc80(&line).unwrap_err(),
            Error::Parse { start: 21, end: 22, .. }
        ));
    }

    #[test]
    fn format_reproduces_hand_line_fields() {
        let obs = parse_mpc80(NOON_LINE).unwrap();
        let line = format_mpc80(&obs, "     K24A00A");
        assert_eq!(&line[15..56], &NOON_LINE[15..56].replace("01.50000 ", "01.500000"));
        assert_eq!(&line[77..80], "500");
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(
            epoch in 55_000.0f64..62_000.0,
            ra in 0.0f64..(2.0 * PI),
            dec in -1.5f64..1.5,
            mag in proptest::option::of(10.0f64..25.0),
        ) {
            let obs = Observation::new(epoch, ra, dec, "F51".into(), 1.0, 1.0, mag).unwrap();
            let first = parse_mpc80(&format_mpc80(&obs, "TEST")).unwrap();
            let again = parse_mpc80(&format_mpc80(&first, "TEST")).unwrap();
            prop_assert_eq!(first.epoch, again.epoch);
            prop_assert_eq!(first.ra, again.ra);
            prop_assert_eq!(first.dec, again.dec);
            prop_assert_eq!(first.magnitude, again.magnitude);
            // quantization bounds of the layout
            prop_assert!((first.epoch - epoch).abs() <= 0.6e-6);
            prop_assert!(crate::constants::wrap_pi(first.ra - ra).abs() <= 0.51e-3 * PI / 43_200.0);
            prop_assert!((first.dec - dec).abs() <= 0.0051 * ARCSEC);
        }
    }
}
