//! Quantities with explicit unit suffixes, e.g. `"560 kHz"`, `"-155 uT"`,
//! `"1.48 MHz/T"`. Values are converted to SI (Hz, T, s, m, rad).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer};

/// Exponents of (s, T, m, rad).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dim([i8; 4]);

impl Dim {
    pub const TIME: Dim = Dim([1, 0, 0, 0]);
    pub const FREQUENCY: Dim = Dim([-1, 0, 0, 0]);
    pub const FIELD: Dim = Dim([0, 1, 0, 0]);
    pub const LENGTH: Dim = Dim([0, 0, 1, 0]);
    pub const ANGLE: Dim = Dim([0, 0, 0, 1]);
    /// Hz/T, for gyromagnetic ratios and κ.
    pub const FREQUENCY_PER_FIELD: Dim = Dim([-1, -1, 0, 0]);

    fn div(self, other: Dim) -> Dim {
        let mut out = [0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] - other.0[i];
        }
        Dim(out)
    }

    pub fn si_unit(&self) -> &'static str {
        match *self {
            Dim::TIME => "s",
            Dim::FREQUENCY => "Hz",
            Dim::FIELD => "T",
            Dim::LENGTH => "m",
            Dim::ANGLE => "rad",
            Dim::FREQUENCY_PER_FIELD => "Hz/T",
            _ => "SI",
        }
    }
}

fn unit(symbol: &str) -> Option<(f64, Dim)> {
    let u = match symbol {
        "s" => (1.0, Dim::TIME),
        "ms" => (1e-3, Dim::TIME),
        "us" | "µs" | "μs" => (1e-6, Dim::TIME),
        "ns" => (1e-9, Dim::TIME),
        "Hz" => (1.0, Dim::FREQUENCY),
        "kHz" => (1e3, Dim::FREQUENCY),
        "MHz" => (1e6, Dim::FREQUENCY),
        "GHz" => (1e9, Dim::FREQUENCY),
        "T" => (1.0, Dim::FIELD),
        "mT" => (1e-3, Dim::FIELD),
        "uT" | "µT" | "μT" => (1e-6, Dim::FIELD),
        "nT" => (1e-9, Dim::FIELD),
        "G" => (1e-4, Dim::FIELD),
        "m" => (1.0, Dim::LENGTH),
        "nm" => (1e-9, Dim::LENGTH),
        "pm" => (1e-12, Dim::LENGTH),
        "A" | "Å" => (1e-10, Dim::LENGTH),
        "rad" => (1.0, Dim::ANGLE),
        "deg" | "°" => (PI / 180.0, Dim::ANGLE),
        _ => return None,
    };
    Some(u)
}

/// Scale factor to SI and dimension of a unit such as `MHz/T`.
pub fn parse_unit(text: &str) -> Result<(f64, Dim), String> {
    let mut parts = text.split('/');
    let head = parts.next().unwrap_or("").trim();
    let (mut factor, mut dim) =
        unit(head).ok_or_else(|| format!("unknown unit '{head}'"))?;
    for p in parts {
        let p = p.trim();
        let (f, d) = unit(p).ok_or_else(|| format!("unknown unit '{p}'"))?;
        factor /= f;
        dim = dim.div(d);
    }
    Ok((factor, dim))
}

/// A number and its unit as written in the config.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub factor: f64,
    pub dim: Dim,
    text: String,
}

impl Quantity {
    pub fn parse(text: &str) -> Result<Self, String> {
        let t = text.trim();
        if t.parse::<f64>().is_ok() {
            return Err(format!("'{text}' has no unit; write e.g. '10 uT'"));
        }
        // longest numeric prefix, so "1e-6T" splits before the unit
        let (value, unit) = t
            .char_indices()
            .rev()
            .map(|(i, _)| i)
            .filter(|&i| i > 0)
            .find_map(|i| t[..i].trim_end().parse::<f64>().ok().map(|v| (v, &t[i..])))
            .ok_or_else(|| format!("cannot read a number from '{text}'"))?;
        if !value.is_finite() {
            return Err(format!("'{text}' is not finite"));
        }
        let (factor, dim) = parse_unit(unit.trim())?;
        Ok(Quantity {
            value,
            factor,
            dim,
            text: t.to_string(),
        })
    }

    /// SI value, checked against the expected dimension.
    pub fn si(&self, expected: Dim, name: &str) -> Result<f64, String> {
        if self.dim != expected {
            return Err(format!(
                "{name} = '{}' has the wrong unit; expected something convertible to {}",
                self.text,
                expected.si_unit()
            ));
        }
        Ok(self.value * self.factor)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Quantity::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn si(s: &str, dim: Dim) -> f64 {
        Quantity::parse(s).unwrap().si(dim, "x").unwrap()
    }

    #[test]
    fn converts_to_si() {
        assert_eq!(si("560 kHz", Dim::FREQUENCY), 560e3);
        assert_eq!(si("-155 uT", Dim::FIELD), -155e-6);
        assert_eq!(si("-155µT", Dim::FIELD), -155e-6);
        assert_eq!(si("10.3 ms", Dim::TIME), 10.3e-3);
        assert_eq!(si("2.5 GHz", Dim::FREQUENCY), 2.5e9);
        assert_eq!(si("1.48 MHz/T", Dim::FREQUENCY_PER_FIELD), 1.48e6);
        assert!((si("2.095 kHz/mT", Dim::FREQUENCY_PER_FIELD) / 2.095e6 - 1.0).abs() < 1e-15);
        assert_eq!(si("1e-6T", Dim::FIELD), 1e-6);
        assert!((si("180 deg", Dim::ANGLE) - PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_missing_or_wrong_units() {
        assert!(Quantity::parse("12").is_err());
        assert!(Quantity::parse("12 furlong").is_err());
        assert!(Quantity::parse("abc MHz").is_err());
        assert!(Quantity::parse("12 MHz").unwrap().si(Dim::FIELD, "x").is_err());
    }
}
