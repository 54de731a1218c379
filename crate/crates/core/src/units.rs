//! Physical constants, unit parsing and per-scenario unit systems.
//!
//! Simulations always run in SI. A [`UnitSystem`] only changes how a scenario
//! is presented: observation rows, scenario files and task answers are all
//! expressed in the scenario's declared units.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Newtonian gravitational constant (m^3 kg^-1 s^-2).
pub const G_SI: f64 = 6.6743e-11;
/// Astronomical unit (m).
pub const AU: f64 = 1.495978707e11;
/// Solar mass (kg).
pub const M_SUN: f64 = 1.989e30;
/// Julian year (s).
pub const YEAR: f64 = 3.15576e7;
/// Day (s).
pub const DAY: f64 = 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("unknown unit symbol `{0}`")]
    UnknownSymbol(String),
    #[error("malformed unit expression `{0}`")]
    Malformed(String),
    #[error("cannot convert `{from}` to `{to}`: dimensions differ")]
    Incompatible { from: String, to: String },
}

/// Exponents of mass, length and time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dimension {
    pub mass: i8,
    pub length: i8,
    pub time: i8,
}

impl Dimension {
    pub const NONE: Dimension = Dimension::new(0, 0, 0);
    pub const MASS: Dimension = Dimension::new(1, 0, 0);
    pub const LENGTH: Dimension = Dimension::new(0, 1, 0);
    pub const TIME: Dimension = Dimension::new(0, 0, 1);

    pub const fn new(mass: i8, length: i8, time: i8) -> Self {
        Self { mass, length, time }
    }

    fn scaled(self, k: i8) -> Self {
        Self::new(self.mass * k, self.length * k, self.time * k)
    }

    fn add(self, o: Self) -> Self {
        Self::new(self.mass + o.mass, self.length + o.length, self.time + o.time)
    }
}

/// A parsed unit: SI scale factor plus dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Unit {
    pub symbol: String,
    /// Multiply a value in this unit by `factor` to obtain SI.
    pub factor: f64,
    pub dimension: Dimension,
}

fn base_unit(sym: &str) -> Option<(f64, Dimension)> {
    let d = |m, l, t| Dimension::new(m, l, t);
    Some(match sym {
        "m" => (1.0, d(0, 1, 0)),
        "cm" => (1e-2, d(0, 1, 0)),
        "km" => (1e3, d(0, 1, 0)),
        "AU" | "au" => (AU, d(0, 1, 0)),
        "s" => (1.0, d(0, 0, 1)),
        "min" => (60.0, d(0, 0, 1)),
        "h" | "hr" => (3600.0, d(0, 0, 1)),
        "day" | "d" => (DAY, d(0, 0, 1)),
        "yr" | "year" => (YEAR, d(0, 0, 1)),
        "kg" => (1.0, d(1, 0, 0)),
        "g" => (1e-3, d(1, 0, 0)),
        "M_sun" | "Msun" => (M_SUN, d(1, 0, 0)),
        "J" => (1.0, d(1, 2, -2)),
        "erg" => (1e-7, d(1, 2, -2)),
        "1" | "" | "dimensionless" => (1.0, d(0, 0, 0)),
        _ => return None,
    })
}

/// Parses expressions such as `m`, `km/s`, `M_sun*AU^2/yr^2`.
pub fn parse_unit(expr: &str) -> Result<Unit, UnitError> {
    let trimmed = expr.trim();
    if trimmed.is_empty() || trimmed == "dimensionless" || trimmed == "1" {
        return Ok(Unit { symbol: trimmed.to_string(), factor: 1.0, dimension: Dimension::NONE });
    }
    let mut factor = 1.0;
    let mut dim = Dimension::NONE;
    let mut sign: i8 = 1;
    let mut rest = trimmed;
    loop {
        let end = rest.find(['*', '/']).unwrap_or(rest.len());
        let term = rest[..end].trim();
        let (sym, pow) = match term.split_once('^') {
            Some((s, p)) => {
                let p: i8 = p.trim().parse().map_err(|_| UnitError::Malformed(expr.into()))?;
                (s.trim(), p)
            }
            None => (term, 1),
        };
        if sym.is_empty() {
            return Err(UnitError::Malformed(expr.into()));
        }
        let (f, d) = base_unit(sym).ok_or_else(|| UnitError::UnknownSymbol(sym.into()))?;
        let k = sign * pow;
        factor *= f.powi(k as i32);
        dim = dim.add(d.scaled(k));
        if end == rest.len() {
            break;
        }
        sign = if rest.as_bytes()[end] == b'/' { -1 } else { 1 };
        rest = &rest[end + 1..];
    }
    Ok(Unit { symbol: trimmed.to_string(), factor, dimension: dim })
}

/// Converts `value` expressed in `from` into `to`.
pub fn convert(value: f64, from: &str, to: &str) -> Result<f64, UnitError> {
    let a = parse_unit(from)?;
    let b = parse_unit(to)?;
    if a.dimension != b.dimension {
        return Err(UnitError::Incompatible { from: from.into(), to: to.into() });
    }
    Ok(value * a.factor / b.factor)
}

/// Kind of physical quantity a task answer carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Time,
    Length,
    Mass,
    Speed,
    Energy,
    Dimensionless,
}

impl Quantity {
    pub fn dimension(self) -> Dimension {
        match self {
            Quantity::Time => Dimension::TIME,
            Quantity::Length => Dimension::LENGTH,
            Quantity::Mass => Dimension::MASS,
            Quantity::Speed => Dimension::new(0, 1, -1),
            Quantity::Energy => Dimension::new(1, 2, -2),
            Quantity::Dimensionless => Dimension::NONE,
        }
    }
}

/// The length, time and mass units a scenario is presented in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub name: String,
    pub length: String,
    pub time: String,
    pub mass: String,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self::si()
    }
}

impl UnitSystem {
    pub fn si() -> Self {
        Self::new("si", "m", "s", "kg")
    }

    pub fn cgs() -> Self {
        Self::new("cgs", "cm", "s", "g")
    }

    /// AU, years and solar masses.
    pub fn astro() -> Self {
        Self::new("astro", "AU", "yr", "M_sun")
    }

    pub fn new(name: &str, length: &str, time: &str, mass: &str) -> Self {
        Self { name: name.into(), length: length.into(), time: time.into(), mass: mass.into() }
    }

    /// Checks every symbol resolves to a unit of the right dimension.
    pub fn validate(&self) -> Result<(), UnitError> {
        for (sym, want) in
            [(&self.length, Dimension::LENGTH), (&self.time, Dimension::TIME), (&self.mass, Dimension::MASS)]
        {
            let u = parse_unit(sym)?;
            if u.dimension != want || !(u.factor > 0.0) {
                return Err(UnitError::Incompatible { from: sym.clone(), to: format!("{want:?}") });
            }
        }
        Ok(())
    }

    fn factor(sym: &str) -> f64 {
        parse_unit(sym).map(|u| u.factor).unwrap_or(f64::NAN)
    }

    /// Metres per length unit.
    pub fn length_factor(&self) -> f64 {
        Self::factor(&self.length)
    }

    /// Seconds per time unit.
    pub fn time_factor(&self) -> f64 {
        Self::factor(&self.time)
    }

    /// Kilograms per mass unit.
    pub fn mass_factor(&self) -> f64 {
        Self::factor(&self.mass)
    }

    /// G expressed in this system's units.
    pub fn gravitational_constant(&self) -> f64 {
        let (l, t, m) = (self.length_factor(), self.time_factor(), self.mass_factor());
        G_SI * m * t * t / (l * l * l)
    }

    /// Unit string for a quantity, using named units when the system has one.
    pub fn unit_for(&self, q: Quantity) -> String {
        match q {
            Quantity::Time => self.time.clone(),
            Quantity::Length => self.length.clone(),
            Quantity::Mass => self.mass.clone(),
            Quantity::Speed => format!("{}/{}", self.length, self.time),
            Quantity::Energy => match (self.mass.as_str(), self.length.as_str(), self.time.as_str()) {
                ("kg", "m", "s") => "J".into(),
                ("g", "cm", "s") => "erg".into(),
                (m, l, t) => format!("{m}*{l}^2/{t}^2"),
            },
            Quantity::Dimensionless => String::new(),
        }
    }

    /// SI value of one unit of `q` in this system.
    pub fn si_factor(&self, q: Quantity) -> f64 {
        let d = q.dimension();
        self.mass_factor().powi(d.mass as i32)
            * self.length_factor().powi(d.length as i32)
            * self.time_factor().powi(d.time as i32)
    }
}

impl fmt::Display for UnitSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}, {}, {})", self.name, self.length, self.time, self.mass)
    }
}

/// Long-form name used in prompts ("seconds", "meters").
pub fn unit_word(sym: &str) -> String {
    match sym {
        "s" => "seconds".into(),
        "min" => "minutes".into(),
        "h" | "hr" => "hours".into(),
        "day" | "d" => "days".into(),
        "yr" | "year" => "years".into(),
        "m" => "meters".into(),
        "cm" => "centimeters".into(),
        "km" => "kilometers".into(),
        "kg" => "kilograms".into(),
        "J" => "joules".into(),
        "erg" => "ergs".into(),
        "g" => "grams".into(),
        other => other.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_compound_units() {
        let u = parse_unit("km/s").unwrap();
        assert_eq!(u.dimension, Dimension::new(0, 1, -1));
        assert_eq!(u.factor, 1e3);
        let e = parse_unit("M_sun*AU^2/yr^2").unwrap();
        assert_eq!(e.dimension, Quantity::Energy.dimension());
        let rel = (e.factor - M_SUN * AU * AU / (YEAR * YEAR)).abs() / e.factor;
        assert!(rel < 1e-15);
    }

    #[test]
    fn rejects_bad_units() {
        assert!(matches!(parse_unit("furlong"), Err(UnitError::UnknownSymbol(_))));
        assert!(matches!(parse_unit("m/"), Err(UnitError::Malformed(_))));
        assert!(matches!(convert(1.0, "m", "s"), Err(UnitError::Incompatible { .. })));
    }

    #[test]
    fn km_to_m() {
        assert_eq!(convert(1.5, "km", "m").unwrap(), 1500.0);
        assert_eq!(convert(1.0, "erg", "J").unwrap(), 1e-7);
    }

    #[test]
    fn g_round_trips_to_si_in_every_system() {
        for sys in [UnitSystem::si(), UnitSystem::cgs(), UnitSystem::astro()] {
            sys.validate().unwrap();
            let g = sys.gravitational_constant();
            let back = g * sys.length_factor().powi(3) / (sys.mass_factor() * sys.time_factor().powi(2));
            assert!((back - 6.674e-11).abs() / 6.674e-11 < 1e-3, "{sys}: {back}");
        }
    }

    #[test]
    fn named_energy_units() {
        assert_eq!(UnitSystem::si().unit_for(Quantity::Energy), "J");
        assert_eq!(UnitSystem::cgs().unit_for(Quantity::Energy), "erg");
        assert_eq!(UnitSystem::astro().unit_for(Quantity::Energy), "M_sun*AU^2/yr^2");
        assert_eq!(UnitSystem::astro().unit_for(Quantity::Speed), "AU/yr");
    }

    #[test]
    fn invalid_system_rejected() {
        assert!(UnitSystem::new("bad", "s", "s", "kg").validate().is_err());
    }
}
