//! Compression profiles: grid resolution ratio, channel counts and bit depths.

use alloc::format;
use alloc::string::{String, ToString};

use crate::quant::QuantSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub name: String,
    /// Texture width divided by the resolution of the first high-res grid.
    pub g0_ratio: u32,
    pub c0: u32,
    pub b0: u32,
    pub c1: u32,
    pub b1: u32,
}

/// Names accepted by [`Profile::by_name`].
pub const BUILTIN_NAMES: [&str; 4] = ["ntc0.2", "ntc0.5", "ntc1.0", "ntc2.25"];

impl Profile {
    pub fn new(name: &str, g0_ratio: u32, c0: u32, b0: u32, c1: u32, b1: u32) -> Result<Self> {
        let p = Self {
            name: name.to_string(),
            g0_ratio,
            c0,
            b0,
            c1,
            b1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn ntc_0_2() -> Self {
        Self::builtin("ntc0.2", 4, 8, 2, 12, 4)
    }

    pub fn ntc_0_5() -> Self {
        Self::builtin("ntc0.5", 4, 12, 4, 20, 4)
    }

    pub fn ntc_1_0() -> Self {
        Self::builtin("ntc1.0", 2, 12, 2, 10, 4)
    }

    pub fn ntc_2_25() -> Self {
        Self::builtin("ntc2.25", 2, 16, 4, 12, 4)
    }

    fn builtin(name: &str, g0_ratio: u32, c0: u32, b0: u32, c1: u32, b1: u32) -> Self {
        Self {
            name: name.to_string(),
            g0_ratio,
            c0,
            b0,
            c1,
            b1,
        }
    }

    pub fn all() -> [Profile; 4] {
        [Self::ntc_0_2(), Self::ntc_0_5(), Self::ntc_1_0(), Self::ntc_2_25()]
    }

    pub fn by_name(name: &str) -> Option<Profile> {
        Self::all().into_iter().find(|p| p.name == name)
    }

    /// Looks up a built-in profile matching these parameters, if any.
    pub fn matching_builtin(g0_ratio: u32, c0: u32, b0: u32, c1: u32, b1: u32) -> Option<Profile> {
        Self::all()
            .into_iter()
            .find(|p| p.g0_ratio == g0_ratio && p.c0 == c0 && p.b0 == b0 && p.c1 == c1 && p.b1 == b1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.b0) || !(1..=8).contains(&self.b1) {
            return Err(Error::InvalidProfile(format!(
                "bit depths must be in 1..=8, got {} and {}",
                self.b0, self.b1
            )));
        }
        if self.c0 == 0 || self.c1 == 0 {
            return Err(Error::InvalidProfile("grid channel counts must be >= 1".into()));
        }
        if self.g0_ratio != 2 && self.g0_ratio != 4 {
            return Err(Error::InvalidProfile(format!(
                "grid ratio must be 2 or 4, got {}",
                self.g0_ratio
            )));
        }
        Ok(())
    }

    pub fn quant0(&self) -> QuantSpec {
        QuantSpec::new(self.b0 as u8)
    }

    pub fn quant1(&self) -> QuantSpec {
        QuantSpec::new(self.b1 as u8)
    }

    /// Decoder input width: four high-res taps, one low-res sample, 12 encoding
    /// values and the normalized LOD.
    pub fn input_width(&self) -> usize {
        4 * self.c0 as usize + self.c1 as usize + crate::encoding::ENCODING_WIDTH + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_match_profile_table() {
        let p = Profile::by_name("ntc0.2").unwrap();
        assert_eq!((p.g0_ratio, p.c0, p.b0, p.c1, p.b1), (4, 8, 2, 12, 4));
        let p = Profile::by_name("ntc0.5").unwrap();
        assert_eq!((p.g0_ratio, p.c0, p.b0, p.c1, p.b1), (4, 12, 4, 20, 4));
        let p = Profile::by_name("ntc1.0").unwrap();
        assert_eq!((p.g0_ratio, p.c0, p.b0, p.c1, p.b1), (2, 12, 2, 10, 4));
        let p = Profile::by_name("ntc2.25").unwrap();
        assert_eq!((p.g0_ratio, p.c0, p.b0, p.c1, p.b1), (2, 16, 4, 12, 4));
        assert!(Profile::by_name("ntc3").is_none());
        for p in Profile::all() {
            p.validate().unwrap();
        }
    }

    #[test]
    fn input_width() {
        assert_eq!(Profile::ntc_0_2().input_width(), 57);
        assert_eq!(Profile::ntc_2_25().input_width(), 89);
    }

    #[test]
    fn rejects_invalid() {
        assert!(Profile::new("x", 3, 8, 2, 12, 4).is_err());
        assert!(Profile::new("x", 2, 0, 2, 12, 4).is_err());
        assert!(Profile::new("x", 2, 8, 9, 12, 4).is_err());
        assert!(Profile::new("x", 2, 8, 1, 12, 8).is_ok());
    }
}
