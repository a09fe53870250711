//! RBJ-cookbook second-order sections for the random parametric equalizer.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandKind {
    Peaking,
    LowShelf,
    HighShelf,
}

impl BandKind {
    pub fn name(self) -> &'static str {
        match self {
            BandKind::Peaking => "peaking",
            BandKind::LowShelf => "low_shelf",
            BandKind::HighShelf => "high_shelf",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "peaking" => Some(BandKind::Peaking),
            "low_shelf" => Some(BandKind::LowShelf),
            "high_shelf" => Some(BandKind::HighShelf),
            _ => None,
        }
    }
}

/// One equalizer band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqBand {
    pub kind: BandKind,
    pub center_hz: f64,
    pub q: f64,
    pub gain_db: f64,
}

/// Normalized biquad, `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoeffs {
    pub fn design(band: &EqBand, sample_rate: u32) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(band.center_hz > 0.0 && band.center_hz < nyquist) {
            return Err(Error::Parameter(format!(
                "band centre {} Hz outside (0, {nyquist})",
                band.center_hz
            )));
        }
        if band.q.is_nan() || band.q <= 0.0 || !band.gain_db.is_finite() {
            return Err(Error::Parameter(format!("bad Q/gain in {band:?}")));
        }
        let a = 10f64.powf(band.gain_db / 40.0);
        let w0 = 2.0 * PI * band.center_hz / sample_rate as f64;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * band.q);
        let sq = 2.0 * a.sqrt() * alpha;
        let (b0, b1, b2, a0, a1, a2) = match band.kind {
            BandKind::Peaking => (
                1.0 + alpha * a,
                -2.0 * cos,
                1.0 - alpha * a,
                1.0 + alpha / a,
                -2.0 * cos,
                1.0 - alpha / a,
            ),
            BandKind::LowShelf => (
                a * ((a + 1.0) - (a - 1.0) * cos + sq),
                2.0 * a * ((a - 1.0) - (a + 1.0) * cos),
                a * ((a + 1.0) - (a - 1.0) * cos - sq),
                (a + 1.0) + (a - 1.0) * cos + sq,
                -2.0 * ((a - 1.0) + (a + 1.0) * cos),
                (a + 1.0) + (a - 1.0) * cos - sq,
            ),
            BandKind::HighShelf => (
                a * ((a + 1.0) + (a - 1.0) * cos + sq),
                -2.0 * a * ((a - 1.0) + (a + 1.0) * cos),
                a * ((a + 1.0) + (a - 1.0) * cos - sq),
                (a + 1.0) - (a - 1.0) * cos + sq,
                2.0 * ((a - 1.0) - (a + 1.0) * cos),
                (a + 1.0) - (a - 1.0) * cos - sq,
            ),
        };
        let c = BiquadCoeffs {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
        };
        if !c.is_stable() {
            return Err(Error::Parameter(format!("unstable section for {band:?}")));
        }
        Ok(c)
    }

    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// Largest pole magnitude.
    pub fn pole_radius(&self) -> f64 {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            self.a2.sqrt()
        } else {
            let r = disc.sqrt();
            ((-self.a1 + r) / 2.0).abs().max(((-self.a1 - r) / 2.0).abs())
        }
    }

    /// Filters in place (transposed direct form II).
    pub fn process(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b0 * input + s1;
            s1 = self.b1 * input - self.a1 * y + s2;
            s2 = self.b2 * input - self.a2 * y;
            *v = y;
        }
    }
}

/// Runs `x` through the serial cascade of `bands`.
pub fn eq_cascade(x: &mut [f64], bands: &[EqBand], sample_rate: u32) -> Result<()> {
    let sections = bands
        .iter()
        .map(|b| BiquadCoeffs::design(b, sample_rate))
        .collect::<Result<Vec<_>>>()?;
    for s in &sections {
        s.process(x);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(kind: BandKind, f: f64, q: f64, g: f64) -> EqBand {
        EqBand {
            kind,
            center_hz: f,
            q,
            gain_db: g,
        }
    }

    /// Magnitude response evaluated directly from the transfer function.
    fn gain_at(c: &BiquadCoeffs, f: f64, sr: f64) -> f64 {
        let w = 2.0 * PI * f / sr;
        let z1 = rustfft::num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = c.b0 + c.b1 * z1 + c.b2 * z2;
        let den = 1.0 + c.a1 * z1 + c.a2 * z2;
        (num / den).norm()
    }

    #[test]
    fn peaking_gain_at_centre() {
        let c = BiquadCoeffs::design(&band(BandKind::Peaking, 1000.0, 2.0, 12.0), 24_000).unwrap();
        let db = 20.0 * gain_at(&c, 1000.0, 24_000.0).log10();
        assert!((db - 12.0).abs() < 1e-9);
        assert!((20.0 * gain_at(&c, 10.0, 24_000.0).log10()).abs() < 0.05);
    }

    #[test]
    fn shelves_reach_their_gain() {
        let lo = BiquadCoeffs::design(&band(BandKind::LowShelf, 500.0, 0.707, -6.0), 24_000).unwrap();
        assert!((20.0 * gain_at(&lo, 5.0, 24_000.0).log10() + 6.0).abs() < 0.05);
        let hi = BiquadCoeffs::design(&band(BandKind::HighShelf, 2000.0, 0.707, 6.0), 24_000).unwrap();
        assert!((20.0 * gain_at(&hi, 11_900.0, 24_000.0).log10() - 6.0).abs() < 0.05);
    }

    #[test]
    fn zero_gain_is_identity() {
        for kind in [BandKind::Peaking, BandKind::LowShelf, BandKind::HighShelf] {
            let c = BiquadCoeffs::design(&band(kind, 800.0, 3.0, 0.0), 24_000).unwrap();
            let mut x = vec![0.0; 64];
            x[0] = 1.0;
            c.process(&mut x);
            assert!((x[0] - 1.0).abs() < 1e-12);
            assert!(x[1..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn above_nyquist_rejected() {
        assert!(BiquadCoeffs::design(&band(BandKind::Peaking, 13_000.0, 1.0, 3.0), 24_000).is_err());
        assert!(BiquadCoeffs::design(&band(BandKind::Peaking, 1_000.0, 0.0, 3.0), 24_000).is_err());
    }

    #[test]
    fn pole_radius_agrees_with_triangle() {
        let c = BiquadCoeffs::design(&band(BandKind::Peaking, 60.0, 5.0, -12.0), 24_000).unwrap();
        assert!(c.is_stable());
        assert!(c.pole_radius() < 1.0);
        let bad = BiquadCoeffs { b0: 1.0, b1: 0.0, b2: 0.0, a1: -2.1, a2: 1.1 };
        assert!(!bad.is_stable());
        assert!(bad.pole_radius() >= 1.0);
    }
}
