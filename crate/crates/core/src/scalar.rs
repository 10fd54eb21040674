//! Scalar kinds supported by fields and operators: `f32`, `f64` and `Complex64`.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    F32,
    F64,
    C64,
}

impl ScalarKind {
    /// Tag byte used by the binary field format.
    pub fn code(self) -> u8 {
        match self {
            ScalarKind::F32 => 1,
            ScalarKind::F64 => 2,
            ScalarKind::C64 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ScalarKind::F32),
            2 => Some(ScalarKind::F64),
            3 => Some(ScalarKind::C64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::F32 => "f32",
            ScalarKind::F64 => "f64",
            ScalarKind::C64 => "c64",
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            ScalarKind::F32 => 4,
            ScalarKind::F64 => 8,
            ScalarKind::C64 => 16,
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, ScalarKind::C64)
    }
}

impl Display for ScalarKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScalarKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f32" | "single" => Ok(ScalarKind::F32),
            "f64" | "double" => Ok(ScalarKind::F64),
            "c64" | "complex" => Ok(ScalarKind::C64),
            other => Err(format!("unknown precision `{other}` (expected f32, f64 or c64)")),
        }
    }
}

/// Arithmetic needed by the kernels. Conversions go through `f64` / `Complex64`.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + Default
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    const KIND: ScalarKind;

    fn from_f64(v: f64) -> Self;

    /// Real kinds keep the real part only.
    fn from_c64(v: Complex64) -> Self;

    fn to_c64(self) -> Complex64;

    fn norm_sqr(self) -> f64;

    fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    fn is_finite(self) -> bool;

    fn conj(self) -> Self;

    fn write_le(self, out: &mut Vec<u8>);

    /// `bytes` holds exactly `KIND.bytes()` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// Parse from a real part and an optional imaginary part.
    fn parse_parts(re: &str, im: Option<&str>) -> Result<Self, String>;

    /// Text form of the components, shortest round-trip representation.
    fn format_parts(self) -> (String, Option<String>);

    /// Raw bit pattern mixed into checksums.
    fn bits(self) -> u128;
}

fn parse_num<F: std::str::FromStr>(s: &str) -> Result<F, String> {
    s.trim()
        .parse::<F>()
        .map_err(|_| format!("invalid number `{s}`"))
}

impl Scalar for f64 {
    const KIND: ScalarKind = ScalarKind::F64;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_c64(v: Complex64) -> Self {
        v.re
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn conj(self) -> Self {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
    fn parse_parts(re: &str, im: Option<&str>) -> Result<Self, String> {
        match im {
            Some(im) if parse_num::<f64>(im)? != 0.0 => {
                Err("complex value where a real value is expected".into())
            }
            _ => parse_num(re),
        }
    }
    fn format_parts(self) -> (String, Option<String>) {
        (format!("{self:e}"), None)
    }
    fn bits(self) -> u128 {
        self.to_bits() as u128
    }
}

impl Scalar for f32 {
    const KIND: ScalarKind = ScalarKind::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn from_c64(v: Complex64) -> Self {
        v.re as f32
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self as f64, 0.0)
    }
    fn norm_sqr(self) -> f64 {
        let v = self as f64;
        v * v
    }
    fn abs(self) -> f64 {
        f32::abs(self) as f64
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn conj(self) -> Self {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
    fn parse_parts(re: &str, im: Option<&str>) -> Result<Self, String> {
        match im {
            Some(im) if parse_num::<f32>(im)? != 0.0 => {
                Err("complex value where a real value is expected".into())
            }
            _ => parse_num(re),
        }
    }
    fn format_parts(self) -> (String, Option<String>) {
        (format!("{self:e}"), None)
    }
    fn bits(self) -> u128 {
        self.to_bits() as u128
    }
}

impl Scalar for Complex64 {
    const KIND: ScalarKind = ScalarKind::C64;

    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn from_c64(v: Complex64) -> Self {
        v
    }
    fn to_c64(self) -> Complex64 {
        self
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        Complex64::new(
            f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")),
            f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")),
        )
    }
    fn parse_parts(re: &str, im: Option<&str>) -> Result<Self, String> {
        let im = match im {
            Some(im) => parse_num(im)?,
            None => 0.0,
        };
        Ok(Complex64::new(parse_num(re)?, im))
    }
    fn format_parts(self) -> (String, Option<String>) {
        (format!("{:e}", self.re), Some(format!("{:e}", self.im)))
    }
    fn bits(self) -> u128 {
        ((self.re.to_bits() as u128) << 64) | self.im.to_bits() as u128
    }
}

/// FNV-1a over the bit patterns; order-sensitive, used to compare outputs bitwise.
pub fn checksum<T: Scalar>(values: &[T]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for v in values {
        let b = v.bits();
        for k in 0..T::KIND.bytes() {
            h ^= ((b >> (8 * k)) & 0xff) as u64;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}
