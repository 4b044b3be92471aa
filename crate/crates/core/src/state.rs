use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fourier coefficients `u(n)` for `n = -N..=N`, stored densely in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierState {
    n_trunc: usize,
    coeffs: Vec<Complex64>,
}

impl FourierState {
    pub fn zeros(n_trunc: usize) -> Self {
        Self {
            n_trunc,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * n_trunc + 1],
        }
    }

    pub fn from_coeffs(n_trunc: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * n_trunc + 1 {
            return Err(Error::Decode(format!(
                "expected {} coefficients for N = {}, got {}",
                2 * n_trunc + 1,
                n_trunc,
                coeffs.len()
            )));
        }
        let s = Self { n_trunc, coeffs };
        s.check_finite()?;
        Ok(s)
    }

    /// Builds a state from a closure over mode indices.
    pub fn from_fn(n_trunc: usize, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let n = n_trunc as i64;
        Self {
            n_trunc,
            coeffs: (-n..=n).map(&mut f).collect(),
        }
    }

    pub fn single_mode(n_trunc: usize, k: i64, amplitude: Complex64) -> Self {
        let mut s = Self::zeros(n_trunc);
        s.set(k, amplitude);
        s
    }

    #[inline]
    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at mode `n`; zero outside the truncation.
    #[inline]
    pub fn get(&self, n: i64) -> Complex64 {
        match self.index_of(n) {
            Some(i) => self.coeffs[i],
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Panics if `|n| > N`.
    pub fn set(&mut self, n: i64, value: Complex64) {
        let i = self
            .index_of(n)
            .unwrap_or_else(|| panic!("mode {n} outside truncation {}", self.n_trunc));
        self.coeffs[i] = value;
    }

    #[inline]
    pub fn index_of(&self, n: i64) -> Option<usize> {
        let nt = self.n_trunc as i64;
        (n.abs() <= nt).then(|| (n + nt) as usize)
    }

    #[inline]
    pub fn mode_of(&self, index: usize) -> i64 {
        index as i64 - self.n_trunc as i64
    }

    /// `(mode, coefficient)` pairs in index order.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let nt = self.n_trunc as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (i as i64 - nt, *c))
    }

    pub fn check_finite(&self) -> Result<()> {
        match self
            .coeffs
            .iter()
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            Some(index) => Err(Error::NonFinite {
                what: "FourierState",
                index,
            }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            n_trunc: self.n_trunc,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn scaled_real(&self, factor: f64) -> Self {
        self.scaled(Complex64::new(factor, 0.0))
    }

    /// Re-indexes onto truncation `m`: zero-pads when `m >= N`, drops `|n| > m` otherwise.
    pub fn resized(&self, m: usize) -> Self {
        Self::from_fn(m, |n| self.get(n))
    }

    pub fn sub(&self, other: &Self) -> Self {
        let m = self.n_trunc.max(other.n_trunc);
        Self::from_fn(m, |n| self.get(n) - other.get(n))
    }

    /// Write the flat little-endian record: `N` as `u64`, then `2N+1` `(re, im)` `f64` pairs.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.n_trunc as u64).to_le_bytes())?;
        for c in &self.coeffs {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads one binary record; `Ok(None)` on a clean end of stream.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Option<Self>> {
        let mut word = [0u8; 8];
        match r.read_exact(&mut word) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let n = u64::from_le_bytes(word);
        if n > (1 << 24) {
            return Err(Error::Decode(format!("implausible truncation {n}")));
        }
        let n = n as usize;
        let mut coeffs = Vec::with_capacity(2 * n + 1);
        for _ in 0..(2 * n + 1) {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            let im = f64::from_le_bytes(word);
            coeffs.push(Complex64::new(re, im));
        }
        Self::from_coeffs(n, coeffs).map(Some)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.len());
        self.write_binary(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// JSON form: flat array `[N, re(-N), im(-N), ..., re(N), im(N)]`.
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut v = Vec::with_capacity(1 + 2 * self.len());
        v.push(serde_json::Value::from(self.n_trunc as u64));
        for c in &self.coeffs {
            v.push(serde_json::Value::from(c.re));
            v.push(serde_json::Value::from(c.im));
        }
        serde_json::Value::Array(v)
    }

    pub fn from_json_value(value: &serde_json::Value) -> Result<Self> {
        let arr = value
            .as_array()
            .ok_or_else(|| Error::Decode("expected a JSON array".into()))?;
        let n = arr
            .first()
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Decode("first element must be the truncation N".into()))?
            as usize;
        let body = &arr[1..];
        if body.len() != 2 * (2 * n + 1) {
            return Err(Error::Decode(format!(
                "expected {} floats after N = {}, got {}",
                2 * (2 * n + 1),
                n,
                body.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(2 * n + 1);
        for pair in body.chunks_exact(2) {
            let re = pair[0]
                .as_f64()
                .ok_or_else(|| Error::Decode("non-numeric coefficient".into()))?;
            let im = pair[1]
                .as_f64()
                .ok_or_else(|| Error::Decode("non-numeric coefficient".into()))?;
            coeffs.push(Complex64::new(re, im));
        }
        Self::from_coeffs(n, coeffs)
    }

    pub fn to_json(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(&serde_json::from_str(s)?)
    }
}

impl Serialize for FourierState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FourierState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        Self::from_json_value(&v).map_err(serde::de::Error::custom)
    }
}
