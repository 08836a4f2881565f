use crate::error::{Error, Result};

use super::Point3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    Incompressible,
    /// Pressure as vertical coordinate; the cost carries `-p^kappa * y3`.
    Compressible { kappa: f64, cp: f64, p_ref: f64 },
}

/// Transport cost `1/2 |x_h - y_h|^2 - zeta(x3) * y3`.
///
/// All geometry runs on lifted coordinates `(x1, x2, zeta(x3))`, where the
/// cost is bilinear. `zeta` is the identity for the incompressible model
/// and `v -> v^kappa` in pressure coordinates. The Coriolis parameter is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    kind: CostKind,
    surface_pressure: f64,
}

impl CostModel {
    pub fn incompressible() -> Self {
        Self {
            kind: CostKind::Incompressible,
            surface_pressure: 0.0,
        }
    }

    /// `kappa = 1` is accepted and reproduces the incompressible model when
    /// `surface_pressure` is zero.
    pub fn compressible(kappa: f64, surface_pressure: f64, cp: f64, p_ref: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 1.0) {
            return Err(Error::InvalidCost(format!("kappa = {kappa} must be >= 1")));
        }
        if !(surface_pressure.is_finite() && surface_pressure >= 0.0) {
            return Err(Error::InvalidCost(format!(
                "surface pressure {surface_pressure} must be >= 0"
            )));
        }
        if !(cp.is_finite() && cp > 0.0 && p_ref.is_finite() && p_ref > 0.0) {
            return Err(Error::InvalidCost(format!(
                "cp = {cp} and p_ref = {p_ref} must be positive"
            )));
        }
        Ok(Self {
            kind: CostKind::Compressible { kappa, cp, p_ref },
            surface_pressure,
        })
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn is_compressible(&self) -> bool {
        matches!(self.kind, CostKind::Compressible { .. })
    }

    pub fn kappa(&self) -> f64 {
        match self.kind {
            CostKind::Incompressible => 1.0,
            CostKind::Compressible { kappa, .. } => kappa,
        }
    }

    /// Bottom of the vertical coordinate: 0, or `p_h` in pressure coordinates.
    pub fn base(&self) -> f64 {
        self.surface_pressure
    }

    pub fn surface_pressure(&self) -> f64 {
        self.surface_pressure
    }

    #[inline]
    pub fn zeta(&self, v: f64) -> f64 {
        let k = self.kappa();
        if k == 1.0 {
            v
        } else {
            v.powf(k)
        }
    }

    #[inline]
    pub fn zeta_inverse(&self, z: f64) -> f64 {
        let k = self.kappa();
        if k == 1.0 {
            z
        } else {
            z.max(0.0).powf(1.0 / k)
        }
    }

    /// `int_a^b zeta(v) dv`.
    #[inline]
    pub fn zeta_integral(&self, a: f64, b: f64) -> f64 {
        let k = self.kappa();
        if k == 1.0 {
            0.5 * (b - a) * (b + a)
        } else {
            (b.powf(k + 1.0) - a.powf(k + 1.0)) / (k + 1.0)
        }
    }

    pub fn check_vertical(&self, v: f64) -> Result<()> {
        if self.is_compressible() && v < 0.0 {
            return Err(Error::NegativeVertical { value: v });
        }
        Ok(())
    }

    /// Maps a physical point to lifted coordinates.
    pub fn lift(&self, x: &Point3) -> Result<Point3> {
        self.check_vertical(x[2])?;
        Ok([x[0], x[1], self.zeta(x[2])])
    }

    /// Potential temperature `theta = -y3 p_ref^kappa / cp`; pressure coordinates only.
    pub fn potential_temperature(&self, y3: f64) -> Option<f64> {
        match self.kind {
            CostKind::Incompressible => None,
            CostKind::Compressible { kappa, cp, p_ref } => Some(-y3 * p_ref.powf(kappa) / cp),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_one_is_identity() {
        let c = CostModel::compressible(1.0, 0.0, 1.0, 1.0).unwrap();
        for v in [0.0, 0.3, 1.7, 12.5] {
            assert_eq!(c.zeta(v).to_bits(), v.to_bits());
            assert_eq!(c.zeta_inverse(v).to_bits(), v.to_bits());
            assert_eq!(
                c.zeta_integral(0.1, v).to_bits(),
                CostModel::incompressible().zeta_integral(0.1, v).to_bits()
            );
        }
    }

    #[test]
    fn zeta_integral_kappa_two() {
        let c = CostModel::compressible(2.0, 0.0, 1.0, 1.0).unwrap();
        assert!((c.zeta_integral(1.0, 2.0) - 7.0 / 3.0).abs() < 1e-14);
        assert!((c.zeta_inverse(c.zeta(1.3)) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CostModel::compressible(0.5, 0.0, 1.0, 1.0).is_err());
        assert!(CostModel::compressible(2.0, -1.0, 1.0, 1.0).is_err());
        assert!(CostModel::compressible(2.0, 0.0, 0.0, 1.0).is_err());
        let c = CostModel::compressible(2.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(c.lift(&[0.0, 0.0, -0.1]), Err(Error::NegativeVertical { .. })));
        assert!(CostModel::incompressible().lift(&[0.0, 0.0, -0.1]).is_ok());
    }

    #[test]
    fn potential_temperature_roundtrip() {
        let c = CostModel::compressible(2.0, 0.0, 4.0, 3.0).unwrap();
        // y3 = -cp theta / p_ref^kappa with theta = 2
        let y3 = -4.0 * 2.0 / 9.0;
        assert!((c.potential_temperature(y3).unwrap() - 2.0).abs() < 1e-15);
        assert!(CostModel::incompressible().potential_temperature(-1.0).is_none());
    }
}
