//! Physical constants used throughout the cell model.

/// Faraday constant [C/mol].
pub const FARADAY: f64 = 96485.33212;
/// Molar gas constant [J/(mol K)].
pub const GAS_CONSTANT: f64 = 8.314462618;

/// Fixed physical constants carried alongside a parameter set.
///
/// The values are not configurable; the struct exists so that every symbol the
/// model uses is reachable from [`crate::params::CellParameters`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub faraday: f64,
    pub gas_constant: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        faraday: FARADAY,
        gas_constant: GAS_CONSTANT,
    };

    /// Thermal voltage scale `2RT/F` of the symmetric Butler-Volmer relation.
    pub fn kinetic_voltage_scale(&self, temperature: f64) -> f64 {
        2.0 * self.gas_constant * temperature / self.faraday
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}
