//! Device parameters and drive settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::Frequency;

/// Purcell-filter description of one resonator. Carried along for
/// bookkeeping only; no module reads it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurcellFilter {
    pub omega_pf_mhz: f64,
    pub q_pf: f64,
    pub j_mhz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurcellMetadata {
    pub reset: PurcellFilter,
    pub readout: PurcellFilter,
}

/// Transmon, reset resonator and readout resonator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_ge: Frequency,
    /// Reset resonator.
    pub omega_r: Frequency,
    /// Readout resonator.
    pub omega_m: Frequency,
    /// Anharmonicity (negative for a transmon).
    pub alpha: Frequency,
    pub chi_r: Frequency,
    pub chi_m: Frequency,
    /// Effective linewidth of the reset resonator.
    pub kappa: Frequency,
    pub kappa_m: Frequency,
    pub kappa_int: Frequency,
    pub g_r: Frequency,
    pub g_m: Frequency,
    pub t1_ge: f64,
    pub t1_ef: f64,
    pub t2_ge: f64,
    pub t2_ef: f64,
    pub n_th: f64,
    /// Upward thermalization rate of the qubit, angular (k_up = 2π × ν_up).
    pub k_up: Frequency,
    pub purcell: Option<PurcellMetadata>,
}

impl Default for SystemParams {
    fn default() -> Self {
        default_params()
    }
}

/// The reference sample.
pub fn default_params() -> SystemParams {
    SystemParams {
        omega_ge: Frequency::from_ghz(6.343),
        omega_r: Frequency::from_ghz(8.400),
        omega_m: Frequency::from_ghz(4.787),
        alpha: Frequency::from_mhz(-265.0),
        chi_r: Frequency::from_mhz(-6.3),
        chi_m: Frequency::from_mhz(-5.8),
        kappa: Frequency::from_mhz(9.0),
        kappa_m: Frequency::from_mhz(12.6),
        kappa_int: Frequency::ZERO,
        g_r: Frequency::from_mhz(335.0),
        g_m: Frequency::from_mhz(210.0),
        t1_ge: 5.5e-6,
        t1_ef: 2.1e-6,
        t2_ge: 7.6e-6,
        t2_ef: 4.2e-6,
        n_th: 0.17,
        k_up: Frequency::from_khz(5.0),
        purcell: Some(PurcellMetadata {
            reset: PurcellFilter {
                omega_pf_mhz: 8443.0,
                q_pf: 60.0,
                j_mhz: 20.9,
            },
            readout: PurcellFilter {
                omega_pf_mhz: 4778.0,
                q_pf: 91.0,
                j_mhz: 13.6,
            },
        }),
    }
}

impl SystemParams {
    pub fn gamma1_ge(&self) -> f64 {
        1.0 / self.t1_ge
    }

    pub fn gamma1_ef(&self) -> f64 {
        1.0 / self.t1_ef
    }

    /// Pure dephasing rate of the g-e pair, 1/T2 − 1/(2·T1).
    pub fn gamma_phi_ge(&self) -> f64 {
        dephasing(self.t1_ge, self.t2_ge)
    }

    /// Pure dephasing rate of the e-f pair, 1/T2 − 1/(2·T1).
    pub fn gamma_phi_ef(&self) -> f64 {
        dephasing(self.t1_ef, self.t2_ef)
    }

    /// Ratio k_up·T1_ge / n_th; close to one for a self-consistent set.
    pub fn thermal_consistency(&self) -> f64 {
        self.k_up.rad_per_s() * self.t1_ge / self.n_th
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_ge", self.omega_ge.rad_per_s()),
            ("omega_r", self.omega_r.rad_per_s()),
            ("omega_m", self.omega_m.rad_per_s()),
            ("kappa", self.kappa.rad_per_s()),
            ("kappa_m", self.kappa_m.rad_per_s()),
            ("g_r", self.g_r.rad_per_s()),
            ("g_m", self.g_m.rad_per_s()),
            ("t1_ge", self.t1_ge),
            ("t1_ef", self.t1_ef),
            ("t2_ge", self.t2_ge),
            ("t2_ef", self.t2_ef),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha.rad_per_s()),
            ("chi_r", self.chi_r.rad_per_s()),
            ("chi_m", self.chi_m.rad_per_s()),
        ] {
            if !v.is_finite() || v == 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and nonzero, got {v}"
                )));
            }
        }
        if !(self.kappa_int.rad_per_s() >= 0.0) {
            return Err(Error::InvalidParameter("kappa_int must be >= 0".into()));
        }
        if !(self.k_up.rad_per_s() >= 0.0) {
            return Err(Error::InvalidParameter("k_up must be >= 0".into()));
        }
        if !(0.0..0.5).contains(&self.n_th) {
            return Err(Error::InvalidParameter(format!(
                "n_th must lie in [0, 0.5), got {}",
                self.n_th
            )));
        }
        // small negative values are rounding (T2 = 2·T1 exactly)
        for (name, g) in [
            ("ge", self.gamma_phi_ge()),
            ("ef", self.gamma_phi_ef()),
        ] {
            if g < -1e-9 * (1.0 / self.t2_ge) {
                return Err(Error::InvalidParameter(format!(
                    "T2_{name} exceeds 2·T1_{name}: negative pure dephasing rate {g:.4e} s^-1"
                )));
            }
        }
        Ok(())
    }

    pub fn to_config(&self) -> ParamsConfig {
        ParamsConfig {
            omega_ge_mhz: self.omega_ge.mhz(),
            omega_r_mhz: self.omega_r.mhz(),
            omega_m_mhz: self.omega_m.mhz(),
            alpha_mhz: self.alpha.mhz(),
            chi_r_mhz: self.chi_r.mhz(),
            chi_m_mhz: self.chi_m.mhz(),
            kappa_mhz: self.kappa.mhz(),
            kappa_m_mhz: self.kappa_m.mhz(),
            kappa_int_mhz: self.kappa_int.mhz(),
            g_r_mhz: self.g_r.mhz(),
            g_m_mhz: self.g_m.mhz(),
            t1_ge_us: self.t1_ge * 1e6,
            t1_ef_us: self.t1_ef * 1e6,
            t2_ge_us: self.t2_ge * 1e6,
            t2_ef_us: self.t2_ef * 1e6,
            n_th: self.n_th,
            k_up_khz: self.k_up.mhz() * 1e3,
            purcell: self.purcell,
        }
    }
}

fn dephasing(t1: f64, t2: f64) -> f64 {
    1.0 / t2 - 1.0 / (2.0 * t1)
}

/// File representation of [`SystemParams`]: cyclic MHz, microseconds, kHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub omega_ge_mhz: f64,
    pub omega_r_mhz: f64,
    pub omega_m_mhz: f64,
    pub alpha_mhz: f64,
    pub chi_r_mhz: f64,
    pub chi_m_mhz: f64,
    pub kappa_mhz: f64,
    pub kappa_m_mhz: f64,
    pub kappa_int_mhz: f64,
    pub g_r_mhz: f64,
    pub g_m_mhz: f64,
    pub t1_ge_us: f64,
    pub t1_ef_us: f64,
    pub t2_ge_us: f64,
    pub t2_ef_us: f64,
    pub n_th: f64,
    pub k_up_khz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purcell: Option<PurcellMetadata>,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        default_params().to_config()
    }
}

impl ParamsConfig {
    /// Names of the scalar keys, in file order.
    pub const KEYS: [&'static str; 17] = [
        "omega_ge_mhz",
        "omega_r_mhz",
        "omega_m_mhz",
        "alpha_mhz",
        "chi_r_mhz",
        "chi_m_mhz",
        "kappa_mhz",
        "kappa_m_mhz",
        "kappa_int_mhz",
        "g_r_mhz",
        "g_m_mhz",
        "t1_ge_us",
        "t1_ef_us",
        "t2_ge_us",
        "t2_ef_us",
        "n_th",
        "k_up_khz",
    ];

    /// Sets one scalar key by name.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "omega_ge_mhz" => &mut self.omega_ge_mhz,
            "omega_r_mhz" => &mut self.omega_r_mhz,
            "omega_m_mhz" => &mut self.omega_m_mhz,
            "alpha_mhz" => &mut self.alpha_mhz,
            "chi_r_mhz" => &mut self.chi_r_mhz,
            "chi_m_mhz" => &mut self.chi_m_mhz,
            "kappa_mhz" => &mut self.kappa_mhz,
            "kappa_m_mhz" => &mut self.kappa_m_mhz,
            "kappa_int_mhz" => &mut self.kappa_int_mhz,
            "g_r_mhz" => &mut self.g_r_mhz,
            "g_m_mhz" => &mut self.g_m_mhz,
            "t1_ge_us" => &mut self.t1_ge_us,
            "t1_ef_us" => &mut self.t1_ef_us,
            "t2_ge_us" => &mut self.t2_ge_us,
            "t2_ef_us" => &mut self.t2_ef_us,
            "n_th" => &mut self.n_th,
            "k_up_khz" => &mut self.k_up_khz,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown parameter key `{other}`"
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    pub fn to_params(&self) -> Result<SystemParams> {
        let p = SystemParams {
            omega_ge: Frequency::from_mhz(self.omega_ge_mhz),
            omega_r: Frequency::from_mhz(self.omega_r_mhz),
            omega_m: Frequency::from_mhz(self.omega_m_mhz),
            alpha: Frequency::from_mhz(self.alpha_mhz),
            chi_r: Frequency::from_mhz(self.chi_r_mhz),
            chi_m: Frequency::from_mhz(self.chi_m_mhz),
            kappa: Frequency::from_mhz(self.kappa_mhz),
            kappa_m: Frequency::from_mhz(self.kappa_m_mhz),
            kappa_int: Frequency::from_mhz(self.kappa_int_mhz),
            g_r: Frequency::from_mhz(self.g_r_mhz),
            g_m: Frequency::from_mhz(self.g_m_mhz),
            t1_ge: self.t1_ge_us * 1e-6,
            t1_ef: self.t1_ef_us * 1e-6,
            t2_ge: self.t2_ge_us * 1e-6,
            t2_ef: self.t2_ef_us * 1e-6,
            n_th: self.n_th,
            k_up: Frequency::from_khz(self.k_up_khz),
            purcell: self.purcell,
        };
        p.validate()?;
        Ok(p)
    }
}

/// The two drive rates and two detunings that fully set the reset.
///
/// Rates are the coupling matrix elements ⟨f,0|H|e,0⟩ = Ω_ef and
/// ⟨g,1|H|f,0⟩ = g̃. Detunings are measured from the ac-Stark-shifted
/// transitions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub g_tilde: Frequency,
    pub omega_ef: Frequency,
    pub delta_f0g1: Frequency,
    pub delta_ef: Frequency,
}

impl DriveConfig {
    pub fn resonant(g_tilde: Frequency, omega_ef: Frequency) -> Self {
        DriveConfig {
            g_tilde,
            omega_ef,
            ..Default::default()
        }
    }

    /// Resonant drives from cyclic MHz rates, ordered (Ω_ef, g̃) as usually quoted.
    pub fn from_mhz(omega_ef_mhz: f64, g_tilde_mhz: f64) -> Self {
        DriveConfig::resonant(
            Frequency::from_mhz(g_tilde_mhz),
            Frequency::from_mhz(omega_ef_mhz),
        )
    }

    pub fn off() -> Self {
        DriveConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("g_tilde", self.g_tilde), ("omega_ef", self.omega_ef)] {
            if !(v.rad_per_s() >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "drive rate {name} must be >= 0 and finite"
                )));
            }
        }
        if !self.delta_f0g1.is_finite() || !self.delta_ef.is_finite() {
            return Err(Error::InvalidParameter("detunings must be finite".into()));
        }
        Ok(())
    }
}

/// Named drive settings probed experimentally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::A, Preset::B, Preset::C];

    /// {Ω_ef, g̃}/2π = {3, 4.8}, {1.5, 2.9} and {3, 2.9} MHz.
    pub fn drives(self) -> DriveConfig {
        match self {
            Preset::A => DriveConfig::from_mhz(3.0, 4.8),
            Preset::B => DriveConfig::from_mhz(1.5, 2.9),
            Preset::C => DriveConfig::from_mhz(3.0, 2.9),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        match s.trim() {
            "A" | "a" => Some(Preset::A),
            "B" | "b" => Some(Preset::B),
            "C" | "c" => Some(Preset::C),
            _ => None,
        }
    }
}
