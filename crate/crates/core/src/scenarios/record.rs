use serde::{Deserialize, Serialize};

/// One time step of a scenario: ground truth, both channels' fit summaries
/// and temperature estimates, and the cross-check outcome. Values a scenario
/// does not model, or that a failed fit could not produce, are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub time_s: f64,
    /// NV-channel ground truth. The channels differ only under laser heating.
    pub true_temperature_c: f64,
    pub laser_mw: f64,
    /// Mean field projection over the ODMR sweep.
    pub b_projection_mt: f64,
    pub nv_n_dips: usize,
    /// Fitted ZFS (the midpoint for a split fit) and its uncertainty.
    pub nv_f0_mhz: f64,
    pub nv_f0_sigma_mhz: f64,
    /// Total contrast: summed over dips.
    pub nv_contrast: f64,
    /// Mean linewidth over dips.
    pub nv_fwhm_mhz: f64,
    pub siv_pos_nm: f64,
    pub siv_pos_sigma_nm: f64,
    pub siv_fwhm_nm: f64,
    pub t_nv_c: f64,
    pub t_nv_sigma_c: f64,
    pub t_siv_c: f64,
    pub t_siv_sigma_c: f64,
    pub z_score: f64,
    pub artifact_flag: bool,
}

/// CSV column names, in order. Append-only: new columns go at the end.
pub const RECORD_COLUMNS: [&str; 18] = [
    "time_s",
    "true_T_C",
    "laser_mW",
    "b_par_mT",
    "nv_n_dips",
    "nv_f0_MHz",
    "nv_f0_sigma_MHz",
    "nv_contrast",
    "nv_fwhm_MHz",
    "siv_pos_nm",
    "siv_pos_sigma_nm",
    "siv_fwhm_nm",
    "T_nv_C",
    "T_nv_sigma_C",
    "T_siv_C",
    "T_siv_sigma_C",
    "z_score",
    "artifact_flag",
];

/// A record field as written to disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldValue {
    Real(f64),
    Count(usize),
    Flag(bool),
}

impl ScenarioRecord {
    /// Field values in [`RECORD_COLUMNS`] order.
    pub fn fields(&self) -> [FieldValue; 18] {
        use FieldValue::*;
        [
            Real(self.time_s),
            Real(self.true_temperature_c),
            Real(self.laser_mw),
            Real(self.b_projection_mt),
            Count(self.nv_n_dips),
            Real(self.nv_f0_mhz),
            Real(self.nv_f0_sigma_mhz),
            Real(self.nv_contrast),
            Real(self.nv_fwhm_mhz),
            Real(self.siv_pos_nm),
            Real(self.siv_pos_sigma_nm),
            Real(self.siv_fwhm_nm),
            Real(self.t_nv_c),
            Real(self.t_nv_sigma_c),
            Real(self.t_siv_c),
            Real(self.t_siv_sigma_c),
            Real(self.z_score),
            Flag(self.artifact_flag),
        ]
    }

    /// Inverse of [`ScenarioRecord::fields`].
    pub fn from_fields(f: &[FieldValue; 18]) -> Option<Self> {
        let r = |i: usize| match f[i] {
            FieldValue::Real(v) => Some(v),
            _ => None,
        };
        let n_dips = match f[4] {
            FieldValue::Count(n) => n,
            _ => return None,
        };
        let flag = match f[17] {
            FieldValue::Flag(b) => b,
            _ => return None,
        };
        Some(Self {
            time_s: r(0)?,
            true_temperature_c: r(1)?,
            laser_mw: r(2)?,
            b_projection_mt: r(3)?,
            nv_n_dips: n_dips,
            nv_f0_mhz: r(5)?,
            nv_f0_sigma_mhz: r(6)?,
            nv_contrast: r(7)?,
            nv_fwhm_mhz: r(8)?,
            siv_pos_nm: r(9)?,
            siv_pos_sigma_nm: r(10)?,
            siv_fwhm_nm: r(11)?,
            t_nv_c: r(12)?,
            t_nv_sigma_c: r(13)?,
            t_siv_c: r(14)?,
            t_siv_sigma_c: r(15)?,
            z_score: r(16)?,
            artifact_flag: flag,
        })
    }
}
