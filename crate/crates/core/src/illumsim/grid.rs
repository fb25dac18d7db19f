use std::fmt;

use serde::{Deserialize, Serialize};

use super::{light::{KELVIN_MAX, KELVIN_MIN}, IllumError};

/// Light color family. "Cool" light is the same class as `White`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColorClass {
    Warm,
    White,
    Mixed,
}

impl ColorClass {
    pub const ALL: [ColorClass; 3] = [ColorClass::Warm, ColorClass::White, ColorClass::Mixed];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ColorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorClass::Warm => "Warm",
            ColorClass::White => "White",
            ColorClass::Mixed => "Mixed",
        })
    }
}

pub const LEVELS: [i8; 5] = [-2, -1, 0, 1, 2];

/// Measured (lux, kelvin) per color class and intensity level -2..=+2.
const TABLE: [[(f64, f64); 5]; 3] = [
    [(180.0, 3222.0), (540.0, 3812.0), (900.0, 4205.0), (1260.0, 4388.0), (1620.0, 4205.0)],
    [(200.0, 20397.0), (600.0, 15186.0), (1000.0, 12769.0), (1400.0, 12527.0), (1800.0, 11931.0)],
    [(400.0, 8058.0), (1200.0, 7628.0), (2000.0, 7192.0), (2700.0, 6607.0), (3500.0, 6499.0)],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationSetting {
    pub color_class: ColorClass,
    /// Intensity level -2..=2. Continuous-sweep samples carry the level whose
    /// lux is nearest.
    pub level: i8,
    pub lux: f64,
    pub kelvin: f64,
}

impl IlluminationSetting {
    pub fn new(color_class: ColorClass, level: i8, lux: f64, kelvin: f64) -> Result<Self, IllumError> {
        if !(lux > 0.0 && lux.is_finite()) {
            return Err(IllumError::BadLux(lux));
        }
        if !(KELVIN_MIN..=KELVIN_MAX).contains(&kelvin) {
            return Err(IllumError::KelvinOutOfRange(kelvin));
        }
        if !LEVELS.contains(&level) {
            return Err(IllumError::BadLevel(level));
        }
        Ok(Self { color_class, level, lux, kelvin })
    }

    /// Position in the grid, `class * 5 + level + 2`.
    pub fn grid_index(&self) -> usize {
        self.color_class.index() * 5 + (self.level + 2) as usize
    }

    /// True when (lux, kelvin) is exactly the table cell for (class, level).
    pub fn is_grid_cell(&self) -> bool {
        let (lux, kelvin) = TABLE[self.color_class.index()][(self.level + 2) as usize];
        self.lux == lux && self.kelvin == kelvin
    }

    /// Lux and kelvin ranges spanned by the grid row of `class`.
    pub fn class_ranges(class: ColorClass) -> ((f64, f64), (f64, f64)) {
        let row = &TABLE[class.index()];
        let lux = (row[0].0, row[4].0);
        let kmin = row.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let kmax = row.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        (lux, (kmin, kmax))
    }

    /// Level whose grid lux is nearest to `lux` within `class`.
    pub fn nearest_level(class: ColorClass, lux: f64) -> i8 {
        let row = &TABLE[class.index()];
        let mut best = 0;
        for (i, cell) in row.iter().enumerate() {
            if (cell.0 - lux).abs() < (row[best].0 - lux).abs() {
                best = i;
            }
        }
        LEVELS[best]
    }
}

impl fmt::Display for IlluminationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {:+}) {}Lux, {}K", self.color_class, self.level, self.lux, self.kelvin)
    }
}

pub fn grid_setting(color_class: ColorClass, level: i8) -> Result<IlluminationSetting, IllumError> {
    if !LEVELS.contains(&level) {
        return Err(IllumError::BadLevel(level));
    }
    let (lux, kelvin) = TABLE[color_class.index()][(level + 2) as usize];
    Ok(IlluminationSetting { color_class, level, lux, kelvin })
}

/// All 15 grid settings in (class, level) order.
pub fn setting_grid() -> Vec<IlluminationSetting> {
    ColorClass::ALL
        .iter()
        .flat_map(|&c| LEVELS.iter().map(move |&l| grid_setting(c, l).expect("grid level")))
        .collect()
}

/// The grid as a CSV table: one row per light color, one column per level.
pub fn grid_table_csv() -> String {
    let mut out = String::from("light,-2,-1,0,+1,+2\n");
    for c in ColorClass::ALL {
        out.push_str(&format!("{c} Light"));
        for l in LEVELS {
            let s = grid_setting(c, l).expect("grid level");
            out.push_str(&format!(",\"{}Lux, {}K\"", s.lux, s.kelvin));
        }
        out.push('\n');
    }
    out
}

/// How illumination is distributed over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "setting", rename_all = "snake_case")]
pub enum Distribution {
    /// Every cell of the 15-setting grid, balanced.
    Grid,
    /// One fixed setting.
    Singular(IlluminationSetting),
    /// Kelvin and lux drawn continuously within each color class's range.
    ContinuousSweep,
}
