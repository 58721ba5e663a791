//! Parametric CPW cross-section: conductor dimensions, interface-layer
//! thicknesses and the material constants attached to each dielectric role.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Length in meters. Parses from strings with a unit suffix (`"4.5 um"`).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Length(pub f64);

impl Length {
    pub fn nm(v: f64) -> Self {
        Length(v * 1e-9)
    }

    pub fn um(v: f64) -> Self {
        Length(v * 1e-6)
    }

    pub fn meters(self) -> f64 {
        self.0
    }
}

impl FromStr for Length {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .trim_end_matches(|c: char| c.is_ascii_alphabetic() || c == 'µ' || c == 'μ')
            .len();
        let (num, unit) = s.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::InvalidUnit(format!("cannot parse length `{s}`")))?;
        let scale = match unit.trim() {
            "m" => 1.0,
            "mm" => 1e-3,
            "um" | "µm" | "μm" => 1e-6,
            "nm" => 1e-9,
            "" => return Err(Error::InvalidUnit(format!("length `{s}` has no unit suffix"))),
            other => return Err(Error::InvalidUnit(format!("unknown length unit `{other}`"))),
        };
        Ok(Length(value * scale))
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // shortest round-trip representation
        write!(f, "{:e} m", self.0)
    }
}

impl Serialize for Length {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Length {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            // bare numbers are taken as meters
            Raw::Number(v) => Ok(Length(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialConstants {
    pub name: String,
    pub relative_permittivity: f64,
    pub loss_tangent: f64,
}

impl MaterialConstants {
    pub fn new(name: &str, relative_permittivity: f64, loss_tangent: f64) -> Self {
        Self {
            name: name.to_string(),
            relative_permittivity,
            loss_tangent,
        }
    }

    pub fn silicon() -> Self {
        Self::new("Si", 11.9, 1.3e-7)
    }

    pub fn air() -> Self {
        Self::new("air", 1.0, 0.0)
    }

    pub fn silicon_dioxide() -> Self {
        Self::new("SiO2", 3.9, 1.7e-3)
    }

    pub fn tantalum_pentoxide() -> Self {
        Self::new("Ta2O5", 25.0, 1e-2)
    }
}

/// Which dielectric a material describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialRole {
    Substrate,
    Air,
    MaOxide,
    SaOxide,
}

/// Region labels for mesh cells and interface contours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionId {
    Substrate,
    Air,
    MetalAirTop,
    MetalAirSide,
    SubstrateAir,
    MetalSubstrate,
}

impl RegionId {
    pub const ALL: [RegionId; 6] = [
        RegionId::Substrate,
        RegionId::Air,
        RegionId::MetalAirTop,
        RegionId::MetalAirSide,
        RegionId::SubstrateAir,
        RegionId::MetalSubstrate,
    ];

    pub fn is_interface(self) -> bool {
        !matches!(self, RegionId::Substrate | RegionId::Air)
    }

    pub fn label(self) -> &'static str {
        match self {
            RegionId::Substrate => "Silicon substrate",
            RegionId::Air => "Air",
            RegionId::MetalAirTop => "Metal-Air (top)",
            RegionId::MetalAirSide => "Metal-Air (side)",
            RegionId::SubstrateAir => "Substrate-Air",
            RegionId::MetalSubstrate => "Metal-Substrate",
        }
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Deposition {
    #[serde(rename = "400C")]
    T400,
    #[serde(rename = "450C")]
    T450,
    #[serde(rename = "500C")]
    T500,
}

impl Deposition {
    pub const ALL: [Deposition; 3] = [Deposition::T400, Deposition::T450, Deposition::T500];

    pub fn label(self) -> &'static str {
        match self {
            Deposition::T400 => "400C",
            Deposition::T450 => "450C",
            Deposition::T500 => "500C",
        }
    }
}

impl FromStr for Deposition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_end_matches("°C").to_ascii_uppercase().trim_end_matches('C') {
            "400" => Ok(Deposition::T400),
            "450" => Ok(Deposition::T450),
            "500" => Ok(Deposition::T500),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for Deposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Reference,
    HfTreated,
}

impl Treatment {
    pub const ALL: [Treatment; 2] = [Treatment::Reference, Treatment::HfTreated];

    pub fn label(self) -> &'static str {
        match self {
            Treatment::Reference => "reference",
            Treatment::HfTreated => "hf_treated",
        }
    }

    /// Short form used in chip labels.
    pub fn key(self) -> &'static str {
        match self {
            Treatment::Reference => "ref",
            Treatment::HfTreated => "hf",
        }
    }
}

impl FromStr for Treatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "reference" | "ref" => Ok(Treatment::Reference),
            "hf_treated" | "hf" => Ok(Treatment::HfTreated),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// CPW cross-section with its interface layers. Canonical unit is meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpwStack {
    pub trace_width: Length,
    pub gap: Length,
    pub metal_thickness: Length,
    pub substrate_thickness: Length,
    pub trench_depth: Length,
    /// Always 90 degrees; kept in the config for documentation.
    pub sidewall_angle: f64,
    #[serde(rename = "layer_MA_top")]
    pub layer_ma_top: Length,
    #[serde(rename = "layer_MA_side")]
    pub layer_ma_side: Length,
    #[serde(rename = "layer_SA")]
    pub layer_sa: Length,
    #[serde(rename = "layer_MS")]
    pub layer_ms: Length,
    /// Multiplier on the metal-air participation (1 for untreated chips).
    pub ma_scale: f64,
    pub materials: BTreeMap<MaterialRole, MaterialConstants>,
    pub domain_halfwidth: Length,
    pub domain_height_air: Length,
    pub domain_depth_substrate: Length,
}

impl Default for CpwStack {
    fn default() -> Self {
        let trace_width = Length::um(10.0);
        let gap = Length::um(4.5);
        let span = trace_width.0 + 2.0 * gap.0;
        let mut materials = BTreeMap::new();
        materials.insert(MaterialRole::Substrate, MaterialConstants::silicon());
        materials.insert(MaterialRole::Air, MaterialConstants::air());
        materials.insert(MaterialRole::MaOxide, MaterialConstants::tantalum_pentoxide());
        materials.insert(MaterialRole::SaOxide, MaterialConstants::silicon_dioxide());
        Self {
            trace_width,
            gap,
            metal_thickness: Length::nm(100.0),
            substrate_thickness: Length::um(775.0),
            trench_depth: Length(0.0),
            sidewall_angle: 90.0,
            layer_ma_top: Length::nm(3.7),
            layer_ma_side: Length::nm(6.0),
            layer_sa: Length::nm(2.5),
            layer_ms: Length(0.0),
            ma_scale: 1.0,
            materials,
            domain_halfwidth: Length(20.0 * span),
            domain_height_air: Length(20.0 * span),
            domain_depth_substrate: Length(20.0 * span),
        }
    }
}

/// Partial stack description as read from a config file; unset keys take defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackConfig {
    pub trace_width: Option<Length>,
    pub gap: Option<Length>,
    pub metal_thickness: Option<Length>,
    pub substrate_thickness: Option<Length>,
    pub trench_depth: Option<Length>,
    pub sidewall_angle: Option<f64>,
    #[serde(rename = "layer_MA_top")]
    pub layer_ma_top: Option<Length>,
    #[serde(rename = "layer_MA_side")]
    pub layer_ma_side: Option<Length>,
    #[serde(rename = "layer_SA")]
    pub layer_sa: Option<Length>,
    #[serde(rename = "layer_MS")]
    pub layer_ms: Option<Length>,
    pub ma_scale: Option<f64>,
    #[serde(default)]
    pub materials: BTreeMap<MaterialRole, MaterialConstants>,
    pub domain_halfwidth: Option<Length>,
    pub domain_height_air: Option<Length>,
    pub domain_depth_substrate: Option<Length>,
}

impl StackConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

impl StackConfig {
    /// Overlay the keys that are set on `base` and validate. The simulation box
    /// follows the conductor footprint unless its size is set explicitly.
    pub fn apply_to(&self, base: &CpwStack) -> Result<CpwStack> {
        let mut stack = base.clone();
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { stack.$field = v; })*
            };
        }
        take!(
            trace_width,
            gap,
            metal_thickness,
            substrate_thickness,
            trench_depth,
            sidewall_angle,
            layer_ma_top,
            layer_ma_side,
            layer_sa,
            layer_ms,
            ma_scale
        );
        let span = stack.trace_width.0 + 2.0 * stack.gap.0;
        stack.domain_halfwidth = self.domain_halfwidth.unwrap_or(Length(20.0 * span));
        stack.domain_height_air = self.domain_height_air.unwrap_or(Length(20.0 * span));
        stack.domain_depth_substrate = self
            .domain_depth_substrate
            .unwrap_or(Length((20.0 * span).min(stack.substrate_thickness.0)));
        for (role, material) in &self.materials {
            stack.materials.insert(*role, material.clone());
        }
        stack.validate()?;
        Ok(stack)
    }
}

/// Fill in defaults and validate.
pub fn build_stack(config: &StackConfig) -> Result<CpwStack> {
    config.apply_to(&CpwStack::default())
}

impl CpwStack {
    pub fn from_toml(text: &str) -> Result<Self> {
        build_stack(&StackConfig::from_toml(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stack serializes to TOML")
    }

    pub fn material(&self, role: MaterialRole) -> &MaterialConstants {
        &self.materials[&role]
    }

    /// Layer thickness attached to an interface region.
    pub fn layer_thickness(&self, region: RegionId) -> Option<Length> {
        match region {
            RegionId::MetalAirTop => Some(self.layer_ma_top),
            RegionId::MetalAirSide => Some(self.layer_ma_side),
            RegionId::SubstrateAir => Some(self.layer_sa),
            RegionId::MetalSubstrate => Some(self.layer_ms),
            RegionId::Substrate | RegionId::Air => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        let positive = [
            ("trace_width", self.trace_width),
            ("gap", self.gap),
            ("metal_thickness", self.metal_thickness),
            ("substrate_thickness", self.substrate_thickness),
            ("domain_halfwidth", self.domain_halfwidth),
            ("domain_height_air", self.domain_height_air),
            ("domain_depth_substrate", self.domain_depth_substrate),
        ];
        for (name, len) in positive {
            if !(len.0.is_finite() && len.0 > 0.0) {
                return invalid(format!("{name} must be > 0, got {len}"));
            }
        }
        let non_negative = [
            ("trench_depth", self.trench_depth),
            ("layer_MA_top", self.layer_ma_top),
            ("layer_MA_side", self.layer_ma_side),
            ("layer_SA", self.layer_sa),
            ("layer_MS", self.layer_ms),
        ];
        for (name, len) in non_negative {
            if !(len.0.is_finite() && len.0 >= 0.0) {
                return invalid(format!("{name} must be >= 0, got {len}"));
            }
            if name.starts_with("layer") && len.0 >= 1e-2 * self.trace_width.0 {
                return invalid(format!(
                    "{name} = {len} is outside the thin-layer regime (< 1e-2 x trace_width)"
                ));
            }
        }
        if (self.sidewall_angle - 90.0).abs() > 1e-12 {
            return invalid(format!(
                "sidewall_angle must be 90 degrees, got {}",
                self.sidewall_angle
            ));
        }
        if !(self.ma_scale > 0.0 && self.ma_scale <= 1.0) {
            return invalid(format!("ma_scale must lie in (0, 1], got {}", self.ma_scale));
        }
        let span = self.trace_width.0 + 2.0 * self.gap.0;
        if self.domain_halfwidth.0 < 10.0 * span * (1.0 - 1e-12) {
            return invalid(format!(
                "domain_halfwidth {} is below 10 x (trace_width + 2 gap)",
                self.domain_halfwidth
            ));
        }
        if self.trench_depth.0 >= self.domain_depth_substrate.0 {
            return invalid("trench_depth reaches the bottom of the domain".into());
        }
        for role in [
            MaterialRole::Substrate,
            MaterialRole::Air,
            MaterialRole::MaOxide,
            MaterialRole::SaOxide,
        ] {
            let Some(m) = self.materials.get(&role) else {
                return invalid(format!("missing material for {role:?}"));
            };
            if !(m.relative_permittivity >= 1.0) {
                return invalid(format!(
                    "{} relative permittivity must be >= 1, got {}",
                    m.name, m.relative_permittivity
                ));
            }
            if !(m.loss_tangent >= 0.0) {
                return invalid(format!("{} loss tangent must be >= 0", m.name));
            }
        }
        let air = &self.materials[&MaterialRole::Air];
        if air.relative_permittivity != 1.0 || air.loss_tangent != 0.0 {
            return invalid("air must have relative permittivity 1 and zero loss tangent".into());
        }
        Ok(())
    }
}

/// Metal-air participation scale applied to HF-treated chips, taken as the
/// ratio of treated to untreated metal-air participations of the published budgets.
pub fn hf_ma_scale(deposition: Deposition) -> f64 {
    match deposition {
        Deposition::T400 => 1.53 / 1.87,
        Deposition::T450 => 1.53 / 1.83,
        Deposition::T500 => 1.66 / 1.95,
    }
}

/// Per-chip stack with interface thicknesses estimated from cross-section imaging.
pub fn reference_presets(deposition: Deposition, treatment: Treatment) -> CpwStack {
    let (ma_top, ma_side) = match deposition {
        Deposition::T400 => (3.7, 6.0),
        Deposition::T450 => (3.5, 6.0),
        Deposition::T500 => (3.5, 6.5),
    };
    let mut stack = CpwStack {
        layer_ma_top: Length::nm(ma_top),
        layer_ma_side: Length::nm(ma_side),
        ..CpwStack::default()
    };
    if treatment == Treatment::HfTreated {
        stack.layer_sa = Length(0.0);
        stack.ma_scale = hf_ma_scale(deposition);
    }
    stack
}

/// String-keyed form of [`reference_presets`].
pub fn preset_by_label(deposition: &str, treatment: &str) -> Result<CpwStack> {
    Ok(reference_presets(deposition.parse()?, treatment.parse()?))
}
