//! Scenario configuration: a sectioned TOML file with hard errors on
//! unknown keys, plus `section.key=value` overrides.

use serde::{Deserialize, Serialize};

use crate::analytic::{AnalyticConfig, PcVariant};
use crate::channel::CsiMode;
use crate::error::{Error, Result};
use crate::modem::Modulation;
use crate::noma::{hnoma_level_count, HnomaAlphabet, PowerProfile, Scheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub users: UsersSection,
    #[serde(default)]
    pub modulation: ModulationSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub csi: CsiSection,
    #[serde(default)]
    pub sic: SicSection,
    #[serde(default)]
    pub snr: SnrSection,
    #[serde(default)]
    pub stop: StopSection,
    #[serde(default)]
    pub analytic: AnalyticSection,
    #[serde(default)]
    pub image: ImageSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// BER levels at which scheme comparisons report SNR gaps.
    #[serde(default = "default_targets")]
    pub targets_ber: Vec<f64>,
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Tnoma]
}

fn default_seed() -> u64 {
    1
}

fn default_targets() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            name: String::new(),
            schemes: default_schemes(),
            seed: default_seed(),
            targets_ber: default_targets(),
        }
    }
}

/// User 1 is the farthest user and gets the largest power share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct UsersSection {
    pub distances: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModulationSection {
    /// One order per user (2, 4, 16 or 64); 4-QAM for everyone if absent.
    pub orders: Option<Vec<u32>>,
    #[serde(default)]
    pub hnoma_alphabet: HnomaAlphabet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    /// Path loss only.
    None,
    #[default]
    Rayleigh,
    Nakagami,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default)]
    pub fading: Fading,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_nakagami_m")]
    pub nakagami_m: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    /// Drop the receiver noise while keeping the SNR axis.
    #[serde(default)]
    pub noiseless: bool,
}

fn default_exponent() -> f64 {
    2.0
}

fn default_nakagami_m() -> f64 {
    1.0
}

fn default_bandwidth() -> f64 {
    1e6
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            fading: Fading::default(),
            exponent: default_exponent(),
            nakagami_m: default_nakagami_m(),
            bandwidth_hz: default_bandwidth(),
            noiseless: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CsiSection {
    #[serde(default)]
    pub sigma_e2: f64,
    #[serde(default)]
    pub mode: CsiMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SicSection {
    #[serde(default)]
    pub residual_rho: f64,
}

/// Either an explicit `grid_db` or `start`/`stop`/`step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SnrSection {
    pub grid_db: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSection {
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    #[serde(default = "default_max_bits")]
    pub max_bits: u64,
    #[serde(default = "default_batch_blocks")]
    pub batch_blocks: u64,
}

fn default_min_errors() -> u64 {
    200
}

fn default_max_bits() -> u64 {
    100_000_000
}

fn default_batch_blocks() -> u64 {
    8192
}

impl Default for StopSection {
    fn default() -> Self {
        StopSection {
            min_errors: default_min_errors(),
            max_bits: default_max_bits(),
            batch_blocks: default_batch_blocks(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSection {
    #[serde(default)]
    pub pc_variant: PcVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSection {
    #[serde(default = "default_image_snr")]
    pub snr_db: f64,
}

fn default_image_snr() -> f64 {
    25.0
}

impl Default for ImageSection {
    fn default() -> Self {
        ImageSection { snr_db: default_image_snr() }
    }
}

impl ScenarioConfig {
    /// Parses without validating.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(vec![e.message().trim().to_string()]))
    }

    /// Reads, applies `section.key=value` overrides, then validates.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = parse_table(text)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg = Self::from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn user_count(&self) -> usize {
        self.users.alphas.as_ref().map_or(0, Vec::len)
    }

    pub fn alphas(&self) -> &[f64] {
        self.users.alphas.as_deref().unwrap_or(&[])
    }

    pub fn distances(&self) -> &[f64] {
        self.users.distances.as_deref().unwrap_or(&[])
    }

    pub fn orders(&self) -> Vec<u32> {
        self.modulation
            .orders
            .clone()
            .unwrap_or_else(|| vec![4; self.user_count()])
    }

    pub fn modulations(&self) -> Result<Vec<Modulation>> {
        self.orders().into_iter().map(Modulation::from_order).collect()
    }

    /// The SNR grid in dB, from either form.
    pub fn snr_grid(&self) -> Result<Vec<f64>> {
        let s = &self.snr;
        match (&s.grid_db, s.start, s.stop, s.step) {
            (Some(g), None, None, None) => Ok(g.clone()),
            (None, Some(a), Some(b), Some(h)) => {
                if !(h > 0.0 && a.is_finite() && b.is_finite() && b >= a) {
                    return Err(Error::InvalidConfig(vec![format!(
                        "snr: need step > 0 and stop >= start, got start={a} stop={b} step={h}"
                    )]));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| a + i as f64 * h).collect())
            }
            (None, None, None, None) => Err(Error::InvalidConfig(vec!["snr.grid_db: missing".into()])),
            _ => Err(Error::InvalidConfig(vec![
                "snr: give either grid_db or all of start, stop and step".into(),
            ])),
        }
    }

    /// Every violated constraint, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let sc = &self.scenario;
        if sc.schemes.is_empty() {
            out.push("scenario.schemes: empty".into());
        }
        if sc.targets_ber.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            out.push("scenario.targets_ber: values must be in (0, 1)".into());
        }

        let alphas = self.users.alphas.as_ref();
        let distances = self.users.distances.as_ref();
        match alphas {
            None => out.push("users.alphas: missing".into()),
            Some(a) if a.is_empty() => out.push("users.alphas: empty".into()),
            Some(a) => out.extend(PowerProfile::check_alphas(a).into_iter().map(|p| format!("users.alphas: {p}"))),
        }
        match distances {
            None => out.push("users.distances: missing".into()),
            Some(d) => {
                if d.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    out.push("users.distances: every distance must be positive".into());
                }
                if d.windows(2).any(|w| w[1] > w[0]) {
                    out.push("users.distances: must be nonincreasing (user 1 is farthest)".into());
                }
                if let Some(a) = alphas {
                    if a.len() != d.len() {
                        out.push(format!("users.distances: {} entries but {} alphas", d.len(), a.len()));
                    }
                }
            }
        }
        let n = self.user_count();

        let orders = self.orders();
        if orders.len() != n {
            out.push(format!("modulation.orders: {} entries for {n} users", orders.len()));
        }
        for m in &orders {
            if Modulation::from_order(*m).is_err() {
                out.push(format!("modulation.orders: unsupported order {m} (expected 2, 4, 16 or 64)"));
            }
        }
        let hadamard = sc.schemes.iter().any(|s| matches!(s, Scheme::Hnoma | Scheme::Usman));
        if hadamard && n > 0 && !(n >= 2 && n.is_power_of_two()) {
            out.push(format!("users.alphas: Hadamard schemes need a power-of-two user count >= 2, got {n}"));
        }
        if sc.schemes.contains(&Scheme::Hnoma)
            && n.is_power_of_two()
            && self.modulation.hnoma_alphabet == HnomaAlphabet::Qam
            && hnoma_level_count(n) > 64
        {
            out.push(format!("modulation.hnoma_alphabet: qam supports at most 32 users, got {n}"));
        }
        if sc.schemes.contains(&Scheme::Usman) && orders.windows(2).any(|w| w[0] != w[1]) {
            out.push("modulation.orders: usman-noma needs the same order for every user".into());
        }

        let ch = &self.channel;
        if !(ch.exponent.is_finite() && ch.exponent >= 0.0) {
            out.push(format!("channel.exponent: must be finite and nonnegative, got {}", ch.exponent));
        }
        if ch.fading == Fading::Nakagami && !(ch.nakagami_m >= 0.5 && ch.nakagami_m.is_finite()) {
            out.push(format!("channel.nakagami_m: must be at least 0.5, got {}", ch.nakagami_m));
        }
        if !(ch.bandwidth_hz > 0.0 && ch.bandwidth_hz.is_finite()) {
            out.push(format!("channel.bandwidth_hz: must be positive, got {}", ch.bandwidth_hz));
        }

        let csi = &self.csi;
        if !(0.0..=1.0).contains(&csi.sigma_e2) {
            out.push(format!("csi.sigma_e2: must be in [0, 1], got {}", csi.sigma_e2));
        } else if csi.sigma_e2 > 0.0 && ch.fading != Fading::Rayleigh {
            out.push("csi.sigma_e2: imperfect CSI needs channel.fading = \"rayleigh\"".into());
        }
        if !(0.0..=1.0).contains(&self.sic.residual_rho) {
            out.push(format!("sic.residual_rho: must be in [0, 1], got {}", self.sic.residual_rho));
        }

        // a missing grid only matters to sweeps; run_scenario reports it
        let s = &self.snr;
        let absent = s.grid_db.is_none() && s.start.is_none() && s.stop.is_none() && s.step.is_none();
        match self.snr_grid() {
            _ if absent => {}
            Ok(g) if g.is_empty() => out.push("snr.grid_db: empty".into()),
            Ok(g) if g.iter().any(|x| !x.is_finite()) => out.push("snr.grid_db: values must be finite".into()),
            Ok(_) => {}
            Err(Error::InvalidConfig(p)) => out.extend(p),
            Err(e) => out.push(e.to_string()),
        }

        let st = &self.stop;
        if st.min_errors == 0 {
            out.push("stop.min_errors: must be at least 1".into());
        }
        if st.max_bits == 0 {
            out.push("stop.max_bits: must be at least 1".into());
        }
        if st.batch_blocks == 0 {
            out.push("stop.batch_blocks: must be at least 1".into());
        }
        if !self.image.snr_db.is_finite() {
            out.push("image.snr_db: must be finite".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(p))
        }
    }

    /// Two-user square-QAM scenario as closed-form inputs.
    pub fn analytic_config(&self) -> Result<AnalyticConfig> {
        self.validate()?;
        if self.user_count() != 2 {
            return Err(Error::InvalidConfig(vec![format!(
                "users.alphas: the closed form covers two users, got {}",
                self.user_count()
            )]));
        }
        let orders = self.orders();
        let cfg = AnalyticConfig {
            m1: orders[0],
            m2: orders[1],
            alpha1: self.alphas()[0],
            alpha2: self.alphas()[1],
            q1: self.distances()[0],
            q2: self.distances()[1],
            zeta: self.channel.exponent,
            snr_grid_db: self.snr_grid()?,
            pc_variant: self.analytic.pc_variant,
        };
        let p: Vec<String> = cfg.problems().into_iter().map(|p| format!("analytic: {p}")).collect();
        if !p.is_empty() {
            return Err(Error::InvalidConfig(p));
        }
        Ok(cfg)
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Parse {
        offset: e.span().map_or(0, |s| s.start),
        message: e.message().trim().to_string(),
    })
}

/// Applies one `section.key=value` override. The value is read as a TOML
/// value when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let bad = |m: String| Error::InvalidConfig(vec![m]);
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| bad(format!("override `{spec}`: expected section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| bad(format!("override `{spec}`: expected section.key=value")))?;
    if section.is_empty() || key.is_empty() || key.contains('.') {
        return Err(bad(format!("override `{spec}`: expected section.key=value")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(bad(format!("override `{spec}`: `{section}` is not a section"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_USER: &str = r#"
[scenario]
schemes = ["t-noma", "h-noma"]
seed = 3

[users]
distances = [6.015, 1.0]
alphas = [0.7, 0.3]

[snr]
start = 0
stop = 10
step = 5
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ScenarioConfig::load(TWO_USER, &[]).unwrap();
        assert_eq!(cfg.scenario.schemes, vec![Scheme::Tnoma, Scheme::Hnoma]);
        assert_eq!(cfg.snr_grid().unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(cfg.orders(), vec![4, 4]);
        assert_eq!(cfg.stop.min_errors, 200);
        let again = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{TWO_USER}\n[channel]\nfadin = \"rayleigh\"\n");
        let err = ScenarioConfig::load(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("fadin"), "{err}");
        assert!(ScenarioConfig::load("[bogus]\nx = 1\n", &[]).is_err());
    }

    #[test]
    fn missing_alphas_is_named() {
        let text = TWO_USER.replace("alphas = [0.7, 0.3]", "");
        match ScenarioConfig::load(&text, &[]) {
            Err(Error::InvalidConfig(p)) => assert!(p.iter().any(|m| m.starts_with("users.alphas")), "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_problem_is_listed() {
        let text = r#"
[users]
distances = [1.0, 2.0]
alphas = [0.3, 0.7]
[modulation]
orders = [8, 4]
[snr]
grid_db = []
"#;
        match ScenarioConfig::load(text, &[]) {
            Err(Error::InvalidConfig(p)) => {
                assert!(p.iter().any(|m| m.contains("nonincreasing")), "{p:?}");
                assert!(p.iter().any(|m| m.contains("decreasing")), "{p:?}");
                assert!(p.iter().any(|m| m.contains("order 8")), "{p:?}");
                assert!(p.iter().any(|m| m.contains("snr.grid_db")), "{p:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides() {
        let cfg = ScenarioConfig::load(
            TWO_USER,
            &[
                "users.alphas=[0.8, 0.2]".into(),
                "csi.mode=variance-consistent".into(),
                "stop.min_errors = 50".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.alphas(), &[0.8, 0.2]);
        assert_eq!(cfg.csi.mode, CsiMode::VarianceConsistent);
        assert_eq!(cfg.stop.min_errors, 50);
        assert!(ScenarioConfig::load(TWO_USER, &["nodot=1".into()]).is_err());
        assert!(ScenarioConfig::load(TWO_USER, &["stop.nope=1".into()]).is_err());
    }

    #[test]
    fn hadamard_schemes_need_power_of_two() {
        let text = r#"
[scenario]
schemes = ["usman-noma"]
[users]
distances = [3.0, 2.0, 1.0]
alphas = [0.6, 0.3, 0.1]
[snr]
grid_db = [0]
"#;
        let err = ScenarioConfig::load(text, &[]).unwrap_err().to_string();
        assert!(err.contains("power-of-two"), "{err}");
    }

    #[test]
    fn analytic_view() {
        let cfg = ScenarioConfig::load(TWO_USER, &[]).unwrap();
        let a = cfg.analytic_config().unwrap();
        assert_eq!((a.m1, a.m2, a.q1, a.zeta), (4, 4, 6.015, 2.0));
        let bpsk = ScenarioConfig::load(TWO_USER, &["modulation.orders=[2, 2]".into()]).unwrap();
        assert!(bpsk.analytic_config().is_err());
    }
}
