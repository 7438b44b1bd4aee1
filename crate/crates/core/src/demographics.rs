//! Demographic profiles, QoE impact factors and profile-driven MOS
//! augmentation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance, Record, Source, StreamingSession};
use crate::error::{Error, Result};
use crate::seed;

/// Bitrate range used to normalize `bitrate_mean_kbps` onto [0, 1].
const BITRATE_FLOOR_KBPS: f64 = 300.0;
const BITRATE_CEIL_KBPS: f64 = 20000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileId {
    CasualViewer,
    QualityEnthusiast,
    MobileUser,
    GamerSports,
    ElderlyUser,
    ProfessionalCritical,
}

impl ProfileId {
    pub const ALL: [ProfileId; 6] = [
        ProfileId::CasualViewer,
        ProfileId::QualityEnthusiast,
        ProfileId::MobileUser,
        ProfileId::GamerSports,
        ProfileId::ElderlyUser,
        ProfileId::ProfessionalCritical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileId::CasualViewer => "casual_viewer",
            ProfileId::QualityEnthusiast => "quality_enthusiast",
            ProfileId::MobileUser => "mobile_user",
            ProfileId::GamerSports => "gamer_sports",
            ProfileId::ElderlyUser => "elderly_user",
            ProfileId::ProfessionalCritical => "professional_critical",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProfileId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown demographic profile `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub w_rebuff: f64,
    pub w_quality: f64,
    pub w_bitrate: f64,
    pub w_consistency: f64,
}

impl Weights {
    const fn new(w_rebuff: f64, w_quality: f64, w_bitrate: f64, w_consistency: f64) -> Self {
        Weights {
            w_rebuff,
            w_quality,
            w_bitrate,
            w_consistency,
        }
    }

    fn validate(&self, id: ProfileId) -> Result<()> {
        let all = [self.w_rebuff, self.w_quality, self.w_bitrate, self.w_consistency];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "profile {id}: weights must be finite and >= 0"
            )))
        }
    }
}

/// Partial weight override, as read from `profiles.<id>` config sections.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverride {
    pub w_rebuff: Option<f64>,
    pub w_quality: Option<f64>,
    pub w_bitrate: Option<f64>,
    pub w_consistency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemographicProfile {
    pub id: ProfileId,
    pub weights: Weights,
}

/// The six profiles in enum order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    profiles: Vec<DemographicProfile>,
}

impl ProfileSet {
    /// Built-in weight table, as (w_rebuff, w_quality, w_bitrate, w_consistency).
    pub fn builtin() -> Self {
        let table = [
            Weights::new(1.0, 1.0, 1.0, 1.0),
            Weights::new(1.2, 2.5, 1.2, 1.5),
            Weights::new(1.5, 0.7, 0.6, 1.0),
            Weights::new(2.8, 1.0, 1.8, 0.8),
            Weights::new(0.5, 0.8, 0.5, 2.0),
            Weights::new(0.8, 2.2, 1.2, 1.5),
        ];
        ProfileSet {
            profiles: ProfileId::ALL
                .into_iter()
                .zip(table)
                .map(|(id, weights)| DemographicProfile { id, weights })
                .collect(),
        }
    }

    /// Applies per-profile overrides keyed by profile id string.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, WeightOverride>) -> Result<Self> {
        for (key, o) in overrides {
            let id: ProfileId = key.parse().map_err(|_| {
                Error::Config(format!("unknown profile `{key}` in profiles section"))
            })?;
            let w = &mut self.profiles[id.index()].weights;
            w.w_rebuff = o.w_rebuff.unwrap_or(w.w_rebuff);
            w.w_quality = o.w_quality.unwrap_or(w.w_quality);
            w.w_bitrate = o.w_bitrate.unwrap_or(w.w_bitrate);
            w.w_consistency = o.w_consistency.unwrap_or(w.w_consistency);
            w.validate(id)?;
        }
        Ok(self)
    }

    pub fn get(&self, id: ProfileId) -> &DemographicProfile {
        &self.profiles[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DemographicProfile> {
        self.profiles.iter()
    }
}

impl Default for ProfileSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactFactors {
    pub rebuff_impact: f64,
    pub quality_boost: f64,
    pub quality_variance: f64,
    pub smoothness: f64,
    pub bitrate_norm: f64,
}

impl ImpactFactors {
    /// The point at which every profile's adjustment is zero.
    pub fn neutral() -> Self {
        ImpactFactors {
            rebuff_impact: 0.0,
            quality_boost: 0.5,
            quality_variance: 0.5,
            smoothness: 0.5,
            bitrate_norm: 0.5,
        }
    }
}

pub fn compute_impact_factors(s: &StreamingSession) -> Result<ImpactFactors> {
    if s.vmaf_mean <= 0.0 || s.bitrate_mean_kbps <= 0.0 {
        return Err(Error::DegenerateInput(format!(
            "session {}: vmaf_mean and bitrate_mean_kbps must be > 0",
            s.session_id
        )));
    }
    let rebuff_impact = (s.stall_duration_s / 2.0).min(1.0);
    let quality_boost = 0.5 * (s.vmaf_mean / 100.0 + s.ssim_mean);
    let quality_variance = 0.5 * (s.vmaf_std / s.vmaf_mean + s.bitrate_std_kbps / s.bitrate_mean_kbps);
    let smoothness = 1.0 - quality_variance.min(1.0);
    let bitrate_norm = ((s.bitrate_mean_kbps / BITRATE_FLOOR_KBPS).log2()
        / (BITRATE_CEIL_KBPS / BITRATE_FLOOR_KBPS).log2())
    .clamp(0.0, 1.0);
    Ok(ImpactFactors {
        rebuff_impact,
        quality_boost,
        quality_variance,
        smoothness,
        bitrate_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Standard deviation of the per-row Gaussian perturbation, MOS points.
    pub noise_sigma: f64,
    /// Scale applied to the weighted factor deviations, MOS points.
    pub adjustment_scale: f64,
    pub seed: u64,
    pub profiles: ProfileSet,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            noise_sigma: 2.0,
            adjustment_scale: 12.0,
            seed: 0,
            profiles: ProfileSet::builtin(),
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        if !(self.adjustment_scale.is_finite() && self.adjustment_scale > 0.0) {
            return Err(Error::invalid("adjustment_scale must be finite and > 0"));
        }
        Ok(())
    }
}

/// Profile-adjusted MOS before noise.
///
/// Linear in each factor and centered so that [`ImpactFactors::neutral`]
/// leaves `base_mos` unchanged.
pub fn adjust_mos(
    base_mos: f64,
    factors: &ImpactFactors,
    profile: &DemographicProfile,
    cfg: &AugmentationConfig,
) -> f64 {
    let w = &profile.weights;
    let shift = w.w_quality * (factors.quality_boost - 0.5) - w.w_rebuff * factors.rebuff_impact
        + w.w_consistency * (factors.smoothness - 0.5)
        + w.w_bitrate * (factors.bitrate_norm - 0.5);
    (base_mos + cfg.adjustment_scale * shift).clamp(0.0, 100.0)
}

/// Seed of the noise stream for one (base session, profile) pair.
pub fn row_seed(cfg_seed: u64, base_session_id: u64, profile: ProfileId) -> u64 {
    seed::derive(cfg_seed, &[base_session_id, profile.index() as u64])
}

/// Expands every base session into one row per profile.
pub fn augment_dataset(base: &Dataset, cfg: &AugmentationConfig) -> Result<Dataset> {
    cfg.validate()?;
    if base.is_empty() {
        return Err(Error::invalid("cannot augment an empty dataset"));
    }
    if base.provenance().source == Source::Augmented || base.rows().iter().any(|r| r.demographic.is_some()) {
        return Err(Error::invalid("dataset is already augmented"));
    }
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;

    let mut rows = Vec::with_capacity(base.len() * ProfileId::ALL.len());
    for r in base.rows() {
        let factors = compute_impact_factors(&r.session)?;
        let base_id = r.session.session_id;
        for profile in cfg.profiles.iter() {
            let adjusted = adjust_mos(r.session.mos, &factors, profile, cfg);
            let eps = if cfg.noise_sigma == 0.0 {
                0.0
            } else {
                noise.sample(&mut seed::rng(row_seed(cfg.seed, base_id, profile.id)))
            };
            let mut session = r.session.clone();
            session.session_id = base_id * ProfileId::ALL.len() as u64 + profile.id.index() as u64;
            session.mos = (adjusted + eps).clamp(0.0, 100.0);
            rows.push(Record {
                session,
                demographic: Some(profile.id.as_str().to_string()),
                base_session_id: Some(base_id),
                meta: r.meta.clone(),
            });
        }
    }

    let mut schema = base.schema().to_vec();
    schema.extend(
        Dataset::augmented_schema()
            .into_iter()
            .skip(crate::data::BASE_COLUMNS.len()),
    );
    Dataset::new(
        schema,
        rows,
        Provenance {
            source: Source::Augmented,
            seed: Some(cfg.seed),
            parent_hash: Some(base.content_hash()),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_base_dataset;

    fn session() -> StreamingSession {
        StreamingSession {
            session_id: 3,
            content_type: "news".into(),
            device: "tv".into(),
            encoding_profile: "h264_main".into(),
            duration_s: 100.0,
            bitrate_mean_kbps: 1000.0,
            bitrate_std_kbps: 200.0,
            vmaf_mean: 50.0,
            vmaf_std: 10.0,
            ssim_mean: 0.8,
            qp_mean: 30.0,
            stall_duration_s: 0.0,
            stall_count: 0,
            mos: 70.0,
        }
    }

    fn with_factors(rebuff: f64) -> ImpactFactors {
        ImpactFactors {
            rebuff_impact: rebuff,
            ..ImpactFactors::neutral()
        }
    }

    #[test]
    fn builtin_table_constraints() {
        let set = ProfileSet::builtin();
        let w = |id| set.get(id).weights;
        assert_eq!(w(ProfileId::GamerSports).w_rebuff, 2.8);
        assert_eq!(w(ProfileId::ElderlyUser).w_rebuff, 0.5);
        let quality: Vec<f64> = set.iter().map(|p| p.weights.w_quality).collect();
        let max = quality.iter().cloned().fold(f64::MIN, f64::max);
        let min = quality.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(w(ProfileId::QualityEnthusiast).w_quality, max);
        assert_eq!(w(ProfileId::MobileUser).w_quality, min);
        assert!(w(ProfileId::GamerSports).w_rebuff > w(ProfileId::ProfessionalCritical).w_rebuff);
        let ids: Vec<_> = set.iter().map(|p| p.id).collect();
        assert_eq!(ids, ProfileId::ALL);
    }

    #[test]
    fn factor_examples() {
        let mut s = session();
        s.stall_duration_s = 2.0;
        s.stall_count = 1;
        assert_eq!(compute_impact_factors(&s).unwrap().rebuff_impact, 1.0);
        s.stall_duration_s = 9.0;
        assert_eq!(compute_impact_factors(&s).unwrap().rebuff_impact, 1.0);

        let mut s = session();
        s.vmaf_mean = 100.0;
        s.ssim_mean = 1.0;
        assert_eq!(compute_impact_factors(&s).unwrap().quality_boost, 1.0);

        // vmaf 10/50 and bitrate 200/1000 are both 0.2.
        let f = compute_impact_factors(&session()).unwrap();
        assert!((f.quality_variance - 0.2).abs() < 1e-15);
        assert!((f.smoothness - 0.8).abs() < 1e-15);
        assert_eq!(f.smoothness, 1.0 - f.quality_variance.min(1.0));
    }

    #[test]
    fn degenerate_means_are_rejected() {
        let mut s = session();
        s.vmaf_mean = 0.0;
        assert!(matches!(
            compute_impact_factors(&s),
            Err(Error::DegenerateInput(_))
        ));
        let mut s = session();
        s.bitrate_mean_kbps = 0.0;
        assert!(compute_impact_factors(&s).is_err());
    }

    #[test]
    fn bitrate_norm_spans_the_log_range() {
        let mut s = session();
        s.bitrate_mean_kbps = 300.0;
        assert_eq!(compute_impact_factors(&s).unwrap().bitrate_norm, 0.0);
        s.bitrate_mean_kbps = 20000.0;
        assert!((compute_impact_factors(&s).unwrap().bitrate_norm - 1.0).abs() < 1e-15);
        s.bitrate_mean_kbps = 100.0;
        assert_eq!(compute_impact_factors(&s).unwrap().bitrate_norm, 0.0);
    }

    #[test]
    fn neutral_factors_leave_mos_unchanged() {
        let cfg = AugmentationConfig::default();
        for p in cfg.profiles.iter() {
            assert_eq!(adjust_mos(63.25, &ImpactFactors::neutral(), p, &cfg), 63.25);
        }
    }

    #[test]
    fn full_stall_gamer_vs_elderly() {
        let cfg = AugmentationConfig::default();
        let gamer = cfg.profiles.get(ProfileId::GamerSports);
        let elderly = cfg.profiles.get(ProfileId::ElderlyUser);
        assert!((adjust_mos(70.0, &with_factors(1.0), gamer, &cfg) - 36.4).abs() < 1e-12);
        assert!((adjust_mos(70.0, &with_factors(1.0), elderly, &cfg) - 64.0).abs() < 1e-12);
    }

    #[test]
    fn strong_positive_adjustment_clips_at_100() {
        let cfg = AugmentationConfig::default();
        let f = ImpactFactors {
            rebuff_impact: 0.0,
            quality_boost: 1.0,
            quality_variance: 0.0,
            smoothness: 1.0,
            bitrate_norm: 1.0,
        };
        let p = cfg.profiles.get(ProfileId::QualityEnthusiast);
        assert_eq!(adjust_mos(99.0, &f, p, &cfg), 100.0);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut o = BTreeMap::new();
        o.insert(
            "mobile_user".to_string(),
            WeightOverride {
                w_rebuff: Some(3.0),
                ..Default::default()
            },
        );
        let set = ProfileSet::builtin().with_overrides(&o).unwrap();
        assert_eq!(set.get(ProfileId::MobileUser).weights.w_rebuff, 3.0);
        assert_eq!(set.get(ProfileId::MobileUser).weights.w_quality, 0.7);

        o.insert("nobody".to_string(), WeightOverride::default());
        assert!(ProfileSet::builtin().with_overrides(&o).is_err());

        let mut neg = BTreeMap::new();
        neg.insert(
            "gamer_sports".to_string(),
            WeightOverride {
                w_quality: Some(-1.0),
                ..Default::default()
            },
        );
        assert!(ProfileSet::builtin().with_overrides(&neg).is_err());
    }

    #[test]
    fn augment_shapes_and_labels() {
        let base = generate_base_dataset(20, 5).unwrap();
        let cfg = AugmentationConfig {
            seed: 9,
            ..Default::default()
        };
        let aug = augment_dataset(&base, &cfg).unwrap();
        assert_eq!(aug.len(), 120);
        assert_eq!(aug.provenance().source, Source::Augmented);
        assert_eq!(aug.provenance().parent_hash.as_deref(), Some(base.content_hash().as_str()));
        for (i, r) in aug.rows().iter().enumerate() {
            let b = &base.rows()[i / 6];
            assert_eq!(r.base_session_id, Some(b.session.session_id));
            assert_eq!(r.demographic.as_deref(), Some(ProfileId::ALL[i % 6].as_str()));
            assert_eq!(r.session.vmaf_mean, b.session.vmaf_mean);
            assert!((0.0..=100.0).contains(&r.session.mos));
        }
        assert!(matches!(
            augment_dataset(&aug, &cfg),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            augment_dataset(&base.subset(&[]), &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_noise_neutral_session_keeps_base_mos() {
        // quality_boost = 0.5, smoothness = 0.5, bitrate_norm = 0.5, no stalls.
        let mut s = session();
        s.vmaf_mean = 40.0;
        s.ssim_mean = 0.6;
        s.vmaf_std = 20.0;
        s.bitrate_std_kbps = 0.0;
        s.bitrate_mean_kbps = 300.0 * (20000.0f64 / 300.0).sqrt();
        s.bitrate_std_kbps = 0.5 * s.bitrate_mean_kbps;
        s.vmaf_std = 0.5 * s.vmaf_mean;
        let f = compute_impact_factors(&s).unwrap();
        assert!((f.bitrate_norm - 0.5).abs() < 1e-12);
        assert!((f.smoothness - 0.5).abs() < 1e-12);
        let base = Dataset::new(
            Dataset::base_schema(),
            vec![Record::plain(s)],
            Provenance {
                source: Source::Ingested,
                seed: None,
                parent_hash: None,
            },
        )
        .unwrap();
        let cfg = AugmentationConfig {
            noise_sigma: 0.0,
            ..Default::default()
        };
        let aug = augment_dataset(&base, &cfg).unwrap();
        for r in aug.rows() {
            assert!((r.session.mos - 70.0).abs() < 1e-9, "{}", r.session.mos);
        }
    }
}
