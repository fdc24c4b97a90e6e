use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, N_FEATURES};
use crate::error::{Error, Result};

/// Per-feature z-score statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; N_FEATURES],
            std: [1.0; N_FEATURES],
        }
    }
}

/// Pooled statistics over every frame of every matrix. Zero-variance
/// features get std 1.
pub fn fit_norm<'a, I>(matrices: I) -> NormStats
where
    I: IntoIterator<Item = &'a FeatureMatrix>,
{
    let mut count = 0usize;
    let mut sum = [0.0f64; N_FEATURES];
    let mut sq = [0.0f64; N_FEATURES];
    let mats: Vec<&FeatureMatrix> = matrices.into_iter().collect();
    for m in &mats {
        for i in 0..m.n_frames() {
            for (c, &v) in m.row(i).iter().enumerate() {
                sum[c] += f64::from(v);
            }
            count += 1;
        }
    }
    if count == 0 {
        return NormStats::identity();
    }
    let n = count as f64;
    let mean = sum.map(|s| s / n);
    // Second pass for a numerically stable variance.
    for m in &mats {
        for i in 0..m.n_frames() {
            for (c, &v) in m.row(i).iter().enumerate() {
                let d = f64::from(v) - mean[c];
                sq[c] += d * d;
            }
        }
    }
    let std = sq.map(|s| {
        let sd = (s / n).sqrt();
        if sd > 1e-12 {
            sd
        } else {
            1.0
        }
    });
    NormStats { mean, std }
}

pub fn apply_norm(fm: &FeatureMatrix, stats: &NormStats) -> FeatureMatrix {
    let mut out = fm.clone();
    for row in out.data_mut().chunks_mut(N_FEATURES) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = ((f64::from(*v) - stats.mean[c]) / stats.std[c]) as f32;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Pitch,
    Intensity,
    Voicing,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 3] = [FeatureGroup::Pitch, FeatureGroup::Intensity, FeatureGroup::Voicing];

    pub fn columns(self) -> &'static [usize] {
        match self {
            FeatureGroup::Pitch => &[0],
            FeatureGroup::Intensity => &[1, 2],
            FeatureGroup::Voicing => &[3, 4, 5],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Pitch => "pitch",
            FeatureGroup::Intensity => "intensity",
            FeatureGroup::Voicing => "voicing",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pitch" => Ok(FeatureGroup::Pitch),
            "intensity" => Ok(FeatureGroup::Intensity),
            "voicing" => Ok(FeatureGroup::Voicing),
            other => Err(Error::Ablation(format!("unknown feature group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Every feature of every frame replaced by 1.
    DurationOnly,
    /// Named groups zeroed (after normalization zero is the training mean).
    DropGroups(BTreeSet<FeatureGroup>),
}

impl Ablation {
    pub fn drop(groups: &[FeatureGroup]) -> Self {
        Ablation::DropGroups(groups.iter().copied().collect())
    }

    /// Groups the model still sees.
    pub fn kept_groups(&self) -> Vec<FeatureGroup> {
        match self {
            Ablation::None => FeatureGroup::ALL.to_vec(),
            Ablation::DurationOnly => vec![],
            Ablation::DropGroups(d) => FeatureGroup::ALL.into_iter().filter(|g| !d.contains(g)).collect(),
        }
    }

    /// Short label like `pitch+intensity`, `duration_only` or `all`.
    pub fn label(&self) -> String {
        match self {
            Ablation::None => "all".into(),
            Ablation::DurationOnly => "duration_only".into(),
            Ablation::DropGroups(d) if d.is_empty() => "all".into(),
            Ablation::DropGroups(_) => self
                .kept_groups()
                .iter()
                .map(|g| g.name())
                .collect::<Vec<_>>()
                .join("+"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Ablation::DropGroups(d) = self {
            if d.len() == FeatureGroup::ALL.len() {
                return Err(Error::Ablation(
                    "dropping every feature group is the duration-only baseline; request it explicitly".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn ablate(fm: &FeatureMatrix, mode: &Ablation) -> Result<FeatureMatrix> {
    mode.validate()?;
    let mut out = fm.clone();
    match mode {
        Ablation::None => {}
        Ablation::DurationOnly => out.data_mut().fill(1.0),
        Ablation::DropGroups(groups) => {
            for row in out.data_mut().chunks_mut(N_FEATURES) {
                for g in groups {
                    for &c in g.columns() {
                        row[c] = 0.0;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[[f32; 6]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows.iter().flatten().copied().collect(), 0.01).unwrap()
    }

    #[test]
    fn z_score_on_own_stats() {
        let m = matrix(&[
            [100.0, 0.1, 0.5, 0.01, 0.9, 10.0],
            [200.0, 0.3, 0.7, 0.02, 0.8, 12.0],
            [150.0, 0.2, 0.6, 0.05, 0.1, -3.0],
            [0.0, 0.0, 0.0, 0.00, 0.0, -60.0],
        ]);
        let s = fit_norm([&m]);
        let z = apply_norm(&m, &s);
        for c in 0..6 {
            let col: Vec<f64> = z.column(c).map(f64::from).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-6, "{c}: {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "{c}: {var}");
        }
    }

    #[test]
    fn constant_feature_becomes_zero() {
        let m = matrix(&[[1.0, 2.0, 3.0, 0.1, 0.5, 7.0], [1.0, 4.0, 3.0, 0.1, 0.6, 7.0]]);
        let s = fit_norm([&m]);
        assert_eq!(s.std[0], 1.0);
        let z = apply_norm(&m, &s);
        assert!(z.column(0).all(|v| v == 0.0));
    }

    #[test]
    fn foreign_stats_are_not_identity() {
        let a = matrix(&[[100.0, 0.1, 0.5, 0.01, 0.9, 10.0], [120.0, 0.2, 0.6, 0.02, 0.8, 11.0]]);
        let b = matrix(&[[200.0, 0.5, 0.9, 0.2, 0.1, -5.0], [260.0, 0.7, 0.95, 0.3, 0.2, -9.0]]);
        let own = apply_norm(&a, &fit_norm([&a]));
        let foreign = apply_norm(&a, &fit_norm([&b]));
        assert_ne!(own, foreign);
    }

    #[test]
    fn ablation_modes() {
        let m = matrix(&[[100.0, 0.1, 0.5, 0.01, 0.9, 10.0], [200.0, 0.3, 0.7, 0.02, 0.8, 12.0]]);
        let d = ablate(&m, &Ablation::DurationOnly).unwrap();
        assert_eq!(d.n_frames(), 2);
        assert!(d.as_slice().iter().all(|&v| v == 1.0));

        let p = ablate(&m, &Ablation::drop(&[FeatureGroup::Pitch])).unwrap();
        assert!(p.column(0).all(|v| v == 0.0));
        for c in 1..6 {
            assert!(p.column(c).eq(m.column(c)));
        }

        let only_f0 = ablate(&m, &Ablation::drop(&[FeatureGroup::Intensity, FeatureGroup::Voicing])).unwrap();
        assert!(only_f0.column(0).eq(m.column(0)));
        for c in 1..6 {
            assert!(only_f0.column(c).all(|v| v == 0.0));
        }

        assert!(ablate(&m, &Ablation::drop(&FeatureGroup::ALL)).is_err());
        assert_eq!(ablate(&m, &Ablation::None).unwrap(), m);
    }

    #[test]
    fn labels() {
        assert_eq!(Ablation::drop(&[FeatureGroup::Pitch]).label(), "intensity+voicing");
        assert_eq!(Ablation::None.label(), "all");
        assert_eq!(Ablation::DurationOnly.label(), "duration_only");
    }

    fn any_ablation() -> impl Strategy<Value = Ablation> {
        prop_oneof![
            Just(Ablation::None),
            Just(Ablation::DurationOnly),
            proptest::sample::subsequence(FeatureGroup::ALL.to_vec(), 0..3).prop_map(|g| Ablation::drop(&g)),
        ]
    }

    proptest! {
        #[test]
        fn ablation_is_idempotent(
            vals in proptest::collection::vec(-100.0f32..100.0, 6..60),
            mode in any_ablation()
        ) {
            let n = vals.len() / 6 * 6;
            let m = FeatureMatrix::from_rows(vals[..n].to_vec(), 0.01).unwrap();
            let once = ablate(&m, &mode).unwrap();
            let twice = ablate(&once, &mode).unwrap();
            prop_assert_eq!(once.n_frames(), m.n_frames());
            prop_assert_eq!(twice, once);
        }
    }
}
