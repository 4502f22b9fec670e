use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{round_half_up, ClassLabel, Dataset, Slide};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Settings for building synthetic slides out of real ones of the same class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Share of the base slide's cells drawn into each synthetic slide.
    pub primary_fraction: f64,
    /// Share of every other same-class slide's cells drawn in.
    pub other_fraction: f64,
    pub count_per_class: usize,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            primary_fraction: 0.30,
            other_fraction: 0.01,
            count_per_class: 100,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    fn validate(&self) -> Result<()> {
        if !(self.primary_fraction > 0.0 && self.primary_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "primary_fraction must lie in (0, 1], got {}",
                self.primary_fraction
            )));
        }
        if !(self.other_fraction >= 0.0 && self.other_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "other_fraction must lie in [0, 1), got {}",
                self.other_fraction
            )));
        }
        if self.count_per_class == 0 {
            return Err(Error::InvalidConfig("count_per_class must be positive".into()));
        }
        Ok(())
    }

    /// Cells taken from the base slide: round-half-up, at least one.
    pub fn primary_count(&self, base_len: usize) -> usize {
        round_half_up(self.primary_fraction * base_len as f64).clamp(1, base_len)
    }

    pub fn other_count(&self, len: usize) -> usize {
        round_half_up(self.other_fraction * len as f64).min(len)
    }
}

/// Which source cells make up one synthetic slide. Indices refer to the
/// slice of same-class slides handed to [`synthesize_ensemble_picks`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsemblePick {
    pub base: usize,
    /// `(slide index, cell index)` pairs; base-slide cells come first.
    pub cells: Vec<(usize, usize)>,
}

/// Draws the cell selections for `cfg.count_per_class` synthetic slides from
/// `slides`, which must all belong to one class.
pub fn synthesize_ensemble_picks<T: Scalar>(slides: &[&Slide<T>], cfg: &SynthesisConfig) -> Result<Vec<EnsemblePick>> {
    cfg.validate()?;
    if slides.len() < 2 {
        return Err(Error::InsufficientSlides {
            class: slides.first().and_then(|s| s.label).unwrap_or(ClassLabel::Class1),
            needed: 2,
            found: slides.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks = Vec::with_capacity(cfg.count_per_class);
    for _ in 0..cfg.count_per_class {
        let base = rng.random_range(0..slides.len());
        let mut cells = Vec::new();
        for (s, slide) in slides.iter().enumerate() {
            let len = slide.cells.len();
            let amount = if s == base {
                cfg.primary_count(len)
            } else {
                cfg.other_count(len)
            };
            if s == base {
                // base slide first so its cells lead the synthetic slide
                let chosen = index::sample(&mut rng, len, amount);
                cells.splice(0..0, chosen.into_iter().map(|c| (s, c)));
            } else if amount > 0 {
                let chosen = index::sample(&mut rng, len, amount);
                cells.extend(chosen.into_iter().map(|c| (s, c)));
            }
        }
        picks.push(EnsemblePick { base, cells });
    }
    Ok(picks)
}

/// Builds synthetic slides for `class` from the labeled, non-synthetic
/// slides of that class in `dataset`.
pub fn synthesize_ensemble<T: Scalar>(
    dataset: &Dataset<T>,
    class: ClassLabel,
    cfg: &SynthesisConfig,
) -> Result<Vec<Slide<T>>> {
    let sources: Vec<&Slide<T>> = dataset.slides_of(class).filter(|s| !s.synthetic).collect();
    if sources.len() < 2 {
        return Err(Error::InsufficientSlides {
            class,
            needed: 2,
            found: sources.len(),
        });
    }
    let picks = synthesize_ensemble_picks(&sources, cfg)?;
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(i, pick)| Slide {
            slide_id: format!("ens-c{}-{i:04}", class.as_u8()),
            patient_id: sources[pick.base].patient_id.clone(),
            label: Some(class),
            cells: pick.cells.iter().map(|&(s, c)| sources[s].cells[c].clone()).collect(),
            synthetic: true,
        })
        .collect())
}
