//! Patient-level train/test partitions.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{round_half_up, ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slide ids on each side of a split, in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Partitions patients (not slides) per class. A patient's class is the
/// majority label of its real slides, ties going to class 1. Synthetic slides
/// follow their patient into training and are dropped if that patient is
/// held out; unlabeled slides are ignored.
pub fn patient_level_split<T: Scalar>(dataset: &Dataset<T>, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut votes: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
    for s in dataset.slides.iter().filter(|s| !s.synthetic) {
        if let Some(label) = s.label {
            votes.entry(&s.patient_id).or_default()[label.as_u8() as usize - 1] += 1;
        }
    }
    let mut train_patients: HashSet<&str> = HashSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in ClassLabel::ALL {
        let mut patients: Vec<&str> = votes
            .iter()
            .filter(|(_, v)| {
                let majority = if v[1] > v[0] {
                    ClassLabel::Class2
                } else {
                    ClassLabel::Class1
                };
                majority == class
            })
            .map(|(p, _)| *p)
            .collect();
        if patients.len() < 2 {
            return Err(Error::TooFewPatients {
                class,
                found: patients.len(),
            });
        }
        patients.shuffle(&mut rng);
        let n_train = round_half_up(train_fraction * patients.len() as f64).clamp(1, patients.len() - 1);
        train_patients.extend(&patients[..n_train]);
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for s in dataset.slides.iter().filter(|s| s.label.is_some()) {
        if train_patients.contains(s.patient_id.as_str()) {
            split.train.push(s.slide_id.clone());
        } else if !s.synthetic {
            split.test.push(s.slide_id.clone());
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CellRecord, Slide};

    fn slide(id: &str, patient: &str, label: ClassLabel, synthetic: bool) -> Slide {
        Slide {
            slide_id: id.into(),
            patient_id: patient.into(),
            label: Some(label),
            cells: vec![CellRecord::new(format!("{id}-0"), vec![0.0])],
            synthetic,
        }
    }

    fn two_slides_per_patient(patients_per_class: usize) -> Dataset {
        let mut slides = Vec::new();
        for class in ClassLabel::ALL {
            for p in 0..patients_per_class {
                for k in 0..2 {
                    let pid = format!("c{}-p{p}", class.as_u8());
                    slides.push(slide(&format!("{pid}-s{k}"), &pid, class, false));
                }
            }
        }
        Dataset::new(slides, 1).unwrap()
    }

    fn patient_of(ds: &Dataset, id: &str) -> String {
        ds.slide(id).unwrap().patient_id.clone()
    }

    #[test]
    fn counts_for_ten_patients() {
        let ds = two_slides_per_patient(10);
        let split = patient_level_split(&ds, 0.8, 3).unwrap();
        assert_eq!(split.train.len(), 32);
        assert_eq!(split.test.len(), 8);
        for class in ClassLabel::ALL {
            let n = split
                .test
                .iter()
                .filter(|id| ds.slide(id).unwrap().label == Some(class))
                .count();
            assert_eq!(n, 4);
        }
        let train_p: HashSet<String> = split.train.iter().map(|id| patient_of(&ds, id)).collect();
        assert!(split.test.iter().all(|id| !train_p.contains(&patient_of(&ds, id))));
    }

    #[test]
    fn mixed_label_patient_stays_together() {
        let mut slides: Vec<Slide> = two_slides_per_patient(3).slides;
        slides.push(slide("mixed-a", "mixed", ClassLabel::Class1, false));
        slides.push(slide("mixed-b", "mixed", ClassLabel::Class2, false));
        let ds = Dataset::new(slides, 1).unwrap();
        for seed in 0..20 {
            let split = patient_level_split(&ds, 0.5, seed).unwrap();
            let a = split.train.contains(&"mixed-a".to_string());
            let b = split.train.contains(&"mixed-b".to_string());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn synthetic_slides_never_tested() {
        let mut slides: Vec<Slide> = two_slides_per_patient(4).slides;
        for p in 0..4 {
            slides.push(slide(
                &format!("ens-{p}"),
                &format!("c1-p{p}"),
                ClassLabel::Class1,
                true,
            ));
        }
        let ds = Dataset::new(slides, 1).unwrap();
        for seed in 0..10 {
            let split = patient_level_split(&ds, 0.5, seed).unwrap();
            assert!(split.test.iter().all(|id| !ds.slide(id).unwrap().synthetic));
            assert_eq!(split.train.iter().filter(|id| id.starts_with("ens-")).count(), 2);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let ds = two_slides_per_patient(5);
        assert_eq!(
            patient_level_split(&ds, 0.8, 9).unwrap(),
            patient_level_split(&ds, 0.8, 9).unwrap()
        );
        assert!(patient_level_split(&ds, 1.0, 9).is_err());
        let tiny = two_slides_per_patient(1);
        assert!(matches!(
            patient_level_split(&tiny, 0.8, 0),
            Err(Error::TooFewPatients { .. })
        ));
    }
}
