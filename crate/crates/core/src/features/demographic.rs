//! Face annotations to a fixed-length demographic vector.

use crate::data::{Emotion, FaceAnnotation, Gender, Race, MAX_AGE};

pub const GENDER_OFFSET: usize = 0;
pub const AGE_OFFSET: usize = GENDER_OFFSET + Gender::ALL.len();
pub const EMOTION_OFFSET: usize = AGE_OFFSET + MAX_AGE as usize + 1;
pub const RACE_OFFSET: usize = EMOTION_OFFSET + Emotion::ALL.len();
/// 2 + 101 + 7 + 6.
pub const DEMOGRAPHIC_DIM: usize = RACE_OFFSET + Race::ALL.len();
pub const ORDINAL_DIM: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DemographicMode {
    /// One-hot blocks for gender, age, emotion and race.
    #[default]
    OneHot,
    /// One scalar per attribute, each scaled to [0, 1].
    Ordinal,
}

impl DemographicMode {
    pub fn dim(self) -> usize {
        match self {
            DemographicMode::OneHot => DEMOGRAPHIC_DIM,
            DemographicMode::Ordinal => ORDINAL_DIM,
        }
    }
}

fn encode_one(face: &FaceAnnotation, mode: DemographicMode) -> Vec<f64> {
    match mode {
        DemographicMode::OneHot => {
            let mut v = vec![0.0; DEMOGRAPHIC_DIM];
            v[GENDER_OFFSET + face.gender.index()] = 1.0;
            v[AGE_OFFSET + face.age.min(MAX_AGE) as usize] = 1.0;
            v[EMOTION_OFFSET + face.emotion.index()] = 1.0;
            v[RACE_OFFSET + face.race.index()] = 1.0;
            v
        }
        DemographicMode::Ordinal => vec![
            face.gender.index() as f64,
            f64::from(face.age.min(MAX_AGE)) / f64::from(MAX_AGE),
            face.emotion.index() as f64 / (Emotion::ALL.len() - 1) as f64,
            face.race.index() as f64 / (Race::ALL.len() - 1) as f64,
        ],
    }
}

/// Elementwise mean of the per-face encodings; zero when there are no faces.
pub fn demographic_vector(faces: &[FaceAnnotation], mode: DemographicMode) -> Vec<f64> {
    let mut out = vec![0.0; mode.dim()];
    if faces.is_empty() {
        return out;
    }
    for face in faces {
        for (o, x) in out.iter_mut().zip(encode_one(face, mode)) {
            *o += x;
        }
    }
    let n = faces.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}
