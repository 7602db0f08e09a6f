//! Model handles for the Analyze stage: the binary triage pair (linear SVM
//! and Gaussian naive Bayes over standardized beat features) and the
//! multiclass CNN.

use egw_arrhythmia::TrainedModel;
use egw_canon::sha256;
use egw_dsp::{detect_waves, extract_features, preprocess, BeatFeatures, EcgSignal};
use egw_triage::{
    nb_predict, nb_train, svm_predict, svm_train, GaussianNbModel, LinearSvmModel, Standardizer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::signal::{synth_ecg, SynthSegment};
use crate::{GatewayConfig, GatewayError, ModelRefs};

/// Which of the two binary classifiers decides the triage verdict. Both are
/// always trained and carried in the model so the choice is a pure config
/// switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriageClassifier {
    Svm,
    Nb,
}

/// The gateway's binary normal/abnormal classifier: a standardizer fitted on
/// the training corpus plus both trained models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageModel {
    pub standardizer: Standardizer,
    pub svm: LinearSvmModel,
    pub nb: GaussianNbModel,
    pub seed: u64,
}

/// [`BeatFeatures`] numeric fields in triage order. Durations the detector
/// could not measure are imputed later with the training mean (zero
/// evidence), so `None` never masquerades as a zero-millisecond wave.
fn raw_vector(beat: &BeatFeatures) -> [Option<f64>; 6] {
    [beat.qrs_ms, beat.t_ms, Some(beat.rr_s), beat.pr_ms, beat.st_ms, Some(beat.hr_bpm)]
}

/// Column-mean imputation over optional feature values. A column with no
/// measurements at all falls back to zero, which standardizes to a constant
/// the classifiers ignore.
fn impute_missing(rows: &[[Option<f64>; 6]]) -> Vec<Vec<f64>> {
    let mut means = [0.0_f64; 6];
    for (col, mean) in means.iter_mut().enumerate() {
        let observed: Vec<f64> = rows.iter().filter_map(|row| row[col]).collect();
        if !observed.is_empty() {
            *mean = observed.iter().sum::<f64>() / observed.len() as f64;
        }
    }
    rows.iter()
        .map(|row| row.iter().enumerate().map(|(col, v)| v.unwrap_or(means[col])).collect())
        .collect()
}

/// Runs the Analyze-side DSP pipeline on one signal with the config's band
/// and thresholds: preprocess, wave detection, per-beat features.
pub(crate) fn beats_of(
    signal: &EcgSignal,
    config: &GatewayConfig,
) -> Result<Vec<BeatFeatures>, GatewayError> {
    let filtered =
        preprocess(signal, config.band_low_hz, config.band_high_hz, config.ma_window)?;
    let marks = detect_waves(&filtered, &config.wave_thresholds)?;
    if marks.r_peaks.len() < 2 {
        return Ok(Vec::new());
    }
    Ok(extract_features(&filtered, &marks)?)
}

/// Trains the triage pair on a deterministic synthetic corpus: short strips
/// rendered by the same synthesizer and measured by the same DSP pipeline
/// the gateway runs at analysis time, labeled by the generating rhythm
/// (normal 58–95 bpm; abnormal tachycardia 108–150 or bradycardia 30–48).
/// Using the live measurement path keeps the training feature distribution
/// aligned with what Analyze actually observes.
pub fn bootstrap_triage(config: &GatewayConfig) -> Result<TriageModel, GatewayError> {
    let seed = config.seed;
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x7219_a6e5);
    let mut features: Vec<[Option<f64>; 6]> = Vec::new();
    let mut svm_labels: Vec<i8> = Vec::new();
    let mut nb_labels: Vec<i32> = Vec::new();
    for strip in 0..40 {
        let abnormal = strip % 2 == 1;
        let bpm = if !abnormal {
            rng.gen_range(58.0..95.0)
        } else if rng.gen_bool(0.6) {
            rng.gen_range(108.0..150.0)
        } else {
            rng.gen_range(30.0..48.0)
        };
        let samples = synth_ecg(
            config.sampling_rate,
            &[SynthSegment { seconds: 8.0, bpm }],
            seed.wrapping_add(strip),
        )?;
        let signal = EcgSignal::new(samples, config.sampling_rate)?;
        for beat in beats_of(&signal, config)? {
            features.push(raw_vector(&beat));
            svm_labels.push(if abnormal { 1 } else { -1 });
            nb_labels.push(i32::from(abnormal));
        }
    }
    // Monitoring strips routinely lose P waves (and T at high rates) to the
    // high-pass baseline shift, so missing durations are filled with the
    // column mean of the measured beats -- the same neutral value the
    // inference path imputes. Mean-imputation leaves the column mean intact,
    // so the imputed cells standardize to exactly zero.
    let features = impute_missing(&features);
    let standardizer = Standardizer::fit(&features)?;
    let standardized = standardizer.transform_all(&features)?;
    let svm = svm_train(&standardized, &svm_labels, 1e-3, 50, seed)?;
    let nb = nb_train(&standardized, &nb_labels)?;
    Ok(TriageModel { standardizer, svm, nb, seed })
}

impl TriageModel {
    /// Feature vector for one beat, missing durations imputed with the
    /// training mean so they standardize to zero.
    fn vector(&self, beat: &BeatFeatures) -> Vec<f64> {
        raw_vector(beat)
            .iter()
            .zip(&self.standardizer.means)
            .map(|(v, mean)| v.unwrap_or(*mean))
            .collect()
    }

    /// Binary verdict for one beat: `true` means abnormal.
    pub fn is_abnormal(
        &self,
        beat: &BeatFeatures,
        classifier: TriageClassifier,
    ) -> Result<bool, GatewayError> {
        let x = self.standardizer.transform(&self.vector(beat))?;
        Ok(match classifier {
            TriageClassifier::Svm => svm_predict(&self.svm, &x)?.0 > 0,
            TriageClassifier::Nb => nb_predict(&self.nb, &x)?.0 == 1,
        })
    }

    /// Content fingerprint for the knowledge base's model reference.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("triage model serializes");
        format!("triage-{}", &sha256(&bytes).to_hex()[..16])
    }
}

/// The Analyze stage's model set. The CNN is optional at construction; an
/// abnormal chunk that needs a class while it is absent raises a state error.
#[derive(Debug)]
pub struct Models {
    pub triage: TriageModel,
    pub cnn: Option<TrainedModel>,
}

impl Models {
    pub fn refs(&self) -> ModelRefs {
        ModelRefs {
            triage: self.triage.fingerprint(),
            cnn: self.cnn.as_ref().map(|m| {
                let tag = serde_json::to_vec(&(&m.config, m.seed, &m.loss_history))
                    .expect("model tag serializes");
                format!("cnn-{}", &sha256(&tag).to_hex()[..16])
            }),
        }
    }
}
