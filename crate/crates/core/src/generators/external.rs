//! Adapter for pre-generated audio laid out as `<class>/<sample>.wav`.

use std::fs;
use std::path::Path;

use super::{GeneratedSample, GenerationRequest, Generator, GeneratorMode, GeneratorProfile, Provenance};
use crate::corpus::{load_audio, LabelVocabulary};
use crate::error::{Error, Result};

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

/// Every WAV under a known class directory becomes a sample labelled by
/// that directory. Audio is resampled to the profile rate.
pub fn external_scan(dir: &Path, vocabulary: &LabelVocabulary, profile: &GeneratorProfile) -> Result<Vec<GeneratedSample>> {
    let mut out = Vec::new();
    for sub in sorted_entries(dir)? {
        if !sub.is_dir() {
            continue;
        }
        let name = sub.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let class = vocabulary.index_of(&name).ok_or_else(|| vocabulary.unknown_class(&name))?;
        for f in sorted_entries(&sub)? {
            if f.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("wav")) != Some(true) {
                continue;
            }
            let audio = load_audio(&f, profile.sample_rate_hz)?;
            let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            out.push(GeneratedSample::finish(
                audio,
                class,
                Provenance {
                    generator: profile.name.clone(),
                    source_id: Some(id),
                    seed: 0,
                    mode: GeneratorMode::External,
                },
                Vec::new(),
            ));
        }
    }
    if out.is_empty() {
        log::warn!("no external samples found under {}", dir.display());
    }
    Ok(out)
}

/// Serves scanned samples class by class in directory order.
pub struct ExternalGenerator {
    pub profile: GeneratorProfile,
    pub samples: Vec<GeneratedSample>,
}

impl Generator for ExternalGenerator {
    fn profile(&self) -> &GeneratorProfile {
        &self.profile
    }

    /// `seed` picks the n-th stored sample of the requested class.
    fn generate(&self, request: &GenerationRequest) -> Result<GeneratedSample> {
        let of_class: Vec<&GeneratedSample> = self.samples.iter().filter(|s| s.inherited_label == request.target_class).collect();
        if of_class.is_empty() {
            return Err(super::generation_error(&self.profile, request, "no stored samples for class"));
        }
        Ok(of_class[request.seed as usize % of_class.len()].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_wav, AudioBuffer};

    fn vocab() -> LabelVocabulary {
        LabelVocabulary::new(vec!["happy".into(), "sad".into()]).unwrap()
    }

    #[test]
    fn scans_class_directories() {
        let dir = tempfile::tempdir().unwrap();
        let happy = dir.path().join("happy");
        fs::create_dir(&happy).unwrap();
        for i in 0..3 {
            write_wav(&happy.join(format!("{i}.wav")), &AudioBuffer::silence(441, 44100)).unwrap();
        }
        fs::write(happy.join("notes.txt"), "x").unwrap();
        let s = external_scan(dir.path(), &vocab(), &GeneratorProfile::external()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|x| x.inherited_label == 0 && x.provenance.mode == GeneratorMode::External));
    }

    #[test]
    fn empty_directory_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(external_scan(dir.path(), &vocab(), &GeneratorProfile::external()).unwrap().is_empty());
    }

    #[test]
    fn unknown_class_lists_valid_ones() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("notaclass")).unwrap();
        let err = external_scan(dir.path(), &vocab(), &GeneratorProfile::external()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("notaclass") && msg.contains("happy") && msg.contains("sad"), "{msg}");
    }
}
