//! Corpus ingestion: metadata tables, audio decoding, label vocabularies.

mod audio;
mod metadata;

pub use audio::{
    load_audio, load_audio_with, write_wav, AudioBuffer, AudioDecoder, DecodedAudio, WavDecoder,
};
pub use metadata::{
    build_vocabulary, load_metadata, split_durations, write_metadata, LabelVocabulary,
    MultiHotLabels, Split, TrackRecord,
};
