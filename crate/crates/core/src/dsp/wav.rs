//! WAV input/output (16-bit PCM mono at 16 kHz) and feature dumps.

use super::{AudioBuffer, FeatureVector, SAMPLE_RATE};
use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path)?;
    decode(reader)
}

pub fn read_wav_from<R: std::io::Read>(input: R) -> Result<AudioBuffer> {
    decode(hound::WavReader::new(input)?)
}

fn decode<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<AudioBuffer> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::invalid(format!(
            "expected mono audio, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::invalid("expected 16-bit signed PCM"));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "expected {SAMPLE_RATE} Hz audio, got {} Hz",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AudioBuffer::new(samples, spec.sample_rate)
}

fn spec_for(audio: &AudioBuffer) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let mut writer = hound::WavWriter::create(path, spec_for(audio))?;
    for &s in audio.samples() {
        writer.write_sample(quantize(s))?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn wav_bytes(audio: &AudioBuffer) -> Result<Vec<u8>> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec_for(audio))?;
        for &s in audio.samples() {
            writer.write_sample(quantize(s))?;
        }
        writer.finalize()?;
    }
    Ok(cursor.into_inner())
}

/// Writes `frame_index,timestamp_s,v0..v{dim-1}` rows.
pub fn write_features_csv<W: Write>(out: W, features: &[FeatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = features.first().map_or(0, FeatureVector::dim);
    let mut header = vec!["frame_index".to_string(), "timestamp_s".to_string()];
    header.extend((0..dim).map(|d| format!("v{d}")));
    w.write_record(&header).map_err(csv_err)?;
    for f in features {
        let mut row = vec![f.frame_index.to_string(), f.timestamp.to_string()];
        row.extend(f.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    Error::Parse {
        offset,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_quantized() {
        let samples: Vec<f64> = (0..1600).map(|i| 0.5 * (i as f64 * 0.01).sin()).collect();
        let audio = AudioBuffer::new(samples.clone(), SAMPLE_RATE).unwrap();
        let bytes = wav_bytes(&audio).unwrap();
        let back = read_wav_from(std::io::Cursor::new(bytes)).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in back.samples().iter().zip(&samples) {
            assert!((a - b).abs() < 1.0 / 16_000.0);
        }
    }

    #[test]
    fn rejects_other_rates() {
        let audio = AudioBuffer::new(vec![0.0; 100], 8000).unwrap();
        let bytes = wav_bytes(&audio).unwrap();
        assert!(read_wav_from(std::io::Cursor::new(bytes)).is_err());
    }

    #[test]
    fn feature_csv_header() {
        let f = FeatureVector {
            values: vec![1.0, 2.5],
            frame_index: 3,
            timestamp: 0.03,
        };
        let mut out = Vec::new();
        write_features_csv(&mut out, &[f]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "frame_index,timestamp_s,v0,v1\n3,0.03,1,2.5\n");
    }
}
