//! RIFF/WAVE input and output: 16-bit PCM or 32-bit IEEE float, mono or stereo.

use std::io::{Cursor, Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::{Error, Result};

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Float32,
    Pcm16,
}

fn wav_err(e: hound::Error) -> Error {
    Error::format("WAV", e.to_string())
}

fn decode<R: Read + Seek>(source: R, byte_budget: usize) -> Result<Waveform> {
    let mut reader = WavReader::new(source).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::InvalidAudio(format!(
            "{channels} channels; only mono and stereo are supported"
        )));
    }
    if spec.sample_rate == 0 {
        return Err(Error::InvalidAudio("sample rate 0".into()));
    }
    // the header's sample count is untrusted; never reserve more than the input can hold
    let declared = reader.len() as usize;
    let bytes_per_sample = (spec.bits_per_sample as usize).div_ceil(8).max(1);
    let capacity = declared.min(byte_budget / bytes_per_sample);
    let mut interleaved = Vec::with_capacity(capacity);
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => {
            for s in reader.samples::<i16>() {
                interleaved.push(s.map_err(wav_err)? as f64 / 32768.0);
            }
        }
        (SampleFormat::Float, 32) => {
            for s in reader.samples::<f32>() {
                interleaved.push(s.map_err(wav_err)? as f64);
            }
        }
        (fmt, bits) => {
            return Err(Error::InvalidAudio(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    }
    if interleaved.len() % channels != 0 {
        return Err(Error::format(
            "WAV",
            "sample count is not a multiple of the channel count",
        ));
    }
    let frames = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, &v) in frame.iter().enumerate() {
            out[c].push(v);
        }
    }
    Waveform::new(out, spec.sample_rate)
}

/// Decodes a complete WAV file held in memory.
pub fn read_wav_bytes(bytes: &[u8]) -> Result<Waveform> {
    decode(Cursor::new(bytes), bytes.len())
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(Error::at_path(path))?;
    read_wav_bytes(&bytes)
}

/// Encodes `w` as a WAV file image.
pub fn encode_wav(w: &Waveform, encoding: WavEncoding) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: w.num_channels() as u16,
        sample_rate: w.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Float32 => 32,
            WavEncoding::Pcm16 => 16,
        },
        sample_format: match encoding {
            WavEncoding::Float32 => SampleFormat::Float,
            WavEncoding::Pcm16 => SampleFormat::Int,
        },
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut cursor, spec).map_err(wav_err)?;
        for i in 0..w.len() {
            for c in w.channels() {
                match encoding {
                    WavEncoding::Float32 => writer.write_sample(c[i] as f32),
                    WavEncoding::Pcm16 => writer.write_sample((c[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
                }
                .map_err(wav_err)?;
            }
        }
        writer.finalize().map_err(wav_err)?;
    }
    Ok(cursor.into_inner())
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(w, encoding)?;
    std::fs::write(path, bytes).map_err(Error::at_path(path))
}

/// Rounds every sample to the nearest `f32`, the precision of a float WAV file.
pub fn quantize_f32(w: &Waveform) -> Waveform {
    let channels = w
        .channels()
        .iter()
        .map(|c| c.iter().map(|&v| v as f32 as f64).collect())
        .collect();
    Waveform::new(channels, w.sample_rate()).expect("quantization keeps shape and finiteness")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_roundtrip_is_exact_at_f32_precision() {
        let w = Waveform::stereo(vec![0.25, -0.5, 0.125], vec![1.0 / 3.0, 0.0, -1.0], 16000).unwrap();
        let back = read_wav_bytes(&encode_wav(&w, WavEncoding::Float32).unwrap()).unwrap();
        assert_eq!(back, quantize_f32(&w));
    }

    #[test]
    fn pcm16_roundtrip_within_one_lsb() {
        let w = Waveform::mono(vec![0.3, -0.7, 0.0, 0.99], 22050).unwrap();
        let back = read_wav_bytes(&encode_wav(&w, WavEncoding::Pcm16).unwrap()).unwrap();
        assert_eq!(back.sample_rate(), 22050);
        for (a, b) in w.channel(0).iter().zip(back.channel(0)) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(read_wav_bytes(b"").is_err());
        assert!(read_wav_bytes(b"RIFF\x10\0\0\0WAVEjunk").is_err());
        let mut good = encode_wav(&Waveform::silence(100, 16000), WavEncoding::Pcm16).unwrap();
        good.truncate(good.len() - 3);
        assert!(read_wav_bytes(&good).is_err());
    }
}
