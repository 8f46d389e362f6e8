//! Serial wire format for raw load-cell counts.
//!
//! Frame layout (20 bytes): `AA 55`, sequence (u8, wrapping), eight u16
//! little-endian counts, then the XOR of the 19 preceding bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanics::CELLS;
use crate::synth::SAMPLE_PERIOD;
use crate::Frame64;

pub const SYNC: [u8; 2] = [0xAA, 0x55];
pub const FRAME_LEN: usize = 20;
/// Rated span of the load cells (25 lbf).
pub const CELL_SPAN_N: f64 = 111.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RawFrame {
    pub sequence: u8,
    pub counts: [u16; CELLS],
}

pub fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |a, b| a ^ b)
}

pub fn encode_frame(raw: &RawFrame) -> [u8; FRAME_LEN] {
    let mut out = [0u8; FRAME_LEN];
    out[..2].copy_from_slice(&SYNC);
    out[2] = raw.sequence;
    for (i, c) in raw.counts.iter().enumerate() {
        out[3 + 2 * i..5 + 2 * i].copy_from_slice(&c.to_le_bytes());
    }
    out[FRAME_LEN - 1] = checksum(&out[..FRAME_LEN - 1]);
    out
}

pub fn encode_stream(frames: &[RawFrame]) -> Vec<u8> {
    frames.iter().flat_map(encode_frame).collect()
}

fn parse(bytes: &[u8]) -> RawFrame {
    RawFrame {
        sequence: bytes[2],
        counts: std::array::from_fn(|i| u16::from_le_bytes([bytes[3 + 2 * i], bytes[4 + 2 * i]])),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeDiagnostics {
    pub frames: u64,
    pub checksum_failures: u64,
    /// Bytes discarded outside accepted frames.
    pub skipped_bytes: u64,
    /// Accepted frames whose sequence did not follow the previous one.
    pub sequence_gaps: u64,
    /// Frames implied missing by the sequence gaps.
    pub dropped_frames: u64,
}

/// Incremental decoder: feed bytes, drain frames. Never fails; problems are
/// counted in the diagnostics.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    pos: usize,
    last_seq: Option<u8>,
    frames: Vec<RawFrame>,
    diag: DecodeDiagnostics,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn feed(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
        self.scan(false);
    }

    /// Flushes a trailing frame that could not be confirmed by a following
    /// sync and counts leftover bytes as skipped.
    pub fn finish(&mut self) {
        self.scan(true);
        self.diag.skipped_bytes += (self.buf.len() - self.pos) as u64;
        self.buf.clear();
        self.pos = 0;
    }

    pub fn drain(&mut self) -> Vec<RawFrame> {
        std::mem::take(&mut self.frames)
    }

    pub fn diagnostics(&self) -> DecodeDiagnostics {
        self.diag
    }

    fn scan(&mut self, at_end: bool) {
        loop {
            let rest = &self.buf[self.pos..];
            if rest.len() < 2 {
                break;
            }
            if rest[..2] != SYNC {
                self.skip();
                continue;
            }
            if rest.len() < FRAME_LEN {
                break;
            }
            if checksum(&rest[..FRAME_LEN - 1]) != rest[FRAME_LEN - 1] {
                self.diag.checksum_failures += 1;
                self.skip();
                continue;
            }
            let frame = parse(rest);
            let continues = self.last_seq.is_none_or(|s| s.wrapping_add(1) == frame.sequence);
            let confirmed = match rest.get(FRAME_LEN..FRAME_LEN + 2) {
                Some(next) => next == SYNC || continues,
                None if continues || at_end => true,
                None => break,
            };
            if !confirmed {
                self.skip();
                continue;
            }
            if let Some(s) = self.last_seq {
                let gap = frame.sequence.wrapping_sub(s.wrapping_add(1));
                if gap != 0 {
                    self.diag.sequence_gaps += 1;
                    self.diag.dropped_frames += gap as u64;
                }
            }
            self.last_seq = Some(frame.sequence);
            self.frames.push(frame);
            self.diag.frames += 1;
            self.pos += FRAME_LEN;
        }
        if self.pos > 4096 {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
    }

    fn skip(&mut self) {
        self.pos += 1;
        self.diag.skipped_bytes += 1;
    }
}

pub fn decode_stream(bytes: &[u8]) -> (Vec<RawFrame>, DecodeDiagnostics) {
    let mut d = StreamDecoder::new();
    d.feed(bytes);
    d.finish();
    (d.drain(), d.diagnostics())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("channel {channel}: gain must be positive")]
    Gain { channel: usize },
    #[error("channel {channel}: saturation count must exceed the offset")]
    Saturation { channel: usize },
    #[error("channel {channel}: full scale {full_scale} N exceeds the {CELL_SPAN_N} N cell span")]
    Span { channel: usize, full_scale: f64 },
}

/// Count-to-newton conversion of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelCalibration {
    /// N per count.
    pub gain: f64,
    pub offset: u16,
    pub saturation: u16,
}

impl Default for ChannelCalibration {
    fn default() -> Self {
        Self { gain: 0.002, offset: 1000, saturation: 56_000 }
    }
}

impl ChannelCalibration {
    pub fn validate(&self, channel: usize) -> Result<(), CalibrationError> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(CalibrationError::Gain { channel });
        }
        if self.saturation <= self.offset {
            return Err(CalibrationError::Saturation { channel });
        }
        let full_scale = self.gain * f64::from(self.saturation - self.offset);
        if full_scale > CELL_SPAN_N {
            return Err(CalibrationError::Span { channel, full_scale });
        }
        Ok(())
    }

    pub fn force(&self, count: u16) -> f64 {
        (self.gain * (f64::from(count) - f64::from(self.offset))).max(0.0)
    }

    /// Nearest count for a force, clamped to the u16 range.
    pub fn count(&self, force: f64) -> u16 {
        (f64::from(self.offset) + force / self.gain).round().clamp(0.0, f64::from(u16::MAX)) as u16
    }
}

pub fn validate_calibration(cal: &[ChannelCalibration; CELLS]) -> Result<(), CalibrationError> {
    cal.iter().enumerate().try_for_each(|(i, c)| c.validate(i))
}

/// Unwraps 8-bit sequence numbers into sample timestamps.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequenceClock {
    last: Option<u8>,
    ticks: u64,
}

impl SequenceClock {
    pub fn time(&mut self, seq: u8) -> f64 {
        match self.last {
            None => self.ticks = u64::from(seq),
            Some(s) => self.ticks += u64::from(seq.wrapping_sub(s)),
        }
        self.last = Some(seq);
        self.ticks as f64 * SAMPLE_PERIOD
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvertedFrame {
    pub frame: Frame64,
    pub saturated: [bool; CELLS],
    /// Count below the offset, clamped to 0 N.
    pub underflow: [bool; CELLS],
}

pub fn counts_to_frame(raw: &RawFrame, cal: &[ChannelCalibration; CELLS], clock: &mut SequenceClock) -> ConvertedFrame {
    let t = clock.time(raw.sequence);
    ConvertedFrame {
        frame: Frame64::new(t, std::array::from_fn(|i| cal[i].force(raw.counts[i]))),
        saturated: std::array::from_fn(|i| raw.counts[i] >= cal[i].saturation),
        underflow: std::array::from_fn(|i| raw.counts[i] < cal[i].offset),
    }
}

pub fn frame_to_counts(frame: &Frame64, sequence: u8, cal: &[ChannelCalibration; CELLS]) -> RawFrame {
    RawFrame {
        sequence,
        counts: std::array::from_fn(|i| cal[i].count(frame.forces[i])),
    }
}
