//! Closed-form receiver-side drop analysis, independent of the simulator.
//!
//! A receiver takes in messages at a constant `incoming_rate`, works them
//! off at a constant `processing_rate`, and buffers at most `queue_size`
//! messages. The four operations answer, in closed form: how long a burst
//! takes to arrive, whether it overflows, the smallest buffer that absorbs
//! it, and the slowest arrival pace that makes a given buffer suffice.
//!
//! The processed-count term `receive_time * processing_rate` is rounded up
//! throughout: a partially processed message still occupies the head slot.
//! Products within 1e-9 of an integer are treated as that integer so that
//! float noise cannot manufacture an extra service slot.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueAnalysisCase {
    /// Messages sent toward the receiver.
    pub sent_messages: u64,
    /// Arrival rate, messages per second. Must be positive.
    pub incoming_rate: f64,
    /// Service rate, messages per second.
    pub processing_rate: f64,
    /// Buffer capacity in messages.
    pub queue_size: u64,
}

impl QueueAnalysisCase {
    pub fn new(
        sent_messages: u64,
        incoming_rate: f64,
        processing_rate: f64,
        queue_size: u64,
    ) -> Result<Self, AnalysisError> {
        if incoming_rate <= 0.0 {
            return Err(AnalysisError::ZeroIncomingRate);
        }
        Ok(QueueAnalysisCase {
            sent_messages,
            incoming_rate,
            processing_rate,
            queue_size,
        })
    }

    pub fn receive_time(&self) -> f64 {
        self.sent_messages as f64 / self.incoming_rate
    }

    pub fn will_drop(&self) -> bool {
        will_drop(
            self.sent_messages,
            self.receive_time(),
            self.processing_rate,
            self.queue_size,
        )
    }

    pub fn min_queue_size(&self) -> u64 {
        min_queue_size(self.sent_messages, self.receive_time(), self.processing_rate)
    }

    pub fn safe_receive_time(&self) -> SafeReceiveTime {
        safe_receive_time(self.sent_messages, self.queue_size, self.processing_rate)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("incoming rate must be positive")]
    ZeroIncomingRate,
}

/// Outcome of [`safe_receive_time`]: either a finite bound or
/// "no receive time is slow enough".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafeReceiveTime {
    Seconds(f64),
    Unsatisfiable,
}

/// Time for `sent` messages to arrive at `incoming_rate`.
pub fn receive_time(sent: u64, incoming_rate: f64) -> Result<f64, AnalysisError> {
    if incoming_rate <= 0.0 {
        return Err(AnalysisError::ZeroIncomingRate);
    }
    Ok(sent as f64 / incoming_rate)
}

/// Service slots available during a receive window: ceil(rt * pr), with a
/// small downward nudge so `25.000000000000004` counts as 25 slots.
fn processed_during(rt: f64, pr: f64) -> u64 {
    let product = rt * pr;
    if product <= 0.0 {
        return 0;
    }
    (product - 1e-9).ceil().max(0.0) as u64
}

/// Whether a burst of `received` messages arriving over `rt` seconds
/// overflows a `qsize` buffer drained at `pr` messages per second.
pub fn will_drop(received: u64, rt: f64, pr: f64, qsize: u64) -> bool {
    received > processed_during(rt, pr) + qsize
}

/// Smallest buffer that absorbs the burst without drops.
pub fn min_queue_size(received: u64, rt: f64, pr: f64) -> u64 {
    received.saturating_sub(processed_during(rt, pr))
}

/// Slowest receive time that makes `qsize` suffice, or `Unsatisfiable`
/// when nothing can be processed and the buffer is already too small.
pub fn safe_receive_time(received: u64, qsize: u64, pr: f64) -> SafeReceiveTime {
    if received <= qsize {
        return SafeReceiveTime::Seconds(0.0);
    }
    if pr <= 0.0 {
        return SafeReceiveTime::Unsatisfiable;
    }
    SafeReceiveTime::Seconds((received - qsize) as f64 / pr)
}
