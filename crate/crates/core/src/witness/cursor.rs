//! Window arithmetic for relaying events that lag the head by ω blocks.
//!
//! Windows are `max(ω, 1)` blocks wide and contiguous. A window ending at
//! height `e` is relayable once its anchor `h_l = e + ω` has been reached,
//! which is the same as requiring the whole window to be at least ω blocks
//! deep. With the first window anchored at `start + 2ω - 1` this yields
//! `[h_l-2ω+1, h_l-ω]` for the first window and `[h_l-ω+1, h_l]` for the
//! next, which opens once the head `h_l2` reaches `h_l + ω`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayCursor {
    pub omega: u64,
    /// First height of the current window.
    pub next: u64,
    /// Resends of the current window.
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("window {window:?} not ready: head {head} below {needed}")]
pub struct WindowNotReady {
    pub window: (u64, u64),
    pub head: u64,
    pub needed: u64,
}

impl RelayCursor {
    /// Cursor whose first window starts at `start`.
    pub fn new(omega: u64, start: u64) -> Self {
        RelayCursor { omega, next: start, attempt: 0 }
    }

    /// Cursor for a witness whose latest observed height is `h_l`. Fails
    /// while `h_l - 2ω + 1` would be negative.
    pub fn from_latest(omega: u64, h_l: u64) -> Option<Self> {
        let start = (h_l + 1).checked_sub(2 * omega)?;
        Some(RelayCursor::new(omega, start))
    }

    pub fn width(&self) -> u64 {
        self.omega.max(1)
    }

    /// Current window, inclusive.
    pub fn window(&self) -> (u64, u64) {
        (self.next, self.next + self.width() - 1)
    }

    /// Height the head must reach before the current window is relayed.
    pub fn anchor(&self) -> u64 {
        self.window().1 + self.omega
    }

    /// Check the window against the latest height `head`.
    pub fn ready(&self, head: u64) -> Result<(u64, u64), WindowNotReady> {
        let needed = self.anchor();
        if head >= needed {
            Ok(self.window())
        } else {
            Err(WindowNotReady { window: self.window(), head, needed })
        }
    }

    /// Whether `h_l2` satisfies the resend gate `h_l2 >= h_l + ω` for the
    /// current window's anchor `h_l`.
    pub fn resend_gate(&self, h_l2: u64) -> bool {
        h_l2 >= self.anchor() + self.omega
    }

    /// Move to the following window.
    pub fn advance(&mut self) {
        self.next += self.width();
        self.attempt = 0;
    }
}
