//! Command-line harness (wired up below).
