//! Batch command-line surface (placeholder during bring-up).
