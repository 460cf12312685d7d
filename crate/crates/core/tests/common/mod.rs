//! Fixtures shared by integration test targets.

#![allow(dead_code)]

pub mod buckets;
