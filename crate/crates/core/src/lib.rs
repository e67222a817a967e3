// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoscalers;
pub mod forecasting;
pub mod harness;
pub mod models;
pub mod profiler;
pub mod simulator;
pub mod timeseries;
pub mod workloads;
