//! Near-RT control plane: A1 policy enforcement and the sensing xApp.

pub mod policy;
pub mod xapp;

pub use policy::{
    enforce_policy, A1IsacPolicy, BudgetWindow, PolicyError, PolicyRequest, RejectReason, Sector,
    Verdict,
};
pub use xapp::{
    write_cdf_csv, write_samples_csv, ControlOutcome, LatencySample, ReceivedReport, SampleLog,
    SubscriptionHandle, TraceEntry, XApp, XappError, XappStats,
};
