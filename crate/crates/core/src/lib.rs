// SPDX-License-Identifier: Apache-2.0

//! A replicated key-value store that bounds the response latency of every
//! operation by choosing, per request, how far its replication proceeds.

pub mod costmodel;
pub mod model;
pub mod planner;
pub mod replication;
pub mod simnet;
pub mod storage;
