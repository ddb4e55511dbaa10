// SPDX-License-Identifier: Apache-2.0

pub mod coding;
pub mod fault;
pub mod fsm;
pub mod gf;
pub mod harden;
pub mod netlist;
pub mod par;
