//! Core of the memop memory-operation language.
//!
//! Pipeline: [`schema::decode_instance`] → [`validate::validate`] →
//! [`typed::parse`] → [`adapter::dispatch`] against a [`adapter::Backend`]
//! such as the SQLite-backed [`store::MemoryStore`].

pub mod adapter;
pub mod golden;
pub mod schema;
pub mod services;
pub mod store;
pub mod text;
pub mod typed;
pub mod validate;
