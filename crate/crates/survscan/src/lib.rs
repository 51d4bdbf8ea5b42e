//! File formats, versioned result documents and the `survscan` command-line
//! tool built on [`survscan_core`].

pub mod cli;
pub mod io;
pub mod report;
