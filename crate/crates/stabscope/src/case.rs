//! Case files: JSON network descriptions.

use std::path::Path;

use stabscope_core::network::PowerNetwork;

use crate::error::{Error, Result};
use crate::io;

/// Reads and validates a case file. Parse errors carry line and column;
/// validation errors name the violated invariant.
pub fn load_case(path: &Path) -> Result<PowerNetwork> {
    parse_case(&io::read(path)?, path)
}

pub fn parse_case(bytes: &[u8], path: &Path) -> Result<PowerNetwork> {
    let net: PowerNetwork = serde_json::from_slice(bytes).map_err(|e| Error::json(path, e))?;
    net.validate().map_err(|source| Error::Invalid { path: path.into(), source })?;
    Ok(net)
}
