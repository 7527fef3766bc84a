//! Plain-text prompt assets: one role per file, `<dir>/<kind>_<index>.txt`.

use std::fs;
use std::path::Path;

use super::{RoleKind, RoleText};
use crate::error::{Error, Result};

/// Versioned instruction used for paraphrase expansion.
pub const PARAPHRASE_INSTRUCTION: &str = include_str!("../../assets/prompts/paraphrase_v1.txt");

/// Names of the prompt sets compiled into the crate.
pub const BUILTIN_SETS: [&str; 4] = ["synthetic", "synthetic_icl", "classification", "classification_icl"];

/// Base (system, user) roles of a built-in prompt set.
pub fn builtin_roles(name: &str) -> Result<(RoleText, RoleText)> {
    macro_rules! set {
        ($dir:literal) => {
            (
                include_str!(concat!("../../assets/prompts/", $dir, "/system_0.txt")),
                include_str!(concat!("../../assets/prompts/", $dir, "/user_0.txt")),
            )
        };
    }
    let (system, user) = match name {
        "synthetic" => set!("synthetic"),
        "synthetic_icl" => set!("synthetic_icl"),
        "classification" => set!("classification"),
        "classification_icl" => set!("classification_icl"),
        other => {
            return Err(Error::Configuration(format!(
                "unknown prompt set `{other}`; built-in sets are {}",
                BUILTIN_SETS.join(", ")
            )))
        }
    };
    Ok((RoleText::system(system.trim_end())?, RoleText::user(user.trim_end())?))
}

fn load_kind(dir: &Path, kind: RoleKind) -> Result<Vec<RoleText>> {
    let mut out = Vec::new();
    loop {
        let path = dir.join(format!("{}_{}.txt", kind.as_str(), out.len()));
        if !path.exists() {
            break;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.push(RoleText::new(kind, text.trim_end())?);
    }
    if out.is_empty() {
        return Err(Error::Configuration(format!(
            "no {}_0.txt found in {}",
            kind.as_str(),
            dir.display()
        )));
    }
    Ok(out)
}

/// System and user roles stored under `dir`, in index order.
pub fn load_roles(dir: impl AsRef<Path>) -> Result<(Vec<RoleText>, Vec<RoleText>)> {
    let dir = dir.as_ref();
    Ok((load_kind(dir, RoleKind::System)?, load_kind(dir, RoleKind::User)?))
}

pub fn save_roles(dir: impl AsRef<Path>, roles: &[RoleText]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut counts = [0usize; 2];
    for role in roles {
        let slot = &mut counts[role.kind as usize];
        let path = dir.join(format!("{}_{}.txt", role.kind.as_str(), slot));
        fs::write(&path, &role.template).map_err(|e| Error::io(&path, e))?;
        *slot += 1;
    }
    Ok(())
}
