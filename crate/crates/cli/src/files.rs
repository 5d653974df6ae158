//! Versioned JSON file formats: model, ergodic solution and strategy profile.

use rsgame_core::model::{validate, ValidationReport};
use rsgame_core::{GameModel, LyapunovCertificate, MixedAction, Strategy, StrategyProfile};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    Schema { path: PathBuf, found: u32 },
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
}

/// Model file. Tensors are nested row-major arrays: `rate[i][j][u1][u2]` and
/// `cost[i][u1][u2]`; state and action indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub rate: Vec<Vec<Vec<Vec<f64>>>>,
    pub cost: Vec<Vec<Vec<f64>>>,
    pub alpha: f64,
    pub theta_cap: f64,
    #[serde(default)]
    pub ref_state: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovCertificate>,
}

impl ModelFile {
    pub fn from_model(model: &GameModel, cert: Option<&LyapunovCertificate>) -> Self {
        let (n, m1, m2) = (model.states(), model.actions1(), model.actions2());
        let rate = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..m1)
                            .map(|a| (0..m2).map(|b| model.rate(i, j, a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let cost = (0..n)
            .map(|i| {
                (0..m1)
                    .map(|a| (0..m2).map(|b| model.cost(i, a, b)).collect())
                    .collect()
            })
            .collect();
        Self {
            schema: SCHEMA_VERSION,
            name: None,
            rate,
            cost,
            alpha: model.alpha,
            theta_cap: model.theta_cap,
            ref_state: model.ref_state,
            lyapunov: cert.cloned(),
        }
    }
}

/// A model file after loading and validation.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: GameModel,
    pub certificate: Option<LyapunovCertificate>,
    pub validation: ValidationReport,
    /// SHA-256 of the file bytes, hex encoded.
    pub sha256: String,
}

/// Stationary solution of the long-run game as written by `solve-ergodic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub schema: u32,
    pub rho: f64,
    pub psi_hat: Vec<f64>,
    pub v1_star: Vec<MixedAction>,
    pub v2_star: Vec<MixedAction>,
    /// Cost truncation level the solution was computed at (all states when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_level: Option<usize>,
}

/// Strategy pair for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub schema: u32,
    pub player1: Strategy,
    pub player2: Strategy,
}

impl ProfileFile {
    pub fn profile(&self) -> StrategyProfile {
        StrategyProfile {
            player1: self.player1.clone(),
            player2: self.player2.clone(),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, FileError> {
    std::fs::read(path).map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T, FileError> {
    serde_json::from_slice(bytes).map_err(|source| FileError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn check_schema(path: &Path, found: u32) -> Result<(), FileError> {
    if found == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(FileError::Schema {
            path: path.to_path_buf(),
            found,
        })
    }
}

fn invalid(path: &Path, detail: impl ToString) -> FileError {
    FileError::Invalid {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel, FileError> {
    let bytes = read(path)?;
    let file: ModelFile = parse(path, &bytes)?;
    check_schema(path, file.schema)?;
    let mut model = GameModel::from_nested(&file.rate, &file.cost, file.alpha, file.theta_cap, file.ref_state)
        .map_err(|e| invalid(path, e))?;
    let validation = validate(&mut model).map_err(|e| invalid(path, e))?;
    if let Some(cert) = &file.lyapunov {
        if cert.w.len() != model.states() {
            return Err(invalid(
                path,
                format!(
                    "certificate W has {} entries for {} states",
                    cert.w.len(),
                    model.states()
                ),
            ));
        }
    }
    Ok(LoadedModel {
        model,
        certificate: file.lyapunov,
        validation,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn load_solution(path: &Path, model: &GameModel) -> Result<SolutionFile, FileError> {
    let file: SolutionFile = parse(path, &read(path)?)?;
    check_schema(path, file.schema)?;
    if file.psi_hat.len() != model.states() {
        return Err(invalid(path, "psi_hat does not match the number of states"));
    }
    StrategyProfile::stationary(file.v1_star.clone(), file.v2_star.clone())
        .check(model)
        .map_err(|e| invalid(path, e))?;
    if let Some(level) = file.truncation_level {
        if level == 0 || level > model.states() {
            return Err(invalid(path, format!("truncation level {level} out of range")));
        }
    }
    Ok(file)
}

pub fn load_profile(path: &Path, model: &GameModel) -> Result<ProfileFile, FileError> {
    let file: ProfileFile = parse(path, &read(path)?)?;
    check_schema(path, file.schema)?;
    file.profile().check(model).map_err(|e| invalid(path, e))?;
    Ok(file)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|source| FileError::Io {
        path: path.to_path_buf(),
        source,
    })
}
