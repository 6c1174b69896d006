//! Expert accounts and bearer sessions.
//!
//! Accounts come from a TOML file:
//!
//! ```toml
//! [[account]]
//! id = "conservator"
//! role = "expert"
//! password-sha256 = "5e884898da28047151d0e56f8dc6292773603d0d6aabbdd62a11ef721d1542d8"
//! ```

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sia_core::Role;

pub const SESSION_TTL_HOURS: i64 = 12;

#[derive(Debug, thiserror::Error)]
pub enum AuthError {
    #[error("missing bearer token")]
    MissingToken,
    #[error("unknown or expired token")]
    InvalidToken,
    #[error("wrong account or password")]
    BadCredentials,
    #[error("expert role required")]
    Forbidden,
    #[error("cannot load accounts from {path}: {reason}")]
    Config { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Account {
    pub id: String,
    pub role: Role,
    pub password_sha256: String,
}

#[derive(Debug, Default, Deserialize)]
struct AccountFile {
    #[serde(default)]
    account: Vec<Account>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub token: String,
    pub subject: String,
    pub role: Role,
    pub expires_at: DateTime<Utc>,
}

pub fn hash_password(password: &str) -> String {
    hex::encode(Sha256::digest(password.as_bytes()))
}

fn same_bytes(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug)]
pub struct Auth {
    accounts: HashMap<String, Account>,
    sessions: Mutex<HashMap<String, Session>>,
    ttl: Duration,
}

impl Auth {
    pub fn new(accounts: Vec<Account>) -> Self {
        Auth {
            accounts: accounts.into_iter().map(|a| (a.id.clone(), a)).collect(),
            sessions: Mutex::new(HashMap::new()),
            ttl: Duration::hours(SESSION_TTL_HOURS),
        }
    }

    pub fn with_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let file: AccountFile = toml::from_str(text)?;
        Ok(Auth::new(file.account))
    }

    pub fn load(path: &Path) -> Result<Self, AuthError> {
        let config = |reason: String| AuthError::Config {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| config(e.to_string()))?;
        Auth::from_toml(&text).map_err(|e| config(e.to_string()))
    }

    pub fn login(&self, account: &str, password: &str) -> Result<Session, AuthError> {
        let acc = self.accounts.get(account).ok_or(AuthError::BadCredentials)?;
        let given = hash_password(password);
        if !same_bytes(given.as_bytes(), acc.password_sha256.to_ascii_lowercase().as_bytes()) {
            return Err(AuthError::BadCredentials);
        }
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let session = Session {
            token: hex::encode(raw),
            subject: acc.id.clone(),
            role: acc.role,
            expires_at: Utc::now() + self.ttl,
        };
        let mut sessions = self.sessions.lock().unwrap();
        let now = Utc::now();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    pub fn logout(&self, token: &str) {
        self.sessions.lock().unwrap().remove(token);
    }

    /// The live session for `token`.
    pub fn session(&self, token: &str) -> Result<Session, AuthError> {
        let mut sessions = self.sessions.lock().unwrap();
        match sessions.get(token) {
            Some(s) if s.expires_at > Utc::now() => Ok(s.clone()),
            Some(_) => {
                sessions.remove(token);
                Err(AuthError::InvalidToken)
            }
            None => Err(AuthError::InvalidToken),
        }
    }

    /// Resolves an `Authorization` header value to an expert session.
    pub fn require_expert(&self, header: Option<&str>) -> Result<Session, AuthError> {
        let token = header
            .and_then(|h| h.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or(AuthError::MissingToken)?;
        let s = self.session(token)?;
        match s.role {
            Role::Expert => Ok(s),
            Role::Visitor => Err(AuthError::Forbidden),
        }
    }
}
