//! Contributor identities and organizational units.
//!
//! Contributors are keyed by normalized email address. Organizations are
//! inferred from the email domain: corporate domains and virtual
//! organizations group everyone under the registrable domain, while
//! contributors on email-provider domains are each their own unit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Unit key used for all provider-domain contributors when
/// [`IdentityConfig::group_providers`] is set.
pub const GROUPED_INDIVIDUALS: &str = "(individuals)";

const DEFAULT_PROVIDERS: &[&str] = &[
    "gmail.com",
    "hotmail.com",
    "yahoo.com",
    "outlook.com",
    "qq.com",
    "163.com",
];

const DEFAULT_VIRTUAL_ORGS: &[&str] = &["apache.org", "gnome.org"];

const DEFAULT_PUBLIC_SUFFIXES: &[&str] = &[
    "co.uk", "org.uk", "ac.uk", "gov.uk", "me.uk", "com.au", "net.au", "org.au", "edu.au", "gov.au", "co.jp",
    "ac.jp", "ne.jp", "or.jp", "co.kr", "ac.kr", "com.cn", "net.cn", "org.cn", "edu.cn", "com.br", "com.tw",
    "edu.tw", "co.in", "ac.in", "co.nz", "ac.nz", "co.za", "ac.za", "co.il", "ac.il", "com.mx", "com.sg",
    "com.hk",
];

/// Top-level labels that never denote a registrable organization.
const NON_PUBLIC_TLDS: &[&str] = &[
    "localhost",
    "localdomain",
    "local",
    "lan",
    "home",
    "internal",
    "invalid",
    "none",
    "test",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("invalid identity {0:?}: expected exactly one '@' and a non-empty domain")]
    InvalidIdentity(String),
    #[error("domains listed as both provider and virtual organization: {0:?}")]
    OverlappingDomains(Vec<String>),
    #[error("identity config: {0}")]
    Config(String),
}

/// Normalized email address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContributorKey(String);

impl ContributorKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn domain(&self) -> &str {
        // Construction guarantees exactly one '@'.
        self.0.rsplit('@').next().unwrap_or("")
    }
}

impl fmt::Display for ContributorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases and trims an email address.
pub fn normalize_email(raw: &str) -> Result<ContributorKey, IdentityError> {
    let norm = raw.trim().to_lowercase();
    let mut parts = norm.split('@');
    let (_local, domain) = match (parts.next(), parts.next(), parts.next()) {
        (Some(l), Some(d), None) => (l, d),
        _ => return Err(IdentityError::InvalidIdentity(raw.to_string())),
    };
    if domain.is_empty() {
        return Err(IdentityError::InvalidIdentity(raw.to_string()));
    }
    Ok(ContributorKey(norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DomainClass {
    Corporate,
    VirtualOrg,
    Provider,
    Unknown,
}

/// A contributing unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrgUnit {
    pub key: String,
    pub class: DomainClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentityConfig {
    pub provider_domains: BTreeSet<String>,
    pub virtual_org_domains: BTreeSet<String>,
    pub domain_aliases: BTreeMap<String, String>,
    /// Two-label suffixes under which registrations happen one label deeper.
    pub public_suffixes: BTreeSet<String>,
    /// Collapse every provider-domain contributor into one unit.
    pub group_providers: bool,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        IdentityConfig {
            provider_domains: set(DEFAULT_PROVIDERS),
            virtual_org_domains: set(DEFAULT_VIRTUAL_ORGS),
            domain_aliases: BTreeMap::new(),
            public_suffixes: set(DEFAULT_PUBLIC_SUFFIXES),
            group_providers: false,
        }
    }
}

impl IdentityConfig {
    /// Lowercases every entry and checks that providers and virtual orgs
    /// are disjoint.
    pub fn validated(mut self) -> Result<Self, IdentityError> {
        let lower = |s: BTreeSet<String>| -> BTreeSet<String> {
            s.into_iter().map(|d| d.trim().to_lowercase()).collect()
        };
        self.provider_domains = lower(self.provider_domains);
        self.virtual_org_domains = lower(self.virtual_org_domains);
        self.public_suffixes = lower(self.public_suffixes);
        self.domain_aliases = self
            .domain_aliases
            .into_iter()
            .map(|(k, v)| (k.trim().to_lowercase(), v.trim().to_lowercase()))
            .collect();
        let overlap: Vec<String> = self
            .provider_domains
            .intersection(&self.virtual_org_domains)
            .cloned()
            .collect();
        if !overlap.is_empty() {
            return Err(IdentityError::OverlappingDomains(overlap));
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, IdentityError> {
        let cfg: IdentityConfig =
            serde_json::from_str(text).map_err(|e| IdentityError::Config(e.to_string()))?;
        cfg.validated()
    }

    pub fn load(path: &Path) -> Result<Self, IdentityError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IdentityError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The registrable form of `domain`: its last two labels, or three when
    /// the last two form a configured public suffix. `None` for bare
    /// hostnames, IP addresses and reserved top-level names.
    pub fn registrable_domain(&self, domain: &str) -> Option<String> {
        let labels: Vec<&str> = domain.trim_end_matches('.').split('.').collect();
        if labels.len() < 2 || labels.iter().any(|l| l.is_empty()) {
            return None;
        }
        let tld = labels[labels.len() - 1];
        if !tld.chars().all(|c| c.is_ascii_alphabetic() || c == '-') || NON_PUBLIC_TLDS.contains(&tld) {
            return None;
        }
        let last_two = labels[labels.len() - 2..].join(".");
        if self.public_suffixes.contains(&last_two) {
            if labels.len() < 3 {
                return None;
            }
            return Some(labels[labels.len() - 3..].join("."));
        }
        Some(last_two)
    }

    fn alias<'a>(&'a self, domain: &'a str) -> &'a str {
        self.domain_aliases
            .get(domain)
            .map(String::as_str)
            .unwrap_or(domain)
    }
}

/// Classifies a domain. Total over all inputs.
pub fn classify_domain(domain: &str, config: &IdentityConfig) -> DomainClass {
    let domain = domain.trim().to_lowercase();
    let registrable = config.registrable_domain(&domain);
    let listed = |set: &BTreeSet<String>| {
        set.contains(&domain) || registrable.as_ref().is_some_and(|r| set.contains(r))
    };
    if listed(&config.provider_domains) {
        DomainClass::Provider
    } else if listed(&config.virtual_org_domains) {
        DomainClass::VirtualOrg
    } else if registrable.is_some() {
        DomainClass::Corporate
    } else {
        DomainClass::Unknown
    }
}

/// Maps a contributor to its organizational unit.
///
/// Aliases are applied to the full domain and then to its registrable form.
pub fn resolve_org(key: &ContributorKey, config: &IdentityConfig) -> OrgUnit {
    let domain = config.alias(key.domain());
    let domain = match config.registrable_domain(domain) {
        Some(r) => config.alias(&r).to_string(),
        None => domain.to_string(),
    };
    match classify_domain(&domain, config) {
        DomainClass::Provider if config.group_providers => OrgUnit {
            key: GROUPED_INDIVIDUALS.to_string(),
            class: DomainClass::Provider,
        },
        DomainClass::Provider => OrgUnit {
            key: key.as_str().to_string(),
            class: DomainClass::Provider,
        },
        class @ (DomainClass::Corporate | DomainClass::VirtualOrg) => OrgUnit {
            key: config.registrable_domain(&domain).unwrap_or(domain),
            class,
        },
        DomainClass::Unknown => OrgUnit {
            key: domain,
            class: DomainClass::Unknown,
        },
    }
}
