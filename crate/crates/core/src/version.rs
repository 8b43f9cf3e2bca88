//! Package version parsing, ordering and specifier matching.
//!
//! Follows the package-index version scheme: `[N!]N(.N)*[{a|b|rc}N][.postN][.devN][+local]`,
//! including the usual spelling normalisations (`alpha`, `c`, `-1` implicit post, `v` prefix).
//! Strings that do not fit the scheme are kept as [`AnyVersion::Legacy`] and sort before every
//! well-formed version.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VersionError {
    #[error("invalid version: {0:?}")]
    InvalidVersion(String),
    #[error("invalid specifier: {0:?}")]
    InvalidSpecifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PreKind {
    Alpha,
    Beta,
    Rc,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum LocalSegment {
    // strings sort before numbers
    Text(String),
    Number(u64),
}

#[derive(Debug, Clone)]
pub struct Version {
    epoch: u64,
    release: Vec<u64>,
    pre: Option<(PreKind, u64)>,
    post: Option<u64>,
    dev: Option<u64>,
    local: Vec<LocalSegment>,
}

fn version_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?ix)^\s*v?
            (?:(?P<epoch>[0-9]+)!)?
            (?P<release>[0-9]+(?:\.[0-9]+)*)
            (?P<pre>[-_.]?(?P<pre_l>alpha|a|beta|b|preview|pre|c|rc)[-_.]?(?P<pre_n>[0-9]+)?)?
            (?P<post>(?:-(?P<post_n1>[0-9]+))|(?:[-_.]?(?P<post_l>post|rev|r)[-_.]?(?P<post_n2>[0-9]+)?))?
            (?P<dev>[-_.]?(?P<dev_l>dev)[-_.]?(?P<dev_n>[0-9]+)?)?
            (?:\+(?P<local>[a-z0-9]+(?:[-_.][a-z0-9]+)*))?
            \s*$",
        )
        .expect("version regex")
    })
}

fn parse_num(s: &str, whole: &str) -> Result<u64, VersionError> {
    s.parse()
        .map_err(|_| VersionError::InvalidVersion(whole.to_string()))
}

impl Version {
    pub fn parse(input: &str) -> Result<Self, VersionError> {
        let caps = version_regex()
            .captures(input)
            .ok_or_else(|| VersionError::InvalidVersion(input.to_string()))?;
        let epoch = match caps.name("epoch") {
            Some(m) => parse_num(m.as_str(), input)?,
            None => 0,
        };
        let release = caps["release"]
            .split('.')
            .map(|p| parse_num(p, input))
            .collect::<Result<Vec<_>, _>>()?;
        let pre = match caps.name("pre_l") {
            Some(l) => {
                let kind = match l.as_str().to_ascii_lowercase().as_str() {
                    "a" | "alpha" => PreKind::Alpha,
                    "b" | "beta" => PreKind::Beta,
                    _ => PreKind::Rc,
                };
                let n = match caps.name("pre_n") {
                    Some(n) => parse_num(n.as_str(), input)?,
                    None => 0,
                };
                Some((kind, n))
            }
            None => None,
        };
        let post = if let Some(n) = caps.name("post_n1") {
            Some(parse_num(n.as_str(), input)?)
        } else if caps.name("post_l").is_some() {
            Some(match caps.name("post_n2") {
                Some(n) => parse_num(n.as_str(), input)?,
                None => 0,
            })
        } else {
            None
        };
        let dev = if caps.name("dev_l").is_some() {
            Some(match caps.name("dev_n") {
                Some(n) => parse_num(n.as_str(), input)?,
                None => 0,
            })
        } else {
            None
        };
        let local = caps
            .name("local")
            .map(|m| {
                m.as_str()
                    .split(['-', '_', '.'])
                    .map(|seg| match seg.parse::<u64>() {
                        Ok(n) => LocalSegment::Number(n),
                        Err(_) => LocalSegment::Text(seg.to_ascii_lowercase()),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Version {
            epoch,
            release,
            pre,
            post,
            dev,
            local,
        })
    }

    pub fn release(&self) -> &[u64] {
        &self.release
    }

    pub fn is_prerelease(&self) -> bool {
        self.pre.is_some() || self.dev.is_some()
    }

    pub fn is_postrelease(&self) -> bool {
        self.post.is_some()
    }

    pub fn has_local(&self) -> bool {
        !self.local.is_empty()
    }

    /// The same version without its `+local` label.
    pub fn public(&self) -> Version {
        Version {
            local: Vec::new(),
            ..self.clone()
        }
    }

    /// Only epoch and release; pre/post/dev/local dropped.
    pub fn base(&self) -> Version {
        Version {
            epoch: self.epoch,
            release: self.release.clone(),
            pre: None,
            post: None,
            dev: None,
            local: Vec::new(),
        }
    }

    fn trimmed_release(&self) -> &[u64] {
        let mut end = self.release.len();
        while end > 1 && self.release[end - 1] == 0 {
            end -= 1;
        }
        &self.release[..end]
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum PreKey {
    NegInf,
    Pre(PreKind, u64),
    PosInf,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum DevKey {
    Dev(u64),
    PosInf,
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        fn pre_key(v: &Version) -> PreKey {
            match (v.pre, v.post, v.dev) {
                (None, None, Some(_)) => PreKey::NegInf,
                (None, _, _) => PreKey::PosInf,
                (Some((k, n)), _, _) => PreKey::Pre(k, n),
            }
        }
        fn dev_key(v: &Version) -> DevKey {
            v.dev.map(DevKey::Dev).unwrap_or(DevKey::PosInf)
        }
        self.epoch
            .cmp(&other.epoch)
            .then_with(|| self.trimmed_release().cmp(other.trimmed_release()))
            .then_with(|| pre_key(self).cmp(&pre_key(other)))
            .then_with(|| self.post.cmp(&other.post))
            .then_with(|| dev_key(self).cmp(&dev_key(other)))
            .then_with(|| self.local.cmp(&other.local))
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Version {}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.epoch != 0 {
            write!(f, "{}!", self.epoch)?;
        }
        let release: Vec<String> = self.release.iter().map(u64::to_string).collect();
        f.write_str(&release.join("."))?;
        if let Some((kind, n)) = self.pre {
            let tag = match kind {
                PreKind::Alpha => "a",
                PreKind::Beta => "b",
                PreKind::Rc => "rc",
            };
            write!(f, "{tag}{n}")?;
        }
        if let Some(n) = self.post {
            write!(f, ".post{n}")?;
        }
        if let Some(n) = self.dev {
            write!(f, ".dev{n}")?;
        }
        if !self.local.is_empty() {
            let segs: Vec<String> = self
                .local
                .iter()
                .map(|s| match s {
                    LocalSegment::Text(t) => t.clone(),
                    LocalSegment::Number(n) => n.to_string(),
                })
                .collect();
            write!(f, "+{}", segs.join("."))?;
        }
        Ok(())
    }
}

impl FromStr for Version {
    type Err = VersionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Version::parse(s)
    }
}

/// A registry version string that may or may not follow the standard scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyVersion {
    Legacy(String),
    Standard(Version),
}

impl AnyVersion {
    pub fn parse(s: &str) -> Self {
        match Version::parse(s) {
            Ok(v) => AnyVersion::Standard(v),
            Err(_) => AnyVersion::Legacy(s.to_string()),
        }
    }
}

impl Ord for AnyVersion {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (AnyVersion::Legacy(a), AnyVersion::Legacy(b)) => a.cmp(b),
            (AnyVersion::Legacy(_), AnyVersion::Standard(_)) => Ordering::Less,
            (AnyVersion::Standard(_), AnyVersion::Legacy(_)) => Ordering::Greater,
            (AnyVersion::Standard(a), AnyVersion::Standard(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for AnyVersion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compare two raw version strings; total order, ties broken on the raw text.
pub fn compare_version_strings(a: &str, b: &str) -> Ordering {
    AnyVersion::parse(a)
        .cmp(&AnyVersion::parse(b))
        .then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Compatible,
    Equal,
    NotEqual,
    LessEqual,
    GreaterEqual,
    Less,
    Greater,
    Arbitrary,
}

#[derive(Debug, Clone)]
pub struct Specifier {
    op: Operator,
    raw_version: String,
    version: Option<Version>,
    wildcard: bool,
}

impl Specifier {
    pub fn parse(input: &str) -> Result<Self, VersionError> {
        let s = input.trim();
        let err = || VersionError::InvalidSpecifier(input.to_string());
        let (op, rest) = [
            ("===", Operator::Arbitrary),
            ("~=", Operator::Compatible),
            ("==", Operator::Equal),
            ("!=", Operator::NotEqual),
            ("<=", Operator::LessEqual),
            (">=", Operator::GreaterEqual),
            ("<", Operator::Less),
            (">", Operator::Greater),
        ]
        .iter()
        .find_map(|(tok, op)| s.strip_prefix(tok).map(|rest| (*op, rest.trim())))
        .ok_or_else(err)?;
        if rest.is_empty() {
            return Err(err());
        }
        if op == Operator::Arbitrary {
            return Ok(Specifier {
                op,
                raw_version: rest.to_string(),
                version: None,
                wildcard: false,
            });
        }
        let (body, wildcard) = match rest.strip_suffix(".*") {
            Some(b) => (b, true),
            None => (rest, false),
        };
        let version = Version::parse(body).map_err(|_| err())?;
        // `.*` only means something for ==/!=; elsewhere it is tolerated and dropped.
        let wildcard = wildcard && matches!(op, Operator::Equal | Operator::NotEqual);
        if op == Operator::Compatible && version.release.len() < 2 {
            return Err(err());
        }
        Ok(Specifier {
            op,
            raw_version: rest.to_string(),
            version: Some(version),
            wildcard,
        })
    }

    pub fn operator(&self) -> Operator {
        self.op
    }

    pub fn contains(&self, candidate: &Version) -> bool {
        let Some(spec) = &self.version else {
            return candidate.to_string() == self.raw_version;
        };
        match self.op {
            Operator::Arbitrary => unreachable!("handled above"),
            Operator::Equal => equal(candidate, spec, self.wildcard),
            Operator::NotEqual => !equal(candidate, spec, self.wildcard),
            Operator::LessEqual => candidate.public() <= *spec,
            Operator::GreaterEqual => candidate.public() >= *spec,
            Operator::Less => {
                let c = candidate.public();
                if c >= *spec {
                    return false;
                }
                // <V excludes pre-releases of V itself unless V is one
                !(!spec.is_prerelease() && c.is_prerelease() && c.base() == spec.base())
            }
            Operator::Greater => {
                let c = candidate.public();
                if c <= *spec {
                    return false;
                }
                !(!spec.is_postrelease() && c.is_postrelease() && c.base() == spec.base())
            }
            Operator::Compatible => {
                let prefix = &spec.release[..spec.release.len() - 1];
                candidate.public() >= *spec && release_prefix_match(candidate, spec.epoch, prefix)
            }
        }
    }
}

fn release_prefix_match(candidate: &Version, epoch: u64, prefix: &[u64]) -> bool {
    if candidate.epoch != epoch {
        return false;
    }
    (0..prefix.len()).all(|i| candidate.release.get(i).copied().unwrap_or(0) == prefix[i])
}

fn equal(candidate: &Version, spec: &Version, wildcard: bool) -> bool {
    if wildcard {
        return release_prefix_match(candidate, spec.epoch, &spec.release);
    }
    if spec.has_local() {
        candidate == spec
    } else {
        candidate.public() == *spec
    }
}

/// Comma-joined conjunction of specifiers, e.g. `>=2.7,!=3.0.*,!=3.1.*`.
#[derive(Debug, Clone, Default)]
pub struct SpecifierSet {
    specs: Vec<Specifier>,
}

impl SpecifierSet {
    pub fn parse(input: &str) -> Result<Self, VersionError> {
        let specs = input
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(Specifier::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SpecifierSet { specs })
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn contains(&self, candidate: &Version) -> bool {
        self.specs.iter().all(|s| s.contains(candidate))
    }
}

impl FromStr for SpecifierSet {
    type Err = VersionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpecifierSet::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Version {
        Version::parse(s).unwrap()
    }

    #[test]
    fn ordering_follows_the_scheme() {
        let ordered = [
            "1.0.dev0", "1.0a1", "1.0a2.dev1", "1.0a2", "1.0b1", "1.0rc1", "1.0", "1.0+abc",
            "1.0+5", "1.0.post1.dev0", "1.0.post1", "1.1", "2.0", "1!0.1",
        ];
        for pair in ordered.windows(2) {
            assert!(v(pair[0]) < v(pair[1]), "{} < {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn trailing_zeros_are_insignificant() {
        assert_eq!(v("1.0"), v("1.0.0"));
        assert_eq!(v("v2.4"), v("2.4.0"));
    }

    #[test]
    fn normalised_spellings() {
        assert_eq!(v("1.0-alpha.1").to_string(), "1.0a1");
        assert_eq!(v("1.0c2").to_string(), "1.0rc2");
        assert_eq!(v("1.0-1").to_string(), "1.0.post1");
        assert_eq!(v("1.0.DEV").to_string(), "1.0.dev0");
    }

    #[test]
    fn legacy_versions_sort_first() {
        assert_eq!(
            compare_version_strings("0.1-beta-final-x", "0.0.1"),
            Ordering::Less
        );
        assert!(Version::parse("not a version").is_err());
    }

    #[test]
    fn specifier_operators() {
        let set = SpecifierSet::parse(">=2.7, !=3.0.*, !=3.1.*, <4").unwrap();
        assert!(set.contains(&v("2.7.18")));
        assert!(!set.contains(&v("3.0.1")));
        assert!(set.contains(&v("3.6.15")));
        assert!(!set.contains(&v("4.0")));

        assert!(SpecifierSet::parse("~=3.6").unwrap().contains(&v("3.9")));
        assert!(!SpecifierSet::parse("~=3.6.1").unwrap().contains(&v("3.7.0")));
        assert!(SpecifierSet::parse("==3.6.*").unwrap().contains(&v("3.6.15")));
        assert!(SpecifierSet::parse(">3.6").unwrap().contains(&v("3.7")));
        assert!(!SpecifierSet::parse(">3.6").unwrap().contains(&v("3.6.0.post1")));
        assert!(!SpecifierSet::parse("<3.7").unwrap().contains(&v("3.7.0rc1")));
        assert!(!SpecifierSet::parse(">=3.7").unwrap().contains(&v("3.6.15")));
        assert!(SpecifierSet::parse("<=3.6").unwrap().contains(&v("3.6")));
    }

    #[test]
    fn malformed_specifiers_are_errors() {
        assert!(SpecifierSet::parse(">=").is_err());
        assert!(SpecifierSet::parse("3.6").is_err());
        assert!(SpecifierSet::parse("~=3").is_err());
    }
}
