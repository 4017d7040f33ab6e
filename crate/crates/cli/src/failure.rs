//! Mapping of errors to exit codes and the one-line JSON error report.

use std::fmt;

use serde::Serialize;

/// A bad `--config` file or an invalid combination of settings.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Other,
    Usage,
    Io,
    Input,
    Generator,
    Config,
    Diverged,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Other => 1,
            Kind::Usage => 2,
            Kind::Io => 3,
            Kind::Input => 4,
            Kind::Generator => 5,
            Kind::Config => 6,
            Kind::Diverged => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Other => "error",
            Kind::Usage => "usage",
            Kind::Io => "io",
            Kind::Input => "input",
            Kind::Generator => "generator_contract",
            Kind::Config => "invalid_config",
            Kind::Diverged => "diverged",
        }
    }
}

fn classify_core(e: &geoloop::Error) -> Kind {
    use geoloop::Error as E;
    match e {
        E::Io { .. } => Kind::Io,
        E::Parse { .. } | E::Image(_) | E::DimensionMismatch { .. } | E::DuplicateView(_) | E::EmptyBank | E::EmptyTrajectory => Kind::Input,
        E::GeneratorContract { .. } => Kind::Generator,
        E::Diverged { .. } => Kind::Diverged,
        E::InvalidCamera(_)
        | E::NonPositiveDepth(_)
        | E::ClipTooShort(_)
        | E::InvalidArgument(_)
        | E::TimeOutOfRange(_)
        | E::NonPositiveNormalizer(_) => Kind::Config,
    }
}

pub fn classify(err: &anyhow::Error) -> Kind {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<geoloop::Error>() {
            return classify_core(e);
        }
        if cause.is::<ConfigError>() {
            return Kind::Config;
        }
        if cause.is::<std::io::Error>() {
            return Kind::Io;
        }
        if cause.is::<serde_json::Error>() {
            return Kind::Input;
        }
    }
    Kind::Other
}

#[derive(Serialize)]
struct Report<'a> {
    error: &'a str,
    code: i32,
    message: String,
}

/// Single-line JSON description of a failure.
pub fn render(kind: Kind, message: String) -> String {
    let message = message.replace('\n', " ");
    serde_json::to_string(&Report { error: kind.name(), code: kind.code(), message }).expect("report serializes")
}

/// The error chain joined with ": ", skipping causes whose text an outer
/// message already includes.
pub fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn nested_io_errors_are_not_repeated() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let err: anyhow::Result<()> = Err(io).context("reading a.json");
        let err = err.unwrap_err();
        assert_eq!(message(&err), "reading a.json: gone");
        assert_eq!(classify(&err), Kind::Io);
    }

    #[test]
    fn report_is_one_json_line() {
        let line = render(Kind::Generator, "bad\nframes".into());
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["code"], 5);
        assert_eq!(v["error"], "generator_contract");
    }

    #[test]
    fn core_errors_map_to_their_codes() {
        let contract = anyhow::Error::from(geoloop::Error::GeneratorContract { segment: 0, expected: 2, got: 1 });
        assert_eq!(classify(&contract).code(), 5);
        let diverged = anyhow::Error::from(geoloop::Error::Diverged { iter: 3, m: 1e4, s: 1.0 });
        assert_eq!(classify(&diverged).code(), 7);
        assert_eq!(classify(&anyhow::Error::from(ConfigError("x".into()))).code(), 6);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let kinds = [Kind::Other, Kind::Usage, Kind::Io, Kind::Input, Kind::Generator, Kind::Config, Kind::Diverged];
        let codes: std::collections::BTreeSet<i32> = kinds.iter().map(|k| k.code()).collect();
        assert_eq!(codes.len(), kinds.len());
    }
}
