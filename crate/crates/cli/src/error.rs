use std::fmt;

/// Exit status 1 for [`CliError::Validation`], 2 for [`CliError::Failure`].
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Failure(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Failure(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Failure(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Failure(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<enhq::Error> for CliError {
    fn from(e: enhq::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

/// Collects every validation problem before reporting.
#[derive(Default)]
pub struct Problems(Vec<String>);

impl Problems {
    pub fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    pub fn push(&mut self, msg: String) {
        self.0.push(msg);
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Records the error of a fallible validation step.
    pub fn check<T>(&mut self, r: Result<T, enhq::Error>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.0.push(e.to_string());
                None
            }
        }
    }

    pub fn finish(self) -> Result<(), CliError> {
        if self.0.is_empty() {
            return Ok(());
        }
        let mut seen = Vec::new();
        for m in self.0 {
            if !seen.contains(&m) {
                seen.push(m);
            }
        }
        Err(CliError::Validation(seen.join("; ")))
    }
}
