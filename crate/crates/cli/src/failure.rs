use std::fmt;

/// Marks an error caused by configuration or unreadable input (exit code 2).
/// Any other error is a stage failure (exit code 1).
#[derive(Debug)]
pub struct InputFailure(pub String);

impl fmt::Display for InputFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub trait InputContext<T> {
    fn input(self, msg: impl FnOnce() -> String) -> anyhow::Result<T>;
}

impl<T, E> InputContext<T> for Result<T, E>
where
    Result<T, E>: anyhow::Context<T, E>,
{
    fn input(self, msg: impl FnOnce() -> String) -> anyhow::Result<T> {
        anyhow::Context::with_context(self, || InputFailure(msg()))
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InputFailure>().is_some() {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn input_marker_survives_outer_context() {
        let err = std::fs::read("/nonexistent/x")
            .input(|| "cannot read".into())
            .context("stage segment failed")
            .unwrap_err();
        assert_eq!(exit_code(&err), 2);
        let other = Err::<(), _>(anyhow::anyhow!("boom")).context("stage bmds failed").unwrap_err();
        assert_eq!(exit_code(&other), 1);
    }
}
