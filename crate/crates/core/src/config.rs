use serde::de::DeserializeOwned;
use serde_path_to_error::Segment;
use thiserror::Error;

/// A rejected configuration document. `pointer` is a JSON pointer to the
/// offending value (`""` for the document root).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config at {pointer:?}: {message}")]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

/// Deserializes `bytes`, reporting failures with the JSON pointer of the
/// value that could not be read.
pub(crate) fn from_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let mut pointer = String::new();
        for segment in err.path().iter() {
            match segment {
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Map { key } => pointer.push_str(&format!("/{}", escape(key))),
                Segment::Enum { variant } => pointer.push_str(&format!("/{}", escape(variant))),
                Segment::Unknown => {}
            }
        }
        ConfigError::at(pointer, err.inner().to_string())
    })
}
