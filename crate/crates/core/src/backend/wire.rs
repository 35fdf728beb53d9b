//! JSON wire format spoken with remote cloze servers.
//!
//! Request: `{"document": str, "masked_text": str, "sentinel": str, "slots": [{"factor_index": int}]}`
//!
//! Response: `{"fills": [{"factor_index": int, "text": str, "token_probs": [float]}]}`
//!
//! One object per line on a byte stream, or one object per HTTP POST body.
//! Fills must come back in slot order.

use serde::{Deserialize, Serialize};

use super::{check_fills, BackendError, ClozeFill, ClozeRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSlot {
    pub factor_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub document: String,
    pub masked_text: String,
    pub sentinel: String,
    pub slots: Vec<WireSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFill {
    pub factor_index: usize,
    pub text: String,
    pub token_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub fills: Vec<WireFill>,
}

impl From<&ClozeRequest> for WireRequest {
    fn from(req: &ClozeRequest) -> Self {
        Self {
            document: req.document.clone(),
            masked_text: req.masked.text.clone(),
            sentinel: req.masked.sentinel.clone(),
            slots: req
                .masked
                .slots
                .iter()
                .map(|s| WireSlot {
                    factor_index: s.factor_index,
                })
                .collect(),
        }
    }
}

impl From<WireFill> for ClozeFill {
    fn from(w: WireFill) -> Self {
        Self {
            factor_index: w.factor_index,
            filled: w.text,
            token_probs: w.token_probs,
        }
    }
}

impl From<&ClozeFill> for WireFill {
    fn from(f: &ClozeFill) -> Self {
        Self {
            factor_index: f.factor_index,
            text: f.filled.clone(),
            token_probs: f.token_probs.clone(),
        }
    }
}

/// Serializes a request as a single JSON line (no trailing newline).
pub fn encode_request(req: &ClozeRequest) -> String {
    // WireRequest only holds strings and integers, which always serialize
    serde_json::to_string(&WireRequest::from(req)).expect("wire request serializes")
}

/// Parses and validates a response body against the request it answers.
pub fn decode_response(req: &ClozeRequest, body: &str) -> Result<Vec<ClozeFill>, BackendError> {
    let response: WireResponse = serde_json::from_str(body.trim())
        .map_err(|e| BackendError::MalformedResponse(format!("invalid JSON: {e}")))?;
    let fills: Vec<ClozeFill> = response.fills.into_iter().map(ClozeFill::from).collect();
    check_fills(req, &fills)?;
    Ok(fills)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::tests::request;

    #[test]
    fn request_hides_surfaces_and_reference() {
        let mut req = request(&[(2, "secret answer")]);
        req.reference = Some(vec!["gold".into()]);
        let line = encode_request(&req);
        assert_eq!(
            line,
            r#"{"document":"a document","masked_text":"[MASK]","sentinel":"[MASK]","slots":[{"factor_index":2}]}"#
        );
        assert!(!line.contains("secret"));
    }

    #[test]
    fn response_decoding() {
        let req = request(&[(0, "x"), (1, "y")]);
        let body = r#"{"fills":[{"factor_index":0,"text":"a b","token_probs":[0.5,0.25]},{"factor_index":1,"text":"","token_probs":[]}]}"#;
        let fills = decode_response(&req, body).unwrap();
        assert_eq!(fills[0].filled, "a b");
        assert!(fills[1].filled.is_empty());

        let reordered = r#"{"fills":[{"factor_index":1,"text":"","token_probs":[]},{"factor_index":0,"text":"","token_probs":[]}]}"#;
        assert!(matches!(decode_response(&req, reordered), Err(BackendError::MalformedResponse(_))));
        assert!(matches!(decode_response(&req, "not json"), Err(BackendError::MalformedResponse(_))));
        let bad_prob = r#"{"fills":[{"factor_index":0,"text":"a","token_probs":[2.0]},{"factor_index":1,"text":"","token_probs":[]}]}"#;
        assert!(decode_response(&req, bad_prob).is_err());
    }
}
