use serde::{Deserialize, Serialize};

use super::{InfillCandidate, InfillError, Infiller, MaskedQuery};
use crate::http::{endpoint, JsonClient};

/// Context tokens sent to a remote infiller; longer contexts keep their head.
pub const DEFAULT_CONTEXT_LIMIT: usize = 512;

#[derive(Debug, Serialize)]
struct InfillRequest<'a> {
    masked_text: &'a [String],
    context: &'a [String],
    beam_size: usize,
}

#[derive(Debug, Deserialize)]
struct InfillResponse {
    candidates: Vec<RemoteCandidate>,
}

#[derive(Debug, Deserialize)]
struct RemoteCandidate {
    tokens: Vec<String>,
    score: f64,
}

/// Client for `POST /infill`.
#[derive(Debug, Clone)]
pub struct RemoteInfiller {
    url: String,
    client: JsonClient,
    pub context_limit: usize,
}

impl RemoteInfiller {
    pub fn new(base_url: &str, client: JsonClient) -> Self {
        RemoteInfiller {
            url: endpoint(base_url, "/infill"),
            client,
            context_limit: DEFAULT_CONTEXT_LIMIT,
        }
    }
}

/// Assigns ranks in response order and checks that scores never increase.
fn rank_candidates(raw: Vec<RemoteCandidate>) -> Result<Vec<InfillCandidate>, InfillError> {
    for (i, pair) in raw.windows(2).enumerate() {
        if pair[1].score > pair[0].score || pair[0].score.is_nan() || pair[1].score.is_nan() {
            return Err(InfillError::Protocol(format!(
                "candidate scores must be non-increasing: rank {} has {} but rank {} has {}",
                i + 1,
                pair[0].score,
                i + 2,
                pair[1].score
            )));
        }
    }
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, c)| InfillCandidate {
            tokens: c.tokens,
            rank: i + 1,
            score: c.score,
        })
        .collect())
}

impl Infiller for RemoteInfiller {
    fn infill(
        &self,
        query: &MaskedQuery,
        beam_size: usize,
    ) -> Result<Vec<InfillCandidate>, InfillError> {
        let context = &query.context[..query.context.len().min(self.context_limit)];
        let resp: InfillResponse = self.client.post(
            &self.url,
            &InfillRequest {
                masked_text: &query.masked_text,
                context,
                beam_size,
            },
        )?;
        rank_candidates(resp.candidates)
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.url)
    }
}
