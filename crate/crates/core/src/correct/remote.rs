use serde::{Deserialize, Serialize};

use super::{CorrectError, CorrectionRecord, Corrector};
use crate::corpus::{tokenize, Document};
use crate::http::{endpoint, HttpError, JsonClient};

#[derive(Debug, Serialize)]
struct CorrectRequest<'a> {
    input: &'a str,
}

#[derive(Debug, Deserialize)]
struct CorrectResponse {
    output: String,
}

/// Client for `POST /correct`. The service receives the formatted `[SEP]`
/// string and answers with the corrected sentence.
#[derive(Debug, Clone)]
pub struct RemoteCorrector {
    url: String,
    client: JsonClient,
}

impl RemoteCorrector {
    pub fn new(base_url: &str, client: JsonClient) -> Self {
        RemoteCorrector {
            url: endpoint(base_url, "/correct"),
            client,
        }
    }
}

impl Corrector for RemoteCorrector {
    fn name(&self) -> String {
        format!("remote:{}", self.url)
    }

    fn correct(
        &self,
        record: &CorrectionRecord,
        _: &Document,
    ) -> Result<Vec<String>, CorrectError> {
        let resp: CorrectResponse = self.client.post(
            &self.url,
            &CorrectRequest {
                input: &record.input,
            },
        )?;
        Ok(tokenize(&resp.output))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub factual: bool,
    pub score: f64,
}

/// Summary-level factuality judgement used for filtering and evaluation.
pub trait FactualityClassifier: Send + Sync {
    fn classify(&self, summary: &str, document: &str) -> Result<Verdict, HttpError>;

    fn describe(&self) -> String;
}

#[derive(Debug, Serialize)]
struct ClassifyRequest<'a> {
    summary: &'a str,
    document: &'a str,
}

/// Client for `POST /classify`.
#[derive(Debug, Clone)]
pub struct RemoteClassifier {
    url: String,
    client: JsonClient,
}

impl RemoteClassifier {
    pub fn new(base_url: &str, client: JsonClient) -> Self {
        RemoteClassifier {
            url: endpoint(base_url, "/classify"),
            client,
        }
    }
}

impl FactualityClassifier for RemoteClassifier {
    fn classify(&self, summary: &str, document: &str) -> Result<Verdict, HttpError> {
        self.client
            .post(&self.url, &ClassifyRequest { summary, document })
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.url)
    }
}
