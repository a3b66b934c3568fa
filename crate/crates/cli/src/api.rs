//! Wire types of the elicitation HTTP API, version 1.

use base64::Engine;
use hmix_core::elicit::{NextTrial, ResponsePayload, SessionKind, SessionPlan, SubmitAck, TrialContent};
use hmix_core::hmix::Record;
use hmix_core::ImageTensor;
use serde::{Deserialize, Serialize};

use crate::io::encode_png;

pub const API_VERSION: u32 = 1;

/// A stimulus as a base64 PNG. Clients should upscale with nearest-neighbor
/// sampling, as `rendering` says.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PngImage {
    pub media_type: String,
    pub width: usize,
    pub height: usize,
    pub rendering: String,
    pub data: String,
}

impl PngImage {
    pub fn encode(image: &ImageTensor) -> Self {
        PngImage {
            media_type: "image/png".into(),
            width: image.width(),
            height: image.height(),
            rendering: "pixelated".into(),
            data: base64::engine::general_purpose::STANDARD.encode(encode_png(image)),
        }
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>, base64::DecodeError> {
        base64::engine::general_purpose::STANDARD.decode(&self.data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub api_version: u32,
    pub status: String,
    pub sessions: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub api_version: u32,
    pub participant_id: String,
    pub interface_kind: SessionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub api_version: u32,
    pub session_id: String,
    pub participant_id: String,
    pub interface_kind: SessionKind,
    pub total_trials: usize,
    pub start_lambda: Option<f64>,
}

impl SessionCreated {
    pub fn from_plan(plan: &SessionPlan) -> Self {
        SessionCreated {
            api_version: API_VERSION,
            session_id: plan.session_id.clone(),
            participant_id: plan.participant_id.clone(),
            interface_kind: plan.kind,
            total_trials: plan.trials.len(),
            start_lambda: plan.start_lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOption {
    /// Grid index to submit back when this image is chosen.
    pub index: usize,
    pub image: PngImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Content {
    /// The ordered sweep; `start_index` is where the cursor begins.
    Construct { images: Vec<PngImage>, start_index: usize },
    /// The sweep in display order.
    SelectShuffled { options: Vec<SelectOption> },
    InferCoefficient { image: PngImage, left_class: String, right_class: String },
    SoftLabel { image: PngImage, class_names: Vec<String> },
}

impl Content {
    pub fn encode(content: &TrialContent) -> Self {
        match content {
            TrialContent::Construct { images, start_index } => Content::Construct {
                images: images.iter().map(PngImage::encode).collect(),
                start_index: *start_index,
            },
            TrialContent::SelectShuffled { options } => Content::SelectShuffled {
                options: options
                    .iter()
                    .map(|(index, img)| SelectOption {
                        index: *index,
                        image: PngImage::encode(img),
                    })
                    .collect(),
            },
            TrialContent::Infer {
                image,
                left_class,
                right_class,
            } => Content::InferCoefficient {
                image: PngImage::encode(image),
                left_class: left_class.clone(),
                right_class: right_class.clone(),
            },
            TrialContent::SoftLabel { image, class_names } => Content::SoftLabel {
                image: PngImage::encode(image),
                class_names: class_names.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum NextResponse {
    Trial {
        api_version: u32,
        session_id: String,
        /// 0-based.
        trial_index: u32,
        total: u32,
        interface_kind: SessionKind,
        content: Content,
    },
    Complete {
        api_version: u32,
        session_id: String,
        total: u32,
    },
}

impl NextResponse {
    pub fn encode(next: &NextTrial) -> Self {
        match next {
            NextTrial::Trial(t) => NextResponse::Trial {
                api_version: API_VERSION,
                session_id: t.session_id.clone(),
                trial_index: t.trial_index,
                total: t.total,
                interface_kind: t.kind,
                content: Content::encode(&t.content),
            },
            NextTrial::Complete { session_id, total } => NextResponse::Complete {
                api_version: API_VERSION,
                session_id: session_id.clone(),
                total: *total,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub api_version: u32,
    pub trial_index: u32,
    pub response: ResponsePayload,
    #[serde(default)]
    pub response_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub api_version: u32,
    #[serde(flatten)]
    pub ack: SubmitAck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub api_version: u32,
    pub session_id: String,
    /// True while trials remain.
    pub open: bool,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub api_version: u32,
    pub error: ErrorDetail,
}
