"""Skin lesion triage: preprocessing, ensemble classification, reporting."""

from .datasetio import (
    LABELS,
    DatasetManifest,
    ManifestEntry,
    SplitSpec,
    load_manifest,
    stratified_split,
    write_manifest,
)
from .ensemble import (
    DISAGREEMENT,
    UNANIMOUS,
    EnsembleDecision,
    MajorityVoteEnsemble,
    average_distribution,
    vote,
)
from .errors import (
    BackendError,
    ConfigurationError,
    DermTriageError,
    InputError,
    ParameterError,
    ParseError,
    ProviderError,
    TransportError,
    UndefinedRateError,
    ValidationError,
)
from .imaging import (
    AugmentSpec,
    BilinearResizer,
    HistogramEqualizer,
    LesionAugmenter,
    NlmDenoiser,
    NlmParams,
    augment,
    check_image,
    denoise_nlm,
    equalize_histogram,
    load_image,
    resize,
    save_image,
)
from .inference import (
    BackendDescriptor,
    ModelPrediction,
    image_key,
    load_roster,
    predict,
    predict_all,
)
from .llmclient import ChatMessage, HttpTransport, LlmConfig, StubTransport, complete
from .metrics import (
    ConfusionMatrix,
    LabeledPrediction,
    MetricsReport,
    confusion,
    load_predictions,
    per_class_rates,
    roc_curve,
    summarize,
)
from .reporting import (
    DISCLAIMER,
    SPECIALIST_NOTICE,
    AssessmentReport,
    ReportRequest,
    build_prompt,
    chat_respond,
    generate_report,
    score_report,
    validate_query,
)
from .service import CaseStore, ServiceConfig, create_app

__version__ = "0.1.0"
