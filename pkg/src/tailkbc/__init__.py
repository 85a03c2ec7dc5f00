"""Two-stage knowledge-base completion for long-tail entities.

Stage 1 asks relation-specific questions of an extractive-QA backend over a
subject's article sentences; stage 2 corroborates each candidate with a
generative entity-disambiguation backend and canonicalizes it against the KB
alias table. The package also builds multi-token/ambiguous/long-tail benchmark
datasets from KB snapshots, calibrates the score cutoff on a hold-out split,
and reports precision/recall/F1 per relation.
"""

from .backend import (
    BackendError,
    BackendProtocolError,
    BackendTransportError,
    EdRequest,
    EntityGuess,
    HttpBackend,
    QaRequest,
    SpanAnswer,
    ed_generate,
    mock_ed_backend,
    mock_qa_backend,
    qa_extract,
)
from .corpus import ArticleStore, ContextSentence, load_corpus, load_corpus_file, sentences, split_sentences
from .evaluation import (
    CalibrationResult,
    EvalReport,
    RelationMetrics,
    aggregate,
    calibrate_alpha,
    evaluate,
    f1_score,
    is_correct,
    sample_for_annotation,
)
from .kb import KbSnapshot, NameIndex, build_name_index, is_ambiguous, is_long_tail, load_snapshot, load_snapshot_file
from .malt import (
    FactFlags,
    GoldObject,
    MaltRecord,
    StatsTable,
    build_dataset,
    compute_flags,
    dataset_stats,
    read_dataset,
    split_dataset,
    write_dataset,
)
from .model import (
    DataError,
    EntityId,
    EntityRecord,
    GroundFact,
    NormalizedName,
    RelationSpec,
    normalize,
    strip_qualifier,
)
from .pipeline import (
    Candidate,
    CorroboratedFact,
    FailureToleranceError,
    PipelineResult,
    QaPromptGenerator,
    StaticGenerator,
    corroborate,
    filter_threshold,
    generate_candidates,
    match_names,
    read_facts,
    run_pipeline,
    write_facts,
)
from .prompts import (
    DEFAULT_RELATIONS,
    RenderedPrompt,
    load_relations,
    make_generic_spec,
    relation_registry,
    render_corroboration_prompt,
    render_generation_prompt,
)

__version__ = "0.1.0"
