"""Reference inference sidecar for the tailkbc wire protocol.

Serves an extractive-QA checkpoint on /v1/qa and a generative
entity-disambiguation checkpoint on /v1/ed with deterministic decoding, plus
/v1/health. Deterministic stub models ("stub") make the full protocol
testable offline.
"""

from .app import create_app
from .config import ServerConfig, load_config
from .models import normalize_loglik, translate_markers

__version__ = "0.1.0"
