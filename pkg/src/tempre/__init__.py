"""Zero-shot temporal relation extraction harness for chat models."""

from .corpus import Corpus, Document, EventTrigger, GoldPair, context_window, load_corpus, mark_events
from .gateway import ChatTranscript, Gateway, QueryIntent, ReplyCache, TranscriptStore, cache_key
from .metrics import EvalReport, score
from .oracles import GoldOracle, InconsistentOracle, NoisyOracle, RefusalOracle
from .schema import Assertion, RelationSchema, builtin_schema, inverse_of, orient
from .strategies import Prediction, aggregate_event_ranking, run_cot, run_event_ranking, run_zero_shot

__version__ = "0.1.0"
