"""Knowledge-graph fact injection for sentence classifiers, on a small numpy autodiff core."""
from .config import RunConfig
from .encoding import SplicedSequence, Vocabulary, position_code, splice
from .errors import ConfigError, ConsistencyError, DataError, KInjectError, ParseError, ShapeError, UsageError
from .estimator import KnowledgeInjectedClassifier, KnowledgeSplicer
from .kg import SurfaceDict, Triple, TripleStore, build_surface_dict, load_triples
from .matcher import gather_facts, match_subjects, tokenize

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "SplicedSequence",
    "Vocabulary",
    "position_code",
    "splice",
    "KInjectError",
    "ConfigError",
    "ConsistencyError",
    "DataError",
    "ParseError",
    "ShapeError",
    "UsageError",
    "KnowledgeInjectedClassifier",
    "KnowledgeSplicer",
    "SurfaceDict",
    "Triple",
    "TripleStore",
    "build_surface_dict",
    "load_triples",
    "gather_facts",
    "match_subjects",
    "tokenize",
]
