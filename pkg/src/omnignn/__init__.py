"""Multi-relational dynamic graph network for cross-sectional return prediction."""
from .market_graph import GicsCode, Metapath, build_snapshot, compile_metapath
from .model import Hyperparams, TrainConfig
from .synthdata import UniverseSpec, generate

__all__ = ["GicsCode", "Metapath", "build_snapshot", "compile_metapath", "Hyperparams",
           "TrainConfig", "UniverseSpec", "generate"]
__version__ = "0.1.0"
