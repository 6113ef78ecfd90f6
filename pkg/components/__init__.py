"""
Pipeline components for the spikefront auditory front-end.
"""

from .surrogate import Surrogate
from .frontend import GaborFilterbank, Pcen, LearnableFrontend
from .fbank import FbankFrontend
from .neurons import LifLayer, TcLifLayer, IhcLifLayer, NeuronState
from .classifier import SnnClassifier
from .pipeline import SpikingPipeline

__all__ = [
    'Surrogate',
    'GaborFilterbank',
    'Pcen',
    'LearnableFrontend',
    'FbankFrontend',
    'LifLayer',
    'TcLifLayer',
    'IhcLifLayer',
    'NeuronState',
    'SnnClassifier',
    'SpikingPipeline'
]
