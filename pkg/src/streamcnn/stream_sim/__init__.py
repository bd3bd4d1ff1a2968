from .analytic import AnalyticReport, throughput_model
from .fifo import StreamFifo
from .pe import PEGroup, weight_memory
from .pipeline import (LayerTiming, PipelineSim, TimingReport, build_pipeline, run,
                       window_sequence)
from .window import VectorBuffer, WindowBuffer

__all__ = ["AnalyticReport", "LayerTiming", "PEGroup", "PipelineSim", "StreamFifo",
           "TimingReport", "VectorBuffer", "WindowBuffer", "build_pipeline", "run",
           "throughput_model", "weight_memory", "window_sequence"]
