from src.reporting.plots import PLOTS, EmitResult, emit_plots, summarize
from src.reporting.svg import LinePlot

__all__ = ["PLOTS", "EmitResult", "LinePlot", "emit_plots", "summarize"]
