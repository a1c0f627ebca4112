"""Offline figure generation for the coupled-model simulator's output files."""

__version__ = "0.1.0"

from .readers import InputError, SnapshotData, read_csv_columns, read_snapshot
from .render import KINDS, FigureJob, render
