"""RIS-assisted radio localization: scene simulation, solvers and identifiability."""

__version__ = "0.1.0"
