"""Ad hoc network simulator with a two-stage misbehavior detection pipeline."""

__version__ = "0.1.0"
