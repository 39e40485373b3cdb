"""Event-stream simulation, tensorization and the Event Quality Score."""

__version__ = "0.1.0"
