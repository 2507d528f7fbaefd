"""Push-gossip dissemination over unstructured overlays: simulator, metrics,
and the branching-process model of the phase transition."""

__version__ = "0.1.0"
