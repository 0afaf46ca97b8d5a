"""Chunk-drift backdoor toolkit: kinematics, perturbation profiles, dataset
poisoning, a chunked-planner surrogate simulator, and kinematic guards."""

__version__ = "0.1.0"
