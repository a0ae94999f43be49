"""Decomposition-based neural multi-objective combinatorial optimization:
meta-trained construction policy, hierarchical fine-tuning into per-weight
submodels, and hypervolume evaluation with exact oracles."""

__version__ = "0.1.0"
