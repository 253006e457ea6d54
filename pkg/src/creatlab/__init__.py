"""Desk-scale lab for profile-pollution attacks on sequential recommenders.

Train a small next-item recommender, learn a step-wise perturbation policy
with constrained group-relative reinforcement learning, then measure how
much exposure a target item gains after retraining on the polluted data.
"""

from .backend import USING_EXT

__version__ = "0.1.0"

__all__ = ["USING_EXT", "__version__"]
