"""Interactive imitation learning with uncertainty-gated teacher queries.

The engine couples three mechanisms around a goal-conditioned novice policy:

- adaptive gating (``sag``): the query threshold tracks a user-specified
  sensitivity, specificity, or minimum system success rate;
- feedback collection (``fier``): queried plans are validated, relabeled to
  the goal they would achieve, or corrected by teacher annotation;
- prioritized replay (``pier``): demonstrations are replayed according to
  novice success, uncertainty, and age, with importance-weight correction.

``simbench`` provides a synthetic pick task with an oracle teacher and the
experiment/ablation runner, ``cli`` the command-line entry point, and
``serve`` a session service exposing queries to a remote human teacher.
"""

from askdagger import core, fier, novice, pier, sag, simbench

__all__ = ["core", "sag", "pier", "fier", "novice", "simbench"]

__version__ = "0.1.0"
