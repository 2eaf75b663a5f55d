"""locplan: per-direction localization-quality maps and viewpoint planning.

Predicts, for arbitrary 3D waypoints in a mapped scene, how well visual
localization will work in each viewing direction (a pitch x yaw "LocMap"),
and uses those maps in a greedy planner that trades localization accuracy
against rotation smoothness. A synthetic-scene localization oracle provides
verifiable ground truth at desk scale.
"""

__version__ = "0.1.0"
