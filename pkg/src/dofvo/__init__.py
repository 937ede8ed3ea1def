"""Monocular visual odometry with per-degree-of-freedom neural refinement.

Subsystems: rigid-transform algebra (`se3`), EuRoC sequence ingestion
(`euroc`), the classical frontend (`features`, `flow`, `epipolar`,
`frontend`), the per-DoF refinement networks (`activations`, `mlp`,
`training`, `model_io`), trajectory metrics (`metrics`), and the CLI
(`cli`, `config`).
"""

__version__ = "0.1.0"
