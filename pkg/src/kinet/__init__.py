"""Kinematics-informed configuration prediction.

A scalar autodiff engine, a differentiable analytic inverse-kinematics layer
for offset-wrist six-axis arms, constraint losses built on the IK's own
failure events, small MLP predictors trained against those losses, and a
benchmark harness comparing them with sampling and iterative baselines.
"""

__version__ = "0.1.0"
