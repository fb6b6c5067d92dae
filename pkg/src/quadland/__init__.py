"""quadland: quadrotor near-ground flight simulation, disturbance learning
with a certified Lipschitz budget, and stability-verified tracking control."""

__version__ = "0.1.0"
