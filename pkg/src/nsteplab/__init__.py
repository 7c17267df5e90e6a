"""n-step action-value targets with a DQN-style learner on mountain car."""
from nsteplab._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
