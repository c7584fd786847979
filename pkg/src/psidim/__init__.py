"""Scale-sensitive Psi-dimensions for classifiers with values in R^Q."""
from .errors import Overbudget, PsidimError, UsageError, ValidationError
from .margin import REJECTED, MarginConfig, Operator

__version__ = "0.1.0"

__all__ = ["Overbudget", "PsidimError", "UsageError", "ValidationError",
           "REJECTED", "MarginConfig", "Operator", "__version__"]
