"""barriercert: certified probability bounds for stochastic systems.

Synthesizes barrier-like certificates by sum-of-squares relaxation and
semidefinite programming: upper bounds on finite-time safety probabilities
of discrete-time stochastic systems and lower bounds on finite-time
reach-avoid probabilities of continuous-time diffusions, cross-validated
by a Monte-Carlo oracle.
"""

from .conditions import (CT_PROP2, CT_PROP3, CT_TIMEDEP, CT_TIMEINDEP,
                         DISCRETE_UPPER_NEW, DISCRETE_UPPER_PROP1,
                         VerificationTask, encode, eval_bound)
from .model import (ContinuousSystem, DiscreteAtoms, DiscreteSystem,
                    UniformBox, generator, pushforward_expectation)
from .poly import MonomialBasis, Polynomial, monomials_up_to
from .sdp import SolveResult, SolverConfig, solve
from .sets import SemialgebraicSet
from .sos import PositivityConstraint, SosProgram, check_certificate, lower

__version__ = "0.1.0"
