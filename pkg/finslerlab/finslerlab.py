"""
Shared logger, error roots and the tolerance set used by every module.
"""
import copy
import logging

logging.basicConfig(format="%(levelname)s (%(funcName)s): %(message)s")
logger = logging.getLogger("finslerlab")
logger.setLevel(logging.WARNING)
# logger.setLevel(logging.INFO)
# logger.setLevel(logging.DEBUG)

# zero-section guard: every tensor blows up at y=0
EPS0			= 1e-8
TOL_IDENTITY		= 1e-9
TOL_FD			= 1e-5
NEWTON_TOL		= 1e-12
NEWTON_MAXITER		= 50
FLOW_DT			= 1e-3
ENERGY_DRIFT		= 1e-7
SYMPLECTIC		= 1e-7
DARBOUX			= 1e-7
SCHWARZIAN_H		= 1e-2
COMPARE_REL		= 1e-4
GRAPH_COND		= 1e-8
JACOBI_THRESHOLD	= 1e-12
BISECTION		= 1e-6
CARTAN_ZERO		= 1e-10


class FinslerError(Exception):
	"""Root of all errors raised by finslerlab."""
	pass


class NumericalError(FinslerError):
	"""A numerical procedure failed (non-convergence, degeneracy, domain violation)."""
	pass


class UsageError(FinslerError):
	"""Bad input: malformed configuration, unknown names, violated preconditions."""
	pass


class Tolerances(object):
	"""
	Named tolerances and numerical knobs. Values are read as attributes:

		tol = Tolerances()
		tol.eps0
		tol2 = tol.override(fd=1e-6)
	"""
	_defaults = {
		"eps0": EPS0,
		"identity": TOL_IDENTITY,
		"fd": TOL_FD,
		"newton_tol": NEWTON_TOL,
		"newton_maxiter": NEWTON_MAXITER,
		"flow_dt": FLOW_DT,
		"energy_drift": ENERGY_DRIFT,
		"symplectic": SYMPLECTIC,
		"darboux": DARBOUX,
		"schwarzian_h": SCHWARZIAN_H,
		"compare_rel": COMPARE_REL,
		"graph_cond": GRAPH_COND,
		"jacobi_threshold": JACOBI_THRESHOLD,
		"bisection": BISECTION,
		"cartan_zero": CARTAN_ZERO,
	}

	def __init__(self, **kwargs):
		"""
		kwargs -- overrides for the default values, unknown keys raise UsageError
		"""
		self._values = dict(Tolerances._defaults)
		self._set(kwargs)

	def _set(self, values):
		for key, value in values.items():
			if key not in Tolerances._defaults:
				raise UsageError("unknown tolerance key: %s" % key)
			if key == "newton_maxiter":
				value = int(value)
			else:
				value = float(value)
			self._values[key] = value

	def __getattr__(self, name):
		try:
			return self.__dict__["_values"][name]
		except KeyError:
			raise AttributeError("no tolerance named %s" % name)

	def override(self, **kwargs):
		"""
		return -- a copy with the given keys replaced
		"""
		tol = copy.deepcopy(self)
		tol._set(kwargs)
		return tol

	def as_dict(self):
		return dict(sorted(self._values.items()))

	@staticmethod
	def keys():
		return sorted(Tolerances._defaults.keys())

	def __repr__(self):
		return "Tolerances(%s)" % ", ".join("%s=%r" % kv for kv in sorted(self._values.items()))


DEFAULT_TOLERANCES = Tolerances()
