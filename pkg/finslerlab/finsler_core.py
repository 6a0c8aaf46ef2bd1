"""
Pointwise Finsler tensors and the Legendre transform.

Conventions: chart coordinates x^1..x^n, fiber coordinates y^1..y^n, jet slots (x, y).

	g_ij		= 1/2 d^2 F^2 / dy^i dy^j
	C_ijk		= 1/2 d g_ij / dy^k
	gamma^k_ij	= 1/2 g^kl (d_j g_il + d_i g_lj - d_l g_ij)		(x-derivatives)
	G^i		= gamma^i_jk y^j y^k
	N^i_j		= gamma^i_jk y^k - C^i_jk G^k			(= 1/2 dG^i/dy^j)
	Gamma^i_jk	= gamma^i_jk - g^il (C_jlm N^m_k + C_lkm N^m_j - C_jkm N^m_l)

The connection is written once over jets: evaluated with an F^2 jet of order 3 it yields
values, with order 4 it yields first derivatives of every tensor (needed for curvature).
"""
import logging
import math

import numpy as np

from finslerlab.finslerlab import DEFAULT_TOLERANCES, NumericalError, UsageError
from finslerlab import exprlang
from finslerlab import jets
from finslerlab.jets import Jet, einsum, stack
from finslerlab import utils

logger = logging.getLogger("finslerlab")

TOPOLOGY_EUCLIDEAN	= "euclidean"
TOPOLOGY_TORUS		= "torus"

DEFAULT_BOX_HALFWIDTH	= 10.0
HOMOGENEITY_FACTORS	= (0.5, 2.0, 3.7)
NEWTON_MAX_HALVINGS	= 40
# accepted when damping stalls: limit of double precision for the residual
NEWTON_STALL_TOL	= 1e-10


class ZeroSectionError(UsageError):
	"""Evaluation requested at (or too close to) the zero section y = 0."""
	pass


class MetricNotPositiveError(NumericalError):
	pass


class SingularMetricError(NumericalError):
	pass


class LegendreError(NumericalError):
	"""
	Newton solve for L*(p) failed.

	residual -- last residual norm
	iterations -- iterations performed
	"""
	def __init__(self, msg, residual, iterations):
		NumericalError.__init__(self, "%s (residual %.3e after %d iterations)" % (msg, residual, iterations))
		self.residual = residual
		self.iterations = iterations


class MetricModel(object):
	"""
	Finsler metric F^2(x, y) plus potential U(x) on an n-dimensional chart.

	dimension -- n >= 1
	f2 -- F^2 as source text or ExprAst
	potential -- U as source text or ExprAst, only x-variables allowed
	topology -- TOPOLOGY_EUCLIDEAN or TOPOLOGY_TORUS
	periods -- per-coordinate periods (torus only)
	box -- validity box [(low, high), ...]; torus coordinates use [low, low + period)
	reversible -- declared reversibility, verified by validate_metric
	name -- catalog name or None
	tolerances -- Tolerances, defaults to DEFAULT_TOLERANCES
	"""
	def __init__(self, dimension, f2, potential="0", topology=TOPOLOGY_EUCLIDEAN, periods=None, box=None,
		reversible=None, name=None, tolerances=None):
		if dimension < 1:
			raise UsageError("dimension must be >= 1, got %r" % dimension)
		self.dimension = dimension
		self.f2_source = f2 if isinstance(f2, str) else f2.source
		self.u_source = potential if isinstance(potential, str) else potential.source
		self.f2 = f2 if isinstance(f2, exprlang.ExprAst) else exprlang.parse(f2, dimension)
		self.u = potential if isinstance(potential, exprlang.ExprAst) else exprlang.parse(potential, dimension)

		if any(kind == exprlang.KIND_Y for kind, _ in self.u.variables()):
			raise UsageError("potential may only depend on chart coordinates x1..x%d" % dimension)
		if topology not in (TOPOLOGY_EUCLIDEAN, TOPOLOGY_TORUS):
			raise UsageError("unknown topology %r" % topology)
		self.topology = topology
		self.periods = None

		if topology == TOPOLOGY_TORUS:
			if periods is None or len(periods) != dimension:
				raise UsageError("torus topology needs %d periods" % dimension)
			self.periods = np.array(periods, dtype=float)
			if box is None:
				box = [(0.0, period) for period in self.periods]

		if box is None:
			box = [(-DEFAULT_BOX_HALFWIDTH, DEFAULT_BOX_HALFWIDTH)] * dimension
		if len(box) != dimension or any(low >= high for low, high in box):
			raise UsageError("validity box must give %d increasing intervals" % dimension)
		self.box = [(float(low), float(high)) for low, high in box]
		self.reversible = reversible
		self.name = name
		self.tol = tolerances if tolerances is not None else DEFAULT_TOLERANCES
		self._riemannian = None

	def with_potential(self, potential):
		"""Return a copy of this model with another potential."""
		return MetricModel(self.dimension, self.f2, potential, self.topology, self.periods, self.box,
			self.reversible, self.name, self.tol)

	def with_tolerances(self, tolerances):
		return MetricModel(self.dimension, self.f2, self.u, self.topology, self.periods, self.box,
			self.reversible, self.name, tolerances)

	#
	# scalar evaluation
	#
	def F2(self, x, y):
		return exprlang.eval_scalar(self.f2, x, y)

	def F(self, x, y):
		value = self.F2(x, y)

		if value < 0:
			raise MetricNotPositiveError("F^2 negative at x=%r, y=%r" % (list(x), list(y)))
		return math.sqrt(value)

	def U(self, x):
		return exprlang.eval_scalar(self.u, x, np.zeros(self.dimension))

	#
	# jets
	#
	def f2_jet(self, x, y, order, fiber_only=False):
		"""
		Jet of F^2 at (x, y) over (x, y) slots, or over y only.
		"""
		n = self.dimension
		active = jets.phase_variables(n)[n:] if fiber_only else jets.phase_variables(n)
		return jets.evaluate(self.f2, x, y, active, order)

	def u_jet(self, x, order):
		n = self.dimension
		return jets.evaluate(self.u, x, np.zeros(n), jets.phase_variables(n)[:n], order)

	#
	# chart
	#
	def wrap(self, x):
		"""Reduce torus coordinates into the box, identity for euclidean charts."""
		x = np.array(x, dtype=float)

		if self.topology == TOPOLOGY_TORUS:
			lows = np.array([low for low, _ in self.box])
			x = lows + np.mod(x - lows, self.periods)
		return x

	def contains(self, x):
		x = self.wrap(x)
		return all(low <= xi <= high for xi, (low, high) in zip(x, self.box))

	def check_fiber(self, x, v):
		"""Raise ZeroSectionError unless F(v) > eps0; return F(v)."""
		norm = self.F(x, v)

		if norm <= self.tol.eps0:
			raise ZeroSectionError("F(v) = %.3e at or below the zero-section guard %.1e" % (norm, self.tol.eps0))
		return norm

	def is_riemannian(self, samples=24):
		"""
		Sampled test: Cartan tensor vanishes within tol.cartan_zero.
		"""
		if self._riemannian is None:
			worst = 0.0

			for x in utils.random_points(self.box, max(2, samples // 4), margin=0.05):
				for u in utils.directions(self.dimension, 6):
					C = cartan_tensor(self, x, u)
					worst = max(worst, float(np.max(np.abs(C))))
			self._riemannian = worst <= self.tol.cartan_zero
			logger.debug("%s: max |C| = %.3e, riemannian=%s" % (self.name, worst, self._riemannian))
		return self._riemannian

	def __repr__(self):
		return "MetricModel(n=%d, F2=%r, U=%r, %s)" % (self.dimension, self.f2_source, self.u_source, self.topology)


class TensorBundle(object):
	"""
	Pointwise tensors at (x, v). gamma[k, i, j] = gamma^k_ij, N[i, j] = N^i_j,
	Gamma[i, j, k] = Gamma^i_jk, C[i, j, k] = C_ijk.
	"""
	def __init__(self, x, v, g, g_inv, C, gamma, G, N, Gamma):
		self.x = x
		self.v = v
		self.g = g
		self.g_inv = g_inv
		self.C = C
		self.gamma = gamma
		self.G = G
		self.N = N
		self.Gamma = Gamma

	def as_dict(self):
		return {name: getattr(self, name).tolist() for name in ("x", "v", "g", "g_inv", "C", "gamma", "G", "N", "Gamma")}


def connection_jets(f2, n, v):
	"""
	Every connection quantity from a jet of F^2 over (x, y).

	f2 -- Jet over 2n slots, order d >= 3
	v -- fiber point (values of the y slots)
	return -- dict of tensor jets; g, dg of order d-2 and d-3, everything else order d-3
	"""
	d = f2.order
	m = 2 * n

	if d < 3:
		raise jets.JetOrderError("connection needs an F^2 jet of order >= 3")
	first = [f2.derivative(n + i) for i in range(n)]
	g = stack([stack([first[i].derivative(n + j) * 0.5 for j in range(n)], m, d - 2) for i in range(n)], m, d - 2)
	dg = g.grad()
	# dgx[a, b, c] = d g_ab / dx^c, dgy[a, b, c] = d g_ab / dy^c
	dgx = dg[:, :, :n]
	dgy = dg[:, :, n:]
	low = d - 3

	try:
		g_inv = jets.inv(g.truncate(low))
	except jets.JetDomainError:
		raise SingularMetricError("fundamental tensor is singular")
	C = dgy * 0.5
	bracket = einsum("ilj->lij", dgx) + einsum("lji->lij", dgx) - einsum("ijl->lij", dgx)
	gamma = einsum("kl,lij->kij", g_inv, bracket) * 0.5
	y = stack([Jet.variable(n + i, v[i], m, low) for i in range(n)], m, low)
	G = einsum("kij,i,j->k", gamma, y, y)
	C_up = einsum("il,ljk->ijk", g_inv, C)
	N = einsum("ijk,k->ij", gamma, y) - einsum("ijk,k->ij", C_up, G)
	lowered = einsum("jlm,mk->ljk", C, N) + einsum("lkm,mj->ljk", C, N) - einsum("jkm,ml->ljk", C, N)
	Gamma = gamma - einsum("il,ljk->ijk", g_inv, lowered)
	return {"g": g, "dg": dg, "g_inv": g_inv, "C": C, "C_up": C_up, "gamma": gamma, "G": G, "N": N, "Gamma": Gamma}


def _positive_definite(g):
	try:
		np.linalg.cholesky(g)
		return True
	except np.linalg.LinAlgError:
		return False


def fundamental_tensor(model, x, v):
	"""
	g_ij = 1/2 d^2 F^2 / dy^i dy^j at (x, v).
	"""
	model.check_fiber(x, v)
	g = _raw_fundamental(model, x, v)

	if not _positive_definite(g):
		raise MetricNotPositiveError("g not positive-definite at x=%r, v=%r" % (list(x), list(v)))
	return g


def _raw_fundamental(model, x, v):
	n = model.dimension
	f2 = model.f2_jet(x, v, 2, fiber_only=True)
	g = np.array([[0.5 * jets.partial(f2, _unit2(n, i, j)) for j in range(n)] for i in range(n)])
	return 0.5 * (g + g.T)


def _unit(n, i):
	return tuple(1 if k == i else 0 for k in range(n))


def _unit2(n, i, j):
	alpha = [0] * n
	alpha[i] += 1
	alpha[j] += 1
	return tuple(alpha)


def cartan_tensor(model, x, v):
	"""C_ijk = 1/2 d g_ij / dy^k, fully symmetric."""
	model.check_fiber(x, v)
	n = model.dimension
	f2 = model.f2_jet(x, v, 3, fiber_only=True)
	C = np.zeros((n, n, n))

	for i in range(n):
		for j in range(i, n):
			for k in range(j, n):
				alpha = [0] * n
				alpha[i] += 1
				alpha[j] += 1
				alpha[k] += 1
				value = 0.25 * jets.partial(f2, alpha)

				for a, b, c in ((i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)):
					C[a, b, c] = value
	return C


def chern_connection(model, x, v):
	"""
	Full TensorBundle at (x, v).
	"""
	model.check_fiber(x, v)
	x = np.array(x, dtype=float)
	v = np.array(v, dtype=float)
	terms = connection_jets(model.f2_jet(x, v, 3), model.dimension, v)
	g = terms["g"].value
	g = 0.5 * (g + g.T)

	if not _positive_definite(g):
		raise MetricNotPositiveError("g not positive-definite at x=%r, v=%r" % (list(x), list(v)))
	return TensorBundle(x, v, g, terms["g_inv"].value, terms["C"].value, terms["gamma"].value,
		terms["G"].value, terms["N"].value, terms["Gamma"].value)


def legendre_to_cotangent(model, x, v):
	"""p_i = g_ij(v) v^j."""
	return fundamental_tensor(model, x, v).dot(v)


def legendre_to_tangent(model, x, p, guess=None):
	"""
	Solve p = g(v) v for v by damped Newton iteration, Jacobian g(v).

	guess -- start vector, default g(p)^-1 p with p read as a probe direction
	"""
	p = np.array(p, dtype=float)
	pnorm = float(np.linalg.norm(p))
	n = model.dimension

	if pnorm <= model.tol.eps0:
		raise ZeroSectionError("covector p vanishes")

	def residual_and_jacobian(v):
		f2 = model.f2_jet(x, v, 2, fiber_only=True)
		grad = np.array([0.5 * jets.partial(f2, _unit(n, i)) for i in range(n)])
		g = np.array([[0.5 * jets.partial(f2, _unit2(n, i, j)) for j in range(n)] for i in range(n)])
		return grad - p, g

	if guess is None:
		guess = np.linalg.solve(fundamental_tensor(model, x, p), p)
	v = np.array(guess, dtype=float)
	r, g = residual_and_jacobian(v)
	rnorm = float(np.linalg.norm(r))

	for iteration in range(1, model.tol.newton_maxiter + 1):
		if rnorm <= model.tol.newton_tol * pnorm:
			return v
		try:
			step = np.linalg.solve(g, r)
		except np.linalg.LinAlgError:
			raise LegendreError("singular Jacobian", rnorm, iteration)
		t = 1.0

		for _ in range(NEWTON_MAX_HALVINGS):
			trial = v - t * step
			try:
				r_trial, g_trial = residual_and_jacobian(trial)
				r_trial_norm = float(np.linalg.norm(r_trial))
			except (NumericalError, ZeroSectionError):
				r_trial_norm = math.inf

			if r_trial_norm < rnorm:
				break
			t *= 0.5
		else:
			if rnorm <= NEWTON_STALL_TOL * pnorm:
				logger.debug("Newton stalled at residual %.3e, accepted" % rnorm)
				return v
			raise LegendreError("damping failed", rnorm, iteration)
		v, r, g, rnorm = trial, r_trial, g_trial, r_trial_norm
		# logger.debug("newton %d: residual %.3e, t=%g" % (iteration, rnorm, t))

	if rnorm <= NEWTON_STALL_TOL * pnorm:
		return v
	raise LegendreError("no convergence", rnorm, model.tol.newton_maxiter)


def dual_norm(model, x, p):
	"""F*(p) = F(L*(p))."""
	return model.F(x, legendre_to_tangent(model, x, p))


def dual_metric(model, x, p):
	"""g*(p) = g(L*(p))^-1, the fiber Hessian of 1/2 F*^2."""
	return np.linalg.inv(fundamental_tensor(model, x, legendre_to_tangent(model, x, p)))


class PhaseState(object):
	"""
	Cotangent point lambda = (x, p) with cached v = L*(p) and F*(p) = F(v).
	"""
	def __init__(self, model, x, p, v=None):
		self.x = np.array(x, dtype=float)
		self.p = np.array(p, dtype=float)

		if v is None:
			v = legendre_to_tangent(model, self.x, self.p)
		self.v = np.array(v, dtype=float)
		self.fstar = model.F(self.x, self.v)

	@classmethod
	def from_tangent(cls, model, x, v):
		return cls(model, x, legendre_to_cotangent(model, x, v), v)

	@classmethod
	def from_vector(cls, model, z):
		"""z -- stacked (x, p)"""
		n = model.dimension
		return cls(model, z[:n], z[n:])

	def vector(self):
		return np.concatenate([self.x, self.p])

	def energy(self, model):
		return 0.5 * self.fstar ** 2 + model.U(self.x)

	def __repr__(self):
		return "PhaseState(x=%r, p=%r, v=%r)" % (self.x.tolist(), self.p.tolist(), self.v.tolist())


def identity_residuals(model, x, v):
	"""
	Residuals of the pointwise identities at (x, v).

	return -- dict: euler_f2, euler_g, euler_grad, cartan_y, n_gamma_y, torsion, g_inv_g, cartan_symmetry
	"""
	n = model.dimension
	norm2 = model.check_fiber(x, v) ** 2
	f2 = model.f2_jet(x, v, 2, fiber_only=True)
	grad = np.array([jets.partial(f2, tuple(1 if k == i else 0 for k in range(n))) for i in range(n)])
	bundle = chern_connection(model, x, v)
	C = bundle.C
	gscale = max(1.0, float(np.max(np.abs(bundle.g))))

	return {
		"euler_f2": abs(grad.dot(v) - 2.0 * norm2) / max(norm2, 1e-300),
		# y^k dg_ij/dy^k = 0, from the fiber-only jet
		"euler_g": float(np.max(np.abs(2.0 * cartan_tensor(model, x, v).dot(v)))) / gscale,
		# y^j d^2F^2/dy^i dy^j = dF^2/dy^i
		"euler_grad": float(np.max(np.abs(2.0 * bundle.g.dot(v) - grad))) / max(1.0, float(np.max(np.abs(grad)))),
		"cartan_y": float(np.max(np.abs(C.dot(v)))) / gscale,
		"n_gamma_y": float(np.max(np.abs(bundle.N - bundle.Gamma.dot(v)))) / max(1.0, float(np.max(np.abs(bundle.N)))),
		"torsion": float(np.max(np.abs(bundle.Gamma - np.swapaxes(bundle.Gamma, 1, 2)))),
		"g_inv_g": float(np.max(np.abs(bundle.g_inv.dot(bundle.g) - np.eye(n)))),
		"cartan_symmetry": float(max(np.max(np.abs(C - np.swapaxes(C, 0, 1))), np.max(np.abs(C - np.swapaxes(C, 1, 2))))),
	}


class ValidationReport(object):
	"""
	Outcome of validate_metric: named checks, each (value, passed).
	"""
	def __init__(self, samples):
		self.samples = samples
		self.checks = {}
		self.failures = []

	def add(self, name, value, passed):
		self.checks[name] = (float(value), bool(passed))

	@property
	def passed(self):
		return all(ok for _, ok in self.checks.values()) and not self.failures

	@property
	def reversible(self):
		return self.checks.get("reversibility", (None, False))[1]

	def as_dict(self):
		return {
			"samples": self.samples,
			"passed": self.passed,
			"checks": {name: {"value": value, "passed": ok} for name, (value, ok) in sorted(self.checks.items())},
			"failures": list(self.failures),
		}

	def __repr__(self):
		return "ValidationReport(%s)" % ", ".join("%s=%.3e%s" % (name, value, "" if ok else "!")
			for name, (value, ok) in sorted(self.checks.items()))


def validate_metric(model, samples=32):
	"""
	Sample homogeneity, strong convexity, reversibility and the pointwise identities.
	Failures become report entries.

	samples -- number of base points; each is paired with deterministic directions
	"""
	tol = model.tol
	n = model.dimension
	report = ValidationReport(samples)
	homogeneity = 0.0
	min_eig = math.inf
	reversibility = 0.0
	identities = {}
	points = utils.random_points(model.box, samples, margin=0.02)
	dirs = utils.directions(n, 8 if n <= 2 else 12)

	for x in points:
		for u in dirs:
			try:
				f2 = model.F2(x, u)
				for c in HOMOGENEITY_FACTORS:
					homogeneity = max(homogeneity, abs(model.F2(x, c * u) - c * c * f2) / max(c * c * abs(f2), 1e-300))
				reversibility = max(reversibility, abs(model.F(x, -u) - model.F(x, u)))
				model.check_fiber(x, u)
				lowest = utils.jacobi_eigh(_raw_fundamental(model, x, u), tol.jacobi_threshold)[0][0]
				min_eig = min(min_eig, lowest)

				if lowest <= 0:
					report.failures.append("g not positive-definite at x=%r, v=%r" % (x.tolist(), u.tolist()))
					continue

				for key, value in identity_residuals(model, x, u).items():
					identities[key] = max(identities.get(key, 0.0), value)
			except (NumericalError, UsageError) as e:
				logger.exception("validation sample failed")
				report.failures.append(str(e))

	report.add("homogeneity", homogeneity, homogeneity <= tol.identity)
	report.add("min_g_eigenvalue", min_eig if not math.isinf(min_eig) else 0.0, min_eig > 0)
	report.add("reversibility", reversibility, reversibility <= tol.identity * 10)

	for key, value in sorted(identities.items()):
		report.add(key, value, value <= tol.identity)

	if model.reversible is not None and model.reversible != report.reversible:
		report.failures.append("declared reversible=%s but sampled reversibility defect %.3e" % (model.reversible, reversibility))
	logger.info("validated %s: %r" % (model.name, report))
	return report
