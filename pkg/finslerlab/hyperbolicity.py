"""
Hyperbolicity criteria on sampled energy levels H = c.

All verdicts are sampled evidence, not proofs: compactness and uniformity cannot be
certified from finitely many points.
"""
import concurrent.futures
import logging
import math

import numpy as np

from finslerlab.finslerlab import UsageError
from finslerlab import curvature
from finslerlab.curvature import KIND_NONREDUCED, KIND_REDUCED
from finslerlab import dynamics
from finslerlab import finsler_core
from finslerlab.finsler_core import PhaseState
from finslerlab import jacobi_lab
from finslerlab import utils

logger = logging.getLogger("finslerlab")

EVIDENCE_NOTE		= "sampled evidence, not a proof"
CONVENTION_A		= "a"
CONVENTION_B		= "b"
CONVENTION_LABELS	= {
	CONVENTION_A: "F(v)^2 = F(w)^2 = 2(c-U): consistent with the energy relation 1/2 F(v)^2 = c - U",
	CONVENTION_B: "F(v) = F(w) = 2(c-U): literal normalization",
}
LEVEL_NEWTON_STEPS	= 8
LYAPUNOV_INTERVAL	= 0.05
LYAPUNOV_DT		= 1e-2
FLAG_DIRECTIONS		= 8


class HypothesisError(UsageError):
	"""A hypothesis of the criterion (reversibility, Riemannian metric) does not hold."""
	pass


class GridSpec(object):
	"""
	Sampling descriptor: count points per chart axis times directions unit covectors.

	box -- optional sub-box of the model's validity box
	"""
	def __init__(self, count=8, directions=None, box=None):
		if count < 1:
			raise UsageError("grid count must be positive")
		self.count = count
		self.directions = directions if directions is not None else count
		self.box = box

	def points(self, model):
		return utils.box_grid(self.box if self.box is not None else model.box, self.count)

	def unit_directions(self, n):
		return utils.directions(n, self.directions)

	def as_dict(self):
		return {"count": self.count, "directions": self.directions, "box": self.box}


class LevelSetSample(object):
	def __init__(self, energy, states, skipped, grid):
		self.energy = energy
		self.states = states
		self.skipped = skipped
		self.grid = grid

	def __len__(self):
		return len(self.states)


def _state_on_level(system, x, direction, c):
	"""p = r u with H(x, r u) = c; None when c <= U(x)."""
	model = system.model
	headroom = c - model.U(x)

	if headroom <= 0:
		return None
	# F* is 1-homogeneous: one Legendre solve fixes the radius
	fstar = finsler_core.dual_norm(model, x, direction)
	r = math.sqrt(2.0 * headroom) / fstar
	state = PhaseState(model, x, r * direction)

	for _ in range(LEVEL_NEWTON_STEPS):
		defect = system.energy(state) - c

		if abs(defect) <= 1e-12 * max(1.0, abs(c)):
			break
		scaled = r - defect / (state.fstar ** 2 / r)
		# L* is 1-homogeneous: v scales with p
		state = PhaseState(model, x, scaled * direction, state.v * (scaled / r))
		r = scaled
	return state


def sample_level_set(system, c, grid):
	"""
	States on H = c over grid points times unit covector directions. Points with c <= U(x)
	are skipped and counted.
	"""
	n = system.n
	states = []
	skipped = 0

	for x in grid.points(system.model):
		for u in grid.unit_directions(n):
			state = _state_on_level(system, x, u, c)

			if state is None:
				skipped += 1
				continue
			states.append(state)

	if skipped:
		logger.warning("level c=%g: %d samples skipped (c <= U)" % (c, skipped))
	logger.info("level c=%g: %d states" % (c, len(states)))
	return LevelSetSample(c, states, skipped, grid)


class ScanReport(object):
	"""
	Per-state maximum eigenvalue of the reduced curvature map and the global verdict.
	"""
	def __init__(self, energy, states, maxima, skipped):
		self.energy = energy
		self.states = states
		self.maxima = np.array(maxima, dtype=float)
		self.skipped = skipped

		if len(self.maxima):
			index = int(np.argmax(self.maxima))
			self.global_max = float(self.maxima[index])
			self.argmax = states[index]
		else:
			self.global_max = -math.inf
			self.argmax = None
		self.margin = -self.global_max
		self.anosov = None
		self.lyapunov = None

	@property
	def passed(self):
		return len(self.maxima) > 0 and self.margin > 0

	def rows(self):
		"""CSV rows: x..., p..., max eigenvalue."""
		return [list(s.x) + list(s.p) + [m] for s, m in zip(self.states, self.maxima)]

	def as_dict(self):
		result = {
			"energy": self.energy,
			"states": len(self.states),
			"skipped": self.skipped,
			"global_max": self.global_max if len(self.maxima) else None,
			"argmax": {"x": self.argmax.x.tolist(), "p": self.argmax.p.tolist()} if self.argmax is not None else None,
			"margin": self.margin if len(self.maxima) else None,
			"pass": self.passed,
			"note": EVIDENCE_NOTE,
		}
		if self.anosov is not None:
			result["anosov"] = self.anosov
		if self.lyapunov is not None:
			result["lyapunov"] = self.lyapunov
		return result


def map_states(func, items, jobs):
	if jobs is None or jobs <= 1:
		return [func(item) for item in items]
	with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as executor:
		return list(executor.map(func, items))


def negativity_scan(system, sample, jobs=1):
	"""
	Maximum eigenvalue of the reduced curvature map at every sampled state; passes iff
	all are negative.
	"""
	model = system.model

	if model.dimension < 2:
		raise UsageError("negativity scan needs dimension >= 2")

	def evaluate(state):
		matrix = curvature.reduced_curvature_map(model, state).matrix
		return utils.max_eigenvalue(matrix, model.tol.jacobi_threshold)

	maxima = map_states(evaluate, sample.states, jobs)
	report = ScanReport(sample.energy, sample.states, maxima, sample.skipped)
	logger.info("scan c=%g: max eigenvalue %.6g, pass=%s" % (sample.energy, report.global_max, report.passed))
	return report


def sampled_flag_bound(model, grid, jobs=1):
	"""
	k = max flag curvature over grid points and unit directions.
	"""
	n = model.dimension
	pairs = [(x, u) for x in grid.points(model) for u in utils.directions(n, grid.directions)]
	values = map_states(lambda pair: curvature.max_flag_curvature(model, pair[0], pair[1]), pairs, jobs)
	return float(max(values))


def _require_reversible(model):
	report = finsler_core.validate_metric(model, samples=6)

	if not report.reversible:
		raise HypothesisError("the Anosov criterion needs a reversible metric; sampled reversibility defect %.3e"
			% report.checks["reversibility"][0])


def _anosov_slack(model, x, u, c, k, convention):
	"""
	Largest slack LHS + 4k(c-U)^2 over the flag directions w at (x, v), v along u.
	"""
	headroom = c - model.U(x)
	target = math.sqrt(2.0 * headroom) if convention == CONVENTION_A else 2.0 * headroom
	v = u * target / model.F(x, u)
	state = PhaseState.from_tangent(model, x, v)
	terms = curvature.form_terms(model, state)
	g = finsler_core.fundamental_tensor(model, x, v)
	basis = curvature.reduced_basis(g, v)
	_, _, dU = curvature.potential_derivatives(model, x, v)
	quadratic = terms[curvature.TERM_HESSIAN] + terms[curvature.TERM_CHERN]
	coefficient = 3.0 / (4.0 * headroom ** 2)
	best = -math.inf

	for combo in utils.directions(basis.shape[1], FLAG_DIRECTIONS):
		w_hat = basis.dot(combo)
		w = w_hat * target / model.F(x, w_hat)
		lhs = w.dot(quadratic).dot(w) + coefficient * dU.dot(w) ** 2
		best = max(best, lhs)
	return best, best + 4.0 * k * headroom ** 2


def anosov_criterion(system, c, grid, convention="both", k=None, jobs=1):
	"""
	Sufficient Anosov condition on the level H = c under one or both normalization conventions,
	cross-checked against the negativity scan on the same grid.

	k -- flag curvature bound, sampled on the grid when None
	return -- report dict
	"""
	model = system.model
	n = model.dimension

	if n < 2:
		raise UsageError("Anosov criterion needs dimension >= 2")
	_require_reversible(model)
	conventions = (CONVENTION_A, CONVENTION_B) if convention == "both" else (convention,)

	for name in conventions:
		if name not in CONVENTION_LABELS:
			raise UsageError("unknown convention %r" % name)
	if k is None:
		k = sampled_flag_bound(model, grid, jobs)
	points = [x for x in grid.points(model) if model.U(x) < c]
	dirs = utils.directions(n, grid.directions)
	results = {}

	for name in conventions:
		pairs = [(x, u) for x in points for u in dirs]
		values = map_states(lambda pair: _anosov_slack(model, pair[0], pair[1], c, k, name), pairs, jobs)
		lhs = [value[0] for value in values]
		slack = [value[1] for value in values]
		index = int(np.argmax(slack)) if slack else None
		results[name] = {
			"label": CONVENTION_LABELS[name],
			"lhs_max": float(max(lhs)) if lhs else None,
			"max_slack": float(slack[index]) if slack else None,
			"argmax_x": pairs[index][0].tolist() if slack else None,
			"pass": bool(slack) and slack[index] < 0,
		}
	scan = negativity_scan(system, sample_level_set(system, c, grid), jobs)
	consistent = not (results.get(CONVENTION_A, {}).get("pass") and not scan.passed)

	if not consistent:
		logger.warning("criterion passed under convention (a) but the negativity scan failed")
	return {
		"energy": c,
		"k": k,
		"conventions": results,
		"scan_pass": scan.passed,
		"scan_max": scan.global_max,
		"consistent": consistent,
		"skipped_points": len(grid.points(model)) - len(points),
		"note": EVIDENCE_NOTE,
	}


def riemannian_corollary(system, c, grid, k=None, jobs=1):
	"""
	Riemannian form of the criterion:

		max_x ||Hess U|| / (2(c-U)) + 3 ||grad U||^2 / (4(c-U)^2) < -k

	with operator norms from a symmetric eigen-solve, plus the sharper max-over-flags form.
	"""
	model = system.model
	n = model.dimension

	if not model.is_riemannian():
		raise HypothesisError("the Riemannian corollary needs a Riemannian metric (Cartan tensor nonzero)")
	if k is None:
		k = sampled_flag_bound(model, grid, jobs) if n >= 2 else 0.0
	probe = np.eye(n)[0]
	norm_max = -math.inf
	flag_max = -math.inf

	for x in grid.points(model):
		headroom = c - model.U(x)

		if headroom <= 0:
			continue
		g = finsler_core.fundamental_tensor(model, x, probe)
		_, hessian, dU = curvature.potential_derivatives(model, x, probe)
		lower = np.linalg.cholesky(g)
		linv = np.linalg.inv(lower)
		normalized = linv.dot(hessian).dot(linv.T)
		hess_norm = float(np.max(np.abs(utils.jacobi_eigh(normalized)[0])))
		grad_norm2 = float(dU.dot(np.linalg.solve(g, dU)))
		norm_max = max(norm_max, hess_norm / (2.0 * headroom) + 3.0 * grad_norm2 / (4.0 * headroom ** 2))
		gradient = linv.dot(dU)
		combined = normalized / (2.0 * headroom) + 3.0 * np.outer(gradient, gradient) / (4.0 * headroom ** 2)
		flag_max = max(flag_max, utils.max_eigenvalue(combined))

	return {
		"energy": c,
		"k": k,
		"lhs_operator_norm": norm_max,
		"lhs_max_over_flags": flag_max,
		"minus_k": -k,
		"pass": norm_max < -k,
		"pass_max_over_flags": flag_max < -k,
		"note": EVIDENCE_NOTE,
	}


def sasaki_gram(model, state):
	"""
	Inner product on T_lambda T*M: g(a, a) + b^T g^-1 b with b the part of dp not produced by
	the Chern horizontal lift of a.
	"""
	n = model.dimension
	tensors = finsler_core.chern_connection(model, state.x, state.v)
	split = np.eye(2 * n)
	split[n:, :n] = -np.einsum("kij,k->ji", tensors.Gamma, state.p)
	block = np.block([[tensors.g, np.zeros((n, n))], [np.zeros((n, n)), tensors.g_inv]])
	return split.T.dot(block).dot(split)


def _restricted_frame(system, state):
	model = system.model

	if model.dimension == 1:
		vertical = jacobi_lab.vertical_frame(model, state, KIND_NONREDUCED).columns
		complement = jacobi_lab.canonical_complement(model, state, KIND_NONREDUCED).columns
		return np.hstack([complement, vertical]), False
	vertical = jacobi_lab.vertical_frame(model, state, KIND_REDUCED).columns
	complement = jacobi_lab.canonical_complement(model, state, KIND_REDUCED).columns
	return np.hstack([complement, vertical]), True


def lyapunov_spectrum(system, state0, T, transient=0.0, dt=LYAPUNOV_DT, interval=LYAPUNOV_INTERVAL):
	"""
	Lyapunov exponents of the flow restricted to T H_c modulo the flow direction, by QR
	reorthogonalization in the Sasaki inner product. For n = 1 the whole phase space is used.

	transient -- initial time excluded from the averages; the interval ending there is clipped
	return -- exponents, descending
	"""
	if T <= transient:
		raise UsageError("T must exceed the transient")
	frame, restricted = _restricted_frame(system, state0)
	state = state0
	sums = np.zeros(frame.shape[1])
	t = 0.0

	while t < T - 1e-12:
		h = min(interval, T - t)

		if transient - t > 1e-12:
			h = min(h, transient - t)
		counted = t >= transient - 1e-12
		phi, state = dynamics.monodromy(system, state, h, max(1, int(round(h / dt))))
		frame = phi.dot(frame)
		gram = sasaki_gram(system.model, state)

		if restricted:
			field = system.vector_field(state)
			coefficients = field.dot(gram).dot(frame) / field.dot(gram).dot(field)
			frame = frame - np.outer(field, coefficients)
		lower = np.linalg.cholesky(gram)
		q, r = np.linalg.qr(lower.T.dot(frame))
		signs = np.sign(np.diag(r))
		signs[signs == 0] = 1.0
		r = signs[:, None] * r
		frame = np.linalg.solve(lower.T, q * signs[None, :])
		t += h

		if counted:
			sums += np.log(np.abs(np.diag(r)))

	exponents = sums / (T - transient)
	logger.info("Lyapunov spectrum over T=%g: %r" % (T, exponents.tolist()))
	return np.sort(exponents)[::-1]


def lyapunov_estimate(system, state0, T, transient=0.0, dt=LYAPUNOV_DT, interval=LYAPUNOV_INTERVAL):
	"""Top Lyapunov exponent on the energy level."""
	return float(lyapunov_spectrum(system, state0, T, transient, dt, interval)[0])
