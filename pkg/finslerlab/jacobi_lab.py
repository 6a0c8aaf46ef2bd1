"""
Jacobi curves of extremals, canonical complements, the Schwarzian curvature oracle,
normal moving frames and conjugate points.

All frames are 2n x k column matrices in T_lambda T*M with coordinates (dx, dp) and
sigma(a, b) = a^T J b, J = utils.symplectic_matrix(n).

Reference splitting at lambda = (x, p), v = L*(p), basis w_1..w_k orthonormal for g_v
(all of T_xM for the nonreduced kind, the g_v-orthocomplement of v for the reduced kind):

	vertical	V_a = (0, g w_a)
	complement	T_a = (w_a, Gamma^k_ij p_k w_a^i)				nonreduced
			T_a = chern lift of w_a - (g(w_a, grad U) / F^2) (0, p)		reduced

With this choice sigma(T_a, V_b) = delta_ab, the Jacobi curve J(t) = Phi(t)^-1 V_lambda(t) is
the graph {V u + T S(t) u} with S(0) = 0 and Sdot(0) = -I (velocity negative definite), and

	R = 1/2 Sdot^-1 Sdddot - 3/4 (Sdot^-1 Sddot)^2

reproduces the closed-form curvature map in the basis w wherever C(., ., grad U) vanishes.
Elsewhere closed_form_vs_oracle reports the disagreement as STATUS_MISMATCH.
"""
import logging
import math

import numpy as np

from finslerlab.finslerlab import NumericalError, UsageError
from finslerlab import curvature
from finslerlab.curvature import KIND_NONREDUCED, KIND_REDUCED
from finslerlab import dynamics
from finslerlab import finsler_core
from finslerlab import utils

logger = logging.getLogger("finslerlab")

SAMPLE_OFFSETS		= (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
SAMPLE_STEPS		= 16
FRAME_DT		= 0.01
CONJUGATE_DT		= 1e-2
INDEPENDENCE		= 1e-10
VELOCITY_DEGENERACY	= 1e-8
DARBOUX_FATAL		= 1e3
SCHWARZIAN_RISK		= "matrix Schwarzian normalization for noncommuting Sdot, Sddot is validated empirically against the closed form"
STATUS_AGREE		= "agree"
STATUS_MISMATCH		= "mismatch"
STATUS_FAIL		= "fail"
CARTAN_POTENTIAL_GAP	= "closed form has no Cartan-tensor terms in grad U; off by terms growing with grad U where C(., ., grad U) != 0"


class GraphDegeneracyError(NumericalError):
	"""The Jacobi curve is not a graph over the splitting (conjugate point inside the window)."""
	pass


class VelocityError(NumericalError):
	"""Jacobi-curve velocity degenerate or not sign definite."""
	pass


class DarbouxDriftError(NumericalError):
	pass


class SubspaceFrame(object):
	"""
	Column frame of a subspace of (R^2n, sigma).

	columns -- 2n x k
	J -- symplectic matrix of the ambient space
	"""
	def __init__(self, columns, J):
		self.columns = np.asarray(columns, dtype=float)
		self.J = J

		if self.columns.shape[1] and self.min_singular_value() <= INDEPENDENCE:
			raise NumericalError("frame columns are linearly dependent")

	@property
	def k(self):
		return self.columns.shape[1]

	def sigma(self, other=None):
		"""Matrix sigma(col_a, other_b)."""
		other = self.columns if other is None else getattr(other, "columns", other)
		return self.columns.T.dot(self.J).dot(other)

	def min_singular_value(self):
		return float(np.linalg.svd(self.columns, compute_uv=False)[-1])

	def isotropy_defect(self):
		return float(np.max(np.abs(self.sigma()))) if self.k else 0.0

	def is_lagrangian(self, tol=1e-8):
		return 2 * self.k == self.columns.shape[0] and self.isotropy_defect() <= tol


def _basis(model, state, kind):
	g = finsler_core.fundamental_tensor(model, state.x, state.v)

	if kind == KIND_NONREDUCED:
		return g, curvature.full_basis(g)
	if kind == KIND_REDUCED:
		if model.dimension < 2:
			raise UsageError("reduced Jacobi curves need dimension >= 2")
		return g, curvature.reduced_basis(g, state.v)
	raise UsageError("unknown kind %r" % kind)


def chern_lift(tensors, p, w):
	"""(w, Gamma^k_ij p_k w^i) for each column of w (n x k)."""
	w = np.asarray(w, dtype=float).reshape(len(p), -1)
	dp = np.einsum("kij,k,ia->ja", tensors.Gamma, p, w)
	return np.vstack([w, dp])


def vertical_frame(model, state, kind=KIND_NONREDUCED):
	J = utils.symplectic_matrix(model.dimension)
	g, basis = _basis(model, state, kind)
	return SubspaceFrame(np.vstack([np.zeros_like(basis), g.dot(basis)]), J)


def canonical_complement_nonreduced(model, state, basis=None):
	"""
	Chern horizontal lift of a g_v-orthonormal basis of T_xM.
	"""
	tensors = finsler_core.chern_connection(model, state.x, state.v)

	if basis is None:
		basis = curvature.full_basis(tensors.g)
	return SubspaceFrame(chern_lift(tensors, state.p, basis), utils.symplectic_matrix(model.dimension))


def canonical_complement_reduced(model, state, basis=None):
	"""
	Chern lift of the orthocomplement basis corrected by -(g(w, grad U)/F^2) (0, p), so that
	every column lies in ker dH.
	"""
	n = model.dimension

	if n < 2:
		raise UsageError("reduced complement needs dimension >= 2")
	tensors = finsler_core.chern_connection(model, state.x, state.v)

	if basis is None:
		basis = curvature.reduced_basis(tensors.g, state.v)
	_, _, dU = curvature.potential_derivatives(model, state.x, state.v, tensors)
	lift = chern_lift(tensors, state.p, basis)
	correction = np.outer(np.concatenate([np.zeros(n), state.p]), dU.dot(basis)) / state.fstar ** 2
	return SubspaceFrame(lift - correction, utils.symplectic_matrix(n))


def canonical_complement(model, state, kind, basis=None):
	if kind == KIND_NONREDUCED:
		return canonical_complement_nonreduced(model, state, basis)
	return canonical_complement_reduced(model, state, basis)


class GraphCoordinates(object):
	"""
	Jacobi curve sampled in graph coordinates over the reference splitting (V, T).

	S -- list of k x k matrices at times
	"""
	def __init__(self, kind, state, basis, vertical, complement, times, S, conditioning, asymmetry):
		self.kind = kind
		self.state = state
		self.basis = basis
		self.vertical = vertical
		self.complement = complement
		self.times = np.array(times, dtype=float)
		self.S = S
		self.conditioning = conditioning
		self.asymmetry = asymmetry

	def at(self, t):
		for ti, Si in zip(self.times, self.S):
			if abs(ti - t) <= 1e-15 * max(1.0, abs(t)):
				return Si
		raise UsageError("no sample at t=%r" % t)


def _pulled_back_vertical(system, state, kind, t):
	"""
	Phi(t)^-1 applied to the (reduced) vertical space at lambda(t).
	"""
	n = system.n

	if t == 0:
		phi, end = np.eye(2 * n), state
	else:
		phi, end = dynamics.monodromy(system, state, t, SAMPLE_STEPS)

	if kind == KIND_NONREDUCED:
		covectors = np.eye(n)
	else:
		# vertical covectors annihilating v(t)
		_, _, vt = np.linalg.svd(end.v.reshape(1, n))
		covectors = vt[1:].T
	vertical = np.vstack([np.zeros((n, covectors.shape[1])), covectors])
	return np.linalg.solve(phi, vertical)


def _graph_matrix(system, state, kind, vertical, complement, pulled):
	k = vertical.shape[1]
	columns = [vertical, complement]

	if kind == KIND_REDUCED:
		hamiltonian = system.vector_field(state).reshape(-1, 1)
		liouville = system.liouville_field(state).reshape(-1, 1)
		columns += [hamiltonian, liouville]
	frame = np.hstack(columns)
	coefficients = np.linalg.solve(frame, pulled)
	a = coefficients[:k]
	b = coefficients[k:2 * k]
	sv = np.linalg.svd(a, compute_uv=False)
	conditioning = float(sv[-1] / max(sv[0], 1e-300))

	if conditioning < system.model.tol.graph_cond:
		raise GraphDegeneracyError("Jacobi curve not a graph over the splitting (conditioning %.3e)" % conditioning)
	return b.dot(np.linalg.inv(a)), conditioning


def jacobi_curve_samples(system, state, kind, times=None):
	"""
	Graph coordinates S(t) of the Jacobi curve at the requested times.

	times -- sample times, default schwarzian_h * SAMPLE_OFFSETS
	"""
	model = system.model

	if times is None:
		times = [model.tol.schwarzian_h * offset for offset in SAMPLE_OFFSETS]
	_, basis = _basis(model, state, kind)
	vertical = vertical_frame(model, state, kind).columns
	complement = canonical_complement(model, state, kind, basis).columns
	S = []
	conditioning = math.inf
	asymmetry = 0.0

	for t in times:
		pulled = _pulled_back_vertical(system, state, kind, t)
		St, cond = _graph_matrix(system, state, kind, vertical, complement, pulled)
		asymmetry = max(asymmetry, float(np.max(np.abs(St - St.T))) if St.size else 0.0)
		conditioning = min(conditioning, cond)
		S.append(St)

	if asymmetry > 1e-7:
		logger.warning("graph coordinates asymmetric by %.3e" % asymmetry)
	return GraphCoordinates(kind, state, basis, vertical, complement, times, S, conditioning, asymmetry)


def _derivatives(samples):
	"""Sdot, Sddot, Sdddot at t = 0 from the h * SAMPLE_OFFSETS stencil."""
	times = samples.times
	positive = times[times > 0]
	h = float(np.max(positive))
	S = {round(t / h, 6): Si for t, Si in zip(times, samples.S)}
	required = [-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0]

	if any(key not in S for key in required):
		raise UsageError("samples must lie at h * %r" % (SAMPLE_OFFSETS,))
	# stencil spacing e = h/2
	e = 0.5 * h
	m2, m1, m05, s0, p05, p1, p2 = [S[key] for key in required]
	first = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * e)
	second = (-m2 + 16.0 * m1 - 30.0 * s0 + 16.0 * p1 - p2) / (12.0 * e * e)
	third_coarse = (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * e ** 3)
	third_fine = (p1 - 2.0 * p05 + 2.0 * m05 - m1) / (2.0 * (0.5 * e) ** 3)
	third = (4.0 * third_fine - third_coarse) / 3.0
	return first, second, third


def schwarzian_curvature(samples):
	"""
	Curvature map of the sampled Jacobi curve:

		R = 1/2 Sdot^-1 Sdddot - 3/4 (Sdot^-1 Sddot)^2, symmetrized.
	"""
	first, second, third = _derivatives(samples)
	k = first.shape[0]

	if k == 0:
		return np.zeros((0, 0))
	velocity = 0.5 * (first + first.T)
	eigenvalues = utils.jacobi_eigh(velocity)[0]
	scale = max(1.0, float(np.max(np.abs(eigenvalues))))

	if np.min(np.abs(eigenvalues)) < VELOCITY_DEGENERACY * scale:
		raise VelocityError("Jacobi-curve velocity is degenerate: %r" % eigenvalues.tolist())
	if not (np.all(eigenvalues < 0) or np.all(eigenvalues > 0)):
		raise VelocityError("Jacobi-curve velocity is not sign definite: %r" % eigenvalues.tolist())
	A = np.linalg.solve(first, second)
	B = np.linalg.solve(first, third)
	R = 0.5 * B - 0.75 * A.dot(A)
	return 0.5 * (R + R.T)


class ComparisonReport(object):
	"""
	Closed-form curvature map against the Schwarzian oracle, same basis.

	status -- STATUS_AGREE within tolerance, STATUS_MISMATCH outside it where
		C(., ., grad U) != 0 (cartan_term above tol.cartan_zero), STATUS_FAIL otherwise
	"""
	def __init__(self, kind, state, closed, oracle, tolerance, conditioning, cartan_term=0.0, cartan_zero=0.0):
		self.kind = kind
		self.state = state
		self.closed = closed
		self.oracle = oracle
		self.tolerance = tolerance
		self.conditioning = conditioning
		self.cartan_term = cartan_term
		self.entry_error = utils.relative_error(oracle, closed)

		if closed.size:
			spectrum_closed = utils.jacobi_eigh(closed)[0]
			spectrum_oracle = utils.jacobi_eigh(oracle)[0]
			self.spectral_error = float(np.max(np.abs(spectrum_closed - spectrum_oracle)))
		else:
			self.spectral_error = 0.0
		self.passed = self.entry_error <= tolerance

		if self.passed:
			self.status = STATUS_AGREE
		elif cartan_term > cartan_zero:
			self.status = STATUS_MISMATCH
		else:
			self.status = STATUS_FAIL

	def as_dict(self):
		result = {
			"kind": self.kind,
			"x": self.state.x.tolist(),
			"p": self.state.p.tolist(),
			"closed_form": self.closed.tolist(),
			"oracle": self.oracle.tolist(),
			"relative_error": self.entry_error,
			"spectral_error": self.spectral_error,
			"tolerance": self.tolerance,
			"graph_conditioning": self.conditioning,
			"cartan_potential_term": self.cartan_term,
			"passed": self.passed,
			"status": self.status,
			"known_risk": SCHWARZIAN_RISK,
		}
		if self.status == STATUS_MISMATCH:
			result["discrepancy"] = CARTAN_POTENTIAL_GAP
		return result


def closed_form_vs_oracle(system, state, kind):
	model = system.model
	tensors = finsler_core.chern_connection(model, state.x, state.v)
	closed = curvature.curvature_map(model, state, kind).matrix
	samples = jacobi_curve_samples(system, state, kind)
	oracle = schwarzian_curvature(samples)
	report = ComparisonReport(kind, state, closed, oracle, model.tol.compare_rel, samples.conditioning,
		curvature.cartan_potential_term(model, state, tensors), model.tol.cartan_zero)

	if report.status == STATUS_FAIL:
		logger.warning("%s comparison failed at x=%r: rel %.3e" % (kind, state.x.tolist(), report.entry_error))
	else:
		logger.info("%s comparison at x=%r: %s, rel %.3e" % (kind, state.x.tolist(), report.status, report.entry_error))
	return report


class NormalFrameState(object):
	"""
	Normal moving frame along [0, T].

	E, F -- lists of 2n x k frames
	R -- list of k x k curvature matrices
	darboux -- max Darboux defect per sample
	vertical -- max |dx part of Phi E| per sample (zero when E spans the Jacobi curve)
	"""
	def __init__(self, kind, times, E, F, R, darboux, vertical, jacobi):
		self.kind = kind
		self.times = np.array(times)
		self.E = E
		self.F = F
		self.R = R
		self.darboux = np.array(darboux)
		self.vertical = np.array(vertical)
		self.jacobi = jacobi

	def max_darboux_defect(self):
		return float(np.max(self.darboux))

	def as_dict(self):
		return {
			"kind": self.kind,
			"times": self.times.tolist(),
			"R": [r.tolist() for r in self.R],
			"darboux_defect": self.darboux.tolist(),
			"vertical_defect": self.vertical.tolist(),
			"jacobi_defect": self.jacobi,
		}


def darboux_defect(E, F, J):
	k = E.shape[1]
	return float(max(np.max(np.abs(E.T.dot(J).dot(E))), np.max(np.abs(F.T.dot(J).dot(F))),
		np.max(np.abs(E.T.dot(J).dot(F) - np.eye(k)))))


def _vertical_part(system, kind, state, transported):
	"""
	Split Phi E at lambda(t) into (0, zeta) + c H(lambda(t)), return (zeta, residual dx).
	"""
	n = system.n
	dx = transported[:n]
	dp = transported[n:]

	if kind == KIND_REDUCED:
		field = system.vector_field(state)
		g = finsler_core.fundamental_tensor(system.model, state.x, state.v)
		c = state.v.dot(g).dot(dx) / state.fstar ** 2
		dx = dx - np.outer(field[:n], c)
		dp = dp - np.outer(field[n:], c)
	return dp, dx


def normal_frame_propagate(system, state, kind=KIND_REDUCED, T=1.0, dt=FRAME_DT, rotation=None, probes=None):
	"""
	Solve E' = F, F' = -E R(t) with R(t) the closed-form curvature map along the extremal.

	rotation -- constant orthogonal k x k matrix applied to the initial frame
	probes -- 2n x m fixed vectors X; their frame coordinates beta = E^T J X obey
		beta'' + R beta = 0 and are compared with -zeta . dx of Phi(t) X
	return -- NormalFrameState
	"""
	model = system.model
	n = system.n
	dim = 2 * n
	J = system.J
	_, basis = _basis(model, state, kind)
	E0 = vertical_frame(model, state, kind).columns
	F0 = -canonical_complement(model, state, kind, basis).columns
	k = E0.shape[1]

	if rotation is not None:
		E0 = E0.dot(rotation)
		F0 = F0.dot(rotation)
	if probes is None:
		probes = np.hstack([E0, F0])
	m = probes.shape[1]
	sizes = [dim, dim * dim, dim * k, dim * k, k * m, k * m]
	offsets = np.cumsum([0] + sizes)
	last_v = [state.v]

	def unpack(y):
		parts = [y[offsets[i]:offsets[i + 1]] for i in range(len(sizes))]
		return (parts[0], parts[1].reshape(dim, dim), parts[2].reshape(dim, k), parts[3].reshape(dim, k),
			parts[4].reshape(k, m), parts[5].reshape(k, m))

	def curvature_at(z, phi, E):
		current = system.state(z, guess=last_v[0])
		zeta, _ = _vertical_part(system, kind, current, phi.dot(E))
		w = np.linalg.solve(finsler_core.fundamental_tensor(model, current.x, current.v), zeta)
		Q = curvature.form_matrix(model, current, kind)
		return current, w.T.dot(Q).dot(w)

	def field(y):
		z, phi, E, F, beta, dbeta = unpack(y)
		current, R = curvature_at(z, phi, E)
		return np.concatenate([system.vector_field(current), system.jacobian(current).dot(phi).ravel(),
			F.ravel(), (-E.dot(R)).ravel(), dbeta.ravel(), (-R.dot(beta)).ravel()])

	y = np.concatenate([state.vector(), np.eye(dim).ravel(), E0.ravel(), F0.ravel(),
		E0.T.dot(J).dot(probes).ravel(), F0.T.dot(J).dot(probes).ravel()])
	steps = max(1, int(math.ceil(abs(T) / dt - 1e-9)))
	h = T / steps
	times, Es, Fs, Rs, darboux, vertical = [], [], [], [], [], []
	jacobi = 0.0

	for step in range(steps + 1):
		z, phi, E, F, beta, _ = unpack(y)
		current, R = curvature_at(z, phi, E)
		last_v[0] = current.v
		zeta, residual = _vertical_part(system, kind, current, phi.dot(E))
		moved = phi.dot(probes)
		# sigma((0, zeta), (dx, dp)) = -zeta . dx
		beta_flow = -zeta.T.dot(moved[:n])
		jacobi = max(jacobi, float(np.max(np.abs(beta - beta_flow))))
		times.append(step * h)
		Es.append(E.copy())
		Fs.append(F.copy())
		Rs.append(0.5 * (R + R.T))
		darboux.append(darboux_defect(E, F, J))
		vertical.append(float(np.max(np.abs(residual))))

		if step < steps:
			y = dynamics.rk4_step(field, y, h)

	result = NormalFrameState(kind, times, Es, Fs, Rs, darboux, vertical, jacobi)

	defect = result.max_darboux_defect()

	if defect > DARBOUX_FATAL * model.tol.darboux:
		raise DarbouxDriftError("normal frame Darboux defect %.3e, frame no longer symplectic" % defect)
	if defect > model.tol.darboux:
		logger.warning("normal frame Darboux defect %.3e exceeds budget" % defect)
	return result


def frame_jacobi_check(result):
	"""return -- max |beta_frame - beta_flow| over the run"""
	return result.jacobi


def frame_rotation_defect(system, state, kind, T, rotation, dt=FRAME_DT):
	"""
	max_t |O R_rotated(t) O^T - R(t)| for a constant orthogonal O.
	"""
	plain = normal_frame_propagate(system, state, kind, T, dt)
	rotated = normal_frame_propagate(system, state, kind, T, dt, rotation=rotation)
	return max(float(np.max(np.abs(rotation.dot(b).dot(rotation.T) - a))) for a, b in zip(plain.R, rotated.R))


def _conjugate_indicator(system, kind, state0, phi, end, reduced_vertical):
	n = system.n

	if kind == KIND_NONREDUCED:
		block = phi[:n, n:]
	else:
		block = np.hstack([phi[:n].dot(reduced_vertical), end.v.reshape(-1, 1)])
	norms = np.linalg.norm(block, axis=0)
	return float(np.linalg.det(block) / max(np.prod(norms), 1e-300))


def conjugate_points(system, state, kind=KIND_NONREDUCED, T=math.pi, dt=CONJUGATE_DT):
	"""
	Times in (0, T] where the pulled-back vertical space meets the reference vertical space,
	located by sign changes of a normalized determinant and refined by bisection.
	"""
	model = system.model
	reduced_vertical = vertical_frame(model, state, kind).columns if kind == KIND_REDUCED else None
	trajectory = dynamics.variational_flow(system, state, T, dt)
	values = [_conjugate_indicator(system, kind, state, phi, s, reduced_vertical)
		for phi, s in zip(trajectory.monodromy[1:], trajectory.states[1:])]
	times = trajectory.times[1:]
	found = []

	for i in range(1, len(values)):
		if values[i - 1] == 0.0:
			found.append(float(times[i - 1]))
			continue
		if values[i - 1] * values[i] >= 0:
			continue
		a, b = float(times[i - 1]), float(times[i])
		phi_a = trajectory.monodromy[i]
		state_a = trajectory.states[i]
		value_a = values[i - 1]

		while b - a > model.tol.bisection:
			mid = 0.5 * (a + b)
			phi_step, state_mid = dynamics.monodromy(system, state_a, mid - float(times[i - 1]), 8)
			value_mid = _conjugate_indicator(system, kind, state, phi_step.dot(phi_a), state_mid, reduced_vertical)

			if value_mid * value_a > 0:
				a, value_a = mid, value_mid
			else:
				b = mid
		found.append(0.5 * (a + b))
	logger.info("conjugate points (%s): %r" % (kind, found))
	return found
