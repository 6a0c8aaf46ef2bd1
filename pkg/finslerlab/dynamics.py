"""
Natural mechanical Hamiltonian H = 1/2 F*(p)^2 + U(x) on T*M, its vector field in two
assemblies, RK4 flow integration and the variational (monodromy) flow.

Phase vectors are stacked z = (x, p). The symplectic form is sigma = dx^i ^ dp_i with matrix
utils.symplectic_matrix(n).

Vector field, with v = L*(p):

	xdot = v
	pdot = 1/2 dF^2/dx (x, v) - dU/dx				(Legendre assembly)
	pdot_j = N^i_j(x, v) p_i - dU/dx^j				(Chern-lift assembly)
"""
import logging
import math

import numpy as np

from finslerlab.finslerlab import NumericalError, UsageError
from finslerlab import finsler_core
from finslerlab.finsler_core import PhaseState
from finslerlab import utils

logger = logging.getLogger("finslerlab")

STEP_CONTROL_TOL	= 1e-11
STEP_UNDERFLOW		= 1e-9
LIE_BRACKET_STEP	= 1e-4


class BoxExitError(NumericalError):
	"""
	Trajectory left the validity box.

	time -- time of the first step outside
	position -- x at that time
	"""
	def __init__(self, time, position):
		NumericalError.__init__(self, "left validity box at t=%.6g, x=%r" % (time, list(position)))
		self.time = time
		self.position = position


class StepUnderflowError(NumericalError):
	pass


def rk4_step(func, y, h):
	"""One classical Runge-Kutta step for an autonomous field."""
	k1 = func(y)
	k2 = func(y + 0.5 * h * k1)
	k3 = func(y + 0.5 * h * k2)
	k4 = func(y + h * k3)
	return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class HamiltonianSystem(object):
	"""
	H(x, p) = 1/2 F*(x, p)^2 + U(x) for a MetricModel. Stateless apart from the model.
	"""
	def __init__(self, model):
		self.model = model
		self.n = model.dimension
		self.J = utils.symplectic_matrix(self.n)

	def state(self, z, guess=None):
		"""PhaseState for a stacked phase vector, Newton warm-started at guess."""
		n = self.n
		x = z[:n]
		p = z[n:]
		v = finsler_core.legendre_to_tangent(self.model, x, p, guess=guess)
		return PhaseState(self.model, x, p, v)

	def energy(self, state):
		return 0.5 * state.fstar ** 2 + self.model.U(state.x)

	def _dU(self, x):
		return self.model.u_jet(x, 1).grad().value

	def vector_field(self, state):
		"""
		(xdot, pdot) through the Legendre solve: pdot = 1/2 dF^2/dx - dU.
		"""
		n = self.n
		f2 = self.model.f2_jet(state.x, state.v, 1)
		dx = f2.grad().value[:n]
		return np.concatenate([state.v, 0.5 * dx - self._dU(state.x)])

	def lifted_vector_field(self, state):
		"""
		(xdot, pdot) as Chern horizontal lift of v plus the potential field: pdot = N^T p - dU.
		"""
		tensors = finsler_core.chern_connection(self.model, state.x, state.v)
		return np.concatenate([state.v, tensors.N.T.dot(state.p) - self._dU(state.x)])

	def jacobian(self, state):
		"""
		D(vector field) at state, 2n x 2n, by implicit differentiation of p = g(x, v) v:

			dv/dx = -g^-1 1/2 F_yx,  dv/dp = g^-1
			dpdot/dx = 1/2 F_xx + 1/2 F_xy dv/dx - d^2U,  dpdot/dp = 1/2 F_xy g^-1
		"""
		n = self.n
		hess = self.model.f2_jet(state.x, state.v, 2).grad().grad().value
		Fxx = hess[:n, :n]
		Fxy = hess[:n, n:]
		Fyx = hess[n:, :n]
		g = 0.25 * (hess[n:, n:] + hess[n:, n:].T)

		try:
			g_inv = np.linalg.inv(g)
		except np.linalg.LinAlgError:
			raise finsler_core.SingularMetricError("singular g in flow Jacobian")
		ddU = self.model.u_jet(state.x, 2).grad().grad().value
		dvdx = -0.5 * g_inv.dot(Fyx)
		Jpx = 0.5 * Fxx + 0.5 * Fxy.dot(dvdx) - ddU
		Jpp = 0.5 * Fxy.dot(g_inv)
		return np.block([[dvdx, g_inv], [Jpx, Jpp]])

	def liouville_field(self, state):
		"""p d/dp."""
		return np.concatenate([np.zeros(self.n), state.p])

	def chern_lift_field(self, state):
		"""Chern horizontal lift of v, the U = 0 part of the lifted assembly."""
		tensors = finsler_core.chern_connection(self.model, state.x, state.v)
		return np.concatenate([state.v, tensors.N.T.dot(state.p)])


def lie_bracket(system, field_a, field_b, z, h=LIE_BRACKET_STEP):
	"""
	[A, B](z) = DB(z) A(z) - DA(z) B(z) by central differences along A and B.

	field_a, field_b -- callables PhaseState -> 2n-vector
	"""
	state = system.state(z)
	a = field_a(state)
	b = field_b(state)

	def along(field, direction):
		plus = field(system.state(z + h * direction, guess=state.v))
		minus = field(system.state(z - h * direction, guess=state.v))
		return (plus - minus) / (2.0 * h)

	return along(field_b, a) - along(field_a, b)


class Trajectory(object):
	"""
	Sampled solution of the flow.

	times -- sample times
	states -- PhaseState per sample
	energies -- H per sample
	monodromy -- 2n x 2n matrices per sample or None
	"""
	def __init__(self, times, states, energies, monodromy=None):
		self.times = np.array(times)
		self.states = states
		self.energies = np.array(energies)
		self.monodromy = monodromy
		self.flagged = []

	@property
	def final(self):
		return self.states[-1]

	def energy_drift(self):
		return float(np.max(np.abs(self.energies - self.energies[0])))

	def symplectic_defect(self, J):
		if not self.monodromy:
			return 0.0
		return max(float(np.linalg.norm(phi.T.dot(J).dot(phi) - J)) for phi in self.monodromy)

	def as_dict(self):
		result = {
			"times": self.times.tolist(),
			"x": [s.x.tolist() for s in self.states],
			"p": [s.p.tolist() for s in self.states],
			"energy": self.energies.tolist(),
			"energy_drift": self.energy_drift(),
			"flagged": list(self.flagged),
		}
		if self.monodromy:
			result["monodromy_final"] = self.monodromy[-1].tolist()
		return result


def _integrate(system, state0, T, dt, variational, step_control, stride):
	model = system.model
	tol = model.tol
	n = system.n
	dim = 2 * n

	if dt is None:
		dt = tol.flow_dt
	if dt <= 0:
		raise UsageError("step must be positive, got %r" % dt)
	direction = 1.0 if T >= 0 else -1.0
	last_v = [state0.v]

	def field(y):
		state = system.state(y[:dim], guess=last_v[0])
		f = system.vector_field(state)

		if not variational:
			return f
		phi = y[dim:].reshape(dim, dim)
		return np.concatenate([f, system.jacobian(state).dot(phi).ravel()])

	y = state0.vector()
	if variational:
		y = np.concatenate([y, np.eye(dim).ravel()])

	times = [0.0]
	states = [state0]
	energies = [system.energy(state0)]
	monodromy = [np.eye(dim)] if variational else None
	t = 0.0
	h = dt
	steps = 0

	if not step_control:
		count = max(1, int(math.ceil(abs(T) / dt - 1e-9)))
		h = abs(T) / count

	while direction * (T - t) > 1e-12 * max(1.0, abs(T)):
		h = min(h, abs(T - t))

		if step_control:
			full = rk4_step(field, y, direction * h)
			half = rk4_step(field, rk4_step(field, y, 0.5 * direction * h), 0.5 * direction * h)
			error = float(np.max(np.abs(full[:dim] - half[:dim]))) / 15.0

			if error > STEP_CONTROL_TOL and h > STEP_UNDERFLOW * max(1.0, abs(T)):
				h *= 0.5
				logger.debug("step rejected at t=%.6g, error %.3e, h -> %.3e" % (t, error, h))
				continue
			if h <= STEP_UNDERFLOW * max(1.0, abs(T)) and error > STEP_CONTROL_TOL:
				raise StepUnderflowError("step size underflow at t=%.6g" % t)
			y_next = half
			t_next = t + direction * h

			if error < STEP_CONTROL_TOL / 32.0:
				h *= 2.0
		else:
			y_next = rk4_step(field, y, direction * h)
			t_next = t + direction * h

		y_next[:n] = model.wrap(y_next[:n])

		if not model.contains(y_next[:n]):
			raise BoxExitError(t_next, y_next[:n])
		state = system.state(y_next[:dim], guess=last_v[0])
		last_v[0] = state.v
		y, t = y_next, t_next
		steps += 1

		if steps % stride == 0 or direction * (T - t) <= 1e-12 * max(1.0, abs(T)):
			times.append(t)
			states.append(state)
			energies.append(system.energy(state))
			if variational:
				monodromy.append(y[dim:].reshape(dim, dim).copy())

	trajectory = Trajectory(times, states, energies, monodromy)
	drift = trajectory.energy_drift()

	if drift > tol.energy_drift * max(1.0, abs(T)):
		logger.warning("energy drift %.3e over |T|=%g exceeds budget" % (drift, abs(T)))
		trajectory.flagged.append("energy_drift")
	if variational:
		defect = trajectory.symplectic_defect(system.J)
		if defect > tol.symplectic:
			logger.warning("symplectic defect %.3e exceeds budget" % defect)
			trajectory.flagged.append("symplectic")
	logger.debug("integrated %d steps to T=%g" % (steps, T))
	return trajectory


def flow(system, state0, T, dt=None, step_control=False, stride=1):
	"""
	Integrate the Hamiltonian flow from state0 over [0, T] (T < 0 integrates backwards).

	dt -- step, default tol.flow_dt; initial step under step control
	step_control -- enable step doubling
	stride -- record every stride-th step (the final state is always recorded)
	"""
	return _integrate(system, state0, T, dt, False, step_control, stride)


def variational_flow(system, state0, T, dt=None, stride=1):
	"""
	Flow together with the monodromy Phi(t): Phidot = D(vector field) Phi, Phi(0) = I.
	"""
	return _integrate(system, state0, T, dt, True, False, stride)


def monodromy(system, state0, T, steps):
	"""
	Phi(T) and the final state with a fixed number of RK4 steps, no recording.
	"""
	trajectory = _integrate(system, state0, T, abs(T) / steps if T else 1.0, True, False, steps + 1)
	return trajectory.monodromy[-1], trajectory.final
