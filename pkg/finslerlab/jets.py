"""
Truncated multivariate Taylor arithmetic (jets) and a finite-difference oracle.

A Jet over m variables of order d stores, for every multi-index alpha with |alpha| <= d,
the Taylor coefficient d^alpha f / alpha! at the base point. Coefficients may be tensors:
coeffs has shape (K,) + shape, K = C(m+d, d). Multi-indices are kept in graded
lexicographic order, so the table of order d-1 is a prefix of the table of order d
and truncation is slicing.

Example:

	xs, ys = seed([0.0], [2.0], ["y1"], 2)
	jet = evaluate(parse("y1^2", 1), [0.0], [2.0], ["y1"], 2)
	jet.coeffs			# [4, 4, 1]
	partial(jet, (2,))		# 2
"""
import itertools
import logging
import math

import numpy as np

from finslerlab.finslerlab import NumericalError, UsageError
from finslerlab.exprlang import PROG_VARIABLE, KIND_X

logger = logging.getLogger("finslerlab")

MAX_ORDER		= 4
ZERO_GUARD		= 1e-12

# default finite-difference base steps per derivative order, scaled by max(1, |coordinate|)
FD_STEPS		= {1: 1e-3, 2: 2e-3, 3: 5e-3, 4: 1e-2}

# central stencils: order -> (offsets, weights), derivative = sum(w * f(x + o*h)) / h^order
STENCILS		= {
	1: ((-1, 1), (-0.5, 0.5)),
	2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
	3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
	4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


class JetOrderError(UsageError):
	"""Requested derivative exceeds the order of a jet (or the supported maximum)."""
	pass


class JetDomainError(NumericalError):
	"""Series composition outside the domain of a primitive."""
	pass


def _multi_indices(m, degree):
	if m == 0:
		return [()] if degree == 0 else []
	result = []

	for first in range(degree, -1, -1):
		for rest in _multi_indices(m - 1, degree - first):
			result.append((first,) + rest)
	return result


class _Table(object):
	"""
	Multi-index bookkeeping for (m, d): index list, positions, factorials, product table
	and derivative shifts.
	"""
	def __init__(self, m, d):
		self.m = m
		self.d = d
		self.indices = [alpha for k in range(d + 1) for alpha in _multi_indices(m, k)]
		self.position = {alpha: i for i, alpha in enumerate(self.indices)}
		self.size = len(self.indices)
		self.factorial = np.array([np.prod([math.factorial(a) for a in alpha]) for alpha in self.indices], dtype=float)
		ia, ib, ic = [], [], []

		for i, a in enumerate(self.indices):
			for j, b in enumerate(self.indices):
				c = tuple(x + y for x, y in zip(a, b))

				if sum(c) <= d:
					ia.append(i)
					ib.append(j)
					ic.append(self.position[c])
		self.ia = np.array(ia, dtype=int)
		self.ib = np.array(ib, dtype=int)
		self.ic = np.array(ic, dtype=int)
		self._shifts = {}

	def shift(self, var):
		"""
		return -- (source positions, multipliers) mapping this table onto the table of
			order d-1 for d/dvar
		"""
		if var not in self._shifts:
			lower = table(self.m, self.d - 1)
			positions = []
			multipliers = []

			for beta in lower.indices:
				alpha = list(beta)
				alpha[var] += 1
				positions.append(self.position[tuple(alpha)])
				multipliers.append(alpha[var])
			self._shifts[var] = (np.array(positions, dtype=int), np.array(multipliers, dtype=float))
		return self._shifts[var]


# cache: (m, d) -> _Table
_tables = {}


def table(m, d):
	key = (m, d)

	if key not in _tables:
		_tables[key] = _Table(m, d)
	return _tables[key]


def _expand(coeffs, shape):
	"""Reshape (K,)+s coefficients so they broadcast against (K,)+shape."""
	extra = len(shape) - (coeffs.ndim - 1)
	if extra > 0:
		coeffs = coeffs.reshape((coeffs.shape[0],) + (1,) * extra + coeffs.shape[1:])
	return coeffs


def _is_jet(value):
	return isinstance(value, Jet)


class Jet(object):
	"""
	Truncated Taylor expansion with (possibly tensor valued) coefficients.

	coeffs -- array of shape (K,) + shape
	nvars -- number of active variables m
	order -- truncation order d <= 4
	"""
	# let numpy operands defer to our reflected operators
	__array_ufunc__ = None

	def __init__(self, coeffs, nvars, order):
		if order > MAX_ORDER:
			raise JetOrderError("jet order %d exceeds maximum %d" % (order, MAX_ORDER))
		self.coeffs = np.asarray(coeffs, dtype=float)
		self.nvars = nvars
		self.order = order

	@classmethod
	def constant(cls, value, nvars, order):
		value = np.asarray(value, dtype=float)
		coeffs = np.zeros((table(nvars, order).size,) + value.shape)
		coeffs[0] = value
		return cls(coeffs, nvars, order)

	@classmethod
	def variable(cls, slot, value, nvars, order):
		jet = cls.constant(value, nvars, order)
		if order > 0:
			jet.coeffs[1 + slot] = 1.0
		return jet

	@property
	def value(self):
		return self.coeffs[0]

	@property
	def shape(self):
		return self.coeffs.shape[1:]

	def truncate(self, order):
		if order > self.order:
			raise JetOrderError("cannot raise jet order from %d to %d" % (self.order, order))
		if order == self.order:
			return self
		return Jet(self.coeffs[:table(self.nvars, order).size], self.nvars, order)

	def __getitem__(self, key):
		if not isinstance(key, tuple):
			key = (key,)
		return Jet(self.coeffs[(slice(None),) + key], self.nvars, self.order)

	def __len__(self):
		return self.shape[0]

	def _align(self, other):
		if other.nvars != self.nvars:
			raise UsageError("jets over %d and %d variables cannot be combined" % (self.nvars, other.nvars))
		order = min(self.order, other.order)
		return self.truncate(order), other.truncate(order), order

	#
	# arithmetic
	#
	def __neg__(self):
		return Jet(-self.coeffs, self.nvars, self.order)

	def __add__(self, other):
		if _is_jet(other):
			a, b, order = self._align(other)
			shape = np.broadcast_shapes(a.shape, b.shape)
			return Jet(_expand(a.coeffs, shape) + _expand(b.coeffs, shape), self.nvars, order)
		other = np.asarray(other, dtype=float)
		shape = np.broadcast_shapes(self.shape, other.shape)
		coeffs = np.broadcast_to(_expand(self.coeffs, shape), (self.coeffs.shape[0],) + shape).copy()
		coeffs[0] = coeffs[0] + other
		return Jet(coeffs, self.nvars, self.order)

	__radd__ = __add__

	def __sub__(self, other):
		return self + (-other)

	def __rsub__(self, other):
		return (-self) + other

	def __mul__(self, other):
		if not _is_jet(other):
			other = np.asarray(other, dtype=float)
			shape = np.broadcast_shapes(self.shape, other.shape)
			return Jet(_expand(self.coeffs, shape) * other, self.nvars, self.order)
		a, b, order = self._align(other)
		tab = table(self.nvars, order)
		shape = np.broadcast_shapes(a.shape, b.shape)
		products = _expand(a.coeffs, shape)[tab.ia] * _expand(b.coeffs, shape)[tab.ib]
		coeffs = np.zeros((tab.size,) + shape)
		np.add.at(coeffs, tab.ic, products)
		return Jet(coeffs, self.nvars, order)

	__rmul__ = __mul__

	def __truediv__(self, other):
		if not _is_jet(other):
			return Jet(self.coeffs / np.asarray(other, dtype=float), self.nvars, self.order)
		result = self * other.reciprocal()
		# leading coefficient as a single correctly rounded division
		result.coeffs[0] = self.coeffs[0] / other.coeffs[0]
		return result

	def __rtruediv__(self, other):
		other = np.asarray(other, dtype=float)
		result = self.reciprocal() * other
		result.coeffs[0] = other / self.coeffs[0]
		return result

	def __pow__(self, k):
		if not isinstance(k, int) or k < 0:
			return self.power(k)
		result = Jet.constant(np.ones(self.shape), self.nvars, self.order)

		for _ in range(k):
			result = result * self
		return result

	#
	# elementary functions by series composition
	#
	def _compose(self, derivatives):
		"""
		f(a0 + h) = sum_k f^(k)(a0) / k! h^k

		derivatives -- f^(k)(a0) for k = 0..order
		"""
		h = Jet(self.coeffs.copy(), self.nvars, self.order)
		h.coeffs[0] = 0.0
		coeffs = np.zeros_like(self.coeffs)
		coeffs[0] = derivatives[0]
		term = h

		for k in range(1, self.order + 1):
			coeffs = coeffs + term.coeffs * (derivatives[k] / math.factorial(k))
			if k < self.order:
				term = term * h
		return Jet(coeffs, self.nvars, self.order)

	def _guard(self, name, strictly_positive=False, allow_negative=True):
		a0 = self.coeffs[0]

		if not allow_negative and np.any(a0 < 0):
			raise JetDomainError("%s of negative value %r" % (name, a0))
		if strictly_positive and np.any(a0 <= 0):
			raise JetDomainError("%s of nonpositive value %r" % (name, a0))
		if self.order > 0 and np.any(np.abs(a0) < ZERO_GUARD):
			raise JetDomainError("%s expanded at |a0| < %g" % (name, ZERO_GUARD))
		return a0

	def _apply(self, func_math, func_np, a0):
		if np.ndim(a0) == 0:
			return np.float64(func_math(float(a0)))
		return func_np(a0)

	def reciprocal(self):
		a0 = self.coeffs[0]

		if np.any(np.abs(a0) < ZERO_GUARD):
			raise JetDomainError("reciprocal of |a0| < %g" % ZERO_GUARD)
		inv = 1.0 / a0
		derivatives = [(-1) ** k * math.factorial(k) * inv ** (k + 1) for k in range(self.order + 1)]
		derivatives[0] = inv
		return self._compose(derivatives)

	def sqrt(self):
		a0 = self._guard("sqrt", allow_negative=False)
		return self._power_series(0.5, self._apply(math.sqrt, np.sqrt, a0))

	def power(self, r):
		"""Real power a^r, r fractional or negative."""
		r = float(r)
		a0 = self._guard("power", allow_negative=False)
		return self._power_series(r, self._apply(lambda a: math.pow(a, r), lambda a: np.power(a, r), a0))

	def _power_series(self, r, value):
		a0 = self.coeffs[0]

		if r < 0 and np.any(a0 == 0):
			raise JetDomainError("zero raised to negative power")
		derivatives = [value]
		falling = 1.0

		for k in range(1, self.order + 1):
			falling *= r - k + 1
			derivatives.append(falling * np.power(a0, r - k))
		return self._compose(derivatives)

	def exp(self):
		value = self._apply(math.exp, np.exp, self.coeffs[0])
		return self._compose([value] * (self.order + 1))

	def log(self):
		a0 = self._guard("log", strictly_positive=True, allow_negative=False)
		derivatives = [self._apply(math.log, np.log, a0)]

		for k in range(1, self.order + 1):
			derivatives.append((-1) ** (k - 1) * math.factorial(k - 1) / a0 ** k)
		return self._compose(derivatives)

	def sin(self):
		a0 = self.coeffs[0]
		s = self._apply(math.sin, np.sin, a0)
		c = self._apply(math.cos, np.cos, a0)
		return self._compose(([s, c, -s, -c] * 2)[:self.order + 1])

	def cos(self):
		a0 = self.coeffs[0]
		s = self._apply(math.sin, np.sin, a0)
		c = self._apply(math.cos, np.cos, a0)
		return self._compose(([c, -s, -c, s] * 2)[:self.order + 1])

	#
	# differentiation
	#
	def derivative(self, var):
		"""
		d/d(variable var), one order lower.
		"""
		if self.order == 0:
			raise JetOrderError("cannot differentiate an order-0 jet")
		positions, multipliers = table(self.nvars, self.order).shift(var)
		coeffs = self.coeffs[positions] * multipliers.reshape((-1,) + (1,) * len(self.shape))
		return Jet(coeffs, self.nvars, self.order - 1)

	def grad(self):
		"""Gradient as a new trailing axis of length nvars, one order lower."""
		parts = [self.derivative(var).coeffs for var in range(self.nvars)]
		return Jet(np.stack(parts, axis=-1), self.nvars, self.order - 1)

	def __repr__(self):
		return "Jet(nvars=%d, order=%d, shape=%r, value=%r)" % (self.nvars, self.order, self.shape, self.value)


def lift(value, nvars, order):
	"""Return value as a Jet, constants become constant jets."""
	return value if _is_jet(value) else Jet.constant(value, nvars, order)


def stack(items, nvars, order):
	"""
	Stack jets and constants along a new leading axis of the value shape.
	"""
	jets = [lift(item, nvars, order) for item in items]
	order = min(jet.order for jet in jets)
	return Jet(np.stack([jet.truncate(order).coeffs for jet in jets], axis=1), nvars, order)


def value_of(item):
	return item.value if _is_jet(item) else np.asarray(item, dtype=float)


def _einsum_pair(s1, s2, out, a, b):
	if not _is_jet(a) and not _is_jet(b):
		return np.einsum("%s,%s->%s" % (s1, s2, out), a, b)
	if not _is_jet(b):
		return Jet(np.einsum("...%s,%s->...%s" % (s1, s2, out), a.coeffs, b), a.nvars, a.order)
	if not _is_jet(a):
		return Jet(np.einsum("%s,...%s->...%s" % (s1, s2, out), a, b.coeffs), b.nvars, b.order)
	a, b, order = a._align(b)
	tab = table(a.nvars, order)
	products = np.einsum("...%s,...%s->...%s" % (s1, s2, out), a.coeffs[tab.ia], b.coeffs[tab.ib])
	coeffs = np.zeros((tab.size,) + products.shape[1:])
	np.add.at(coeffs, tab.ic, products)
	return Jet(coeffs, a.nvars, order)


def einsum(subscripts, *operands):
	"""
	Einstein summation over jets and arrays, explicit "->" required. Operands are folded
	pairwise from the left.

	subscripts -- e.g. "ij,j->i"
	"""
	inputs, output = subscripts.replace(" ", "").split("->")
	terms = list(zip(inputs.split(","), operands))

	while len(terms) > 1:
		(s1, a), (s2, b) = terms[0], terms[1]
		rest = "".join(s for s, _ in terms[2:]) + output
		keep = "".join(dict.fromkeys(c for c in s1 + s2 if c in rest))
		terms[:2] = [(keep, _einsum_pair(s1, s2, keep, a, b))]
	s, a = terms[0]

	if not _is_jet(a):
		return np.einsum("%s->%s" % (s, output), a)
	return Jet(np.einsum("...%s->...%s" % (s, output), a.coeffs), a.nvars, a.order)


def inv(matrix):
	"""
	Inverse of a matrix jet by a truncated Neumann series around the value:
	(A0 + N)^-1 = sum_k (-A0^-1 N)^k A0^-1.
	"""
	if not _is_jet(matrix):
		return np.linalg.inv(matrix)
	try:
		a0_inv = np.linalg.inv(matrix.coeffs[0])
	except np.linalg.LinAlgError:
		raise JetDomainError("singular matrix in jet inverse")

	nilpotent = matrix - matrix.coeffs[0]
	step = einsum("ij,jk->ik", -a0_inv, nilpotent)
	term = Jet.constant(a0_inv, matrix.nvars, matrix.order)
	result = term

	for _ in range(matrix.order):
		term = einsum("ij,jk->ik", step, term)
		result = result + term
	result.coeffs[0] = a0_inv
	return result


def _parse_variable(name):
	if isinstance(name, tuple):
		return name
	match = PROG_VARIABLE.match(name)

	if match is None:
		raise UsageError("not a variable name: %r" % name)
	return match.group(1), int(match.group(2))


def seed(x, y, active, order):
	"""
	Build a variable assignment for jet evaluation.

	x, y -- base point
	active -- variable names ("x1", "y2", ...) or (kind, index) pairs; their order fixes the
		jet slots
	order -- truncation order d <= 4
	return -- (xs, ys), active entries are Jets, the rest floats
	"""
	if order > MAX_ORDER:
		raise JetOrderError("jet order %d exceeds maximum %d" % (order, MAX_ORDER))
	xs = [float(v) for v in x]
	ys = [float(v) for v in y]
	names = [_parse_variable(name) for name in active]
	m = len(names)

	for slot, (kind, index) in enumerate(names):
		target = xs if kind == KIND_X else ys
		target[index - 1] = Jet.variable(slot, target[index - 1], m, order)
	return xs, ys


def evaluate(ast, x, y, active, order):
	"""
	Evaluate an ExprAst over jets seeded at (x, y).

	return -- Jet over len(active) variables, constant results are lifted
	"""
	xs, ys = seed(x, y, active, order)
	return lift(ast.evaluate(xs, ys), len(active), order)


def phase_variables(n):
	"""Names x1..xn, y1..yn in jet slot order."""
	return ["x%d" % (i + 1) for i in range(n)] + ["y%d" % (i + 1) for i in range(n)]


def partial(jet, alpha):
	"""
	return -- alpha! * coefficient(alpha) = d^alpha f at the base point
	"""
	alpha = tuple(int(a) for a in alpha)

	if len(alpha) != jet.nvars:
		raise UsageError("multi-index %r does not match %d jet variables" % (alpha, jet.nvars))
	if sum(alpha) > jet.order:
		raise JetOrderError("|alpha| = %d exceeds jet order %d" % (sum(alpha), jet.order))
	tab = table(jet.nvars, jet.order)
	pos = tab.position[alpha]
	return jet.coeffs[pos] * tab.factorial[pos]


#
# finite differences
#
def _stencil_estimate(func, point, alpha, steps):
	factors = []

	for var, k in enumerate(alpha):
		if k == 0:
			continue
		offsets, weights = STENCILS[k]
		factors.append([(var, o * steps[var], w / steps[var] ** k) for o, w in zip(offsets, weights)])
	total = 0.0

	for combo in itertools.product(*factors):
		shifted = np.array(point, dtype=float)
		weight = 1.0

		for var, offset, w in combo:
			shifted[var] += offset
			weight *= w
		total += weight * func(shifted)
	return total


def fd_derivative(func, point, alpha, h=None):
	"""
	Central-difference estimate of d^alpha func with one Richardson extrapolation step.

	func -- callable on an m-vector returning a float
	point -- base point
	alpha -- multi-index of length m, |alpha| <= 4
	h -- base step (scalar or per variable); default FD_STEPS[|alpha|] * max(1, |coordinate|)
	"""
	alpha = tuple(int(a) for a in alpha)
	order = sum(alpha)
	point = np.asarray(point, dtype=float)

	if order > MAX_ORDER:
		raise JetOrderError("finite differences supported up to order %d" % MAX_ORDER)
	if order == 0:
		return float(func(point))

	if h is None:
		steps = FD_STEPS[order] * np.maximum(1.0, np.abs(point))
	else:
		steps = np.broadcast_to(np.asarray(h, dtype=float), point.shape).copy()
	coarse = _stencil_estimate(func, point, alpha, steps)
	fine = _stencil_estimate(func, point, alpha, 0.5 * steps)
	return (4.0 * fine - coarse) / 3.0


def fd_partial(ast, x, y, alpha, h=None):
	"""
	Finite-difference partial of an expression.

	alpha -- multi-index over (x1..xn, y1..yn), or over (y1..yn) only when of length n
	"""
	n = ast.dimension
	alpha = tuple(alpha)

	if len(alpha) == n:
		alpha = (0,) * n + alpha
	if len(alpha) != 2 * n:
		raise UsageError("multi-index %r does not match dimension %d" % (alpha, n))
	point = np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
	return fd_derivative(lambda z: ast.evaluate(list(z[:n]), list(z[n:])), point, alpha, h)
