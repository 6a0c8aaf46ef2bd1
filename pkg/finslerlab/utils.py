"""
Utility functions.
"""
import itertools
import logging
import math

import numpy as np

from finslerlab.finslerlab import JACOBI_THRESHOLD, NumericalError

logger = logging.getLogger("finslerlab")

JACOBI_MAX_SWEEPS	= 60
SAMPLE_SEED		= 20240917

# cache: (dimension, count) -> directions
_direction_cache = {}


def jacobi_eigh(matrix, threshold=JACOBI_THRESHOLD, max_sweeps=JACOBI_MAX_SWEEPS):
	"""
	Eigen-decomposition of a small symmetric matrix by the cyclic Jacobi method.

	matrix -- symmetric k x k array (k may be 0)
	threshold -- stop when the off-diagonal Frobenius norm falls below threshold * scale
	return -- (eigenvalues ascending, eigenvectors as columns)
	"""
	a = np.array(matrix, dtype=float)
	k = a.shape[0]

	if k == 0:
		return np.zeros(0), np.zeros((0, 0))
	a = 0.5 * (a + a.T)
	vectors = np.eye(k)
	scale = max(1.0, np.max(np.abs(a)))

	for sweep in range(max_sweeps):
		off = math.sqrt(np.sum(a * a) - np.sum(np.diag(a) ** 2))

		if off <= threshold * scale:
			break

		for p in range(k - 1):
			for q in range(p + 1, k):
				if abs(a[p, q]) < 1e-300:
					continue
				theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
				t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
				c = 1.0 / math.sqrt(t * t + 1.0)
				s = t * c
				rot = np.eye(k)
				rot[p, p] = c
				rot[q, q] = c
				rot[p, q] = s
				rot[q, p] = -s
				a = rot.T.dot(a).dot(rot)
				vectors = vectors.dot(rot)
	else:
		raise NumericalError("Jacobi eigen-solver did not converge in %d sweeps" % max_sweeps)

	values = np.diag(a).copy()
	order = np.argsort(values, kind="stable")
	return values[order], vectors[:, order]


def max_eigenvalue(matrix, threshold=JACOBI_THRESHOLD):
	"""Return the largest eigenvalue of a symmetric matrix, -inf for the empty matrix."""
	values, _ = jacobi_eigh(matrix, threshold)
	return values[-1] if len(values) else -math.inf


def gram_schmidt(vectors, metric, drop_smallest=0):
	"""
	Orthonormalize vectors with respect to a positive-definite metric.

	vectors -- list of n-vectors, processed in order
	metric -- n x n symmetric matrix
	drop_smallest -- number of vectors to discard, the ones with the smallest residual norm
	return -- array with orthonormal columns
	"""
	vectors = [np.asarray(vec, dtype=float) for vec in vectors]

	if drop_smallest:
		norms = [math.sqrt(max(vec.dot(metric).dot(vec), 0.0)) for vec in vectors]
		# stable: ties keep the earlier vector
		order = sorted(range(len(vectors)), key=lambda i: (norms[i], -i))
		dropped = set(order[:drop_smallest])
		vectors = [vec for i, vec in enumerate(vectors) if i not in dropped]

	basis = []

	for vec in vectors:
		w = vec.copy()

		# twice is enough
		for _ in range(2):
			for b in basis:
				w = w - b.dot(metric).dot(w) * b
		norm = math.sqrt(max(w.dot(metric).dot(w), 0.0))

		if norm < 1e-12:
			raise NumericalError("Gram-Schmidt: linearly dependent input")
		basis.append(w / norm)

	n = metric.shape[0]
	return np.array(basis).T if basis else np.zeros((n, 0))


def directions(n, count):
	"""
	Deterministic unit directions in R^n.

	n=1 gives the two signs, n=2 equally spaced angles, higher dimensions normalized Gaussian
	draws from a fixed seed.
	"""
	key = (n, count)

	if key in _direction_cache:
		return _direction_cache[key]

	if n == 1:
		result = np.array([[1.0], [-1.0]])
	elif n == 2:
		angles = 2.0 * math.pi * np.arange(count) / count
		result = np.stack([np.cos(angles), np.sin(angles)], axis=1)
	else:
		rng = np.random.RandomState(SAMPLE_SEED + n)
		raw = rng.standard_normal((count, n))
		result = raw / np.linalg.norm(raw, axis=1)[:, None]
	_direction_cache[key] = result
	return result


def box_grid(box, count):
	"""
	Tensor grid over a coordinate box, endpoints included.

	box -- list of (low, high) per coordinate
	count -- points per axis
	return -- list of n-vectors in lexicographic order
	"""
	axes = [np.linspace(low, high, count) if count > 1 else np.array([0.5 * (low + high)]) for low, high in box]
	return [np.array(point) for point in itertools.product(*axes)]


def random_points(box, count, seed=SAMPLE_SEED, margin=0.0):
	"""
	Reproducible uniform samples inside a box shrunk by margin (fraction of each side).
	"""
	rng = np.random.RandomState(seed)
	lows = np.array([low + margin * (high - low) for low, high in box])
	highs = np.array([high - margin * (high - low) for low, high in box])
	return [lows + (highs - lows) * rng.random_sample(len(box)) for _ in range(count)]


def symplectic_matrix(n):
	"""
	Matrix J of sigma = dx^i ^ dp_i in (x, p) coordinates: sigma(a, b) = a^T J b.
	"""
	eye = np.eye(n)
	zero = np.zeros((n, n))
	return np.block([[zero, eye], [-eye, zero]])


def relative_error(approx, reference):
	approx = np.asarray(approx, dtype=float)
	reference = np.asarray(reference, dtype=float)

	if approx.size == 0:
		return 0.0
	return float(np.max(np.abs(approx - reference)) / max(1.0, np.max(np.abs(reference))))
