"""
Riemann and Chern curvature tensors, flag curvature, potential derivatives and the
closed-form curvature maps of natural mechanical systems.

Index conventions: R[i, j, k, l] = R^i_{j kl}, P[i, j, k, l] = P^i_{j kl} and

	R(U, V)W	= R^i_{j kl} U^k V^l W^j
	P(U, V, W)	= P^i_{j kl} U^k V^l W^j

The curvature form at lambda = (x, p), v = L*(p), on tangent vectors a, b:

	Q(a, b) = g(R(a, v)v, b) + Hess U(a, b) + g(P(a, grad U, b), v)

and the reduced form adds (3 / F(v)^2) g(a, grad U) g(b, grad U) on the g_v-orthocomplement of v.
"""
import logging

import numpy as np

from finslerlab.finslerlab import NumericalError, UsageError
from finslerlab import finsler_core
from finslerlab import utils

logger = logging.getLogger("finslerlab")

KIND_NONREDUCED		= "nonreduced"
KIND_REDUCED		= "reduced"
KINDS			= (KIND_NONREDUCED, KIND_REDUCED)

SYMMETRY_BUDGET		= 1e-8
FLAG_DEGENERACY		= 1e-12

TERM_RIEMANN		= "riemann"
TERM_HESSIAN		= "hessian"
TERM_CHERN		= "chern"
TERM_RANK_ONE		= "gradient_rank_one"


class DegenerateFlagError(UsageError):
	pass


class AsymmetricFormError(NumericalError):
	"""Curvature map asymmetric beyond SYMMETRY_BUDGET before symmetrization."""
	pass


class CurvatureBundle(object):
	"""
	Curvature tensors at (x, v) together with the connection they were built from.
	"""
	def __init__(self, x, v, R, P, tensors):
		self.x = x
		self.v = v
		self.R = R
		self.P = P
		self.tensors = tensors
		self._lowered = None

	def lowered_R(self):
		"""R_ijkl = g_im R^m_jkl."""
		if self._lowered is None:
			self._lowered = np.einsum("im,mjkl->ijkl", self.tensors.g, self.R)
		return self._lowered

	def jacobi_operator(self, w):
		"""R(w, v)v."""
		return np.einsum("ijkl,j,k,l->i", self.R, self.v, w, self.v)

	def riemann_form(self):
		"""Matrix M with g(R(a, v)v, b) = a^T M b."""
		return np.einsum("ijkl,j,l,im->km", self.R, self.v, self.v, self.tensors.g)


def riemann_tensor(model, x, v):
	"""
	R and P from the order-1 jet of the Chern connection (order-4 jet of F^2).

		R^i_jkl = d_k Gamma^i_jl - d_l Gamma^i_jk + dGamma^i_jk/dy^m N^m_l - dGamma^i_jl/dy^m N^m_k
			+ Gamma^m_jl Gamma^i_mk - Gamma^m_jk Gamma^i_ml
		P^i_jkl = -dGamma^i_jk / dy^l
	"""
	model.check_fiber(x, v)
	n = model.dimension
	x = np.array(x, dtype=float)
	v = np.array(v, dtype=float)
	terms = finsler_core.connection_jets(model.f2_jet(x, v, 4), n, v)
	Gamma_jet = terms["Gamma"]
	Gamma = Gamma_jet.value
	N = terms["N"].value
	dGamma = Gamma_jet.grad().value
	dx = dGamma[..., :n]
	dy = dGamma[..., n:]

	R = np.einsum("ijlk->ijkl", dx) - dx \
		+ np.einsum("ijkm,ml->ijkl", dy, N) - np.einsum("ijlm,mk->ijkl", dy, N) \
		+ np.einsum("mjl,imk->ijkl", Gamma, Gamma) - np.einsum("mjk,iml->ijkl", Gamma, Gamma)
	P = -dy
	g = terms["g"].value
	tensors = finsler_core.TensorBundle(x, v, 0.5 * (g + g.T), terms["g_inv"].value, terms["C"].value,
		terms["gamma"].value, terms["G"].value, N, Gamma)
	return CurvatureBundle(x, v, R, P, tensors)


def flag_curvature(model, x, v, w, bundle=None):
	"""
	K = g(R(w, v)v, w) / (g(v, v) g(w, w) - g(v, w)^2), g = g_v.
	"""
	if bundle is None:
		bundle = riemann_tensor(model, x, v)
	g = bundle.tensors.g
	v = bundle.v
	w = np.asarray(w, dtype=float)
	gvv = v.dot(g).dot(v)
	gww = w.dot(g).dot(w)
	gvw = v.dot(g).dot(w)
	denominator = gvv * gww - gvw * gvw

	if denominator < FLAG_DEGENERACY * gvv * gww:
		raise DegenerateFlagError("flag spanned by v=%r and w=%r is degenerate" % (v.tolist(), w.tolist()))
	return float(bundle.jacobi_operator(w).dot(g).dot(w) / denominator)


def potential_derivatives(model, x, v, tensors=None):
	"""
	return -- (gradient g_v^-1 dU, Hessian d^2U - dU_k Gamma^k_ij), plus dU as third entry
	"""
	if tensors is None:
		tensors = finsler_core.chern_connection(model, x, v)
	n = model.dimension
	u = model.u_jet(x, 2)
	dU = u.grad().value
	ddU = u.grad().grad().value
	hessian = ddU - np.einsum("k,kij->ij", dU, tensors.Gamma)
	return tensors.g_inv.dot(dU), 0.5 * (hessian + hessian.T), dU


def form_terms(model, state, bundle=None):
	"""
	Coordinate matrices of the curvature form terms at a PhaseState.

	return -- dict term name -> n x n matrix, keys riemann, hessian, chern, gradient_rank_one
	"""
	if bundle is None:
		bundle = riemann_tensor(model, state.x, state.v)
	gradient, hessian, dU = potential_derivatives(model, state.x, state.v, bundle.tensors)
	p = bundle.tensors.g.dot(state.v)
	norm2 = state.fstar ** 2

	return {
		TERM_RIEMANN: bundle.riemann_form(),
		TERM_HESSIAN: hessian,
		# g(P(a, grad U, b), v) = p_i P^i_jkl a^k gradU^l b^j
		TERM_CHERN: np.einsum("ijkl,l,i->kj", bundle.P, gradient, p),
		TERM_RANK_ONE: (3.0 / norm2) * np.outer(dU, dU),
	}


def cartan_potential_term(model, state, tensors=None):
	"""
	max |C_ijk grad U^k| at a PhaseState.

	The closed form carries no Cartan-tensor terms in grad U. It agrees with the Jacobi-curve
	Schwarzian where this vanishes: Riemannian models, constant U, grad U parallel to v
	(C(., ., v) = 0). Elsewhere the two differ by terms growing with grad U.
	"""
	if tensors is None:
		tensors = finsler_core.chern_connection(model, state.x, state.v)
	gradient, _, _ = potential_derivatives(model, state.x, state.v, tensors)
	return float(np.max(np.abs(np.einsum("ijk,k->ij", tensors.C, gradient))))


def curvature_form(model, state, kind, a, b, terms=None):
	"""
	Evaluate the closed-form curvature bilinear form on tangent vectors a, b.
	"""
	if terms is None:
		terms = form_terms(model, state)
	total = terms[TERM_RIEMANN] + terms[TERM_HESSIAN] + terms[TERM_CHERN]

	if kind == KIND_REDUCED:
		total = total + terms[TERM_RANK_ONE]
	return float(np.asarray(a).dot(total).dot(b))


def form_matrix(model, state, kind, terms=None):
	"""Symmetrized coordinate matrix of curvature_form."""
	if terms is None:
		terms = form_terms(model, state)
	total = terms[TERM_RIEMANN] + terms[TERM_HESSIAN] + terms[TERM_CHERN]

	if kind == KIND_REDUCED:
		total = total + terms[TERM_RANK_ONE]
	return 0.5 * (total + total.T)


def full_basis(g):
	"""g-orthonormal basis of T_xM from the coordinate vectors."""
	n = g.shape[0]
	return utils.gram_schmidt(list(np.eye(n)), g)


def reduced_basis(g, v):
	"""
	g_v-orthonormal basis of {w : g_v(v, w) = 0}: Gram-Schmidt of e_i - (g(v, e_i)/F^2) v,
	smallest projection dropped.
	"""
	n = g.shape[0]
	norm2 = v.dot(g).dot(v)
	gv = g.dot(v)
	projected = [np.eye(n)[i] - (gv[i] / norm2) * v for i in range(n)]
	return utils.gram_schmidt(projected, g, drop_smallest=1)


class CurvatureMapMatrix(object):
	"""
	Curvature map in a g_v-orthonormal basis.

	state -- PhaseState
	kind -- KIND_NONREDUCED or KIND_REDUCED
	basis -- n x k, columns orthonormal for g_v
	matrix -- k x k symmetric
	terms -- term name -> k x k matrix
	asymmetry -- max |M - M^T| before symmetrization
	"""
	def __init__(self, state, kind, basis, matrix, terms, asymmetry):
		self.state = state
		self.kind = kind
		self.basis = basis
		self.matrix = matrix
		self.terms = terms
		self.asymmetry = asymmetry

	def eigenvalues(self):
		return utils.jacobi_eigh(self.matrix)[0]

	def as_dict(self, breakdown=False):
		result = {
			"kind": self.kind,
			"x": self.state.x.tolist(),
			"p": self.state.p.tolist(),
			"v": self.state.v.tolist(),
			"basis": self.basis.tolist(),
			"matrix": self.matrix.tolist(),
			"eigenvalues": self.eigenvalues().tolist(),
			"asymmetry": self.asymmetry,
		}
		if breakdown:
			result["terms"] = {name: term.tolist() for name, term in sorted(self.terms.items())}
		return result


def _assemble(state, kind, basis, coordinate_terms, names):
	terms = {name: basis.T.dot(coordinate_terms[name]).dot(basis) for name in names}
	total = sum(terms[name] for name in names) if names else np.zeros((basis.shape[1],) * 2)
	asymmetry = float(np.max(np.abs(total - total.T))) if total.size else 0.0
	scale = max(1.0, float(np.max(np.abs(total)))) if total.size else 1.0

	if asymmetry > SYMMETRY_BUDGET * scale:
		raise AsymmetricFormError("%s curvature map asymmetric by %.3e at x=%r" % (kind, asymmetry, state.x.tolist()))
	return CurvatureMapMatrix(state, kind, basis, 0.5 * (total + total.T), terms, asymmetry)


def nonreduced_curvature_map(model, state, terms=None):
	"""
	Curvature map on T_xM: riemann + hessian + chern terms.
	"""
	if terms is None:
		terms = form_terms(model, state)
	g = finsler_core.fundamental_tensor(model, state.x, state.v)
	return _assemble(state, KIND_NONREDUCED, full_basis(g), terms, (TERM_RIEMANN, TERM_HESSIAN, TERM_CHERN))


def reduced_curvature_map(model, state, terms=None):
	"""
	Curvature map on the g_v-orthocomplement of v, including the gradient rank-one term.
	For n = 1 the result is the empty 0 x 0 matrix.
	"""
	n = model.dimension
	g = finsler_core.fundamental_tensor(model, state.x, state.v)

	if n == 1:
		empty = np.zeros((0, 0))
		return CurvatureMapMatrix(state, KIND_REDUCED, np.zeros((1, 0)), empty,
			{name: empty for name in (TERM_RIEMANN, TERM_HESSIAN, TERM_CHERN, TERM_RANK_ONE)}, 0.0)
	if terms is None:
		terms = form_terms(model, state)
	return _assemble(state, KIND_REDUCED, reduced_basis(g, state.v), terms,
		(TERM_RIEMANN, TERM_HESSIAN, TERM_CHERN, TERM_RANK_ONE))


def curvature_map(model, state, kind, terms=None):
	if kind == KIND_NONREDUCED:
		return nonreduced_curvature_map(model, state, terms)
	if kind == KIND_REDUCED:
		return reduced_curvature_map(model, state, terms)
	raise UsageError("unknown curvature map kind %r" % kind)


def flag_curvature_operator(model, x, v, bundle=None):
	"""
	Flag curvatures with pole v: matrix of w -> g(R(w, v)v, .) / F(v)^2 on the
	g_v-orthocomplement of v, in a g_v-orthonormal basis.

	return -- (basis, matrix); eigenvalues are the extremal flag curvatures
	"""
	if model.dimension < 2:
		raise UsageError("flag curvature needs dimension >= 2")
	if bundle is None:
		bundle = riemann_tensor(model, x, v)
	g = bundle.tensors.g
	basis = reduced_basis(g, bundle.v)
	matrix = basis.T.dot(bundle.riemann_form()).dot(basis) / bundle.v.dot(g).dot(bundle.v)
	return basis, 0.5 * (matrix + matrix.T)


def max_flag_curvature(model, x, v, bundle=None):
	_, matrix = flag_curvature_operator(model, x, v, bundle)
	return utils.max_eigenvalue(matrix, model.tol.jacobi_threshold)


def check_symmetry(bundle, w1, w2):
	"""
	return -- |g(R(w1, v)v, w2) - g(R(w2, v)v, w1)|
	"""
	g = bundle.tensors.g
	a = bundle.jacobi_operator(w1).dot(g).dot(w2)
	b = bundle.jacobi_operator(w2).dot(g).dot(w1)
	if not np.isfinite(a - b):
		raise NumericalError("non-finite curvature entries")
	return abs(a - b)
