from finslerlab import finslerlab, exprlang, jets, finsler_core, curvature, dynamics, jacobi_lab, hyperbolicity, cli_reports, utils
from finslerlab.finslerlab import NumericalError, UsageError
from finslerlab.exprlang import BinOp, Call, Const, Power, Var
from finslerlab.finsler_core import MetricModel, PhaseState
from finslerlab.curvature import KIND_NONREDUCED, KIND_REDUCED

from fractions import Fraction
import json
import math
import os
import tempfile
import unittest

import numpy as np

# General testcases:
# - parser structure, errors with offsets, printing round trip
# - jet coefficients against closed forms and finite differences
# - pointwise identities on every catalog model
# - Riemannian regression against an independent Levi-Civita implementation
#   and the Gauss curvature of conformal metrics
# - curvature maps against the Schwarzian of sampled Jacobi curves
# - integrator invariants: energy, symplecticity, convergence order
# - normal frames, conjugate points, hyperbolicity scans, Lyapunov exponents
# - configuration files, reports and the command line
#
# Heavy acceptance cases run on reduced grids and sample counts.
#
# Closed form against Schwarzian agrees for Riemannian models and for U = 0. Where
# C(., ., grad U) != 0 the two differ and the report status is "mismatch".

WAVE_F2		= "(sqrt(y1^2 + y2^2) + 0.3*sin(x2)*y1)^2"
WAVE_BOX	= [(-3.0, 3.0), (-3.0, 3.0)]
TWO_PI		= 2.0 * math.pi


def print_header(msg):
	print()
	print(">>>>>>>>> " + msg + " <<<<<<<<<")


def catalog(name, potential=None):
	_, model = cli_reports.load_config(name, validate=False)

	if potential is not None:
		model = model.with_potential(potential)
	return model


def wave(potential="0"):
	return MetricModel(2, WAVE_F2, potential, box=WAVE_BOX, name="wave")


def flat_torus(potential="0"):
	return MetricModel(2, "y1^2 + y2^2", potential, topology=finsler_core.TOPOLOGY_TORUS,
		periods=[TWO_PI, TWO_PI], name="flat-torus")


def oscillator(k):
	return MetricModel(1, "y1^2", "%r*x1^2" % (0.5 * k), name="oscillator")


def unit_states(model, box, count):
	"""count states: random base points in box, equally spaced directions scaled to F(v) = 1"""
	states = []

	for x, u in zip(utils.random_points(box, count), utils.directions(model.dimension, count)):
		states.append(PhaseState.from_tangent(model, x, u / model.F(x, u)))
	return states


#
# oracles
#
def richardson(func, x, i, h=1e-3):
	"""d func / dx^i, central differences with one Richardson step"""
	def central(step):
		e = np.zeros(len(x))
		e[i] = step
		return (func(x + e) - func(x - e)) / (2.0 * step)
	return (4.0 * central(0.5 * h) - central(h)) / 3.0


def polarized_metric(model, x):
	"""g_ij of a quadratic F^2 by polarization, no jets involved"""
	n = model.dimension
	eye = np.eye(n)
	g = np.zeros((n, n))

	for i in range(n):
		for j in range(n):
			g[i, j] = 0.5 * (model.F2(x, eye[i] + eye[j]) - model.F2(x, eye[i]) - model.F2(x, eye[j]))
	return g


def levi_civita(model, x):
	"""Gamma[k, i, j] = Gamma^k_ij from finite differences of the polarized metric"""
	x = np.asarray(x, dtype=float)
	n = model.dimension
	g_inv = np.linalg.inv(polarized_metric(model, x))
	dg = np.array([richardson(lambda z: polarized_metric(model, z), x, l) for l in range(n)])
	# dg[l, i, j] = d_l g_ij
	lowered = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
	return np.einsum("kl,lij->kij", g_inv, lowered)


def levi_civita_riemann(model, x):
	"""R^i_jkl = d_k Gamma^i_jl - d_l Gamma^i_jk + Gamma^i_km Gamma^m_jl - Gamma^i_lm Gamma^m_jk"""
	x = np.asarray(x, dtype=float)
	n = model.dimension
	Gamma = levi_civita(model, x)
	dGamma = np.array([richardson(lambda z: levi_civita(model, z), x, k, h=2e-3) for k in range(n)])
	# dGamma[k, i, j, l] = d_k Gamma^i_jl
	R = np.einsum("kijl->ijkl", dGamma) - np.einsum("lijk->ijkl", dGamma) \
		+ np.einsum("ikm,mjl->ijkl", Gamma, Gamma) - np.einsum("ilm,mjk->ijkl", Gamma, Gamma)
	return R


def conformal_gauss_curvature(model, x):
	"""K = -Laplacian(log lambda) / (2 lambda) for F^2 = lambda(x) |y|^2"""
	x = np.asarray(x, dtype=float)
	e1 = np.array([1.0, 0.0])
	loglam = lambda z: math.log(model.F2(z, e1))
	laplacian = sum(richardson(lambda z: richardson(loglam, z, i), x, i) for i in range(2))
	return -laplacian / (2.0 * model.F2(x, e1))


class ExprlangTestCase(unittest.TestCase):
	def test_parse(self):
		print_header("parse")
		ast = exprlang.parse("y1^2 + y2^2", 2)
		root = ast.root
		self.assertTrue(isinstance(root, BinOp))
		self.assertEqual(root.op, "+")
		self.assertTrue(isinstance(root.left, Power))
		self.assertEqual(root.left.exponent, Fraction(2))
		self.assertEqual(root.left.base, Var("y", 1))
		self.assertEqual(root.right.base, Var("y", 2))
		print(ast)

		randers = exprlang.parse("sqrt(y1^2+y2^2) + 0.5*y1", 2)
		self.assertEqual(randers.count_nodes(), 12)
		self.assertEqual(randers.variables(), {("y", 1), ("y", 2)})

		# precedence: ^ > unary minus > * / > + -, ^ right associative
		self.assertEqual(exprlang.eval_scalar(exprlang.parse("-y1^2", 1), [0], [3]), -9.0)
		self.assertEqual(exprlang.eval_scalar(exprlang.parse("2^3^2", 1), [0], [0]), 512.0)
		self.assertEqual(exprlang.eval_scalar(exprlang.parse("8/4/2", 1), [0], [0]), 1.0)
		self.assertEqual(exprlang.eval_scalar(exprlang.parse("y1^(1/2)", 1), [0], [9]), 3.0)
		self.assertEqual(exprlang.eval_scalar(exprlang.parse("pow(y1, 3/2)", 1), [0], [4]), 8.0)

	def test_errors(self):
		print_header("parse errors")
		try:
			exprlang.parse("y1 +", 2)
			self.fail("incomplete expression parsed")
		except exprlang.ExprSyntaxError as e:
			print(e)
			self.assertEqual(e.span.start, 4)

		self.assertRaises(exprlang.ExprNameError, exprlang.parse, "z1 + y1", 2)
		self.assertRaises(exprlang.ExprNameError, exprlang.parse, "x3", 2)
		self.assertRaises(exprlang.ExprNameError, exprlang.parse, "abs(y1)", 2)
		self.assertRaises(exprlang.ExprSyntaxError, exprlang.parse, "y1^x1", 2)
		self.assertRaises(exprlang.ExprSyntaxError, exprlang.parse, "log(0)", 1)
		self.assertRaises(exprlang.ExprSyntaxError, exprlang.parse, "2 y1", 1)
		self.assertRaises(exprlang.ExprSyntaxError, exprlang.parse, "", 1)
		self.assertTrue(issubclass(exprlang.ExprSyntaxError, UsageError))

	def test_eval(self):
		print_header("eval_scalar")
		self.assertEqual(exprlang.eval_scalar(exprlang.parse("y1^2+y2^2", 2), [0, 0], [3, 4]), 25.0)
		self.assertEqual(exprlang.eval_scalar(exprlang.parse("sqrt(y1^2+y2^2)+0.5*y1", 2), [0, 0], [1, 0]), 1.5)

		try:
			exprlang.eval_scalar(exprlang.parse("2 + log(y1)", 1), [0], [-1])
			self.fail("log of negative value evaluated")
		except exprlang.ExprDomainError as e:
			print(e)
			self.assertEqual((e.span.start, e.span.end), (4, 11))
		self.assertRaises(exprlang.ExprDomainError, exprlang.eval_scalar, exprlang.parse("sqrt(y1)", 1), [0], [-1])
		self.assertRaises(exprlang.ExprDomainError, exprlang.eval_scalar, exprlang.parse("1/y1", 1), [0], [0])

	def test_hand_built(self):
		print_header("hand built trees")
		x = [0.37, -1.25]
		y = [2.5, 0.75]
		x1, x2, y1, y2 = Var("x", 1), Var("x", 2), Var("y", 1), Var("y", 2)

		def c(value):
			return Const(value, repr(value))

		def sq(node):
			return Power(node, Const(2.0, "2"), 2)

		corpus = [
			("y1^2 + y2^2", BinOp("+", sq(y1), sq(y2))),
			("sqrt(y1^2 + y2^2) + 0.5*y1", BinOp("+", Call("sqrt", BinOp("+", sq(y1), sq(y2))), BinOp("*", c(0.5), y1))),
			("(y1^2 + y2^2)/x2^2", BinOp("/", BinOp("+", sq(y1), sq(y2)), sq(x2))),
			("sin(x1)*y1", BinOp("*", Call("sin", x1), y1)),
			("exp(x1) - cos(x2)", BinOp("-", Call("exp", x1), Call("cos", x2))),
			("log(y1) / y2", BinOp("/", Call("log", y1), y2)),
			("y1^(1/3)", Power(y1, BinOp("/", Const(1.0, "1"), Const(3.0, "3")), Fraction(1, 3))),
			("pow(y1, 3/2)", Power(y1, BinOp("/", Const(3.0, "3"), Const(2.0, "2")), Fraction(3, 2), call_form=True)),
			("y1^4 + y2^4", BinOp("+", Power(y1, Const(4.0, "4"), 4), Power(y2, Const(4.0, "4"), 4))),
			("x1*x2 - y1*y2", BinOp("-", BinOp("*", x1, x2), BinOp("*", y1, y2))),
			("2*x1 + 3*x2 - 4", BinOp("-", BinOp("+", BinOp("*", c(2.0), x1), BinOp("*", c(3.0), x2)), c(4.0))),
			("y1^-2", Power(y1, exprlang.Neg(Const(2.0, "2")), -2)),
			("sqrt(sqrt(y1^4 + y2^4))", Call("sqrt", Call("sqrt", BinOp("+", Power(y1, Const(4.0, "4"), 4),
				Power(y2, Const(4.0, "4"), 4))))),
			("0.1*cos(x1)", BinOp("*", c(0.1), Call("cos", x1))),
			("(x1 - x2)*(x1 + x2)", BinOp("*", BinOp("-", x1, x2), BinOp("+", x1, x2))),
			("y1/y2/x1", BinOp("/", BinOp("/", y1, y2), x1)),
			("exp(-x1^2)", Call("exp", exprlang.Neg(sq(x1)))),
			("y1^3", Power(y1, Const(3.0, "3"), 3)),
			("(sqrt(y1^2 + y2^2) + 0.3*sin(x2)*y1)^2", sq(BinOp("+", Call("sqrt", BinOp("+", sq(y1), sq(y2))),
				BinOp("*", BinOp("*", c(0.3), Call("sin", x2)), y1)))),
			("1/(1 + x1^2 + x2^2)", BinOp("/", Const(1.0, "1"), BinOp("+", BinOp("+", Const(1.0, "1"), sq(x1)), sq(x2)))),
		]
		self.assertEqual(len(corpus), 20)

		for source, tree in corpus:
			parsed = exprlang.parse(source, 2)
			self.assertEqual(parsed.root, tree)
			self.assertEqual(exprlang.eval_scalar(parsed, x, y), float(tree.evaluate(x, y)))

	def test_format(self):
		print_header("format round trip")
		sources = [
			"y1^2 + y2^2", "-y1^2", "(-y1)^2", "x1 - (x2 - y1)", "x1/(x2*y1)", "(x1 + x2)*y1",
			"y1^(1/3)", "pow(y1 + y2, 3/2)", "2^3^2", "(2^3)^2", "sin(x1)*y1", "-(x1 + x2)",
			"(sqrt(y1^2 + y2^2) + 0.5*y1)^2", "x1 - -x2",
		]
		for source in sources:
			printed = exprlang.parse(source, 2).format()
			again = exprlang.parse(printed, 2)
			self.assertEqual(again.format(), printed)
			self.assertEqual(again.root, exprlang.parse(source, 2).root)
			print("%s -> %s" % (source, printed))


class JetsTestCase(unittest.TestCase):
	def test_seed(self):
		print_header("seed")
		jet = jets.evaluate(exprlang.parse("y1^2", 1), [0.0], [2.0], ["y1"], 2)
		self.assertEqual(jet.coeffs.tolist(), [4.0, 4.0, 1.0])

		ast = exprlang.parse("sqrt(y1^2 + y2^2) + 0.5*y1*sin(x1)", 2)
		constant = jets.evaluate(ast, [0.3, 0.1], [1.2, -0.7], [], 0)
		self.assertEqual(float(constant.value), exprlang.eval_scalar(ast, [0.3, 0.1], [1.2, -0.7]))

		quartic = jets.evaluate(exprlang.parse("y1^2*y2^2", 2), [0, 0], [0, 0], ["y1", "y2"], 4)
		self.assertEqual(int(np.count_nonzero(quartic.coeffs)), 1)
		self.assertEqual(jets.partial(quartic, (2, 2)), 4.0)
		self.assertRaises(jets.JetOrderError, jets.seed, [0], [1], ["y1"], 5)

	def test_order_zero_matches_scalar(self):
		print_header("order-0 jets")
		sources = ["y1^(1/3) + x1", "sqrt(y1)*exp(x1)", "pow(y1, 5/2)/cos(x1)", "log(y1^2 + 1)", "1/y1"]

		for source in sources:
			ast = exprlang.parse(source, 1)
			for x, y in ((0.2, 1.7), (-0.4, 0.3), (1.1, 2.9)):
				self.assertEqual(float(jets.evaluate(ast, [x], [y], [], 0).value), exprlang.eval_scalar(ast, [x], [y]))

	def test_partial(self):
		print_header("partial")
		jet = jets.evaluate(exprlang.parse("y1^2 + y2^2", 2), [0, 0], [1.5, -2.0], ["y1", "y2"], 2)
		self.assertEqual(jets.partial(jet, (2, 0)), 2.0)
		self.assertEqual(jets.partial(jet, (0, 0)), 6.25)
		self.assertEqual(jets.partial(jet, (1, 0)), 3.0)
		self.assertRaises(jets.JetOrderError, jets.partial, jet, (3, 0))

	def test_leibniz(self):
		print_header("Leibniz")
		vars2 = ["x1", "y1"]
		product = jets.evaluate(exprlang.parse("(1 + 2*x1 - 3*y1^2)*(x1*y1 - 4 + y1^3)", 1), [0.5], [-1.5], vars2, 4)
		left = jets.evaluate(exprlang.parse("1 + 2*x1 - 3*y1^2", 1), [0.5], [-1.5], vars2, 4)
		right = jets.evaluate(exprlang.parse("x1*y1 - 4 + y1^3", 1), [0.5], [-1.5], vars2, 4)
		self.assertEqual((left * right).coeffs.tolist(), product.coeffs.tolist())
		square = jets.evaluate(exprlang.parse("(x1 + 2*y1)^2", 1), [1.0], [3.0], vars2, 3)
		expanded = jets.evaluate(exprlang.parse("x1^2 + 4*x1*y1 + 4*y1^2", 1), [1.0], [3.0], vars2, 3)
		self.assertEqual(square.coeffs.tolist(), expanded.coeffs.tolist())

	def test_fd(self):
		print_header("finite differences")
		self.assertAlmostEqual(jets.fd_partial(exprlang.parse("y1^3", 1), [0], [1.3], (3,), h=1e-2), 6.0, delta=1e-6)
		self.assertAlmostEqual(jets.fd_partial(exprlang.parse("sin(x1)*y1", 1), [0.4], [2.0], (1, 1)),
			math.cos(0.4), delta=1e-7)

		ast = exprlang.parse("sqrt(y1^2 + y2^2)", 2)
		jet = jets.evaluate(ast, [0, 0], [1, 1], ["y1", "y2"], 3)
		for alpha in ((1, 0), (0, 1), (2, 0), (1, 1), (3, 0), (2, 1), (1, 2), (0, 3)):
			self.assertAlmostEqual(jets.partial(jet, alpha), jets.fd_partial(ast, [0, 0], [1, 1], alpha), delta=1e-5)

	def test_chain_rule(self):
		print_header("chain rule against finite differences")
		ast = exprlang.parse("exp(sin(x1)*y1) + log(2 + cos(y1)) + sqrt(1 + x1^2)*y1^(3/2)", 1)
		points = utils.random_points([(-1.0, 1.0), (1.0, 2.0)], 12)
		alphas = [(a, b) for a in range(5) for b in range(5) if 0 < a + b <= 4]

		for point in points:
			jet = jets.evaluate(ast, [point[0]], [point[1]], ["x1", "y1"], 4)
			for alpha in alphas:
				exact = jets.partial(jet, alpha)
				estimate = jets.fd_partial(ast, [point[0]], [point[1]], alpha)
				self.assertTrue(abs(exact - estimate) <= 1e-4 * max(1.0, abs(exact)),
					"alpha %r at %r: %r vs %r" % (alpha, point.tolist(), exact, estimate))

	def test_homogeneity(self):
		print_header("Euler identity on F^2 jets")
		model = wave()
		for x in utils.random_points(WAVE_BOX, 6):
			for y in utils.directions(2, 5):
				jet = model.f2_jet(x, 1.7 * y, 1, fiber_only=True)
				euler = sum(jets.partial(jet, (1, 0) if i == 0 else (0, 1)) * 1.7 * y[i] for i in range(2))
				self.assertTrue(abs(euler - 2.0 * model.F2(x, 1.7 * y)) <= 1e-10 * model.F2(x, 1.7 * y))

	def test_domain(self):
		print_header("jet domain errors")
		self.assertRaises(exprlang.ExprDomainError, jets.evaluate, exprlang.parse("sqrt(y1)", 1), [0], [0], ["y1"], 2)
		self.assertRaises(exprlang.ExprDomainError, jets.evaluate, exprlang.parse("1/y1", 1), [0], [0], ["y1"], 2)


class FinslerCoreTestCase(unittest.TestCase):
	def test_fundamental_tensor(self):
		print_header("fundamental tensor")
		euclid = catalog("euclidean2")
		np.testing.assert_allclose(finsler_core.fundamental_tensor(euclid, [1, 2], [0.3, -0.2]), np.eye(2), atol=1e-14)
		half = catalog("halfplane2")
		np.testing.assert_allclose(finsler_core.fundamental_tensor(half, [0.5, 2.0], [1.0, 3.0]), np.eye(2) / 4.0,
			atol=1e-14)

		randers = catalog("randers2")
		g = finsler_core.fundamental_tensor(randers, [0, 0], [1, 0])
		for i in range(2):
			for j in range(2):
				alpha = [0, 0]
				alpha[i] += 1
				alpha[j] += 1
				fd = 0.5 * jets.fd_partial(randers.f2, [0, 0], [1, 0], tuple(alpha))
				self.assertAlmostEqual(g[i, j], fd, delta=1e-6)
		self.assertRaises(finsler_core.ZeroSectionError, finsler_core.fundamental_tensor, euclid, [0, 0], [0, 0])

	def test_cartan(self):
		print_header("Cartan tensor")
		sphere = catalog("sphere2")
		self.assertTrue(np.max(np.abs(finsler_core.cartan_tensor(sphere, [0.3, -0.4], [1.0, 2.0]))) <= 1e-12)

		randers = catalog("randers2")
		v = np.array([1.0, 1.0])
		C = finsler_core.cartan_tensor(randers, [0, 0], v)
		self.assertTrue(np.max(np.abs(C.dot(v))) <= 1e-9)

		for i in range(2):
			for j in range(2):
				for k in range(2):
					alpha = [0, 0]
					for index in (i, j, k):
						alpha[index] += 1
					fd = 0.25 * jets.fd_partial(randers.f2, [0, 0], v, tuple(alpha))
					self.assertAlmostEqual(C[i, j, k], fd, delta=1e-5)

	def test_connection(self):
		print_header("Chern connection")
		euclid = catalog("euclidean2")
		bundle = finsler_core.chern_connection(euclid, [1, 1], [0.5, 0.2])
		for name in ("gamma", "N", "Gamma", "G"):
			self.assertTrue(np.max(np.abs(getattr(bundle, name))) == 0.0)

		for name in ("sphere2", "halfplane2"):
			model = catalog(name)
			for x in ([0.4, 1.3], [-1.1, 0.6]):
				bundle = finsler_core.chern_connection(model, x, [0.7, -0.3])
				oracle = levi_civita(model, x)
				print("%s max |Gamma - LC| = %.3e" % (name, np.max(np.abs(bundle.Gamma - oracle))))
				self.assertTrue(np.max(np.abs(bundle.Gamma - oracle)) <= 1e-8)

	def test_identities(self):
		print_header("identity suite")
		for name in sorted(cli_reports.CATALOG):
			model = catalog(name)
			worst = {}
			for x in utils.random_points(model.box, 6, margin=0.05):
				for u in utils.directions(model.dimension, 4):
					for key, value in finsler_core.identity_residuals(model, x, 1.3 * u).items():
						worst[key] = max(worst.get(key, 0.0), value)
			print("%s: %r" % (name, worst))
			for key, value in worst.items():
				self.assertTrue(value <= 1e-9, "%s %s = %.3e" % (name, key, value))

	def test_legendre(self):
		print_header("Legendre transform")
		for model in (catalog("randers2"), catalog("quartic2"), wave(), catalog("halfplane2")):
			for x in utils.random_points([(-1.0, 1.0), (0.5, 2.0)], 4):
				for u in utils.directions(2, 6):
					v = 0.8 * u
					p = finsler_core.legendre_to_cotangent(model, x, v)
					back = finsler_core.legendre_to_tangent(model, x, p)
					self.assertTrue(np.max(np.abs(back - v)) <= 1e-9 * max(1.0, np.max(np.abs(v))))
					self.assertAlmostEqual(finsler_core.dual_norm(model, x, p), model.F(x, v), delta=1e-9)

	def test_legendre_seed(self):
		print_header("Legendre seeds")
		w = np.array([1.0, 1.0]) / math.sqrt(2.0)
		for model in (catalog("randers2"), wave()):
			for x in utils.random_points([(-1.0, 1.0), (-1.0, 1.0)], 3):
				for u in utils.directions(2, 5):
					p = finsler_core.legendre_to_cotangent(model, x, u)
					# seed from a fixed direction w against the default seed along p
					fixed = finsler_core.legendre_to_tangent(model, x, p,
						guess=np.linalg.solve(finsler_core.fundamental_tensor(model, x, w), p))
					default = finsler_core.legendre_to_tangent(model, x, p)
					self.assertTrue(np.max(np.abs(fixed - u)) <= 1e-9)
					self.assertTrue(np.max(np.abs(default - u)) <= 1e-9)

	def test_dual_metric(self):
		print_header("dual metric against finite differences")
		model = catalog("randers2")
		x = np.array([0.0, 0.0])
		p = np.array([0.7, 0.4])
		g_star = finsler_core.dual_metric(model, x, p)
		half = lambda q: 0.5 * finsler_core.dual_norm(model, x, q) ** 2

		for i in range(2):
			for j in range(2):
				alpha = [0, 0]
				alpha[i] += 1
				alpha[j] += 1
				self.assertAlmostEqual(g_star[i, j], jets.fd_derivative(half, p, alpha), delta=1e-5)

	def test_phase_state(self):
		print_header("phase state")
		model = catalog("halfplane2")
		state = PhaseState.from_tangent(model, [0.0, 2.0], [2.0, 0.0])
		self.assertAlmostEqual(state.fstar, 1.0, delta=1e-12)
		np.testing.assert_allclose(state.p, [0.5, 0.0], atol=1e-12)
		self.assertAlmostEqual(state.energy(model), 0.5, delta=1e-12)

	def test_validate(self):
		print_header("validate_metric")
		report = finsler_core.validate_metric(catalog("sphere2"), samples=6)
		print(report)
		self.assertTrue(report.passed)
		self.assertTrue(report.reversible)

		randers = finsler_core.validate_metric(catalog("randers2"), samples=4)
		self.assertFalse(randers.reversible)

		indefinite = finsler_core.validate_metric(MetricModel(2, "y1^2 - 0.5*y2^2"), samples=3)
		self.assertFalse(indefinite.passed)
		self.assertTrue(len(indefinite.failures) > 0)

		self.assertRaises(UsageError, MetricModel, 2, "y1^2 + y2^2", "y1")
		self.assertRaises(UsageError, MetricModel, 0, "y1^2")

	def test_riemannian_flag(self):
		print_header("riemannian detection")
		self.assertTrue(catalog("halfplane2").is_riemannian())
		self.assertFalse(catalog("randers2").is_riemannian())
		self.assertFalse(catalog("quartic2").is_riemannian())


class CurvatureTestCase(unittest.TestCase):
	def test_flat(self):
		print_header("flat curvature")
		bundle = curvature.riemann_tensor(catalog("euclidean2"), [0.3, 0.1], [1.0, 0.5])
		self.assertTrue(np.max(np.abs(bundle.R)) == 0.0)
		self.assertTrue(np.max(np.abs(bundle.P)) == 0.0)
		self.assertEqual(curvature.flag_curvature(catalog("euclidean2"), [0, 0], [1, 0], [0, 1]), 0.0)

	def test_constant_curvature(self):
		print_header("sphere and half-plane flag curvature")
		for name, expected in (("sphere2", 1.0), ("halfplane2", -1.0)):
			model = catalog(name)
			for x in ([0.2, 0.9], [-1.3, 1.7], [0.8, 0.4]):
				oracle = conformal_gauss_curvature(model, x)
				self.assertAlmostEqual(oracle, expected, delta=1e-6)
				for v, w in (([1.0, 0.0], [0.0, 1.0]), ([0.3, -0.8], [1.0, 0.4])):
					K = curvature.flag_curvature(model, x, v, w)
					self.assertAlmostEqual(K, oracle, delta=1e-6)
				bundle = curvature.riemann_tensor(model, x, [0.6, 0.2])
				self.assertTrue(np.max(np.abs(bundle.P)) <= 1e-10)
			print("%s ok" % name)

	def test_riemann_oracle(self):
		print_header("Riemann tensor against Levi-Civita finite differences")
		model = catalog("sphere2")
		x = [0.7, -0.5]
		bundle = curvature.riemann_tensor(model, x, [0.4, 1.1])
		oracle = levi_civita_riemann(model, x)
		self.assertTrue(np.max(np.abs(bundle.R - oracle)) <= 1e-4)

	def test_tensor_symmetries(self):
		print_header("curvature symmetries")
		model = wave("sin(x1)")
		for x in utils.random_points(WAVE_BOX, 3, margin=0.1):
			v = np.array([0.9, -0.4])
			bundle = curvature.riemann_tensor(model, x, v)
			self.assertTrue(np.max(np.abs(bundle.R + np.swapaxes(bundle.R, 2, 3))) <= 1e-10)
			self.assertTrue(curvature.check_symmetry(bundle, np.array([1.0, 0.3]), np.array([-0.2, 1.0])) <= 1e-8)
			w = np.array([0.2, 1.0])
			K = curvature.flag_curvature(model, x, v, w, bundle)
			self.assertAlmostEqual(curvature.flag_curvature(model, x, v, 2.0 * w, bundle), K, delta=1e-8)
			self.assertAlmostEqual(curvature.flag_curvature(model, x, v, w + 3.0 * v, bundle), K, delta=1e-8)
		self.assertRaises(curvature.DegenerateFlagError, curvature.flag_curvature, model, [0, 0], [1, 0], [2, 0])

	def test_potential_derivatives(self):
		print_header("potential derivatives")
		model = oscillator(3.0)
		gradient, hessian, _ = curvature.potential_derivatives(model, [0.5], [1.0])
		self.assertAlmostEqual(gradient[0], 1.5, delta=1e-12)
		self.assertAlmostEqual(hessian[0, 0], 3.0, delta=1e-12)

		gradient, hessian, _ = curvature.potential_derivatives(catalog("sphere2", "2.5"), [0.4, 0.2], [1, 0])
		self.assertTrue(np.max(np.abs(gradient)) == 0.0 and np.max(np.abs(hessian)) == 0.0)

	def test_maps_closed_forms(self):
		print_header("curvature maps, closed forms")
		euclid = catalog("euclidean2", "0.5*x1^2 + x1*x2 + 2*x2^2")
		state = PhaseState.from_tangent(euclid, [0.3, -0.2], [0.6, 0.8])
		np.testing.assert_allclose(curvature.nonreduced_curvature_map(euclid, state).matrix, [[1, 1], [1, 4]], atol=1e-12)

		for k in (0.5, 1.0, 4.0):
			model = oscillator(k)
			matrix = curvature.nonreduced_curvature_map(model, PhaseState(model, [0.2], [1.0])).matrix
			self.assertAlmostEqual(matrix[0, 0], k, delta=1e-12)
		reduced = curvature.reduced_curvature_map(oscillator(1.0), PhaseState(oscillator(1.0), [0.2], [1.0]))
		self.assertEqual(reduced.matrix.shape, (0, 0))

		sphere = catalog("sphere2")
		state = PhaseState.from_tangent(sphere, [0, 0], [1, 0])
		values = curvature.nonreduced_curvature_map(sphere, state).eigenvalues()
		np.testing.assert_allclose(values, [0.0, 1.0], atol=1e-9)
		np.testing.assert_allclose(curvature.reduced_curvature_map(sphere, state).matrix, [[1.0]], atol=1e-9)

		flat = catalog("euclidean2", "0.3*x2 + 0.5*x2^2")
		state = PhaseState.from_tangent(flat, [0.0, 0.5], [1.0, 0.0])
		reduced = curvature.reduced_curvature_map(flat, state)
		self.assertAlmostEqual(reduced.matrix[0, 0], 1.0 + 3.0 * 0.64, delta=1e-12)
		self.assertTrue(abs(reduced.basis[:, 0].dot(state.v)) <= 1e-10)

	def test_term_properties(self):
		print_header("curvature map terms")
		half = catalog("halfplane2", "0.05*x1")
		x = np.array([0.3, 1.4])
		state = PhaseState.from_tangent(half, x, [0.5, -0.9])
		terms = curvature.form_terms(half, state)
		self.assertTrue(np.max(np.abs(terms[curvature.TERM_CHERN])) <= 1e-10)

		# Riemannian limit against the independent Levi-Civita implementation
		oracle_hessian = -0.05 * levi_civita(half, x)[0]
		self.assertTrue(np.max(np.abs(terms[curvature.TERM_HESSIAN] - oracle_hessian)) <= 1e-7)
		oracle_R = levi_civita_riemann(half, x)
		g = polarized_metric(half, x)
		oracle_form = np.einsum("ijkl,j,l,im->km", oracle_R, state.v, state.v, g)
		self.assertTrue(np.max(np.abs(terms[curvature.TERM_RIEMANN] - oracle_form)) <= 1e-4)

		geodesic = wave()
		state = PhaseState.from_tangent(geodesic, [0.4, 0.7], [0.8, 0.5])
		self.assertTrue(np.max(np.abs(curvature.form_terms(geodesic, state)[curvature.TERM_CHERN])) == 0.0)
		reduced = curvature.reduced_curvature_map(geodesic, state)
		restricted = reduced.basis.T.dot(curvature.form_matrix(geodesic, state, KIND_NONREDUCED)).dot(reduced.basis)
		self.assertTrue(np.max(np.abs(reduced.matrix - restricted)) <= 1e-10)
		breakdown = reduced.as_dict(breakdown=True)
		self.assertEqual(sorted(breakdown["terms"]), sorted([curvature.TERM_RIEMANN, curvature.TERM_HESSIAN,
			curvature.TERM_CHERN, curvature.TERM_RANK_ONE]))

	def test_asymmetric_form(self):
		print_header("asymmetric curvature form")
		model = catalog("euclidean2")
		state = PhaseState.from_tangent(model, [0.1, 0.2], [1.0, 0.0])
		terms = curvature.form_terms(model, state)
		terms[curvature.TERM_RIEMANN] = np.array([[0.0, 1e-3], [0.0, 0.0]])
		self.assertRaises(curvature.AsymmetricFormError, curvature.nonreduced_curvature_map, model, state, terms)
		self.assertTrue(issubclass(curvature.AsymmetricFormError, NumericalError))

		terms[curvature.TERM_RIEMANN] = np.array([[0.0, 1e-12], [0.0, 0.0]])
		matrix = curvature.nonreduced_curvature_map(model, state, terms)
		self.assertAlmostEqual(matrix.asymmetry, 1e-12, delta=1e-20)
		self.assertEqual(matrix.matrix[0, 1], matrix.matrix[1, 0])

	def test_flag_operator(self):
		print_header("flag curvature operator")
		model = catalog("halfplane2")
		self.assertAlmostEqual(curvature.max_flag_curvature(model, [0.0, 1.0], [1.0, 2.0]), -1.0, delta=1e-6)
		self.assertRaises(UsageError, curvature.flag_curvature_operator, oscillator(1.0), [0.0], [1.0])


class DynamicsTestCase(unittest.TestCase):
	def test_assemblies(self):
		print_header("vector field assemblies")
		model = wave("sin(x1)")
		system = dynamics.HamiltonianSystem(model)
		for x in utils.random_points(WAVE_BOX, 4, margin=0.1):
			for u in utils.directions(2, 3):
				state = PhaseState.from_tangent(model, x, 1.2 * u)
				a = system.vector_field(state)
				b = system.lifted_vector_field(state)
				self.assertTrue(np.max(np.abs(a - b)) <= 1e-8 * max(1.0, np.max(np.abs(a))))

	def test_lie_bracket(self):
		print_header("Lie bracket with the Liouville field")
		model = wave()
		system = dynamics.HamiltonianSystem(model)
		state = PhaseState.from_tangent(model, [0.2, 0.6], [0.7, -0.4])
		bracket = dynamics.lie_bracket(system, system.chern_lift_field, system.liouville_field, state.vector())
		np.testing.assert_allclose(bracket, -system.chern_lift_field(state), atol=1e-6)

	def test_jacobian(self):
		print_header("flow Jacobian")
		model = catalog("randers2", "sin(x1)*cos(x2)")
		system = dynamics.HamiltonianSystem(model)
		state = PhaseState.from_tangent(model, [0.3, 0.5], [0.6, 0.9])
		z = state.vector()
		jac = system.jacobian(state)
		h = 1e-5

		for i in range(4):
			e = np.zeros(4)
			e[i] = h
			plus = system.vector_field(system.state(z + e, guess=state.v))
			minus = system.vector_field(system.state(z - e, guess=state.v))
			np.testing.assert_allclose(jac[:, i], (plus - minus) / (2 * h), atol=1e-5)

	def test_energy(self):
		print_header("energy conservation")
		model = catalog("sphere2", "0.2*x1")
		system = dynamics.HamiltonianSystem(model)
		state = PhaseState.from_tangent(model, [0.1, -0.3], [0.8, 0.5])
		trajectory = dynamics.flow(system, state, 2.0, dt=1e-2)
		print("drift %.3e" % trajectory.energy_drift())
		self.assertTrue(trajectory.energy_drift() <= 2e-7)
		self.assertEqual(trajectory.flagged, [])

		back = dynamics.flow(system, trajectory.final, -2.0, dt=1e-2)
		np.testing.assert_allclose(back.final.vector(), state.vector(), atol=1e-7)

	def test_symplectic(self):
		print_header("monodromy symplecticity")
		model = oscillator(2.0)
		system = dynamics.HamiltonianSystem(model)
		trajectory = dynamics.variational_flow(system, PhaseState(model, [1.0], [0.5]), 10.0, dt=1e-2, stride=50)
		self.assertTrue(trajectory.symplectic_defect(system.J) <= 1e-7)

		model = catalog("halfplane2")
		system = dynamics.HamiltonianSystem(model)
		state = PhaseState.from_tangent(model, [0.0, 1.0], [0.6, 0.8])
		phi, _ = dynamics.monodromy(system, state, 1.0, 100)
		self.assertTrue(np.max(np.abs(phi.T.dot(system.J).dot(phi) - system.J)) <= 1e-7)

	def test_convergence_order(self):
		print_header("RK4 convergence")
		model = oscillator(1.0)
		system = dynamics.HamiltonianSystem(model)
		state = PhaseState(model, [1.0], [0.0])
		errors = []

		for dt in (0.2, 0.1):
			final = dynamics.flow(system, state, 2.0, dt=dt).final
			errors.append(abs(final.x[0] - math.cos(2.0)))
		ratio = errors[0] / errors[1]
		print("error ratio %.3f" % ratio)
		self.assertTrue(13.0 <= ratio <= 19.0)

		controlled = dynamics.flow(system, state, 2.0, dt=0.1, step_control=True).final
		self.assertAlmostEqual(controlled.x[0], math.cos(2.0), delta=1e-9)

	def test_box_and_torus(self):
		print_header("validity box and torus wrap")
		model = catalog("euclidean2")
		system = dynamics.HamiltonianSystem(model)
		try:
			dynamics.flow(system, PhaseState(model, [9.5, 0.0], [1.0, 0.0]), 2.0, dt=1e-2)
			self.fail("left the box silently")
		except dynamics.BoxExitError as e:
			print(e)
			self.assertTrue(0.49 <= e.time <= 0.52)

		torus = flat_torus()
		system = dynamics.HamiltonianSystem(torus)
		final = dynamics.flow(system, PhaseState(torus, [6.2, 1.0], [1.0, 0.0]), 0.5, dt=1e-2).final
		self.assertAlmostEqual(final.x[0], 6.7 - TWO_PI, delta=1e-10)


class JacobiLabTestCase(unittest.TestCase):
	def test_frames(self):
		print_header("vertical frames and canonical complements")
		model = wave("sin(x1)")
		state = PhaseState.from_tangent(model, [0.2, 0.4], [0.9, 0.3])
		system = dynamics.HamiltonianSystem(model)

		for kind in (KIND_NONREDUCED, KIND_REDUCED):
			vertical = jacobi_lab.vertical_frame(model, state, kind)
			complement = jacobi_lab.canonical_complement(model, state, kind)
			self.assertTrue(vertical.isotropy_defect() <= 1e-12)
			self.assertTrue(complement.isotropy_defect() <= 1e-10)
			self.assertTrue(vertical.min_singular_value() > 1e-3)

		reduced = jacobi_lab.canonical_complement(model, state, KIND_REDUCED).columns
		# dH vanishes on the reduced complement: dH = (dH/dx, v)
		dH = np.concatenate([-system.vector_field(state)[2:], state.v])
		self.assertTrue(np.max(np.abs(dH.dot(reduced))) <= 1e-10)
		self.assertTrue(jacobi_lab.vertical_frame(model, state, KIND_NONREDUCED).is_lagrangian())

	def test_calibration(self):
		print_header("Schwarzian calibration")
		for k in (0.5, 1.0, 4.0):
			model = oscillator(k)
			report = jacobi_lab.closed_form_vs_oracle(dynamics.HamiltonianSystem(model),
				PhaseState(model, [0.3], [0.8]), KIND_NONREDUCED)
			self.assertAlmostEqual(report.oracle[0, 0], k, delta=1e-5)

		free = MetricModel(1, "y1^2", "0")
		report = jacobi_lab.closed_form_vs_oracle(dynamics.HamiltonianSystem(free),
			PhaseState(free, [0.3], [0.8]), KIND_NONREDUCED)
		self.assertAlmostEqual(report.oracle[0, 0], 0.0, delta=1e-8)

	def test_oracle_equivalence(self):
		print_header("closed form against Schwarzian")
		cases = [
			(catalog("euclidean2", "0.5*1.5*(x1^2 + x2^2)"), [(-1.0, 1.0), (-1.0, 1.0)], 20),
			(catalog("sphere2"), [(-1.5, 1.5), (-1.5, 1.5)], 20),
			(catalog("halfplane2", "0.05*x1"), [(-1.0, 1.0), (0.5, 2.0)], 20),
			(wave(), [(-1.0, 1.0), (-1.0, 1.0)], 6),
		]
		for model, box, count in cases:
			system = dynamics.HamiltonianSystem(model)
			worst = 0.0

			for state in unit_states(model, box, count):
				for kind in (KIND_NONREDUCED, KIND_REDUCED):
					report = jacobi_lab.closed_form_vs_oracle(system, state, kind)
					worst = max(worst, report.entry_error)
					self.assertTrue(report.passed, report.as_dict())
					self.assertEqual(report.status, jacobi_lab.STATUS_AGREE)
			print("%s: worst %.3e" % (model.name, worst))

	def test_cartan_potential_mismatch(self):
		print_header("closed form where C(., ., grad U) != 0")
		model = catalog("randers2", "sin(x1)")
		system = dynamics.HamiltonianSystem(model)
		statuses = []

		for state in unit_states(model, [(-1.0, 1.0), (-1.0, 1.0)], 20):
			term = curvature.cartan_potential_term(model, state)
			for kind in (KIND_NONREDUCED, KIND_REDUCED):
				report = jacobi_lab.closed_form_vs_oracle(system, state, kind)
				self.assertNotEqual(report.status, jacobi_lab.STATUS_FAIL, report.as_dict())
				# v along x1: grad U parallel to v
				if term <= model.tol.cartan_zero:
					self.assertEqual(report.status, jacobi_lab.STATUS_AGREE, report.as_dict())
				statuses.append(report.status)
		print("randers2 + sin(x1): %d of %d mismatch" % (statuses.count(jacobi_lab.STATUS_MISMATCH), len(statuses)))
		self.assertTrue(statuses.count(jacobi_lab.STATUS_AGREE) >= 4)
		self.assertTrue(statuses.count(jacobi_lab.STATUS_MISMATCH) >= 20)

		state = PhaseState.from_tangent(model, [0.1, -0.4], [0.2, 1.0])
		for kind in (KIND_NONREDUCED, KIND_REDUCED):
			report = jacobi_lab.closed_form_vs_oracle(system, state, kind)
			self.assertEqual(report.status, jacobi_lab.STATUS_MISMATCH)
			self.assertTrue(report.entry_error > 0.1)
			self.assertEqual(report.as_dict()["discrepancy"], jacobi_lab.CARTAN_POTENTIAL_GAP)

		# the gap vanishes with the potential and grows with it
		errors = []
		for eps in (0.0, 0.1, 0.4):
			scaled = catalog("randers2", "%r*sin(x1)" % eps)
			report = jacobi_lab.closed_form_vs_oracle(dynamics.HamiltonianSystem(scaled),
				PhaseState.from_tangent(scaled, [0.3, 0.2], [0.6, 0.8]), KIND_NONREDUCED)
			errors.append(report.entry_error)
			if eps == 0.0:
				self.assertEqual(report.status, jacobi_lab.STATUS_AGREE)
		print("gap against potential scale: %r" % errors)
		self.assertTrue(errors[0] < errors[1] < errors[2])
		self.assertTrue(errors[2] > model.tol.compare_rel)

	def test_graph_symmetry(self):
		print_header("graph coordinates")
		model = catalog("halfplane2")
		system = dynamics.HamiltonianSystem(model)
		samples = jacobi_lab.jacobi_curve_samples(system, PhaseState.from_tangent(model, [0, 1], [1, 0]),
			KIND_NONREDUCED, times=[0.0, 0.05, 0.1])
		self.assertTrue(np.max(np.abs(samples.at(0.0))) <= 1e-12)
		self.assertTrue(samples.asymmetry <= 1e-7)
		# S(t) ~ -t I for small t
		np.testing.assert_allclose(samples.at(0.05), -0.05 * np.eye(2), atol=1e-3)

	def test_conjugate_points(self):
		print_header("conjugate points")
		sphere = catalog("sphere2")
		# equator point, unit speed through the south pole
		state = PhaseState.from_tangent(sphere, [-2.0, 0.0], [2.0, 0.0])
		times = jacobi_lab.conjugate_points(dynamics.HamiltonianSystem(sphere), state, KIND_NONREDUCED, 3.3)
		print(times)
		self.assertTrue(len(times) >= 1)
		self.assertAlmostEqual(times[0], math.pi, delta=1e-3)

		model = oscillator(4.0)
		times = jacobi_lab.conjugate_points(dynamics.HamiltonianSystem(model), PhaseState(model, [0.0], [1.0]),
			KIND_NONREDUCED, 2.0)
		self.assertAlmostEqual(times[0], 0.5 * math.pi, delta=1e-4)

	def test_normal_frame(self):
		print_header("normal frame")
		model = catalog("halfplane2")
		system = dynamics.HamiltonianSystem(model)
		state = PhaseState.from_tangent(model, [0.0, 1.0], [0.6, 0.8])
		result = jacobi_lab.normal_frame_propagate(system, state, KIND_REDUCED, T=1.0)
		print("darboux %.3e, jacobi %.3e" % (result.max_darboux_defect(), jacobi_lab.frame_jacobi_check(result)))
		self.assertTrue(result.max_darboux_defect() <= 1e-7)
		self.assertTrue(jacobi_lab.frame_jacobi_check(result) <= 1e-5)
		self.assertTrue(np.max(result.vertical) <= 1e-6)
		# constant curvature -1 at energy 1/2
		for R in result.R:
			self.assertAlmostEqual(R[0, 0], -1.0, delta=1e-5)

	def test_frame_rotation(self):
		print_header("normal frame rotation")
		model = catalog("halfplane2", "0.05*x1")
		system = dynamics.HamiltonianSystem(model)
		state = PhaseState.from_tangent(model, [0.2, 1.1], [0.5, 0.7])
		angle = 0.7
		rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
		defect = jacobi_lab.frame_rotation_defect(system, state, KIND_NONREDUCED, 0.5, rotation)
		self.assertTrue(defect <= 1e-6)


class HyperbolicityTestCase(unittest.TestCase):
	def test_level_sets(self):
		print_header("level sets")
		model = catalog("euclidean2")
		system = dynamics.HamiltonianSystem(model)
		sample = hyperbolicity.sample_level_set(system, 0.5, hyperbolicity.GridSpec(2, 4))
		self.assertEqual(len(sample), 16)
		for state in sample.states:
			self.assertAlmostEqual(np.linalg.norm(state.p), 1.0, delta=1e-12)

		osc = oscillator(1.0)
		sample = hyperbolicity.sample_level_set(dynamics.HamiltonianSystem(osc), 1.0, hyperbolicity.GridSpec(1))
		for state in sample.states:
			self.assertAlmostEqual(abs(state.p[0]), math.sqrt(2.0), delta=1e-12)

		torus = flat_torus("0.2*cos(x1)")
		system = dynamics.HamiltonianSystem(torus)
		sample = hyperbolicity.sample_level_set(system, 0.1, hyperbolicity.GridSpec(4, 3))
		self.assertTrue(sample.skipped > 0)
		for state in sample.states:
			self.assertAlmostEqual(system.energy(state), 0.1, delta=1e-10)

	def test_scan(self):
		print_header("negativity scan")
		half = catalog("halfplane2")
		system = dynamics.HamiltonianSystem(half)
		grid = hyperbolicity.GridSpec(3, 4, box=[(-1.0, 1.0), (0.5, 2.0)])
		scan = hyperbolicity.negativity_scan(system, hyperbolicity.sample_level_set(system, 0.5, grid))
		print(scan.as_dict()["margin"])
		self.assertTrue(scan.passed)
		self.assertAlmostEqual(scan.margin, 1.0, delta=1e-4)

		# U = 0: per-state maximum is the flag curvature scaled by F^2
		for state, value in zip(scan.states, scan.maxima):
			expected = curvature.max_flag_curvature(half, state.x, state.v) * state.fstar ** 2
			self.assertAlmostEqual(value, expected, delta=1e-6)

		sphere = catalog("sphere2")
		system = dynamics.HamiltonianSystem(sphere)
		scan = hyperbolicity.negativity_scan(system,
			hyperbolicity.sample_level_set(system, 0.5, hyperbolicity.GridSpec(2, 3, box=[(-1.0, 1.0), (-1.0, 1.0)])))
		self.assertFalse(scan.passed)
		self.assertAlmostEqual(scan.global_max, 1.0, delta=1e-4)

		torus = catalog("torus2-cosine")
		system = dynamics.HamiltonianSystem(torus)
		scan = hyperbolicity.negativity_scan(system,
			hyperbolicity.sample_level_set(system, 0.5, hyperbolicity.GridSpec(3, 4)), jobs=2)
		self.assertFalse(scan.passed)
		self.assertTrue(scan.global_max > 0)

	def test_anosov(self):
		print_header("Anosov criterion")
		half = catalog("halfplane2")
		grid = hyperbolicity.GridSpec(3, 4, box=[(-1.0, 1.0), (0.5, 2.0)])
		result = hyperbolicity.anosov_criterion(dynamics.HamiltonianSystem(half), 0.5, grid)
		print(json.dumps(result, sort_keys=True, default=str))
		self.assertTrue(result["conventions"]["a"]["pass"])
		self.assertTrue(result["conventions"]["b"]["pass"])
		self.assertTrue(result["consistent"])
		self.assertAlmostEqual(result["k"], -1.0, delta=1e-6)

		torus = catalog("torus2-cosine")
		result = hyperbolicity.anosov_criterion(dynamics.HamiltonianSystem(torus), 0.5, hyperbolicity.GridSpec(3, 4))
		self.assertFalse(result["conventions"]["a"]["pass"])
		self.assertFalse(result["conventions"]["b"]["pass"])
		self.assertTrue(result["consistent"])

		self.assertRaises(hyperbolicity.HypothesisError, hyperbolicity.anosov_criterion,
			dynamics.HamiltonianSystem(catalog("randers2")), 0.5, hyperbolicity.GridSpec(2, 2))

	def test_riemannian_corollary(self):
		print_header("Riemannian corollary")
		grid = hyperbolicity.GridSpec(3, 4, box=[(-1.0, 1.0), (0.5, 2.0)])
		result = hyperbolicity.riemannian_corollary(dynamics.HamiltonianSystem(catalog("halfplane2")), 0.5, grid)
		self.assertTrue(result["pass"])
		self.assertAlmostEqual(result["lhs_operator_norm"], 0.0, delta=1e-12)

		sloped = catalog("halfplane2", "0.01*x1")
		result = hyperbolicity.riemannian_corollary(dynamics.HamiltonianSystem(sloped), 1.0, grid)
		print(result)
		self.assertTrue(result["pass"])
		self.assertTrue(result["lhs_operator_norm"] > 0)
		self.assertTrue(result["lhs_max_over_flags"] <= result["lhs_operator_norm"] + 1e-12)

		result = hyperbolicity.riemannian_corollary(dynamics.HamiltonianSystem(flat_torus()), 0.5,
			hyperbolicity.GridSpec(2, 3))
		self.assertFalse(result["pass"])

		self.assertRaises(hyperbolicity.HypothesisError, hyperbolicity.riemannian_corollary,
			dynamics.HamiltonianSystem(catalog("quartic2")), 0.5, grid)

	def test_lyapunov(self):
		print_header("Lyapunov exponents")
		osc = oscillator(1.0)
		top = hyperbolicity.lyapunov_estimate(dynamics.HamiltonianSystem(osc), PhaseState(osc, [1.0], [0.0]), 20.0)
		self.assertAlmostEqual(top, 0.0, delta=0.01)

		torus = flat_torus()
		top = hyperbolicity.lyapunov_estimate(dynamics.HamiltonianSystem(torus), PhaseState(torus, [1.0, 1.0], [1.0, 0.0]),
			300.0, transient=150.0, dt=0.5, interval=0.5)
		print("free particle %.4f" % top)
		self.assertAlmostEqual(top, 0.0, delta=0.01)

		# semicircle geodesic of radius r through the half-plane box, unit speed, c = 1/2
		half = catalog("halfplane2")
		r, s = 3.9, 3.2
		x = [-r * math.tanh(s), r / math.cosh(s)]
		v = [r / math.cosh(s) ** 2, r * math.tanh(s) / math.cosh(s)]
		state = PhaseState.from_tangent(half, x, v)
		self.assertAlmostEqual(state.energy(half), 0.5, delta=1e-12)
		spectrum = hyperbolicity.lyapunov_spectrum(dynamics.HamiltonianSystem(half), state, 2 * s, transient=1.0)
		print("half-plane spectrum %r" % spectrum.tolist())
		self.assertAlmostEqual(spectrum[0], 1.0, delta=0.1)
		self.assertTrue(spectrum[0] >= 0.85)
		self.assertAlmostEqual(spectrum[-1], -1.0, delta=0.2)

		# averages start exactly at the transient whatever the reorthogonalization interval
		system = dynamics.HamiltonianSystem(half)
		coarse = hyperbolicity.lyapunov_spectrum(system, state, 2.0, transient=0.3, dt=0.05, interval=0.25)
		fine = hyperbolicity.lyapunov_spectrum(system, state, 2.0, transient=0.3, dt=0.05, interval=0.05)
		print("coarse %r, fine %r" % (coarse.tolist(), fine.tolist()))
		np.testing.assert_allclose(coarse, fine, atol=1e-8)


class CliReportsTestCase(unittest.TestCase):
	def setUp(self):
		os.environ["SOURCE_DATE_EPOCH"] = "1700000000"
		self.tmp = tempfile.mkdtemp()

	def _path(self, name):
		return os.path.join(self.tmp, name)

	def _run(self, argv):
		out = self._path("report.json")
		code, report = cli_reports.run_command(argv + ["--out", out])
		with open(out, encoding="utf-8") as fh:
			return code, json.loads(fh.read())

	def test_config(self):
		print_header("configuration")
		config, model = cli_reports.load_config("halfplane2", validate=False)
		self.assertEqual(model.dimension, 2)
		self.assertEqual(model.f2_source, "(y1^2 + y2^2) / x2^2")
		self.assertEqual(model.box[1], (0.25, 4.0))

		text = "# comment\ncatalog = halfplane2\nU = \"0.05*x1\"\ntol.fd = 1e-6\nbox = -2:2, 0.5:3\n"
		config = cli_reports.parse_config(text)
		model = config.to_model()
		self.assertEqual(model.u_source, "0.05*x1")
		self.assertEqual(model.tol.fd, 1e-6)
		self.assertEqual(model.box, [(-2.0, 2.0), (0.5, 3.0)])

		torus = cli_reports.parse_config("dimension = 2\nF2 = \"y1^2 + y2^2\"\ntopology = torus\nperiods = 2*pi, 2pi\n")
		self.assertEqual(torus.to_model().periods.tolist(), [TWO_PI, TWO_PI])

		self.assertRaises(cli_reports.ConfigError, cli_reports.parse_config("U = \"x1\"\n").to_model)
		try:
			cli_reports.parse_config("catalog = sphere2\nthis line is wrong\n")
			self.fail("bad line accepted")
		except cli_reports.ConfigError as e:
			self.assertEqual(e.line, 2)
		self.assertRaises(exprlang.ExprSyntaxError, cli_reports.parse_config("dimension = 2\nF2 = \"y1^2 +\"\n").to_model)
		self.assertRaises(cli_reports.ConfigError, cli_reports.parse_config, "tol.nonsense = 1\n")

		path = self._path("indefinite.cfg")
		with open(path, "w", encoding="utf-8") as fh:
			fh.write("dimension = 2\nF2 = \"y1^2 - y2^2\"\n")
		try:
			cli_reports.load_config(path)
			self.fail("indefinite metric loaded")
		except cli_reports.ConfigError as e:
			self.assertFalse(e.report.passed)

	def test_points(self):
		print_header("point syntax")
		model = catalog("halfplane2")
		state = cli_reports.parse_point(model, "x=0,2;y=2,0")
		np.testing.assert_allclose(state.p, [0.5, 0.0], atol=1e-12)
		state = cli_reports.parse_point(model, "x=0,2;p=0.5,0")
		np.testing.assert_allclose(state.v, [2.0, 0.0], atol=1e-10)
		self.assertRaises(UsageError, cli_reports.parse_point, model, "x=0,2")
		self.assertRaises(UsageError, cli_reports.parse_point, model, "x=0,2,3;p=1,0")

	def test_commands(self):
		print_header("command line")
		code, report = self._run(["validate", "--config", "sphere2", "--samples", "4"])
		self.assertEqual(code, 0)
		self.assertTrue(report["result"]["checks"]["homogeneity"]["passed"])

		code, report = self._run(["curvature", "--config", "sphere2", "--at", "x=0,0;p=1,0", "--reduced"])
		self.assertEqual(code, 0)
		self.assertAlmostEqual(report["result"]["matrix"][0][0], 1.0, delta=1e-4)
		self.assertEqual(report["tolerances"]["fd"], finslerlab.TOL_FD)

		csv_path = self._path("scan.csv")
		code, report = self._run(["scan", "--config", "halfplane2", "--energy", "0.5", "--grid", "3",
			"--directions", "3", "--csv", csv_path])
		self.assertEqual(code, 0)
		self.assertTrue(report["result"]["pass"])
		self.assertAlmostEqual(report["result"]["margin"], 1.0, delta=1e-4)
		with open(csv_path, encoding="utf-8") as fh:
			lines = fh.read().splitlines()
		self.assertEqual(lines[0], "x1,x2,p1,p2,max_eigenvalue")
		self.assertEqual(len(lines), 1 + 27)

		code, report = self._run(["scan", "--config", "sphere2", "--energy", "0.5", "--grid", "2", "--directions", "2"])
		self.assertEqual(code, 3)
		self.assertAlmostEqual(report["result"]["global_max"], 1.0, delta=1e-4)

		code, report = self._run(["flow", "--config", "euclidean2", "--from", "x=9.5,0;p=1,0", "--time", "2",
			"--dt", "0.01"])
		self.assertEqual(code, 2)
		self.assertEqual(report["error"]["type"], "BoxExitError")

		# argument errors happen before --out is known, the report goes to stdout
		code, report = cli_reports.run_command(["curvature", "--config", "sphere2", "--at", "x=0,0;p=1,0", "--bogus"])
		self.assertEqual(code, 1)
		self.assertEqual(report.error["type"], "UsageError")
		code, report = self._run(["tensors", "--config", "no-such-model", "--at", "x=0,0;p=1,0"])
		self.assertEqual(code, 1)
		code, report = self._run(["tensors", "--config", "halfplane2", "--at", "x=0,2;p=1,0",
			"--tol-override", "eps0=1e-6"])
		self.assertEqual(code, 0)
		self.assertEqual(report["tolerances"]["eps0"], 1e-6)

	def test_jacobi_verify(self):
		print_header("jacobi-verify exit codes")
		code, report = self._run(["jacobi-verify", "--config", "halfplane2", "--at", "x=0,1;y=0.6,0.8"])
		self.assertEqual(code, 0)
		self.assertTrue(report["result"]["all_passed"])
		self.assertEqual(report["result"]["mismatches"], 0)

		path = self._path("randers-sin.cfg")
		with open(path, "w", encoding="utf-8") as fh:
			fh.write("catalog = randers2\nU = \"sin(x1)\"\n")
		code, report = self._run(["jacobi-verify", "--config", path, "--at", "x=0.1,-0.4;y=0.2,1.0"])
		self.assertEqual(code, 2)
		self.assertFalse(report["result"]["all_passed"])
		self.assertEqual(report["result"]["mismatches"], 2)
		for comparison in report["result"]["comparisons"]:
			self.assertEqual(comparison["status"], jacobi_lab.STATUS_MISMATCH)

	def test_scan_grid(self):
		print_header("scans on the 8 x 8 x 8 grid")
		code, report = self._run(["scan", "--config", "halfplane2", "--energy", "0.5", "--grid", "8", "--directions", "8"])
		self.assertEqual(code, 0)
		self.assertEqual(report["result"]["states"], 512)
		self.assertAlmostEqual(report["result"]["margin"], 1.0, delta=1e-4)

		code, report = self._run(["scan", "--config", "sphere2", "--energy", "0.5"])
		self.assertEqual(code, 3)
		self.assertFalse(report["result"]["pass"])
		self.assertAlmostEqual(report["result"]["global_max"], 1.0, delta=1e-4)

	def test_usage_logging(self):
		print_header("usage errors are logged without traceback")
		with self.assertLogs("finslerlab", level="ERROR") as captured:
			code, report = self._run(["tensors", "--config", "no-such-model", "--at", "x=0,0;p=1,0"])
		self.assertEqual(code, 1)
		self.assertTrue(len(captured.records) >= 1)
		for record in captured.records:
			self.assertTrue(record.exc_info is None)

	def test_reports(self):
		print_header("report persistence")
		argv = ["tensors", "--config", "randers2", "--at", "x=0.1,0.2;y=1,0.5"]
		_, first = cli_reports.run_command(argv + ["--out", self._path("a.json")])
		_, second = cli_reports.run_command(argv + ["--out", self._path("b.json")])

		with open(self._path("a.json"), "rb") as fh:
			a = fh.read()
		with open(self._path("b.json"), "rb") as fh:
			b = fh.read()
		self.assertEqual(a, b)
		self.assertEqual(first.timestamp, 1700000000)

		restored = cli_reports.RunReport.from_json(first.to_json())
		self.assertEqual(restored.as_dict(), first.as_dict())
		g = first.as_dict()["result"]["tensors"]["g"]
		self.assertEqual(json.loads(first.to_json())["result"]["tensors"]["g"], g)


suite = unittest.TestSuite()
loader = unittest.defaultTestLoader

suite.addTests(loader.loadTestsFromTestCase(ExprlangTestCase))
suite.addTests(loader.loadTestsFromTestCase(JetsTestCase))
suite.addTests(loader.loadTestsFromTestCase(FinslerCoreTestCase))
suite.addTests(loader.loadTestsFromTestCase(CurvatureTestCase))
suite.addTests(loader.loadTestsFromTestCase(DynamicsTestCase))
suite.addTests(loader.loadTestsFromTestCase(JacobiLabTestCase))
suite.addTests(loader.loadTestsFromTestCase(HyperbolicityTestCase))
suite.addTests(loader.loadTestsFromTestCase(CliReportsTestCase))

if __name__ == "__main__":
	unittest.TextTestRunner().run(suite)
