"""
Scalar expressions over chart coordinates x1..xn and fiber coordinates y1..yn.

Expressions hold the user supplied F^2(x,y) and U(x) of a model. They are parsed once
and evaluated many times, either over plain floats or over Taylor jets (see jets.py).

Grammar (EBNF), whitespace is ignored:

	expr	:= term (("+"|"-") term)*
	term	:= factor (("*"|"/") factor)*
	factor	:= "-" factor | power
	power	:= atom ("^" factor)?
	atom	:= number | ident | "(" expr ")" | func "(" expr ")" | "pow" "(" expr "," expr ")"
	ident	:= ("x"|"y") digits
	func	:= "sqrt"|"sin"|"cos"|"exp"|"log"

Precedence: ^ > unary - > * / > + -, binaries are left-associative, ^ is right-associative.
Exponents of ^ and pow() must fold to rational constants.
"""
import logging
import math
import numbers
import re
from fractions import Fraction

from finslerlab.finslerlab import NumericalError, UsageError

logger = logging.getLogger("finslerlab")

KIND_X			= "x"
KIND_Y			= "y"

FUNCTIONS		= ("sqrt", "sin", "cos", "exp", "log")
FUNCTION_POW		= "pow"

PREC_SUM		= 1
PREC_PRODUCT		= 2
PREC_NEG		= 3
PREC_POWER		= 4
PREC_ATOM		= 5

PROG_TOKEN		= re.compile(r"\s*(?:((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\S))")
PROG_VARIABLE		= re.compile(r"^([xy])(\d+)$")

TOK_NUM			= 1
TOK_IDENT		= 2
TOK_OP			= 3
TOK_END			= 4


class SourceSpan(object):
	"""
	Byte offsets [start, end) into the parsed source string.
	"""
	def __init__(self, start, end):
		self.start = start
		self.end = end

	def join(self, other):
		return SourceSpan(min(self.start, other.start), max(self.end, other.end))

	def __eq__(self, other):
		return isinstance(other, SourceSpan) and self.start == other.start and self.end == other.end

	def __hash__(self):
		return hash((self.start, self.end))

	def __repr__(self):
		return "SourceSpan(%d, %d)" % (self.start, self.end)


class ExprError(UsageError):
	"""
	Parse-time error pointing into the source.

	msg -- description
	span -- SourceSpan of the offending text (may be None)
	"""
	def __init__(self, msg, span=None):
		if span is not None:
			msg = "%s (at offset %d)" % (msg, span.start)
		UsageError.__init__(self, msg)
		self.span = span


class ExprSyntaxError(ExprError):
	pass


class ExprNameError(ExprError):
	"""Unknown identifier or variable index out of range."""
	pass


class ExprDomainError(NumericalError):
	"""
	Evaluation left the domain of a primitive (sqrt/log of a nonpositive value, division by zero).
	"""
	def __init__(self, msg, span=None):
		if span is not None:
			msg = "%s (node at %d-%d)" % (msg, span.start, span.end)
		NumericalError.__init__(self, msg)
		self.span = span


def _is_number(value):
	return isinstance(value, numbers.Real)


def _int_power(base, k):
	"""
	base^k for integer k >= 0 by repeated squaring. Used for floats and jets alike so both
	paths perform the same multiplications.
	"""
	result = None
	square = base

	while k > 0:
		if k & 1:
			result = square if result is None else result * square
		k >>= 1
		if k:
			square = square * square
	return 1.0 if result is None else result


#
# AST nodes
#
class Expr(object):
	"""
	Base node. Every node carries the SourceSpan it was parsed from.
	"""
	prec = PREC_ATOM

	def __init__(self, span=None):
		self.span = span if span is not None else SourceSpan(0, 0)

	def children(self):
		return ()

	def evaluate(self, xs, ys):
		"""
		xs, ys -- sequences of values (floats or jets) for x1..xn and y1..yn
		"""
		raise NotImplementedError()

	def __eq__(self, other):
		return type(self) is type(other) and self._key() == other._key()

	def __hash__(self):
		return hash(self._key())

	def __repr__(self):
		return format_expr(self)


class Const(Expr):
	def __init__(self, value, text=None, span=None):
		Expr.__init__(self, span)
		self.value = float(value)
		self.text = text if text is not None else repr(self.value)

	def evaluate(self, xs, ys):
		return self.value

	def _key(self):
		return (self.value,)


class Var(Expr):
	def __init__(self, kind, index, span=None):
		Expr.__init__(self, span)
		self.kind = kind
		self.index = index

	def evaluate(self, xs, ys):
		return (xs if self.kind == KIND_X else ys)[self.index - 1]

	def _key(self):
		return (self.kind, self.index)


class Neg(Expr):
	prec = PREC_NEG

	def __init__(self, operand, span=None):
		Expr.__init__(self, span)
		self.operand = operand

	def children(self):
		return (self.operand,)

	def evaluate(self, xs, ys):
		return -self.operand.evaluate(xs, ys)

	def _key(self):
		return (self.operand,)


class BinOp(Expr):
	def __init__(self, op, left, right, span=None):
		Expr.__init__(self, span)
		self.op = op
		self.left = left
		self.right = right
		self.prec = PREC_SUM if op in "+-" else PREC_PRODUCT

	def children(self):
		return (self.left, self.right)

	def evaluate(self, xs, ys):
		a = self.left.evaluate(xs, ys)
		b = self.right.evaluate(xs, ys)

		if self.op == "+":
			return a + b
		elif self.op == "-":
			return a - b
		elif self.op == "*":
			return a * b

		if _is_number(b) and b == 0:
			raise ExprDomainError("division by zero", self.span)
		try:
			return a / b
		except NumericalError as e:
			raise ExprDomainError("division: %s" % e, self.span)

	def _key(self):
		return (self.op, self.left, self.right)


class Power(Expr):
	"""
	base ^ exponent with a rational constant exponent. exponent_node keeps the parsed
	exponent for printing, call_form marks the pow(base, r) spelling.
	"""
	prec = PREC_POWER

	def __init__(self, base, exponent_node, exponent, call_form=False, span=None):
		Expr.__init__(self, span)
		self.base = base
		self.exponent_node = exponent_node
		self.exponent = Fraction(exponent)
		self.call_form = call_form

	def children(self):
		return (self.base, self.exponent_node)

	def evaluate(self, xs, ys):
		base = self.base.evaluate(xs, ys)
		r = self.exponent

		if _is_number(base):
			if r.denominator == 1:
				if r < 0 and base == 0:
					raise ExprDomainError("zero raised to a negative power", self.span)
				value = _int_power(float(base), abs(r.numerator))
				return value if r >= 0 else 1.0 / value
			if base < 0:
				raise ExprDomainError("negative base %r with fractional exponent %s" % (base, r), self.span)
			if base == 0 and r < 0:
				raise ExprDomainError("zero raised to a negative power", self.span)
			return math.pow(base, float(r))

		try:
			if r.denominator == 1:
				value = _int_power(base, abs(r.numerator))
				return value if r >= 0 else value.reciprocal()
			return base.power(float(r))
		except NumericalError as e:
			raise ExprDomainError("power: %s" % e, self.span)

	def _key(self):
		return (self.base, self.exponent, self.call_form)


class Call(Expr):
	def __init__(self, name, arg, span=None):
		Expr.__init__(self, span)
		self.name = name
		self.arg = arg

	def children(self):
		return (self.arg,)

	def evaluate(self, xs, ys):
		a = self.arg.evaluate(xs, ys)
		name = self.name

		if not _is_number(a):
			try:
				return getattr(a, name)()
			except NumericalError as e:
				raise ExprDomainError("%s: %s" % (name, e), self.span)

		if name == "sqrt":
			if a < 0:
				raise ExprDomainError("sqrt of negative value %r" % a, self.span)
			return math.sqrt(a)
		elif name == "log":
			if a <= 0:
				raise ExprDomainError("log of nonpositive value %r" % a, self.span)
			return math.log(a)
		elif name == "exp":
			try:
				return math.exp(a)
			except OverflowError:
				raise ExprDomainError("exp overflow at %r" % a, self.span)
		elif name == "sin":
			return math.sin(a)
		return math.cos(a)

	def _key(self):
		return (self.name, self.arg)


#
# parsing
#
class _Token(object):
	def __init__(self, kind, text, start, end):
		self.kind = kind
		self.text = text
		self.start = start
		self.end = end

	def span(self):
		return SourceSpan(self.start, self.end)


def _tokenize(source):
	tokens = []
	pos = 0

	while pos < len(source):
		match = PROG_TOKEN.match(source, pos)

		if match is None:
			# only trailing whitespace left
			break
		num, ident, op = match.groups()

		if num is not None:
			tokens.append(_Token(TOK_NUM, num, match.start(1), match.end(1)))
		elif ident is not None:
			tokens.append(_Token(TOK_IDENT, ident, match.start(2), match.end(2)))
		elif op is not None:
			if op not in "+-*/^(),":
				raise ExprSyntaxError("unexpected character %r" % op, SourceSpan(match.start(3), match.end(3)))
			tokens.append(_Token(TOK_OP, op, match.start(3), match.end(3)))
		pos = match.end()
	tokens.append(_Token(TOK_END, "", len(source), len(source)))
	return tokens


class _Parser(object):
	def __init__(self, source, dimension):
		self._source = source
		self._dimension = dimension
		self._tokens = _tokenize(source)
		self._pos = 0

	def _peek(self):
		return self._tokens[self._pos]

	def _next(self):
		tok = self._tokens[self._pos]
		self._pos += 1
		return tok

	def _accept_op(self, ops):
		tok = self._peek()

		if tok.kind == TOK_OP and tok.text in ops:
			self._pos += 1
			return tok
		return None

	def _expect_op(self, op):
		tok = self._next()

		if tok.kind != TOK_OP or tok.text != op:
			what = "end of input" if tok.kind == TOK_END else repr(tok.text)
			raise ExprSyntaxError("expected %r, found %s" % (op, what), tok.span())
		return tok

	def parse(self):
		node = self._expr()
		tok = self._peek()

		if tok.kind != TOK_END:
			raise ExprSyntaxError("unexpected %r after complete expression" % tok.text, tok.span())
		return node

	def _expr(self):
		node = self._term()

		while True:
			tok = self._accept_op("+-")
			if tok is None:
				return node
			right = self._term()
			node = BinOp(tok.text, node, right, node.span.join(right.span))

	def _term(self):
		node = self._factor()

		while True:
			tok = self._accept_op("*/")
			if tok is None:
				return node
			right = self._factor()
			node = BinOp(tok.text, node, right, node.span.join(right.span))

	def _factor(self):
		tok = self._accept_op("-")

		if tok is not None:
			operand = self._factor()
			return Neg(operand, tok.span().join(operand.span))
		return self._power()

	def _power(self):
		base = self._atom()

		if self._accept_op("^") is None:
			return base
		exponent_node = self._factor()
		exponent = _fold_rational(exponent_node)
		return Power(base, exponent_node, exponent, span=base.span.join(exponent_node.span))

	def _atom(self):
		tok = self._next()

		if tok.kind == TOK_NUM:
			return Const(float(tok.text), tok.text, tok.span())

		if tok.kind == TOK_OP and tok.text == "(":
			node = self._expr()
			self._expect_op(")")
			return node

		if tok.kind == TOK_IDENT:
			return self._identifier(tok)

		what = "end of input" if tok.kind == TOK_END else repr(tok.text)
		raise ExprSyntaxError("expected operand, found %s" % what, tok.span())

	def _identifier(self, tok):
		name = tok.text
		match = PROG_VARIABLE.match(name)

		if match is not None:
			kind, index = match.group(1), int(match.group(2))

			if index < 1 or index > self._dimension:
				raise ExprNameError("variable %s out of range for dimension %d" % (name, self._dimension), tok.span())
			return Var(kind, index, tok.span())

		if name in FUNCTIONS:
			self._expect_op("(")
			arg = self._expr()
			end = self._expect_op(")")

			if name in ("sqrt", "log") and isinstance(arg, Const) and arg.value == 0:
				raise ExprSyntaxError("argument of %s is the constant 0" % name, arg.span)
			return Call(name, arg, tok.span().join(end.span()))

		if name == FUNCTION_POW:
			self._expect_op("(")
			base = self._expr()
			self._expect_op(",")
			exponent_node = self._expr()
			end = self._expect_op(")")
			exponent = _fold_rational(exponent_node)
			return Power(base, exponent_node, exponent, call_form=True, span=tok.span().join(end.span()))

		raise ExprNameError("unknown identifier %r" % name, tok.span())


def _fold_rational(node):
	"""
	Fold a constant exponent expression into a Fraction.
	"""
	if isinstance(node, Const):
		return Fraction(node.text)
	if isinstance(node, Neg):
		return -_fold_rational(node.operand)
	if isinstance(node, BinOp):
		a = _fold_rational(node.left)
		b = _fold_rational(node.right)

		if node.op == "+":
			return a + b
		elif node.op == "-":
			return a - b
		elif node.op == "*":
			return a * b
		if b == 0:
			raise ExprSyntaxError("division by zero in exponent", node.span)
		return a / b
	if isinstance(node, Power) and node.exponent.denominator == 1:
		base = _fold_rational(node.base)
		if base == 0 and node.exponent < 0:
			raise ExprSyntaxError("zero raised to a negative power in exponent", node.span)
		return base ** node.exponent
	raise ExprSyntaxError("exponent must be a rational constant", node.span)


class ExprAst(object):
	"""
	Parsed expression: source text, declared dimension and root node. Immutable after parse.
	"""
	def __init__(self, source, dimension, root):
		self.source = source
		self.dimension = dimension
		self.root = root

	def evaluate(self, xs, ys):
		"""
		Evaluate over floats or jets.

		xs, ys -- values of x1..xn and y1..yn
		"""
		return self.root.evaluate(xs, ys)

	def format(self):
		return format_expr(self.root)

	def count_nodes(self):
		return count_nodes(self.root)

	def variables(self):
		return variables(self.root)

	def __repr__(self):
		return "ExprAst(%r, n=%d)" % (self.format(), self.dimension)


def parse(source, dimension):
	"""
	Parse source into an ExprAst.

	source -- expression text, nonempty
	dimension -- number of chart coordinates n, variables x1..xn and y1..yn are admitted
	return -- ExprAst
	"""
	if dimension < 1:
		raise UsageError("dimension must be positive, got %r" % dimension)
	if source is None or not source.strip():
		raise ExprSyntaxError("empty expression", SourceSpan(0, 0))
	root = _Parser(source, dimension).parse()
	# logger.debug("parsed %r -> %s" % (source, format_expr(root)))
	return ExprAst(source, dimension, root)


def eval_scalar(ast, x, y):
	"""
	Evaluate ast in IEEE double arithmetic.

	ast -- ExprAst
	x, y -- chart and fiber coordinates (length n each)
	return -- float
	"""
	value = ast.evaluate([float(v) for v in x], [float(v) for v in y])
	return float(value)


#
# utility functions
#
def format_expr(node):
	"""Return node printed with the minimal parentheses that reparse into the same tree."""
	if isinstance(node, Const):
		return node.text
	if isinstance(node, Var):
		return "%s%d" % (node.kind, node.index)
	if isinstance(node, Call):
		return "%s(%s)" % (node.name, format_expr(node.arg))
	if isinstance(node, Neg):
		inner = format_expr(node.operand)
		if node.operand.prec < PREC_NEG:
			inner = "(%s)" % inner
		return "-" + inner
	if isinstance(node, Power):
		if node.call_form:
			return "pow(%s, %s)" % (format_expr(node.base), format_expr(node.exponent_node))
		base = format_expr(node.base)
		if node.base.prec <= PREC_POWER:
			base = "(%s)" % base
		exponent = format_expr(node.exponent_node)
		if not isinstance(node.exponent_node, Const):
			exponent = "(%s)" % exponent
		return "%s^%s" % (base, exponent)
	# binary
	left = format_expr(node.left)
	right = format_expr(node.right)

	if node.left.prec < node.prec:
		left = "(%s)" % left
	if node.right.prec <= node.prec:
		right = "(%s)" % right
	if node.prec == PREC_SUM:
		return "%s %s %s" % (left, node.op, right)
	return "%s%s%s" % (left, node.op, right)


def count_nodes(node):
	return 1 + sum(count_nodes(child) for child in node.children())


def variables(node):
	"""
	return -- set of (kind, index) pairs referenced below node
	"""
	found = set()
	stack = [node]

	while stack:
		current = stack.pop()
		if isinstance(current, Var):
			found.add((current.kind, current.index))
		stack.extend(current.children())
	return found
