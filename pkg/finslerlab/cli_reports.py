"""
Model configuration files, the bundled catalog, report persistence and the command line.

Configuration files are flat "key = value" text:

	# Poincare half-plane
	catalog = halfplane2
	U = "0.05*x1"
	tol.fd = 1e-6

Keys: catalog, dimension, F2, U, topology (euclidean | torus), periods, box, reversible, name,
tol.<key>. Expressions are double-quoted, lists are comma separated, box intervals are
"low:high". Numbers may be written as multiples of pi ("2*pi").
"""
import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import re

import numpy as np

from finslerlab.finslerlab import DEFAULT_TOLERANCES, FinslerError, NumericalError, UsageError
from finslerlab import curvature
from finslerlab import dynamics
from finslerlab import finsler_core
from finslerlab.finsler_core import MetricModel, PhaseState
from finslerlab import hyperbolicity
from finslerlab import jacobi_lab

logger = logging.getLogger("finslerlab")

EXIT_OK			= 0
EXIT_USAGE		= 1
EXIT_NUMERICAL		= 2
EXIT_CRITERION		= 3

VALIDATION_SAMPLES	= 16
CSV_FORMAT		= "%.17g"

TWO_PI			= 2.0 * math.pi

CATALOG = {
	"euclidean2": {
		"dimension": 2, "F2": "y1^2 + y2^2", "U": "0",
		"box": [(-10.0, 10.0), (-10.0, 10.0)], "reversible": True},
	# stereographic chart of the unit sphere scaled so that g(0) = I, equator at |x| = 2
	"sphere2": {
		"dimension": 2, "F2": "(y1^2 + y2^2) / (1 + (x1^2 + x2^2)/4)^2", "U": "0",
		"box": [(-3.0, 3.0), (-3.0, 3.0)], "reversible": True},
	"halfplane2": {
		"dimension": 2, "F2": "(y1^2 + y2^2) / x2^2", "U": "0",
		"box": [(-4.0, 4.0), (0.25, 4.0)], "reversible": True},
	"randers2": {
		"dimension": 2, "F2": "(sqrt(y1^2 + y2^2) + 0.5*y1)^2", "U": "0",
		"box": [(-10.0, 10.0), (-10.0, 10.0)], "reversible": False},
	"torus2-cosine": {
		"dimension": 2, "F2": "y1^2 + y2^2", "U": "0.1*cos(x1)",
		"topology": finsler_core.TOPOLOGY_TORUS, "periods": [TWO_PI, TWO_PI],
		"box": [(0.0, TWO_PI), (0.0, TWO_PI)], "reversible": True},
	"quartic2": {
		"dimension": 2, "F2": "y1^2 + y2^2 + 0.1*sqrt(y1^4 + y2^4)", "U": "0",
		"box": [(-10.0, 10.0), (-10.0, 10.0)], "reversible": True},
	"oscillator1": {
		"dimension": 1, "F2": "y1^2", "U": "0.5*x1^2",
		"box": [(-10.0, 10.0)], "reversible": True},
}

_PI_PATTERN = re.compile(r"^\s*([-+]?[0-9.eE+-]*)\s*\*?\s*pi\s*$")


class ConfigError(UsageError):
	"""
	Malformed configuration.

	line -- 1-based line number or None
	report -- ValidationReport when the model failed validation
	"""
	def __init__(self, msg, line=None, report=None):
		if line is not None:
			msg = "line %d: %s" % (line, msg)
		UsageError.__init__(self, msg)
		self.line = line
		self.report = report


def _number(text, line=None):
	text = text.strip()
	match = _PI_PATTERN.match(text)

	try:
		if match:
			coefficient = match.group(1)
			if coefficient in ("", "+"):
				return math.pi
			if coefficient == "-":
				return -math.pi
			return float(coefficient) * math.pi
		return float(text)
	except ValueError:
		raise ConfigError("not a number: %r" % text, line)


def _unquote(text, line):
	text = text.strip()

	if len(text) >= 2 and text[0] == text[-1] == '"':
		return text[1:-1]
	if text.startswith('"') or text.endswith('"'):
		raise ConfigError("unbalanced quotes in %r" % text, line)
	return text


def _boolean(text, line):
	value = text.strip().lower()

	if value in ("true", "yes", "1"):
		return True
	if value in ("false", "no", "0"):
		return False
	raise ConfigError("not a boolean: %r" % text, line)


class ModelConfig(object):
	"""
	Resolved model description; to_model() builds the MetricModel.
	"""
	def __init__(self, values=None, tolerances=None, catalog=None):
		self.values = dict(values or {})
		self.tolerances = dict(tolerances or {})
		self.catalog = catalog

	@classmethod
	def from_catalog(cls, name):
		try:
			entry = CATALOG[name]
		except KeyError:
			raise ConfigError("unknown catalog entry %r, known: %s" % (name, ", ".join(sorted(CATALOG))))
		values = dict(entry)
		values["name"] = name
		return cls(values, catalog=name)

	def override_tolerances(self, overrides):
		self.tolerances.update(overrides)

	def to_model(self):
		values = self.values

		for key in ("dimension", "F2"):
			if key not in values:
				raise ConfigError("missing %s (and no catalog entry)" % key)
		tolerances = DEFAULT_TOLERANCES.override(**self.tolerances)
		return MetricModel(values["dimension"], values["F2"], values.get("U", "0"),
			topology=values.get("topology", finsler_core.TOPOLOGY_EUCLIDEAN),
			periods=values.get("periods"), box=values.get("box"),
			reversible=values.get("reversible"), name=values.get("name"), tolerances=tolerances)

	def canonical(self):
		"""Deterministic text form, the input of the config hash."""
		lines = ["%s = %r" % (key, self.values[key]) for key in sorted(self.values)]
		lines.extend("tol.%s = %r" % (key, self.tolerances[key]) for key in sorted(self.tolerances))
		return "\n".join(lines)

	def digest(self):
		return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

	def as_dict(self):
		result = {key: value for key, value in self.values.items()}

		if "box" in result:
			result["box"] = [list(interval) for interval in result["box"]]
		result["tolerances"] = dict(self.tolerances)
		return result


def parse_config(text):
	"""
	Parse configuration text into a ModelConfig. A catalog line seeds the values,
	every other key overrides them.
	"""
	config = ModelConfig()
	entries = []

	for number, raw in enumerate(text.splitlines(), start=1):
		line = raw.strip()

		if not line or line.startswith("#"):
			continue
		if "=" not in line:
			raise ConfigError("expected key = value", number)
		key, value = [part.strip() for part in line.split("=", 1)]
		entries.append((number, key, value))

	for number, key, value in entries:
		if key == "catalog":
			seeded = ModelConfig.from_catalog(_unquote(value, number))
			config.values.update(seeded.values)
			config.catalog = seeded.catalog

	for number, key, value in entries:
		if key == "catalog":
			continue
		if key.startswith("tol."):
			name = key[4:]
			if name not in DEFAULT_TOLERANCES.keys():
				raise ConfigError("unknown tolerance key %r" % name, number)
			config.tolerances[name] = _number(value, number)
		elif key == "dimension":
			try:
				config.values[key] = int(value)
			except ValueError:
				raise ConfigError("dimension must be an integer", number)
		elif key in ("F2", "U", "topology", "name"):
			config.values[key] = _unquote(value, number)
		elif key == "periods":
			config.values[key] = [_number(part, number) for part in value.split(",")]
		elif key == "box":
			intervals = []
			for part in value.split(","):
				if ":" not in part:
					raise ConfigError("box intervals are written low:high", number)
				low, high = part.split(":", 1)
				intervals.append((_number(low, number), _number(high, number)))
			config.values[key] = intervals
		elif key == "reversible":
			config.values[key] = _boolean(value, number)
		else:
			raise ConfigError("unknown key %r" % key, number)
	return config


def load_config(path, overrides=None, validate=True):
	"""
	Load a configuration file or a bare catalog name.

	overrides -- tolerance overrides, applied after the file
	validate -- run validate_metric and fail with the report attached
	return -- (ModelConfig, MetricModel)
	"""
	if path in CATALOG and not os.path.exists(path):
		config = ModelConfig.from_catalog(path)
	else:
		try:
			with open(path, encoding="utf-8") as fh:
				text = fh.read()
		except OSError as e:
			raise ConfigError("cannot read %s: %s" % (path, e))
		config = parse_config(text)

	if overrides:
		config.override_tolerances(overrides)
	model = config.to_model()
	logger.info("loaded %r" % model)

	if validate:
		report = finsler_core.validate_metric(model, samples=VALIDATION_SAMPLES)

		if not report.passed:
			raise ConfigError("model failed validation: %s" % "; ".join(report.failures or
				[name for name, (_, ok) in sorted(report.checks.items()) if not ok]), report=report)
	return config, model


def _clean(value):
	"""JSON-compatible copy: numpy to python, non-finite floats to None."""
	if isinstance(value, dict):
		return {str(k): _clean(v) for k, v in value.items()}
	if isinstance(value, (list, tuple)):
		return [_clean(v) for v in value]
	if isinstance(value, np.ndarray):
		return _clean(value.tolist())
	if isinstance(value, (np.bool_, bool)):
		return bool(value)
	if isinstance(value, (np.integer, int)):
		return int(value)
	if isinstance(value, (np.floating, float)):
		value = float(value)
		return value if math.isfinite(value) else None
	return value


class RunReport(object):
	"""
	Result of one command. Floats are written with repr, which round-trips every double.
	The timestamp comes from SOURCE_DATE_EPOCH so identical runs give identical bytes.
	"""
	def __init__(self, command, config=None, tolerances=None):
		self.command = command
		self.config_hash = config.digest() if config is not None else None
		self.config = config.as_dict() if config is not None else None
		self.tolerances = tolerances.as_dict() if tolerances is not None else DEFAULT_TOLERANCES.as_dict()
		epoch = os.environ.get("SOURCE_DATE_EPOCH")
		self.timestamp = int(epoch) if epoch and epoch.isdigit() else None
		self.result = None
		self.rows = None
		self.header = None
		self.error = None
		self.exit_code = EXIT_OK

	def as_dict(self):
		return _clean({
			"command": self.command,
			"config_hash": self.config_hash,
			"config": self.config,
			"timestamp": self.timestamp,
			"tolerances": self.tolerances,
			"result": self.result,
			"error": self.error,
			"exit_code": self.exit_code,
		})

	def to_json(self):
		return json.dumps(self.as_dict(), sort_keys=True, indent=1)

	@classmethod
	def from_json(cls, text):
		data = json.loads(text)
		report = cls(data["command"])
		report.config_hash = data["config_hash"]
		report.config = data["config"]
		report.tolerances = data["tolerances"]
		report.timestamp = data["timestamp"]
		report.result = data["result"]
		report.error = data["error"]
		report.exit_code = data["exit_code"]
		return report

	def to_csv(self):
		out = io.StringIO()
		writer = csv.writer(out, lineterminator="\n")

		if self.header:
			writer.writerow(self.header)
		for row in self.rows or []:
			writer.writerow([CSV_FORMAT % value if isinstance(value, float) else value for value in row])
		return out.getvalue()


def parse_point(model, text):
	"""
	"x=a,b;p=c,d" (cotangent) or "x=a,b;y=c,d" (tangent, Legendre-transformed) -> PhaseState
	"""
	parts = {}

	for chunk in text.split(";"):
		if "=" not in chunk:
			raise UsageError("point component %r is not name=values" % chunk)
		name, values = chunk.split("=", 1)
		try:
			parts[name.strip()] = np.array([_number(v) for v in values.split(",")])
		except ConfigError:
			raise UsageError("bad number in point %r" % text)

	if "x" not in parts or ("p" in parts) == ("y" in parts):
		raise UsageError("point needs x and exactly one of p, y: %r" % text)
	for name, values in parts.items():
		if len(values) != model.dimension:
			raise UsageError("point component %s has %d entries, dimension is %d" % (name, len(values), model.dimension))
	if "y" in parts:
		model.check_fiber(parts["x"], parts["y"])
		return PhaseState.from_tangent(model, parts["x"], parts["y"])
	return PhaseState(model, parts["x"], parts["p"])


def _tolerance_overrides(items):
	overrides = {}

	for item in items or []:
		if "=" not in item:
			raise UsageError("--tol-override expects KEY=VAL, got %r" % item)
		key, value = item.split("=", 1)
		if key.strip() not in DEFAULT_TOLERANCES.keys():
			raise UsageError("unknown tolerance key %r" % key)
		overrides[key.strip()] = _number(value)
	return overrides


class _ArgumentParser(argparse.ArgumentParser):
	"""Raise UsageError instead of exiting so the report records the failure."""
	def error(self, message):
		raise UsageError(message)


def _kind(args):
	return curvature.KIND_NONREDUCED if getattr(args, "nonreduced", False) else curvature.KIND_REDUCED


def cmd_validate(args, config, model, report):
	validation = finsler_core.validate_metric(model, samples=args.samples)
	report.result = validation.as_dict()
	return EXIT_OK if validation.passed else EXIT_USAGE


def cmd_tensors(args, config, model, report):
	state = parse_point(model, args.at)
	tensors = finsler_core.chern_connection(model, state.x, state.v)
	report.result = {"p": state.p, "tensors": tensors.as_dict()}
	return EXIT_OK


def cmd_curvature(args, config, model, report):
	state = parse_point(model, args.at)
	matrix = curvature.curvature_map(model, state, _kind(args))
	report.result = matrix.as_dict(breakdown=args.breakdown)
	return EXIT_OK


def cmd_flow(args, config, model, report):
	system = dynamics.HamiltonianSystem(model)
	state = parse_point(model, getattr(args, "from"))
	trajectory = dynamics.flow(system, state, args.time, dt=args.dt, step_control=args.step_control,
		stride=args.stride)
	report.result = trajectory.as_dict()
	n = model.dimension
	report.header = ["t"] + ["x%d" % (i + 1) for i in range(n)] + ["p%d" % (i + 1) for i in range(n)] + ["H"]
	report.rows = [[t] + s.x.tolist() + s.p.tolist() + [e]
		for t, s, e in zip(trajectory.times.tolist(), trajectory.states, trajectory.energies.tolist())]
	return EXIT_OK


def cmd_jacobi_verify(args, config, model, report):
	system = dynamics.HamiltonianSystem(model)
	kinds = (curvature.KIND_NONREDUCED, curvature.KIND_REDUCED) if args.kind == "both" else (args.kind,)
	tasks = [(parse_point(model, at), kind) for at in args.at for kind in kinds]
	comparisons = hyperbolicity.map_states(
		lambda task: jacobi_lab.closed_form_vs_oracle(system, task[0], task[1]), tasks, args.jobs)
	passed = all(c.passed for c in comparisons)
	report.result = {
		"comparisons": [c.as_dict() for c in comparisons],
		"all_passed": passed,
		"mismatches": sum(1 for c in comparisons if c.status == jacobi_lab.STATUS_MISMATCH),
	}
	report.header = ["kind", "relative_error", "spectral_error", "passed", "status"]
	report.rows = [[c.kind, c.entry_error, c.spectral_error, c.passed, c.status] for c in comparisons]
	return EXIT_OK if passed else EXIT_NUMERICAL


def cmd_conjugate(args, config, model, report):
	system = dynamics.HamiltonianSystem(model)
	state = parse_point(model, args.at)
	kind = curvature.KIND_REDUCED if args.reduced else curvature.KIND_NONREDUCED
	times = jacobi_lab.conjugate_points(system, state, kind, args.time, args.dt)
	report.result = {"kind": kind, "x": state.x, "p": state.p, "T": args.time, "conjugate_times": times}
	return EXIT_OK


def _grid(args):
	return hyperbolicity.GridSpec(args.grid, args.directions)


def cmd_scan(args, config, model, report):
	system = dynamics.HamiltonianSystem(model)
	sample = hyperbolicity.sample_level_set(system, args.energy, _grid(args))
	scan = hyperbolicity.negativity_scan(system, sample, args.jobs)

	if args.lyapunov and scan.argmax is not None:
		T = args.lyapunov
		spectrum = hyperbolicity.lyapunov_spectrum(system, sample.states[0], T, transient=0.25 * T)
		scan.lyapunov = {"T": T, "transient": 0.25 * T, "spectrum": spectrum, "top": float(spectrum[0])}
	report.result = scan.as_dict()
	n = model.dimension
	report.header = ["x%d" % (i + 1) for i in range(n)] + ["p%d" % (i + 1) for i in range(n)] + ["max_eigenvalue"]
	report.rows = scan.rows()
	return EXIT_OK if scan.passed else EXIT_CRITERION


def cmd_anosov(args, config, model, report):
	system = dynamics.HamiltonianSystem(model)
	result = hyperbolicity.anosov_criterion(system, args.energy, _grid(args), args.convention, args.k, args.jobs)

	if args.riemannian:
		result["riemannian_corollary"] = hyperbolicity.riemannian_corollary(system, args.energy, _grid(args),
			result["k"], args.jobs)
	report.result = result
	report.header = ["convention", "lhs_max", "max_slack", "pass"]
	report.rows = [[name, entry["lhs_max"], entry["max_slack"], entry["pass"]]
		for name, entry in sorted(result["conventions"].items())]
	passed = all(entry["pass"] for entry in result["conventions"].values())
	return EXIT_OK if passed else EXIT_CRITERION


COMMANDS = {
	"validate": cmd_validate,
	"tensors": cmd_tensors,
	"curvature": cmd_curvature,
	"flow": cmd_flow,
	"jacobi-verify": cmd_jacobi_verify,
	"conjugate": cmd_conjugate,
	"scan": cmd_scan,
	"anosov": cmd_anosov,
}


def build_parser():
	common = _ArgumentParser(add_help=False)
	common.add_argument("--config", required=True, help="configuration file or catalog name")
	common.add_argument("--out", help="write the JSON report here instead of stdout")
	common.add_argument("--csv", help="write the result table as CSV")
	common.add_argument("--tol-override", action="append", metavar="KEY=VAL", help="override a tolerance")
	common.add_argument("-v", "--verbose", action="count", default=0)
	common.add_argument("--jobs", type=int, default=1, help="threads for per-sample work")

	parser = _ArgumentParser(prog="finsler_run", description="Finsler geometry and mechanics toolkit")
	sub = parser.add_subparsers(dest="command")
	sub.required = True

	p = sub.add_parser("validate", parents=[common])
	p.add_argument("--samples", type=int, default=32)

	p = sub.add_parser("tensors", parents=[common])
	p.add_argument("--at", required=True)

	p = sub.add_parser("curvature", parents=[common])
	p.add_argument("--at", required=True)
	group = p.add_mutually_exclusive_group()
	group.add_argument("--reduced", action="store_true")
	group.add_argument("--nonreduced", action="store_true")
	p.add_argument("--breakdown", action="store_true")

	p = sub.add_parser("flow", parents=[common])
	p.add_argument("--from", required=True)
	p.add_argument("--time", type=float, required=True)
	p.add_argument("--dt", type=float, default=None)
	p.add_argument("--step-control", action="store_true")
	p.add_argument("--stride", type=int, default=1)

	p = sub.add_parser("jacobi-verify", parents=[common])
	p.add_argument("--at", action="append", required=True)
	p.add_argument("--kind", choices=[curvature.KIND_NONREDUCED, curvature.KIND_REDUCED, "both"],
		default="both")

	p = sub.add_parser("conjugate", parents=[common])
	p.add_argument("--at", required=True)
	p.add_argument("--time", type=float, default=math.pi)
	p.add_argument("--dt", type=float, default=jacobi_lab.CONJUGATE_DT)
	p.add_argument("--reduced", action="store_true")

	for name in ("scan", "anosov"):
		p = sub.add_parser(name, parents=[common])
		p.add_argument("--energy", type=float, required=True)
		p.add_argument("--grid", type=int, default=8)
		p.add_argument("--directions", type=int, default=None)
	sub.choices["scan"].add_argument("--lyapunov", type=float, default=None, metavar="T")
	sub.choices["anosov"].add_argument("--convention", choices=["a", "b", "both"], default="both")
	sub.choices["anosov"].add_argument("--k", type=float, default=None)
	sub.choices["anosov"].add_argument("--riemannian", action="store_true")
	return parser


def _emit(report, args):
	text = report.to_json()

	if args is not None and args.out:
		with open(args.out, "w", encoding="utf-8") as fh:
			fh.write(text + "\n")
	else:
		print(text)
	if args is not None and args.csv and report.rows is not None:
		with open(args.csv, "w", encoding="utf-8", newline="") as fh:
			fh.write(report.to_csv())


def run_command(argv):
	"""
	Run one subcommand. The report goes to stdout or --out.

	return -- (exit code, RunReport)
	"""
	args = None
	report = RunReport(argv[0] if argv else None)

	try:
		args = build_parser().parse_args(argv)
		report.command = args.command

		if args.verbose:
			logger.setLevel(logging.DEBUG if args.verbose > 1 else logging.INFO)
		overrides = _tolerance_overrides(args.tol_override)
		config, model = load_config(args.config, overrides, validate=args.command != "validate")
		report.config_hash = config.digest()
		report.config = config.as_dict()
		report.tolerances = model.tol.as_dict()
		report.exit_code = COMMANDS[args.command](args, config, model, report)
	except UsageError as e:
		logger.error("usage error: %s" % e)
		report.error = {"type": e.__class__.__name__, "message": str(e)}

		if isinstance(e, ConfigError) and e.report is not None:
			report.result = {"validation": e.report.as_dict()}
		report.exit_code = EXIT_USAGE
	except NumericalError as e:
		logger.exception("numerical failure")
		report.error = {"type": e.__class__.__name__, "message": str(e)}
		report.exit_code = EXIT_NUMERICAL
	except FinslerError as e:
		logger.exception("failure")
		report.error = {"type": e.__class__.__name__, "message": str(e)}
		report.exit_code = EXIT_NUMERICAL
	_emit(report, args)
	return report.exit_code, report
