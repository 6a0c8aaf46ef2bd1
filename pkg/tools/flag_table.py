"""Dump the maximum flag curvature over a grid of a catalog model: flag_table.py <catalog> [count]"""
import sys

from finslerlab import cli_reports, curvature, utils

name	= sys.argv[1]
count	= int(sys.argv[2]) if len(sys.argv) > 2 else 6

_, model = cli_reports.load_config(name, validate=False)

if model.dimension < 2:
	print("%s: flag curvature needs dimension >= 2" % name)
	sys.exit(1)

print("# %r" % model)
print("# x1 x2 ... max flag curvature over %d directions" % count)

for x in utils.box_grid(model.box, count):
	worst = max(curvature.max_flag_curvature(model, x, u) for u in utils.directions(model.dimension, count))
	print(" ".join("%10.6f" % xi for xi in x) + " %14.8f" % worst)
