#!/usr/bin/env python

from distutils.core import setup

setup(name="finslerlab",
	version="0.3",
	description="Finslerlab: curvature, Jacobi curves and hyperbolicity tests for Finsler mechanics",
	license="BSD",
	packages=[
		"finslerlab"
	],
	scripts=[
		"tools/finsler_run.py",
		"tools/flag_table.py"
	],
	requires=[
		"numpy"
	]
)
