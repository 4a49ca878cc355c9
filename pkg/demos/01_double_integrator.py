"""Minimum-time rest-to-rest motion of a planar double integrator.

With every acceleration component bounded by ``a_max`` and no obstacles,
each axis is a separate bang-bang problem. Moving ``d`` metres from rest
to rest takes ``2 * sqrt(d / a_max)`` seconds: full thrust for the first
half, full braking for the second. Here we check the transcription
recovers that.
"""
import math

import numpy as np

from activeplan import PointMass2D, generate_scenario, plan

scenario = generate_scenario(seed=0, model="point-mass-2d", n_obs=0)
model = PointMass2D(a_max=10.0)
report = plan(scenario, model)

traj = report.trajectory
print("status         ", report.status)
print("final time     ", round(traj.t_f, 5))
print("closed form    ", 2 * math.sqrt(10.0 / 10.0))
print("planner passes ", len(report.iterations))

# The x acceleration should sit near +a_max, then flip once to -a_max.
ax = traj.inputs[:, 0]
flips = np.flatnonzero(np.diff(np.sign(np.round(ax, 3))))
print("x-accel at start / end:", ax[:3].round(2), ax[-3:].round(2))
print("sign changes at node(s):", flips, "of", traj.n)

# Velocity should peak in the middle of the manoeuvre.
speed = np.hypot(traj.states[:, 2], traj.states[:, 3])
print("peak speed %.3f m/s at t = %.3f s" % (speed.max(), traj.dt * speed.argmax()))
