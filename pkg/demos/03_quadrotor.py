"""Hover-to-hover flight of the quadrotor model.

The quadrotor starts and ends hovering at 5 m altitude, 10 m apart in both
x and y. Obstacles are vertical cylinders, so only the horizontal position
enters the clearance constraints. This demo takes a minute or two on one
core.
"""
import numpy as np

from activeplan import Quadrotor, generate_scenario, plan, validate_solution

model = Quadrotor()
print("hover thrust per rotor: %.4f N" % model.params.hover_thrust)

for n_obs in (0, 5):
    scenario = generate_scenario(seed=7, model="quadrotor-3d", n_obs=n_obs)
    report = plan(scenario, model)
    print(f"\n{n_obs} obstacles: {report.status}, {len(report.iterations)} pass(es), "
          f"{report.final_active_count} active, {report.wall_time:.1f} s")
    if not report.solved:
        continue
    traj = report.trajectory
    qnorm = np.linalg.norm(traj.states[:, 3:7], axis=1)
    print("  final time %.4f s" % traj.t_f)
    print("  max altitude deviation %.3f m" % np.abs(traj.states[:, 2] - 5.0).max())
    print("  quaternion norm range [%.12f, %.12f]" % (qnorm.min(), qnorm.max()))
    print("  rotor thrust range [%.3f, %.3f] N" % (traj.inputs.min(), traj.inputs.max()))
    print("  audit:", "pass" if validate_solution(traj, scenario, model).passed else "FAIL")
